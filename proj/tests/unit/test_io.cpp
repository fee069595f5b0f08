#include "oracles.hpp"
#include "tqf/io.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace tqf;
using tqf::io::Json;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::Usage;
}

DirectionalQuantileSet awkward_slices() {
  RngStream rng(1);
  const auto c = oracle::random_cloud(rng, 17, 3, 1.0 / 3.0);
  return slices_from_cloud(c, sample_directions(rng, 3, 7), midpoint_levels(11));
}

}  // namespace

TEST(SliceFile, ByteIdenticalRoundTrip) {
  oracle::TempDir dir("slices");
  const auto s = awkward_slices();
  const Json prov = {{"seed", 4}, {"model_hash", "00ff"}};
  io::save_slices(dir.file("a.json"), s, prov);
  const auto r = io::load_slices(dir.file("a.json"));
  EXPECT_EQ(r.directions, s.directions);
  EXPECT_EQ(r.values, s.values);
  EXPECT_EQ(r.levels, s.levels);
  io::save_slices(dir.file("b.json"), r, prov);
  EXPECT_EQ(slurp(dir.file("a.json")), slurp(dir.file("b.json")));
}

TEST(SliceFile, Rejections) {
  oracle::TempDir dir("slices2");
  const auto s = awkward_slices();
  Json j = io::slices_to_json(s);
  Json bad = j;
  bad["K"] = 8;
  EXPECT_EQ(kind_of([&] { io::slices_from_json(bad); }), ErrorKind::Data);
  bad = j;
  bad["values"][0][0] = 1e9;  // breaks monotonicity
  EXPECT_EQ(kind_of([&] { io::slices_from_json(bad); }), ErrorKind::Data);
  bad = j;
  bad["directions"][0][0] = 5.0;  // not unit
  EXPECT_EQ(kind_of([&] { io::slices_from_json(bad); }), ErrorKind::Data);
  bad = j;
  bad["format"] = "tqf-cloud";
  EXPECT_EQ(kind_of([&] { io::slices_from_json(bad); }), ErrorKind::Data);
  write(dir.file("broken.json"), "{\"format\": \"tqf-slices\", \"d\": 2,,}");
  try {
    io::load_slices(dir.file("broken.json"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Data);
    EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos) << e.what();
  }
}

TEST(CloudFile, ByteIdenticalRoundTrip) {
  oracle::TempDir dir("cloud");
  RngStream rng(2);
  const auto c = oracle::random_cloud(rng, 23, 2, 1e-3);
  io::save_cloud(dir.file("a.json"), c, {{"seed", 1}});
  const auto r = io::load_cloud(dir.file("a.json"));
  EXPECT_EQ(r.points, c.points);
  EXPECT_EQ(r.weights, c.weights);
  io::save_cloud(dir.file("b.json"), r, {{"seed", 1}});
  EXPECT_EQ(slurp(dir.file("a.json")), slurp(dir.file("b.json")));
  EXPECT_EQ(io::load_cloud_provenance(dir.file("a.json")).at("seed"), 1);
}

TEST(CloudFile, RenormalizesSmallDrift) {
  RngStream rng(3);
  const auto c = oracle::random_cloud(rng, 5, 2);
  Json j = io::cloud_to_json(c);
  for (auto& w : j["weights"]) w = w.get<double>() * (1.0 + 5e-7);
  const auto r = io::cloud_from_json(j);
  EXPECT_NEAR(r.weights.sum(), 1.0, 1e-12);
  EXPECT_NEAR(r.weights[0], c.weights[0], 1e-12);
}

TEST(CloudFile, RejectsLargeDriftAndNegativeWeights) {
  RngStream rng(4);
  const auto c = oracle::random_cloud(rng, 5, 2);
  Json j = io::cloud_to_json(c);
  Json bad = j;
  for (auto& w : bad["weights"]) w = w.get<double>() * (1.0 + 1e-4);
  EXPECT_EQ(kind_of([&] { io::cloud_from_json(bad); }), ErrorKind::Data);
  bad = j;
  bad["weights"][0] = -bad["weights"][0].get<double>();
  EXPECT_EQ(kind_of([&] { io::cloud_from_json(bad); }), ErrorKind::Data);
  bad = j;
  bad["points"][1] = Json::array({1.0});
  EXPECT_EQ(kind_of([&] { io::cloud_from_json(bad); }), ErrorKind::Data);
}

TEST(SampleCsv, LoadsEveryColumnUniformly) {
  oracle::TempDir dir("sample");
  Matrix pts(3, 2);
  pts << 1, 2, 3, 4, 5.5, -6;
  io::save_sample_csv(dir.file("s.csv"), pts, {"u", "v"});
  const auto c = io::load_sample_csv(dir.file("s.csv"));
  EXPECT_EQ(c.points, pts);
  EXPECT_NEAR(c.weights.sum(), 1.0, 1e-15);
  EXPECT_EQ(c.weights[0], c.weights[2]);
}

TEST(KdeGrid, LongFormatWithRequestedCells) {
  oracle::TempDir dir("grid");
  RngStream rng(5);
  const auto kde = KdeModel::fit(oracle::random_cloud(rng, 20, 2));
  io::save_kde_grid(dir.file("g.csv"), kde, 50);
  std::ifstream in(dir.file("g.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "x,y,density");
  int rows = 0;
  double mass = 0.0;
  std::vector<double> xs, ys;
  while (std::getline(in, line)) {
    double x, y, dens;
    char c1, c2;
    std::istringstream ss(line);
    ss >> x >> c1 >> y >> c2 >> dens;
    ASSERT_GE(dens, 0.0);
    xs.push_back(x);
    ys.push_back(y);
    mass += dens;
    ++rows;
  }
  EXPECT_EQ(rows, 50 * 50);
  // Riemann sum over the padded box recovers almost all of the mass.
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
  ASSERT_EQ(xs.size(), 50u);
  const double cell = (xs.back() - xs.front()) / 49.0 * (ys.back() - ys.front()) / 49.0;
  EXPECT_NEAR(mass * cell, 1.0, 0.05);
  const auto k3 = KdeModel::fit(oracle::random_cloud(rng, 5, 3));
  EXPECT_THROW(io::save_kde_grid(dir.file("h.csv"), k3, 50), Error);
}

TEST(Config, UnknownKeysRejectedAndDefaultsKept) {
  EXPECT_EQ(kind_of([] { io::qmem_config_from_json(Json{{"N2", 3}}); }), ErrorKind::Usage);
  EXPECT_EQ(kind_of([] { io::forest_config_from_json(Json{{"trees", 3}}); }), ErrorKind::Usage);
  EXPECT_EQ(kind_of([] { io::tqf_config_from_json(Json{{"forest", {{"depth", 3}}}}); }), ErrorKind::Usage);
  EXPECT_EQ(kind_of([] { io::qmem_config_from_json(Json{{"N0", "nine"}}); }), ErrorKind::Usage);
  const auto q = io::qmem_config_from_json(Json{{"E", 3}});
  EXPECT_EQ(q.E, 3);
  EXPECT_EQ(q.N0, QmemConfig{}.N0);
  const auto t = io::tqf_config_from_json(Json{{"M", 4}, {"G", 2}});
  EXPECT_EQ(t.levels, midpoint_levels(4));
  EXPECT_EQ(t.G, 2);
}

TEST(Config, JsonRoundTrip) {
  TqfConfig c;
  c.G = 7;
  c.G_tilde = 2;
  c.scheme = FrequencyScheme::DistanceQuantiles;
  c.T = 4;
  c.forest.n_trees = 3;
  c.levels = midpoint_levels(6);
  const auto r = io::tqf_config_from_json(io::to_json(c));
  EXPECT_EQ(io::to_json(r), io::to_json(c));
  QmemConfig q;
  q.N1 = 77;
  EXPECT_EQ(io::to_json(io::qmem_config_from_json(io::to_json(q))), io::to_json(q));
  GeneratorSpec g{"rect_rotor", 10, 3, {{"p", 4}}};
  EXPECT_EQ(io::to_json(io::generator_spec_from_json(io::to_json(g))), io::to_json(g));
}
