// Command-line front end over the C API.
#include "tqf/tqf.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace {

using Json = nlohmann::json;

// Thrown to leave main with a given exit code.
struct Exit {
  int code;
  std::string message;
};

void check(int status) {
  if (status != TQF_OK) throw Exit{status, tqf_last_error()};
}

[[noreturn]] void usage_error(const std::string& msg) { throw Exit{TQF_ERR_USAGE, msg}; }

std::string take_string(char* s) {
  std::string out = s ? s : "";
  tqf_string_free(s);
  return out;
}

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
};

using Model = Handle<tqf_model, tqf_model_free>;
using Slices = Handle<tqf_slices, tqf_slices_free>;
using Cloud = Handle<tqf_cloud, tqf_cloud_free>;

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw Exit{TQF_ERR_DATA, "cannot write '" + path + "'"};
}

Json read_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Exit{TQF_ERR_DATA, "cannot open config '" + path + "'"};
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    Json j = Json::parse(ss.str());
    if (!j.is_object()) throw Exit{TQF_ERR_USAGE, "config '" + path + "' must be a JSON object"};
    return j;
  } catch (const Json::parse_error& e) {
    throw Exit{TQF_ERR_DATA, "config '" + path + "': parse error at byte " + std::to_string(e.byte)};
  }
}

// One subcommand: a JSON run document assembled from an optional config
// file, then overridden by whichever flags were given.
class Command {
 public:
  Command(CLI::App& parent, const std::string& name, const std::string& help, std::set<std::string> keys)
      : app_(parent.add_subcommand(name, help)), keys_(std::move(keys)) {
    app_->add_option("--config", config_path_, "JSON run configuration; flags override its values");
  }

  CLI::App* app() { return app_; }

  template <class T>
  CLI::Option* flag(const std::string& name, const std::string& pointer, const std::string& help) {
    return app_->add_option_function<T>(
        name, [this, pointer](const T& v) { overrides_.emplace_back(pointer, Json(v)); }, help);
  }

  // "a,b,c" into a string or number array.
  CLI::Option* list_flag(const std::string& name, const std::string& pointer, bool numeric, const std::string& help) {
    return app_->add_option_function<std::string>(
        name,
        [this, pointer, numeric](const std::string& v) {
          Json arr = Json::array();
          std::stringstream ss(v);
          std::string item;
          while (std::getline(ss, item, ',')) {
            if (!numeric) {
              arr.push_back(item);
              continue;
            }
            try {
              std::size_t used = 0;
              const double x = std::stod(item, &used);
              if (used != item.size()) throw std::invalid_argument(item);
              arr.push_back(x);
            } catch (const std::exception&) {
              usage_error(pointer + ": '" + item + "' is not a number");
            }
          }
          overrides_.emplace_back(pointer, arr);
        },
        help);
  }

  // Repeated key=value pairs into an object.
  CLI::Option* map_flag(const std::string& name, const std::string& pointer, bool numeric, const std::string& help) {
    return app_
        ->add_option_function<std::vector<std::string>>(
            name,
            [this, pointer, numeric](const std::vector<std::string>& vs) {
              for (const auto& v : vs) {
                const auto eq = v.find('=');
                if (eq == std::string::npos) usage_error(name_of(pointer) + ": expected key=value, got '" + v + "'");
                const std::string key = v.substr(0, eq), val = v.substr(eq + 1);
                if (numeric) {
                  try {
                    overrides_.emplace_back(pointer + "/" + key, Json(std::stod(val)));
                  } catch (const std::exception&) {
                    usage_error(name_of(pointer) + ": '" + val + "' is not a number");
                  }
                } else {
                  overrides_.emplace_back(pointer + "/" + key, Json(val));
                }
              }
            },
            help)
        ->allow_extra_args(false);
  }

  Json document() const {
    Json doc = config_path_.empty() ? Json::object() : read_config(config_path_);
    for (const auto& [ptr, v] : overrides_) doc[Json::json_pointer(ptr)] = v;
    for (const auto& [key, v] : doc.items())
      if (!keys_.count(key)) usage_error(app_->get_name() + ": unknown configuration key '" + key + "'");
    return doc;
  }

 private:
  static std::string name_of(const std::string& pointer) { return pointer.substr(1); }

  CLI::App* app_;
  std::set<std::string> keys_;
  std::string config_path_;
  std::vector<std::pair<std::string, Json>> overrides_;
};

template <class T>
T get_or(const Json& doc, const std::string& key, T fallback) {
  if (!doc.contains(key)) return fallback;
  try {
    return doc.at(key).get<T>();
  } catch (const Json::exception&) {
    usage_error("configuration key '" + key + "' has the wrong type");
  }
}

std::string required_string(const Json& doc, const std::string& key) {
  const std::string v = get_or<std::string>(doc, key, "");
  if (v.empty()) usage_error("missing required setting '" + key + "'");
  return v;
}

std::string sub(const Json& doc, const std::string& key) { return doc.contains(key) ? doc.at(key).dump() : "{}"; }

// ---------------------------------------------------------------------------

void run_gen(const Json& doc) {
  Json spec = Json::object();
  for (const char* k : {"name", "n", "seed", "params"})
    if (doc.contains(k)) spec[k] = doc.at(k);
  const std::string out = required_string(doc, "out");
  check(tqf_generate_csv(spec.dump().c_str(), out.c_str()));
}

void run_train(const Json& doc) {
  const std::string data = required_string(doc, "data");
  const std::string out = required_string(doc, "out");
  const auto seed = get_or<std::uint64_t>(doc, "seed", 0);
  Model m;
  check(tqf_model_train(data.c_str(), sub(doc, "csv").c_str(), sub(doc, "model").c_str(), seed, &m.p));
  check(tqf_model_save(m.p, out.c_str()));
  char hash[17];
  check(tqf_model_hash(m.p, hash));
  std::cout << "model " << out << " hash " << hash << "\n";
}

void run_predict(const Json& doc) {
  const std::string model_path = required_string(doc, "model");
  const std::string prefix = required_string(doc, "out");
  const auto seed = get_or<std::uint64_t>(doc, "seed", 0);
  const auto x = get_or<std::vector<double>>(doc, "x", {});
  const int cells = get_or<int>(doc, "kde_cells", 60);

  Model m;
  check(tqf_model_load(model_path.c_str(), &m.p));
  int d = 0;
  check(tqf_model_dims(m.p, &d, nullptr));
  const Json info = Json::parse(take_string([&] {
    char* s = nullptr;
    check(tqf_model_info(m.p, &s));
    return s;
  }()));
  const int K = get_or<int>(doc, "K", info["config"]["K"].get<int>());
  const int M = get_or<int>(doc, "M", static_cast<int>(info["config"]["levels"].size()));

  const Json provenance{{"model_hash", info["hash"]}, {"seed", seed}, {"x", x}, {"qmem", doc.value("qmem", Json::object())}};

  Slices s;
  check(tqf_model_slices(m.p, x.data(), x.size(), K, M, seed, &s.p));
  check(tqf_slices_save(s.p, (prefix + ".slices.json").c_str(), provenance.dump().c_str()));

  Cloud c;
  char* report = nullptr;
  check(tqf_model_predict(m.p, x.data(), x.size(), sub(doc, "qmem").c_str(), seed, &c.p, &report));
  const Json rep = Json::parse(take_string(report));
  check(tqf_cloud_save(c.p, (prefix + ".cloud.json").c_str(), provenance.dump().c_str()));
  if (d == 2) check(tqf_cloud_kde_grid(c.p, (prefix + ".kde.csv").c_str(), cells));
  std::cout << rep.dump(2) << "\n";
}

void run_qmem(const Json& doc) {
  const std::string slices = required_string(doc, "slices");
  const std::string out = required_string(doc, "out");
  const auto seed = get_or<std::uint64_t>(doc, "seed", 0);
  Slices s;
  check(tqf_slices_load(slices.c_str(), &s.p));
  Cloud c;
  char* report = nullptr;
  check(tqf_qmem(s.p, sub(doc, "qmem").c_str(), seed, &c.p, &report));
  const Json rep = Json::parse(take_string(report));
  const Json provenance{{"slices", slices}, {"seed", seed}, {"qmem", doc.value("qmem", Json::object())}};
  check(tqf_cloud_save(c.p, out.c_str(), provenance.dump().c_str()));
  if (doc.contains("kde_grid")) check(tqf_cloud_kde_grid(c.p, doc.at("kde_grid").get<std::string>().c_str(), 60));
  std::cout << rep.dump(2) << "\n";
}

void run_score(const Json& doc) {
  const std::string pred = required_string(doc, "pred");
  const std::string ref = required_string(doc, "ref");
  Json opt = Json::object();
  for (const char* k : {"metrics", "directions", "seed"})
    if (doc.contains(k)) opt[k] = doc.at(k);
  Cloud p, r;
  check(tqf_cloud_load_any(pred.c_str(), &p.p));
  check(tqf_cloud_load_any(ref.c_str(), &r.p));
  char* report = nullptr;
  check(tqf_score(p.p, r.p, opt.dump().c_str(), &report));
  const std::string text = take_string(report);
  if (doc.contains("out")) write_file(doc.at("out").get<std::string>(), text + "\n");
  std::cout << text << "\n";
}

void run_benchmark(const Json& doc) {
  const std::string name = required_string(doc, "name");
  Json opt = Json::object();
  for (const char* k : {"seeds", "base_seed", "quick", "resume_dir", "csv"})
    if (doc.contains(k)) opt[k] = doc.at(k);
  char* text = nullptr;
  char* json = nullptr;
  int pass = 0;
  check(tqf_benchmark(name.c_str(), opt.dump().c_str(), &text, &json, &pass));
  std::cout << take_string(text);
  const std::string js = take_string(json);
  if (doc.contains("out")) write_file(doc.at("out").get<std::string>(), js + "\n");
}

void run_slice(const Json& doc) {
  const std::string sample = required_string(doc, "sample");
  const std::string out = required_string(doc, "out");
  const int K = get_or<int>(doc, "K", 25);
  const int M = get_or<int>(doc, "M", 25);
  const auto seed = get_or<std::uint64_t>(doc, "seed", 0);
  Cloud c;
  check(tqf_cloud_load_any(sample.c_str(), &c.p));
  Slices s;
  check(tqf_slices_from_cloud(c.p, K, M, seed, &s.p));
  const Json provenance{{"sample", sample}, {"seed", seed}};
  check(tqf_slices_save(s.p, out.c_str(), provenance.dump().c_str()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tomographic quantile forests: training, prediction, reconstruction and scoring"};
  app.require_subcommand(1);
  std::string log_level = "warn";
  int threads = 0;
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")->capture_default_str();
  app.add_option("--threads", threads, "worker threads (sets TQF_NUM_THREADS)");

  Command gen(app, "gen", "generate a synthetic dataset as CSV", {"name", "n", "seed", "params", "out"});
  gen.flag<std::string>("name", "/name", "generator name");
  gen.flag<long>("--n", "/n", "number of rows (0: generator default)");
  gen.flag<std::uint64_t>("--seed", "/seed", "random seed");
  gen.map_flag("--param", "/params", true, "generator parameter key=value (repeatable)");
  gen.flag<std::string>("-o,--out", "/out", "output CSV path");

  Command train(app, "train", "fit a model on a CSV dataset", {"data", "csv", "model", "seed", "out"});
  train.flag<std::string>("-d,--data", "/data", "training CSV");
  train.list_flag("--features", "/csv/features", false, "comma-separated feature columns");
  train.list_flag("--targets", "/csv/targets", false, "comma-separated target columns");
  train.map_flag("--transform", "/csv/transforms", false, "column=none|standardize|rank_uniform (repeatable)");
  train.flag<int>("--trees", "/model/forest/n_trees", "number of trees");
  train.flag<int>("--min-samples-leaf", "/model/forest/min_samples_leaf", "minimum in-bag rows per leaf");
  train.flag<int>("--G", "/model/G", "random directions per training row");
  train.flag<int>("--G-tilde", "/model/G_tilde", "rotated direction copies in the features");
  train.flag<std::string>("--scheme", "/model/scheme", "median_triple, distance_quantiles or explicit");
  train.flag<int>("--T", "/model/T", "number of frequencies");
  train.list_flag("--frequencies", "/model/explicit_w", true, "explicit frequencies");
  train.flag<int>("--K", "/model/K", "directions at inference");
  train.flag<int>("--M", "/model/M", "quantile levels at inference");
  train.flag<std::uint64_t>("--seed", "/seed", "random seed");
  train.flag<std::string>("-o,--out", "/out", "model file");

  Command predict(app, "predict", "slices, reconstructed cloud and KDE grid at one input",
                  {"model", "x", "qmem", "seed", "out", "K", "M", "kde_cells"});
  predict.flag<std::string>("-m,--model", "/model", "model file");
  predict.list_flag("--x", "/x", true, "comma-separated covariates");
  predict.flag<int>("--K", "/K", "directions in the emitted slice file");
  predict.flag<int>("--M", "/M", "levels in the emitted slice file");
  predict.flag<int>("--N0", "/qmem/N0", "initial cloud size");
  predict.flag<int>("--N1", "/qmem/N1", "points drawn per KDE refinement");
  predict.flag<int>("--E", "/qmem/E", "ensemble members");
  predict.flag<int>("--kde-cells", "/kde_cells", "KDE grid cells per axis");
  predict.flag<std::uint64_t>("--seed", "/seed", "random seed");
  predict.flag<std::string>("-o,--out", "/out", "output prefix (.slices.json, .cloud.json, .kde.csv)");

  Command qmem(app, "qmem", "reconstruct a cloud from a slice file", {"slices", "qmem", "seed", "out", "kde_grid"});
  qmem.flag<std::string>("-s,--slices", "/slices", "slice file");
  qmem.flag<int>("--N0", "/qmem/N0", "initial cloud size");
  qmem.flag<int>("--N1", "/qmem/N1", "points drawn per KDE refinement");
  qmem.flag<int>("--E", "/qmem/E", "ensemble members");
  qmem.flag<std::uint64_t>("--seed", "/seed", "random seed");
  qmem.flag<std::string>("--kde-grid", "/kde_grid", "also write the KDE grid CSV (d = 2)");
  qmem.flag<std::string>("-o,--out", "/out", "output cloud file");

  Command score(app, "score", "score a predicted cloud or sample against a reference sample",
                {"pred", "ref", "metrics", "directions", "seed", "out"});
  score.flag<std::string>("-p,--pred", "/pred", "prediction: cloud file (.json) or CSV sample");
  score.flag<std::string>("-r,--ref", "/ref", "reference: cloud file (.json) or CSV sample");
  score.list_flag("--metrics", "/metrics", false, "comma-separated subset of ed,es,crps,sw1,nll");
  score.flag<int>("--directions", "/directions", "directions for sliced W1");
  score.flag<std::uint64_t>("--seed", "/seed", "seed for the sliced W1 directions");
  score.flag<std::string>("-o,--out", "/out", "also write the report here");

  Command bench(app, "benchmark", "run a named experiment and print its table and verdicts",
                {"name", "seeds", "base_seed", "quick", "resume_dir", "csv", "out"});
  bench.flag<std::string>("name", "/name", "experiment name");
  bench.flag<int>("--seeds", "/seeds", "number of seeds or runs (0: the experiment default)");
  bench.flag<std::uint64_t>("--base-seed", "/base_seed", "first seed");
  bench.flag<bool>("--quick", "/quick", "smaller models for smoke runs");
  bench.flag<std::string>("--resume", "/resume_dir", "directory caching per-seed results");
  bench.flag<std::string>("--csv", "/csv", "input CSV (housing)");
  bench.flag<std::string>("-o,--out", "/out", "also write the report as JSON");

  Command slice(app, "slice", "directional Hazen quantiles of a CSV sample", {"sample", "K", "M", "seed", "out"});
  slice.flag<std::string>("-i,--sample", "/sample", "CSV sample or cloud file");
  slice.flag<int>("--K", "/K", "number of directions");
  slice.flag<int>("--M", "/M", "number of quantile levels");
  slice.flag<std::uint64_t>("--seed", "/seed", "random seed");
  slice.flag<std::string>("-o,--out", "/out", "output slice file");

  const std::vector<std::pair<Command*, void (*)(const Json&)>> commands = {
      {&gen, run_gen},         {&train, run_train},         {&predict, run_predict}, {&qmem, run_qmem},
      {&score, run_score},     {&bench, run_benchmark},     {&slice, run_slice}};

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int rc = app.exit(e);
      return rc == 0 ? 0 : TQF_ERR_USAGE;
    }
    if (threads > 0) setenv("TQF_NUM_THREADS", std::to_string(threads).c_str(), 1);
    check(tqf_set_log_level(log_level.c_str()));
    for (const auto& [cmd, run] : commands) {
      if (cmd->app()->parsed()) {
        run(cmd->document());
        return 0;
      }
    }
    usage_error("no command given");
  } catch (const Exit& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return TQF_ERR_DATA;
  }
}
