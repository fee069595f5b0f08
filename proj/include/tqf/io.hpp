#pragma once

#include "tqf/datasets.hpp"
#include "tqf/qmem.hpp"
#include "tqf/tqf_model.hpp"

#include <json.hpp>

namespace tqf::io {

using Json = nlohmann::json;

// Config documents. Parsing starts from the defaults, overrides the keys that
// are present and rejects any key it does not know.
Json to_json(const ForestConfig& c);
Json to_json(const QmemConfig& c);
Json to_json(const TqfConfig& c);
Json to_json(const GeneratorSpec& g);
ForestConfig forest_config_from_json(const Json& j);
QmemConfig qmem_config_from_json(const Json& j);
TqfConfig tqf_config_from_json(const Json& j);
GeneratorSpec generator_spec_from_json(const Json& j);

/// Reads a JSON document; syntax errors are Data errors naming the byte offset.
Json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

Json slices_to_json(const DirectionalQuantileSet& s, const Json& provenance = Json::object());
DirectionalQuantileSet slices_from_json(const Json& j);
void save_slices(const std::string& path, const DirectionalQuantileSet& s, const Json& provenance = Json::object());
DirectionalQuantileSet load_slices(const std::string& path);

Json cloud_to_json(const WeightedPointCloud& c, const Json& provenance = Json::object());
/// Weights within 1e-6 of summing to one are renormalized, others rejected.
WeightedPointCloud cloud_from_json(const Json& j);
void save_cloud(const std::string& path, const WeightedPointCloud& c, const Json& provenance = Json::object());
WeightedPointCloud load_cloud(const std::string& path);
Json load_cloud_provenance(const std::string& path);

/// Long-format (x, y, density) grid of a 2-D KDE, cells × cells points over
/// the support box padded by three kernel sds.
void save_kde_grid(const std::string& path, const KdeModel& kde, int cells = 60);

/// Every column of a headered numeric CSV as a uniform-weight cloud.
WeightedPointCloud load_sample_csv(const std::string& path);
void save_sample_csv(const std::string& path, const Matrix& points, const std::vector<std::string>& names = {});

}  // namespace tqf::io
