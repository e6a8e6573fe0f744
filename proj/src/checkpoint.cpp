#include "ilm/checkpoint.hpp"

#include <fstream>

#include "ilm/errors.hpp"
#include "nlohmann/json.hpp"

namespace ilm {

using json = nlohmann::ordered_json;

void save_parameters(const std::filesystem::path& path, std::span<const Parameter* const> params) {
  json j;
  j["format"] = "ilm-params-v1";
  json list = json::array();
  for (const Parameter* p : params) {
    json entry;
    entry["name"] = p->name;
    entry["shape"] = {p->value.rows(), p->value.cols()};
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(p->value.size()));
    for (Eigen::Index r = 0; r < p->value.rows(); ++r)
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) flat.push_back(p->value(r, c));
    entry["values"] = flat;
    list.push_back(std::move(entry));
  }
  j["parameters"] = std::move(list);
  std::ofstream out(path);
  if (!out) fail(Errc::io_error, "cannot open " + path.string() + " for writing");
  out << j.dump() << '\n';
  if (!out) fail(Errc::io_error, "write failed for " + path.string());
}

void load_parameters(const std::filesystem::path& path, std::span<Parameter* const> params) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(Errc::parse_error, path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "ilm-params-v1")
    fail(Errc::parse_error, path.string() + ": unknown checkpoint format");
  const auto& list = j.at("parameters");
  if (list.size() != params.size())
    fail(Errc::parse_error, path.string() + ": expected " + std::to_string(params.size()) +
                                " parameters, found " + std::to_string(list.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& entry = list[i];
    Parameter* p = params[i];
    if (entry.at("name").get<std::string>() != p->name)
      fail(Errc::parse_error, "parameter name mismatch: expected " + p->name);
    const auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
    if (shape.size() != 2 || shape[0] != p->value.rows() || shape[1] != p->value.cols())
      fail(Errc::parse_error, "parameter shape mismatch for " + p->name);
    const auto flat = entry.at("values").get<std::vector<double>>();
    if (flat.size() != static_cast<std::size_t>(p->value.size()))
      fail(Errc::parse_error, "parameter value count mismatch for " + p->name);
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < p->value.rows(); ++r)
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) p->value(r, c) = flat[k++];
  }
}

}  // namespace ilm
