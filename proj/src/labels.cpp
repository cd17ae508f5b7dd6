#include "isovox/labels.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace isovox {

LabelTable read_label_table(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "io-open", "cannot open label table '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail("bad-json", "label table '" + path + "': " + e.what());
  }
  require(j.is_object(), "bad-table", "label table must be a JSON object of id -> name");
  LabelTable t;
  for (const auto& [key, value] : j.items()) {
    std::int32_t id = 0;
    try {
      id = static_cast<std::int32_t>(std::stol(key));
    } catch (...) {
      fail("bad-table", "label id '" + key + "' is not an integer");
    }
    require(value.is_string(), "bad-table", "label name for id " + key + " must be a string");
    t.entries.emplace_back(id, value.get<std::string>());
  }
  std::sort(t.entries.begin(), t.entries.end());
  t.validate();
  return t;
}

void write_label_table(const LabelTable& table, const std::string& path) {
  table.validate();
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [id, name] : table.entries) j[std::to_string(id)] = name;
  std::ofstream out(path);
  require(out.good(), "io-open", "cannot write label table '" + path + "'");
  out << j.dump(2) << "\n";
}

}  // namespace isovox
