#include "isovox/manifest.hpp"

#include <cstdio>
#include <fstream>

#include "isovox/common.hpp"

namespace isovox {

const char* const kToolVersion = "0.1.0";

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "io-open", "cannot open '" + path + "' for digest");
  std::uint64_t h = 1469598103934665603ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (in.eof()) break;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

void RunManifest::add_input(const std::string& path) {
  inputs.emplace_back(path, file_digest(path));
}

void RunManifest::write(const std::string& primary_output) const {
  nlohmann::json j;
  j["tool"] = "isovox";
  j["version"] = kToolVersion;
  j["subcommand"] = subcommand;
  j["config"] = config;
  auto in = nlohmann::json::object();
  for (const auto& [path, digest] : inputs) in[path] = digest;
  j["inputs"] = in;
  j["outputs"] = outputs;
  j["seed"] = seed;
  j["duration_seconds"] = duration_seconds;
  const std::string path = primary_output + ".manifest.json";
  std::ofstream out(path);
  require(out.good(), "io-open", "cannot write manifest '" + path + "'");
  out << j.dump(2) << "\n";
}

}  // namespace isovox
