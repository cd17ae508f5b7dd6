#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace isovox {

/// Run record written next to each subcommand's primary output: resolved
/// config, input digests, tool version, seed and wall time. Re-running with
/// the recorded config reproduces deterministic outputs bit-for-bit.
struct RunManifest {
  std::string subcommand;
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::pair<std::string, std::string>> inputs;  // path, digest
  std::vector<std::string> outputs;
  std::uint64_t seed = 0;
  double duration_seconds = 0;

  void add_input(const std::string& path);
  void write(const std::string& primary_output) const;  // <output>.manifest.json
};

/// FNV-1a 64-bit digest of a file's bytes, hex encoded.
std::string file_digest(const std::string& path);

extern const char* const kToolVersion;

}  // namespace isovox
