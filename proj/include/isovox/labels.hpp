#pragma once

#include <string>

#include "isovox/volume.hpp"

namespace isovox {

/// Sidecar format: a JSON object mapping label id to name,
/// e.g. {"0": "background", "1": "wall"}.
LabelTable read_label_table(const std::string& path);
void write_label_table(const LabelTable& table, const std::string& path);

}  // namespace isovox
