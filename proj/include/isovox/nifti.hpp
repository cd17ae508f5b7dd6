#pragma once

#include <string>

#include "isovox/volume.hpp"

namespace isovox {

// Single-file little-endian NIfTI-1 with 3 spatial dimensions. Supported
// datatypes: uint8, int16, float32. Geometry comes from the sform when
// sform_code > 0; qform-only files are rejected; with neither code set the
// grid is axis-aligned at the origin. No gzip, no NIfTI-2, no 4-D.

Volume read_nifti_volume(const std::string& path);

/// Integer datatypes only; voxel values are preserved exactly and must all
/// appear in `table`.
LabelVolume read_nifti_labels(const std::string& path, const LabelTable& table);

/// float32 on disk.
void write_nifti(const Volume& v, const std::string& path);

/// int16 on disk; label ids outside the int16 range are an error.
void write_nifti(const LabelVolume& v, const std::string& path);

}  // namespace isovox
