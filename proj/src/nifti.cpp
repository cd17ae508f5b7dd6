#include "isovox/nifti.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <vector>

namespace isovox {

namespace {

#pragma pack(push, 1)
struct Nifti1Header {
  std::int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1, intent_p2, intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope, scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max, cal_min;
  float slice_duration, toffset;
  std::int32_t glmax, glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code, sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4], srow_y[4], srow_z[4];
  char intent_name[16];
  char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must be 348 bytes");

constexpr std::int16_t DT_UINT8 = 2;
constexpr std::int16_t DT_INT16 = 4;
constexpr std::int16_t DT_FLOAT32 = 16;

struct RawNifti {
  Nifti1Header hdr;
  GridGeometry geom;
  std::vector<char> payload;
};

RawNifti read_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "io-open", "cannot open '" + path + "'");
  RawNifti r{};
  in.read(reinterpret_cast<char*>(&r.hdr), sizeof(r.hdr));
  require(in.gcount() == sizeof(r.hdr), "bad-header", "file shorter than a NIfTI-1 header");
  const Nifti1Header& h = r.hdr;
  require(h.sizeof_hdr == 348, "bad-header",
          "sizeof_hdr is " + std::to_string(h.sizeof_hdr) +
              ", expected 348 (big-endian or non-NIfTI-1 files are unsupported)");
  require(h.dim[0] == 3, "bad-dims",
          "dim[0] is " + std::to_string(h.dim[0]) + ", expected 3 spatial dimensions");
  require(h.datatype == DT_UINT8 || h.datatype == DT_INT16 || h.datatype == DT_FLOAT32,
          "bad-datatype",
          "datatype " + std::to_string(h.datatype) +
              " unsupported (uint8, int16 and float32 only)");
  for (int a = 1; a <= 3; ++a) {
    require(h.dim[a] >= 1, "bad-dims", "dim[" + std::to_string(a) + "] must be >= 1");
    require(h.pixdim[a] > 0.0f, "bad-spacing",
            "pixdim[" + std::to_string(a) + "] must be > 0");
  }

  GridGeometry& g = r.geom;
  g.dims = {h.dim[1], h.dim[2], h.dim[3]};
  g.spacing = {h.pixdim[1], h.pixdim[2], h.pixdim[3]};
  if (h.sform_code > 0) {
    const float* rows[3] = {h.srow_x, h.srow_y, h.srow_z};
    g.origin = {rows[0][3], rows[1][3], rows[2][3]};
    for (int c = 0; c < 3; ++c) {
      double norm = 0.0;
      for (int rr = 0; rr < 3; ++rr) norm += double(rows[rr][c]) * double(rows[rr][c]);
      norm = std::sqrt(norm);
      require(norm > 0.0, "bad-header", "sform column " + std::to_string(c) + " is zero");
      for (int rr = 0; rr < 3; ++rr) g.direction[rr][c] = double(rows[rr][c]) / norm;
    }
    // Orthonormal signed permutations only; obliques are out of scope.
    for (int c = 0; c < 3; ++c)
      for (int rr = 0; rr < 3; ++rr) {
        const double v = std::abs(g.direction[rr][c]);
        require(v < 1e-4 || std::abs(v - 1.0) < 1e-4, "oblique-unsupported",
                "sform direction is not a signed axis permutation");
        g.direction[rr][c] = std::round(g.direction[rr][c]);
      }
  } else if (h.qform_code > 0) {
    fail("qform-unsupported",
         "file uses qform-only geometry; re-write it with an sform");
  }
  g.validate();

  const i64 n = g.voxel_count();
  const int bytes = h.datatype == DT_UINT8 ? 1 : (h.datatype == DT_INT16 ? 2 : 4);
  const long offset = std::lround(double(h.vox_offset));
  require(offset >= 348, "bad-header", "vox_offset must be >= 348");
  in.seekg(offset, std::ios::beg);
  r.payload.resize(static_cast<std::size_t>(n) * bytes);
  in.read(r.payload.data(), static_cast<std::streamsize>(r.payload.size()));
  require(in.gcount() == static_cast<std::streamsize>(r.payload.size()), "truncated",
          "voxel payload shorter than dim[] promises");
  return r;
}

Nifti1Header make_header(const GridGeometry& g, std::int16_t datatype, int bytes) {
  Nifti1Header h{};
  h.sizeof_hdr = 348;
  h.regular = 'r';
  h.dim[0] = 3;
  for (int a = 0; a < 3; ++a) h.dim[1 + a] = static_cast<std::int16_t>(g.dims[a]);
  for (int a = 4; a < 8; ++a) h.dim[a] = 1;
  h.datatype = datatype;
  h.bitpix = static_cast<std::int16_t>(8 * bytes);
  h.pixdim[0] = 1.0f;
  for (int a = 0; a < 3; ++a) h.pixdim[1 + a] = static_cast<float>(g.spacing[a]);
  for (int a = 4; a < 8; ++a) h.pixdim[a] = 1.0f;
  h.vox_offset = 352.0f;
  h.scl_slope = 1.0f;
  h.scl_inter = 0.0f;
  h.qform_code = 0;
  h.sform_code = 1;
  float* rows[3] = {h.srow_x, h.srow_y, h.srow_z};
  for (int rr = 0; rr < 3; ++rr) {
    for (int c = 0; c < 3; ++c)
      rows[rr][c] = static_cast<float>(g.direction[rr][c] * g.spacing[c]);
    rows[rr][3] = static_cast<float>(g.origin[rr]);
  }
  std::strncpy(h.descrip, "isovox", sizeof(h.descrip) - 1);
  h.magic[0] = 'n';
  h.magic[1] = '+';
  h.magic[2] = '1';
  h.magic[3] = '\0';
  return h;
}

void write_raw(const std::string& path, const Nifti1Header& h, const char* payload,
               std::size_t bytes) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "io-open", "cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(&h), sizeof(h));
  const char pad[4] = {0, 0, 0, 0};  // empty extension block up to vox_offset 352
  out.write(pad, 4);
  out.write(payload, static_cast<std::streamsize>(bytes));
  require(out.good(), "io-write", "short write to '" + path + "'");
}

}  // namespace

Volume read_nifti_volume(const std::string& path) {
  RawNifti r = read_raw(path);
  Volume v;
  v.geom = r.geom;
  const i64 n = v.geom.voxel_count();
  v.data.resize(n);
  switch (r.hdr.datatype) {
    case DT_UINT8: {
      const auto* src = reinterpret_cast<const std::uint8_t*>(r.payload.data());
      for (i64 i = 0; i < n; ++i) v.data[i] = static_cast<float>(src[i]);
      break;
    }
    case DT_INT16: {
      const auto* src = reinterpret_cast<const std::int16_t*>(r.payload.data());
      for (i64 i = 0; i < n; ++i) v.data[i] = static_cast<float>(src[i]);
      break;
    }
    default:
      std::memcpy(v.data.data(), r.payload.data(), static_cast<std::size_t>(n) * 4);
  }
  return v;
}

LabelVolume read_nifti_labels(const std::string& path, const LabelTable& table) {
  RawNifti r = read_raw(path);
  require(r.hdr.datatype == DT_UINT8 || r.hdr.datatype == DT_INT16, "bad-datatype",
          "label volumes require an integer datatype");
  LabelVolume v;
  v.geom = r.geom;
  v.table = table;
  const i64 n = v.geom.voxel_count();
  v.data.resize(n);
  if (r.hdr.datatype == DT_UINT8) {
    const auto* src = reinterpret_cast<const std::uint8_t*>(r.payload.data());
    for (i64 i = 0; i < n; ++i) v.data[i] = src[i];
  } else {
    const auto* src = reinterpret_cast<const std::int16_t*>(r.payload.data());
    for (i64 i = 0; i < n; ++i) v.data[i] = src[i];
  }
  v.validate();
  return v;
}

void write_nifti(const Volume& v, const std::string& path) {
  v.validate();
  const Nifti1Header h = make_header(v.geom, DT_FLOAT32, 4);
  write_raw(path, h, reinterpret_cast<const char*>(v.data.data()), v.data.size() * 4);
}

void write_nifti(const LabelVolume& v, const std::string& path) {
  v.validate();
  std::vector<std::int16_t> buf(v.data.size());
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    const std::int32_t id = v.data[i];
    require(id >= std::numeric_limits<std::int16_t>::min() &&
                id <= std::numeric_limits<std::int16_t>::max(),
            "label-range", "label id " + std::to_string(id) + " out of int16 range");
    buf[i] = static_cast<std::int16_t>(id);
  }
  const Nifti1Header h = make_header(v.geom, DT_INT16, 2);
  write_raw(path, h, reinterpret_cast<const char*>(buf.data()), buf.size() * 2);
}

}  // namespace isovox
