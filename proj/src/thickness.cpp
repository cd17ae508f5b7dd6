#include "isovox/thickness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <thread>

namespace isovox {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1-D squared-distance lower envelope (Felzenszwalb & Huttenlocher) over
// samples at physical positions i*h; infinite entries cannot be sources.
void edt_1d(const double* f, double* d, i64 n, double h, std::vector<i64>& v,
            std::vector<double>& z) {
  v.resize(n);
  z.resize(n + 1);
  i64 k = -1;
  for (i64 q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    const double xq = static_cast<double>(q) * h;
    const double fq = f[q] + xq * xq;
    while (k >= 0) {
      const double xv = static_cast<double>(v[k]) * h;
      const double s = (fq - (f[v[k]] + xv * xv)) / (2.0 * (xq - xv));
      if (s <= z[k]) {
        --k;
      } else {
        z[k + 1] = s;
        break;
      }
    }
    if (k < 0) z[0] = -kInf;
    ++k;
    v[k] = q;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    for (i64 q = 0; q < n; ++q) d[q] = kInf;
    return;
  }
  i64 j = 0;
  for (i64 q = 0; q < n; ++q) {
    const double xq = static_cast<double>(q) * h;
    while (z[j + 1] < xq) ++j;
    const double dx = (static_cast<double>(q) - static_cast<double>(v[j])) * h;
    d[q] = dx * dx + f[v[j]];
  }
}

}  // namespace

std::vector<double> distance_transform(const std::vector<std::uint8_t>& mask,
                                       const GridGeometry& geom) {
  geom.validate();
  require(static_cast<i64>(mask.size()) == geom.voxel_count(), "bad-data",
          "mask length does not match grid dims");
  const auto& d = geom.dims;
  std::vector<double> sq(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) sq[i] = mask[i] ? kInf : 0.0;

  std::vector<i64> v;
  std::vector<double> z, line_in, line_out;
  const i64 nx = d[0], ny = d[1], nz = d[2];

  line_in.resize(std::max({nx, ny, nz}));
  line_out.resize(line_in.size());

  for (i64 k = 0; k < nz; ++k)  // x lines
    for (i64 j = 0; j < ny; ++j) {
      double* row = sq.data() + geom.linear_index(0, j, k);
      edt_1d(row, line_out.data(), nx, geom.spacing[0], v, z);
      std::copy(line_out.begin(), line_out.begin() + nx, row);
    }
  for (i64 k = 0; k < nz; ++k)  // y lines
    for (i64 i = 0; i < nx; ++i) {
      for (i64 j = 0; j < ny; ++j) line_in[j] = sq[geom.linear_index(i, j, k)];
      edt_1d(line_in.data(), line_out.data(), ny, geom.spacing[1], v, z);
      for (i64 j = 0; j < ny; ++j) sq[geom.linear_index(i, j, k)] = line_out[j];
    }
  for (i64 j = 0; j < ny; ++j)  // z lines
    for (i64 i = 0; i < nx; ++i) {
      for (i64 k = 0; k < nz; ++k) line_in[k] = sq[geom.linear_index(i, j, k)];
      edt_1d(line_in.data(), line_out.data(), nz, geom.spacing[2], v, z);
      for (i64 k = 0; k < nz; ++k) sq[geom.linear_index(i, j, k)] = line_out[k];
    }

  for (auto& x : sq) x = x == kInf ? kInf : std::sqrt(x);
  return sq;
}

namespace {

// 13 direction pairs spanning the 26-neighborhood up to sign.
constexpr int kPairs[13][3] = {{1, 0, 0},  {0, 1, 0},  {0, 0, 1},  {1, 1, 0},
                               {1, -1, 0}, {1, 0, 1},  {1, 0, -1}, {0, 1, 1},
                               {0, 1, -1}, {1, 1, 1},  {1, 1, -1}, {1, -1, 1},
                               {-1, 1, 1}};

}  // namespace

Skeleton extract_skeleton(const std::vector<std::uint8_t>& mask,
                          const GridGeometry& geom, double prune_ratio) {
  require(prune_ratio >= 0.0 && prune_ratio < 1.0, "bad-prune",
          "prune_ratio must be in [0,1)");
  const i64 n = geom.voxel_count();
  require(static_cast<i64>(mask.size()) == n, "bad-data", "mask length mismatch");
  bool any = false;
  for (const auto m : mask) any = any || m;
  require(any, "empty-mask", "skeleton of an empty mask");

  const std::vector<double> dt = distance_transform(mask, geom);
  const auto& d = geom.dims;
  auto dt_at = [&](i64 i, i64 j, i64 k) -> double {
    if (i < 0 || j < 0 || k < 0 || i >= d[0] || j >= d[1] || k >= d[2]) return 0.0;
    const i64 v = geom.linear_index(i, j, k);
    return mask[v] ? dt[v] : 0.0;
  };

  std::vector<std::uint8_t> is_skel(n, 0);
  i64 v = 0;
  for (i64 k = 0; k < d[2]; ++k)
    for (i64 j = 0; j < d[1]; ++j)
      for (i64 i = 0; i < d[0]; ++i, ++v) {
        if (!mask[v]) continue;
        const double c = dt[v];
        bool ridge = true;
        for (const auto& p : kPairs) {
          if (c < dt_at(i + p[0], j + p[1], k + p[2]) ||
              c < dt_at(i - p[0], j - p[1], k - p[2])) {
            ridge = false;
            break;
          }
        }
        is_skel[v] = ridge;
      }

  // 26-connected components of the mask, for per-component pruning.
  std::vector<std::int32_t> comp(n, -1);
  std::int32_t n_comp = 0;
  std::vector<i64> stack;
  for (i64 s = 0; s < n; ++s) {
    if (!mask[s] || comp[s] >= 0) continue;
    comp[s] = n_comp;
    stack.assign(1, s);
    while (!stack.empty()) {
      const i64 cur = stack.back();
      stack.pop_back();
      const i64 ci = cur % d[0];
      const i64 cj = (cur / d[0]) % d[1];
      const i64 ck = cur / (d[0] * d[1]);
      for (int dk = -1; dk <= 1; ++dk)
        for (int dj = -1; dj <= 1; ++dj)
          for (int di = -1; di <= 1; ++di) {
            if (!di && !dj && !dk) continue;
            const i64 ni = ci + di, nj = cj + dj, nk = ck + dk;
            if (ni < 0 || nj < 0 || nk < 0 || ni >= d[0] || nj >= d[1] || nk >= d[2])
              continue;
            const i64 nv = geom.linear_index(ni, nj, nk);
            if (mask[nv] && comp[nv] < 0) {
              comp[nv] = n_comp;
              stack.push_back(nv);
            }
          }
    }
    ++n_comp;
  }

  std::vector<double> comp_max(n_comp, 0.0);
  for (i64 s = 0; s < n; ++s)
    if (is_skel[s]) comp_max[comp[s]] = std::max(comp_max[comp[s]], dt[s]);

  Skeleton out;
  for (i64 s = 0; s < n; ++s)
    if (is_skel[s] && dt[s] >= prune_ratio * comp_max[comp[s]]) {
      out.indices.push_back(s);
      out.radius.push_back(dt[s]);
    }
  return out;
}

namespace {

LabelThickness measure_label(const LabelVolume& labels, std::int32_t target,
                             double prune_ratio, Volume* map) {
  LabelThickness row;
  row.label = target;
  row.name = labels.table.name(target);
  const i64 n = labels.geom.voxel_count();
  std::vector<std::uint8_t> mask(n, 0);
  i64 count = 0;
  for (i64 v = 0; v < n; ++v)
    if (labels.data[v] == target) {
      mask[v] = 1;
      ++count;
    }
  row.n_voxels = count;
  if (count == 0) return row;  // reported as missing, never as zero thickness

  const Skeleton skel = extract_skeleton(mask, labels.geom, prune_ratio);
  row.n_skeleton = static_cast<i64>(skel.indices.size());

  const auto& d = labels.geom.dims;
  std::vector<Vec3> skel_pos(skel.indices.size());
  for (std::size_t s = 0; s < skel.indices.size(); ++s) {
    const i64 v = skel.indices[s];
    skel_pos[s] = labels.geom.voxel_to_physical(
        {static_cast<double>(v % d[0]), static_cast<double>((v / d[0]) % d[1]),
         static_cast<double>(v / (d[0] * d[1]))});
  }
  const double h = std::min({labels.geom.spacing[0], labels.geom.spacing[1],
                             labels.geom.spacing[2]});

  std::vector<double> values;
  values.reserve(count);
  for (i64 v = 0; v < n; ++v) {
    if (!mask[v]) continue;
    const Vec3 p = labels.geom.voxel_to_physical(
        {static_cast<double>(v % d[0]), static_cast<double>((v / d[0]) % d[1]),
         static_cast<double>(v / (d[0] * d[1]))});
    double best = kInf;
    std::size_t best_s = 0;
    for (std::size_t s = 0; s < skel_pos.size(); ++s) {
      const Vec3 rel = p - skel_pos[s];
      const double dist = dot(rel, rel);
      if (dist < best) {
        best = dist;
        best_s = s;
      }
    }
    const double t = 2.0 * skel.radius[best_s] - 0.5 * h;
    values.push_back(t);
    if (map) map->data[v] = static_cast<float>(t);
  }
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size();
  row.median_mm = (m % 2 == 1) ? values[m / 2]
                               : 0.5 * (values[m / 2 - 1] + values[m / 2]);
  return row;
}

}  // namespace

ThicknessResult thickness_map(const LabelVolume& labels,
                              const std::vector<std::int32_t>& target_labels,
                              double prune_ratio, bool want_map, int jobs) {
  labels.validate();
  for (const auto t : target_labels)
    require(labels.table.contains(t), "label-missing",
            "target label " + std::to_string(t) + " not in table");

  ThicknessResult res;
  if (want_map) {
    res.map.emplace();
    res.map->geom = labels.geom;
    res.map->data.assign(labels.geom.voxel_count(), 0.0f);
  }
  res.rows.resize(target_labels.size());

  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(target_labels.size())));
  if (workers <= 1) {
    for (std::size_t t = 0; t < target_labels.size(); ++t)
      res.rows[t] = measure_label(labels, target_labels[t], prune_ratio,
                                  want_map ? &*res.map : nullptr);
  } else {
    // Labels are disjoint, so parallel writes into the map touch disjoint voxels.
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&]() {
        for (std::size_t t = next.fetch_add(1); t < target_labels.size();
             t = next.fetch_add(1))
          res.rows[t] = measure_label(labels, target_labels[t], prune_ratio,
                                      want_map ? &*res.map : nullptr);
      });
    for (auto& th : pool) th.join();
  }
  return res;
}

void write_thickness_csv(const ThicknessResult& r, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "io-open", "cannot write thickness csv '" + path + "'");
  out << "label_id,label_name,n_voxels,n_skeleton,median_thickness_mm\n";
  out.precision(12);
  for (const auto& row : r.rows) {
    out << row.label << ',' << row.name << ',' << row.n_voxels << ',' << row.n_skeleton
        << ',';
    if (row.median_mm) out << *row.median_mm;
    out << "\n";
  }
}

}  // namespace isovox
