#include "isovox/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace isovox {

double dice(const LabelVolume& a, const LabelVolume& b, std::int32_t label) {
  require(a.geom.approx_equal(b.geom), "grid-mismatch",
          "dice requires identical grids");
  i64 na = 0, nb = 0, nab = 0;
  for (i64 v = 0; v < a.geom.voxel_count(); ++v) {
    const bool ia = a.data[v] == label;
    const bool ib = b.data[v] == label;
    na += ia;
    nb += ib;
    nab += ia && ib;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(nab) / static_cast<double>(na + nb);
}

double label_boundary_area(const LabelVolume& v, std::int32_t label) {
  const auto& d = v.geom.dims;
  const auto& s = v.geom.spacing;
  const double face[3] = {s[1] * s[2], s[0] * s[2], s[0] * s[1]};
  double area = 0;
  for (i64 k = 0; k < d[2]; ++k)
    for (i64 j = 0; j < d[1]; ++j)
      for (i64 i = 0; i < d[0]; ++i) {
        if (v.at(i, j, k) != label) continue;
        const i64 idx[3] = {i, j, k};
        for (int a = 0; a < 3; ++a)
          for (int sign = -1; sign <= 1; sign += 2) {
            i64 n[3] = {idx[0], idx[1], idx[2]};
            n[a] += sign;
            const bool outside = n[a] < 0 || n[a] >= d[a];
            if (outside || v.at(n[0], n[1], n[2]) != label) area += face[a];
          }
      }
  return area;
}

// ---- incomplete beta ----

namespace {

double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  fail("no-converge", "incomplete beta continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  require(a > 0 && b > 0, "bad-arg", "incomplete beta needs a,b > 0");
  require(x >= 0.0 && x <= 1.0, "bad-arg", "incomplete beta needs x in [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                       a * std::log(x) + b * std::log1p(-x);
  const double bt = std::exp(ln_bt);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double dof) {
  if (!std::isfinite(t)) return 0.0;
  const double x = dof / (dof + t * t);
  return regularized_incomplete_beta(0.5 * dof, 0.5, x);
}

double rank_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  require(!pos.empty() && !neg.empty(), "too-few", "AUC needs both groups non-empty");
  struct Item {
    double v;
    bool is_pos;
  };
  std::vector<Item> all;
  all.reserve(pos.size() + neg.size());
  for (const double v : pos) all.push_back({v, true});
  for (const double v : neg) all.push_back({v, false});
  std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.v < b.v; });
  double rank_sum_pos = 0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].v == all[i].v) ++j;
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t q = i; q < j; ++q)
      if (all[q].is_pos) rank_sum_pos += midrank;
    i = j;
  }
  const double np = static_cast<double>(pos.size());
  const double nn = static_cast<double>(neg.size());
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

// ---- cohort ----

void CohortTable::validate() const {
  require(!rows.empty(), "bad-table", "cohort table is empty");
  std::set<std::string> ids;
  for (const auto& r : rows) {
    require(ids.insert(r.subject_id).second, "bad-table",
            "duplicate subject id '" + r.subject_id + "'");
    require(std::isfinite(r.age) && r.age > 0, "bad-table",
            "age must be finite and positive for '" + r.subject_id + "'");
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path,
                                               std::size_t min_cols) {
  std::ifstream in(path);
  require(in.good(), "io-open", "cannot open csv '" + path + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    rows.push_back(split_csv_line(line));
    require(rows.back().size() >= min_cols, "bad-csv",
            "csv row with too few columns in '" + path + "'");
  }
  require(rows.size() >= 2, "bad-csv", "csv '" + path + "' needs a header and data");
  return rows;
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    require(used == s.size(), "bad-csv", "bad number '" + s + "' in " + what);
    return v;
  } catch (const Error&) {
    throw;
  } catch (...) {
    fail("bad-csv", "bad number '" + s + "' in " + what);
  }
}

}  // namespace

CohortTable read_cohort_csv(const std::string& path) {
  const auto rows = read_csv(path, 4);
  const auto& header = rows[0];
  require(header[0] == "subject_id" && header[1] == "group" && header[2] == "age",
          "bad-csv", "cohort csv must start with subject_id,group,age");
  CohortTable t;
  for (std::size_t c = 3; c < header.size(); ++c) t.regions.push_back(header[c]);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    require(cells.size() == header.size(), "bad-csv", "ragged cohort csv row");
    CohortRow row;
    row.subject_id = cells[0];
    if (cells[1] == "CU")
      row.group = 0;
    else if (cells[1] == "MCI")
      row.group = 1;
    else
      fail("bad-csv", "group must be CU or MCI, got '" + cells[1] + "'");
    row.age = parse_double(cells[2], "age");
    for (std::size_t c = 3; c < header.size(); ++c)
      row.thickness[header[c]] = parse_double(cells[c], "thickness " + header[c]);
    t.rows.push_back(std::move(row));
  }
  t.validate();
  return t;
}

GlmResult glm_group_test(const CohortTable& table, const std::string& region) {
  table.validate();
  const i64 n = static_cast<i64>(table.rows.size());
  require(n >= 4, "too-few", "GLM needs at least 4 subjects");
  i64 n_cu = 0, n_mci = 0;
  for (const auto& r : table.rows) (r.group == 0 ? n_cu : n_mci)++;
  require(n_cu >= 2 && n_mci >= 2, "too-few", "GLM needs at least 2 subjects per group");

  // Normal equations for y = b0 + b1*group + b2*age.
  double xtx[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
  double xty[3] = {0, 0, 0};
  std::vector<double> cu_vals, mci_vals;
  for (const auto& r : table.rows) {
    const auto it = r.thickness.find(region);
    require(it != r.thickness.end(), "bad-region",
            "region '" + region + "' missing for '" + r.subject_id + "'");
    const double x[3] = {1.0, static_cast<double>(r.group), r.age};
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) xtx[a][b] += x[a] * x[b];
      xty[a] += x[a] * it->second;
    }
    (r.group == 0 ? cu_vals : mci_vals).push_back(it->second);
  }

  // Invert XtX by Gauss-Jordan with partial pivoting.
  double inv[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  double m[3][3];
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) m[a][b] = xtx[a][b];
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    require(std::abs(m[piv][col]) > 1e-10 * std::max(1.0, std::abs(xtx[col][col])),
            "rank-deficient", "GLM design matrix is rank deficient");
    std::swap(m[col], m[piv]);
    std::swap(inv[col], inv[piv]);
    const double scale = 1.0 / m[col][col];
    for (int b = 0; b < 3; ++b) {
      m[col][b] *= scale;
      inv[col][b] *= scale;
    }
    for (int r = 0; r < 3; ++r) {
      if (r == col) continue;
      const double f = m[r][col];
      for (int b = 0; b < 3; ++b) {
        m[r][b] -= f * m[col][b];
        inv[r][b] -= f * inv[col][b];
      }
    }
  }
  double beta[3];
  for (int a = 0; a < 3; ++a)
    beta[a] = inv[a][0] * xty[0] + inv[a][1] * xty[1] + inv[a][2] * xty[2];

  double rss = 0;
  for (const auto& r : table.rows) {
    const double pred = beta[0] + beta[1] * r.group + beta[2] * r.age;
    const double e = r.thickness.at(region) - pred;
    rss += e * e;
  }
  const double dof = static_cast<double>(n - 3);
  const double sigma2 = rss / dof;
  const double se = std::sqrt(sigma2 * inv[1][1]);

  GlmResult res;
  res.beta_group = beta[1];
  res.p_value = se > 0 ? student_t_two_sided_p(beta[1] / se, dof)
                       : (beta[1] == 0 ? 1.0 : 0.0);
  res.auc = rank_auc(cu_vals, mci_vals);
  return res;
}

void write_group_stats_csv(const CohortTable& table, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "io-open", "cannot write '" + path + "'");
  out << "region,beta_group,p_value,auc\n";
  out.precision(12);
  for (const auto& region : table.regions) {
    const GlmResult r = glm_group_test(table, region);
    out << region << ',' << r.beta_group << ',' << r.p_value << ',' << r.auc << "\n";
  }
}

// ---- longitudinal ----

void PairTable::validate() const {
  require(!rows.empty(), "bad-table", "pair table is empty");
  for (const auto& r : rows) {
    require(r.days > 0, "bad-table", "scan interval must be positive days");
    for (const auto& [region, pair] : r.thickness)
      require(std::isfinite(pair.first) && std::isfinite(pair.second), "bad-table",
              "non-finite thickness for region '" + region + "'");
  }
}

PairTable read_pair_csv(const std::string& path) {
  const auto rows = read_csv(path, 4);
  const auto& header = rows[0];
  require(header[0] == "subject_id" && header[1] == "days", "bad-csv",
          "pair csv must start with subject_id,days");
  PairTable t;
  std::vector<std::pair<std::size_t, std::size_t>> cols;  // (scan1, scan2)
  for (std::size_t c = 2; c < header.size(); ++c) {
    const auto& h = header[c];
    const auto pos = h.rfind("_scan1");
    if (pos == std::string::npos || pos + 6 != h.size()) continue;
    const std::string region = h.substr(0, pos);
    std::size_t c2 = 0;
    bool found = false;
    for (std::size_t k = 2; k < header.size(); ++k)
      if (header[k] == region + "_scan2") {
        c2 = k;
        found = true;
      }
    require(found, "bad-csv", "missing column '" + region + "_scan2'");
    t.regions.push_back(region);
    cols.emplace_back(c, c2);
  }
  require(!t.regions.empty(), "bad-csv", "pair csv has no <region>_scan1 columns");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    require(cells.size() == header.size(), "bad-csv", "ragged pair csv row");
    PairRow row;
    row.subject_id = cells[0];
    row.days = static_cast<i64>(parse_double(cells[1], "days"));
    for (std::size_t q = 0; q < t.regions.size(); ++q)
      row.thickness[t.regions[q]] = {parse_double(cells[cols[q].first], "scan1"),
                                     parse_double(cells[cols[q].second], "scan2")};
    t.rows.push_back(std::move(row));
  }
  t.validate();
  return t;
}

double annualize(double change, i64 days) {
  require(days > 0, "bad-days", "observation period must be positive days");
  return change * 365.0 / static_cast<double>(days);
}

LongitudinalResult longitudinal_stability(const PairTable& pairs,
                                          const std::string& region) {
  pairs.validate();
  std::vector<double> annual;
  for (const auto& r : pairs.rows) {
    const auto it = r.thickness.find(region);
    require(it != r.thickness.end(), "bad-region",
            "region '" + region + "' missing for '" + r.subject_id + "'");
    annual.push_back(annualize(it->second.second - it->second.first, r.days));
  }
  LongitudinalResult res;
  for (const double a : annual) res.abs_change_total += std::abs(a);
  res.mean_abs_change = res.abs_change_total / static_cast<double>(annual.size());
  if (annual.size() >= 2) {
    const double mean =
        std::accumulate(annual.begin(), annual.end(), 0.0) / annual.size();
    double ss = 0;
    for (const double a : annual) ss += (a - mean) * (a - mean);
    res.sd = std::sqrt(ss / static_cast<double>(annual.size() - 1));
  }
  return res;
}

void write_longitudinal_csv(const PairTable& table, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "io-open", "cannot write '" + path + "'");
  out << "region,sd,abs_change_total,mean_abs_change\n";
  out.precision(12);
  for (const auto& region : table.regions) {
    const LongitudinalResult r = longitudinal_stability(table, region);
    out << region << ',';
    if (r.sd) out << *r.sd;
    out << ',' << r.abs_change_total << ',' << r.mean_abs_change << "\n";
  }
}

}  // namespace isovox
