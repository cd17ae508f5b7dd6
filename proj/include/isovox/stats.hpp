#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "isovox/volume.hpp"

namespace isovox {

/// 2|A∩B| / (|A|+|B|) for one label's binary masks; 1 when both are empty.
/// Requires identical grids.
double dice(const LabelVolume& a, const LabelVolume& b, std::int32_t label);

/// Total physical area (mm^2) of faces where `label` meets a different label
/// or the volume boundary.
double label_boundary_area(const LabelVolume& v, std::int32_t label);

// ---- cohort statistics ----

struct CohortRow {
  std::string subject_id;
  int group = 0;  // CU = 0, MCI = 1
  double age = 0;
  std::map<std::string, double> thickness;
};

struct CohortTable {
  std::vector<CohortRow> rows;
  std::vector<std::string> regions;
  void validate() const;
};

/// CSV schema: subject_id,group,age,<region>... with group in {CU, MCI}.
CohortTable read_cohort_csv(const std::string& path);

struct GlmResult {
  double beta_group = 0;  // MCI coded 1, so negative means MCI thinner
  double p_value = 1;
  double auc = 0.5;  // P(CU thickness > MCI thickness), midranks for ties
};

/// OLS of thickness on [1, group, age]; two-sided p for the group term from
/// the Student-t distribution with n-3 dof.
GlmResult glm_group_test(const CohortTable& table, const std::string& region);

void write_group_stats_csv(const CohortTable& table, const std::string& path);

// ---- longitudinal ----

struct PairRow {
  std::string subject_id;
  i64 days = 0;
  std::map<std::string, std::pair<double, double>> thickness;  // scan1, scan2
};

struct PairTable {
  std::vector<PairRow> rows;
  std::vector<std::string> regions;
  void validate() const;
};

/// CSV schema: subject_id,days,<region>_scan1,<region>_scan2,...
PairTable read_pair_csv(const std::string& path);

/// change * 365 / days (mm/year); days must be positive.
double annualize(double change, i64 days);

struct LongitudinalResult {
  std::optional<double> sd;  // sample SD of annualized changes; needs >= 2 pairs
  double abs_change_total = 0;
  double mean_abs_change = 0;
};

LongitudinalResult longitudinal_stability(const PairTable& pairs,
                                          const std::string& region);

void write_longitudinal_csv(const PairTable& table, const std::string& path);

// ---- numeric primitives (exposed for tests) ----

/// Regularized incomplete beta I_x(a,b) via Lentz continued fraction.
double regularized_incomplete_beta(double a, double b, double x);

/// Two-sided p-value of a Student-t statistic.
double student_t_two_sided_p(double t, double dof);

/// Rank-based AUC with midranks: P(x from `pos` > y from `neg`) + tie half-credit.
double rank_auc(const std::vector<double>& pos, const std::vector<double>& neg);

}  // namespace isovox
