#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "vot/cohort.hpp"
#include "vot/error.hpp"
#include "vot/rand_test.hpp"
#include "vot/stats.hpp"

namespace vot {

struct BalanceRow {
  std::string covariate;
  double std_diff_before = 0.0;
  double std_diff_after = 0.0;
  bool undefined = false;  // covariate constant in both groups
};

// Standardized differences before and after matching. The denominator
// s = sqrt((s_T^2 + s_C^2)/2) always comes from the unmatched cohort; the
// after-matching numerator weights within-set means by the rand-test set
// weights w_i.
inline std::vector<BalanceRow> balance_table(const Cohort& before, const Cohort& matched) {
  require(before.covariate_names == matched.covariate_names, errc::invalid_input,
          "balance_table: cohorts disagree on covariates");
  require(!matched.sets.empty(), errc::invalid_input, "balance_table: no matched sets");
  const std::size_t k = before.covariate_names.size();
  const auto w = set_weights(matched);

  std::vector<BalanceRow> rows(k);
  for (std::size_t p = 0; p < k; ++p) {
    std::vector<double> xt, xc;
    for (const auto& u : before.units)
      (u.treated ? xt : xc).push_back(u.covariates[p]);
    require(!xt.empty() && !xc.empty(), errc::invalid_input,
            "balance_table: need both treated and control units");
    const double s =
        std::sqrt(0.5 * (sample_variance(xt) + sample_variance(xc)));

    BalanceRow row;
    row.covariate = before.covariate_names[p];
    if (s <= 0.0) {
      row.undefined = true;
      rows[p] = row;
      continue;
    }
    row.std_diff_before = (mean(xt) - mean(xc)) / s;

    double after = 0.0;
    for (std::size_t i = 0; i < matched.sets.size(); ++i) {
      const auto& set = matched.sets[i];
      double t_sum = 0.0, c_sum = 0.0;
      int t_n = 0, c_n = 0;
      for (std::size_t idx : set.members) {
        const Unit& u = matched.units[idx];
        if (u.treated) {
          t_sum += u.covariates[p];
          ++t_n;
        } else {
          c_sum += u.covariates[p];
          ++c_n;
        }
      }
      after += w[i] * (t_sum / t_n - c_sum / c_n);
    }
    row.std_diff_after = after / s;
    rows[p] = row;
  }
  return rows;
}

}  // namespace vot
