#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "test_support.hpp"
#include "vot/balance.hpp"
#include "vot/full_match.hpp"
#include "vot/mahalanobis.hpp"

using vot::Cohort;
using vot::DistanceMatrix;
using vot::RatioConstraint;

namespace {

Cohort make_cohort(const std::vector<std::vector<double>>& treated,
                   const std::vector<std::vector<double>>& controls) {
  Cohort c;
  const std::size_t k = treated.empty() ? controls.front().size() : treated.front().size();
  for (std::size_t p = 0; p < k; ++p) c.covariate_names.push_back("x" + std::to_string(p));
  int uid = 0;
  auto add = [&](const std::vector<double>& x, bool z) {
    vot::Unit u;
    u.id = (z ? "t" : "c") + std::to_string(uid++);
    u.treated = z;
    u.outcome = 0.0;
    u.covariates = x;
    c.units.push_back(std::move(u));
  };
  for (const auto& x : treated) add(x, true);
  for (const auto& x : controls) add(x, false);
  vot::validate(c);
  return c;
}

// Direct quadratic-form evaluation with an explicit Gauss-Jordan inverse;
// independent of the Cholesky path in the library.
double mahalanobis_oracle(const std::vector<double>& a, const std::vector<double>& b,
                          std::vector<std::vector<double>> cov) {
  const std::size_t k = a.size();
  std::vector<std::vector<double>> inv(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < k; ++i) inv[i][i] = 1.0;
  for (std::size_t col = 0; col < k; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < k; ++r)
      if (std::fabs(cov[r][col]) > std::fabs(cov[piv][col])) piv = r;
    std::swap(cov[piv], cov[col]);
    std::swap(inv[piv], inv[col]);
    const double diag = cov[col][col];
    for (std::size_t j = 0; j < k; ++j) {
      cov[col][j] /= diag;
      inv[col][j] /= diag;
    }
    for (std::size_t r = 0; r < k; ++r) {
      if (r == col) continue;
      const double factor = cov[r][col];
      for (std::size_t j = 0; j < k; ++j) {
        cov[r][j] -= factor * cov[col][j];
        inv[r][j] -= factor * inv[col][j];
      }
    }
  }
  double q = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) q += (a[i] - b[i]) * inv[i][j] * (a[j] - b[j]);
  return std::sqrt(q);
}

}  // namespace

TEST_CASE("identical covariate vectors are at distance zero") {
  const auto c = make_cohort({{1.0, 2.0}, {0.0, 0.0}}, {{1.0, 2.0}, {3.0, 1.0}});
  const auto dm = vot::mahalanobis_distances(c);
  CHECK(dm.at(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("one covariate with unit pooled variance reduces to |difference|") {
  // Treated {0, sqrt(2)} and controls {1, 1 + sqrt(2)} both have sample
  // variance 1, so the pooled variance is 1 and distance = |x_t - x_c|.
  const double r2 = std::sqrt(2.0);
  const auto c = make_cohort({{0.0}, {r2}}, {{1.0}, {1.0 + r2}});
  const auto dm = vot::mahalanobis_distances(c);
  CHECK(dm.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(dm.at(1, 0) == doctest::Approx(r2 - 1.0).epsilon(1e-12));
}

TEST_CASE("random 5x5 instances match the quadratic-form oracle") {
  vot::Rng rng(101);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::vector<double>> t(5), ctl(5);
    for (auto& x : t) x = {rng.normal(), rng.normal(), 2.0 * rng.normal()};
    for (auto& x : ctl) x = {rng.normal(), rng.normal(), 2.0 * rng.normal()};
    const auto c = make_cohort(t, ctl);
    const auto dm = vot::mahalanobis_distances(c);

    // Pooled within-group covariance, recomputed directly.
    const std::size_t k = 3;
    auto scatter = [&](const std::vector<std::vector<double>>& g) {
      std::vector<double> mean(k, 0.0);
      for (const auto& x : g)
        for (std::size_t p = 0; p < k; ++p) mean[p] += x[p] / g.size();
      std::vector<std::vector<double>> s(k, std::vector<double>(k, 0.0));
      for (const auto& x : g)
        for (std::size_t p = 0; p < k; ++p)
          for (std::size_t q = 0; q < k; ++q)
            s[p][q] += (x[p] - mean[p]) * (x[q] - mean[q]);
      return s;
    };
    const auto st = scatter(t), sc = scatter(ctl);
    std::vector<std::vector<double>> cov(k, std::vector<double>(k));
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t q = 0; q < k; ++q) cov[p][q] = (st[p][q] + sc[p][q]) / 8.0;

    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j)
        CHECK(dm.at(i, j) == doctest::Approx(mahalanobis_oracle(t[i], ctl[j], cov)).epsilon(1e-10));
  }
}

TEST_CASE("singular covariance is regularized, constant covariates give zero") {
  const auto c = make_cohort({{1.0, 2.0}}, {{1.0, 2.0}});
  const auto dm = vot::mahalanobis_distances(c);
  CHECK(dm.regularized);
  CHECK(dm.at(0, 0) == 0.0);

  // Collinear covariates: x2 = 2*x1 exactly.
  const auto c2 = make_cohort({{0.0, 0.0}, {1.0, 2.0}}, {{2.0, 4.0}, {3.0, 6.0}});
  const auto dm2 = vot::mahalanobis_distances(c2);
  CHECK(dm2.regularized);
  for (double v : dm2.d) CHECK(std::isfinite(v));
}

TEST_CASE("no covariates is an error") {
  Cohort c;
  vot::Unit t, ctl;
  t.id = "t";
  t.treated = true;
  ctl.id = "c";
  c.units = {t, ctl};
  CHECK_THROWS_AS(vot::mahalanobis_distances(c), vot::error);
}

TEST_CASE("single pair matches at its only option") {
  const auto c = make_cohort({{0.0}}, {{1.0}});
  const auto dm = vot::mahalanobis_distances(c);
  const auto matched = vot::optimal_full_match(c, dm, {6, 6});
  REQUIRE(matched.num_sets() == 1);
  CHECK(matched.sets[0].size == 2);
  CHECK(matched.sets[0].treated_count == 1);
}

TEST_CASE("two pairs prefer the cheap diagonal") {
  // d = [[0.1, 5.0], [5.0, 0.2]] -> pairs (t1,c1), (t2,c2), cost 0.3.
  Cohort c = make_cohort({{0.0}, {1.0}}, {{0.0}, {1.0}});
  DistanceMatrix dm;
  dm.treated_index = {0, 1};
  dm.control_index = {2, 3};
  dm.d = {0.1, 5.0, 5.0, 0.2};
  const auto matched = vot::optimal_full_match(c, dm, {6, 6});
  REQUIRE(matched.num_sets() == 2);
  CHECK(vot::match_cost(matched, dm) == doctest::Approx(0.3));
  for (const auto& s : matched.sets) CHECK(s.size == 2);
}

TEST_CASE("flow optimum equals brute force on random small instances") {
  vot::Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const int nt = 1 + static_cast<int>(rng.below(4));
    const int nc = 1 + static_cast<int>(rng.below(4));
    Cohort c;
    DistanceMatrix dm;
    for (int i = 0; i < nt + nc; ++i) {
      vot::Unit u;
      u.id = "u" + std::to_string(i);
      u.treated = i < nt;
      c.units.push_back(u);
      (i < nt ? dm.treated_index : dm.control_index).push_back(i);
    }
    dm.d.resize(static_cast<std::size_t>(nt) * nc);
    for (auto& v : dm.d) v = rng.uniform01() * 10.0;

    RatioConstraint r;
    r.max_controls_per_treated = 1 + static_cast<int>(rng.below(4));
    r.max_treated_per_control = 1 + static_cast<int>(rng.below(4));
    const bool feasible = nc <= r.max_controls_per_treated * nt &&
                          nt <= r.max_treated_per_control * nc;
    if (!feasible) {
      CHECK_THROWS_AS(vot::optimal_full_match(c, dm, r), vot::error);
      continue;
    }
    const auto matched = vot::optimal_full_match(c, dm, r);
    const auto oracle = test_support::brute_force_full_match_cost(
        dm, r.max_controls_per_treated, r.max_treated_per_control);
    CHECK(test_support::scaled_match_cost(matched, dm) == oracle);
    for (const auto& s : matched.sets) {
      const int m = s.treated_count;
      const int n = s.size;
      CHECK(std::min(m, n - m) == 1);
      CHECK(n - m <= r.max_controls_per_treated);
      CHECK(m <= r.max_treated_per_control);
    }
  }
}

TEST_CASE("matching cost is invariant under unit relabeling") {
  vot::Rng rng(12);
  Cohort c;
  DistanceMatrix dm;
  const int nt = 3, nc = 5;
  for (int i = 0; i < nt + nc; ++i) {
    vot::Unit u;
    u.id = "u" + std::to_string(i);
    u.treated = i < nt;
    c.units.push_back(u);
    (i < nt ? dm.treated_index : dm.control_index).push_back(i);
  }
  dm.d.resize(nt * nc);
  for (auto& v : dm.d) v = rng.uniform01();
  const auto base = test_support::scaled_match_cost(vot::optimal_full_match(c, dm, {6, 6}), dm);

  // Permute the control columns; the optimum cost must not move.
  DistanceMatrix perm = dm;
  const std::vector<int> p = {4, 2, 0, 3, 1};
  for (int t = 0; t < nt; ++t)
    for (int j = 0; j < nc; ++j) perm.d[t * nc + j] = dm.d[t * nc + p[j]];
  std::vector<std::size_t> pc(nc);
  for (int j = 0; j < nc; ++j) pc[j] = dm.control_index[p[j]];
  perm.control_index = pc;
  CHECK(test_support::scaled_match_cost(vot::optimal_full_match(c, perm, {6, 6}), perm) == base);
}

TEST_CASE("caliper can disconnect the problem") {
  Cohort c = make_cohort({{0.0}}, {{100.0}});
  auto dm = vot::mahalanobis_distances(c);
  vot::apply_caliper(dm, 1e-3);
  CHECK_THROWS_WITH_AS(vot::optimal_full_match(c, dm, {6, 6}),
                       doctest::Contains("forbidden"), vot::error);
}

TEST_CASE("infeasible ratios are reported") {
  const auto c = make_cohort({{0.0}}, {{1.0}, {2.0}, {3.0}});
  const auto dm = vot::mahalanobis_distances(c);
  CHECK_THROWS_WITH_AS(vot::optimal_full_match(c, dm, {1, 2}),
                       doctest::Contains("infeasible ratio"), vot::error);
}

TEST_CASE("balance: identical distributions give zero std diffs") {
  const auto c = make_cohort({{1.0}, {2.0}, {3.0}}, {{1.0}, {2.0}, {3.0}});
  const auto dm = vot::mahalanobis_distances(c);
  const auto matched = vot::optimal_full_match(c, dm, {6, 6});
  const auto rows = vot::balance_table(c, matched);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].std_diff_before == doctest::Approx(0.0));
  CHECK(rows[0].std_diff_after == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("balance: unit mean gap with unit variances gives std diff 1") {
  // Both groups have sample variance 1 and means 1 and 0.
  const double r2 = std::sqrt(2.0);
  const auto c = make_cohort({{1.0 - r2 / 2}, {1.0 + r2 / 2}}, {{-r2 / 2}, {r2 / 2}});
  const auto dm = vot::mahalanobis_distances(c);
  const auto matched = vot::optimal_full_match(c, dm, {6, 6});
  const auto rows = vot::balance_table(c, matched);
  CHECK(rows[0].std_diff_before == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("balance: constant covariate is flagged undefined") {
  auto c = make_cohort({{1.0, 0.5}, {2.0, 0.5}}, {{1.5, 0.5}, {2.5, 0.5}});
  const auto dm = vot::mahalanobis_distances(c);
  const auto matched = vot::optimal_full_match(c, dm, {6, 6});
  const auto rows = vot::balance_table(c, matched);
  CHECK_FALSE(rows[0].undefined);
  CHECK(rows[1].undefined);
}

TEST_CASE("matching improves balance on confounded cohorts") {
  vot::Rng rng(31);
  int improved = 0, comparisons = 0;
  for (int trial = 0; trial < 50; ++trial) {
    // Confounded design: treated units sit higher on both covariates.
    std::vector<std::vector<double>> t(8), ctl(24);
    for (auto& x : t) x = {1.0 + rng.normal(), 0.5 + rng.normal()};
    for (auto& x : ctl) x = {rng.normal(), rng.normal()};
    const auto c = make_cohort(t, ctl);
    const auto dm = vot::mahalanobis_distances(c);
    const auto matched = vot::optimal_full_match(c, dm, {6, 6});
    for (const auto& row : vot::balance_table(c, matched)) {
      if (row.undefined) continue;
      ++comparisons;
      if (std::fabs(row.std_diff_after) < std::fabs(row.std_diff_before)) ++improved;
    }
  }
  CHECK(comparisons > 0);
  CHECK(static_cast<double>(improved) / comparisons >= 0.9);
}
