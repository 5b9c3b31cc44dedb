#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "vot/cohort.hpp"
#include "vot/error.hpp"
#include "vot/intervals.hpp"
#include "vot/mahalanobis.hpp"
#include "vot/parallel.hpp"
#include "vot/rand_test.hpp"
#include "vot/rng.hpp"
#include "vot/stats.hpp"

namespace vot {

// Matched-set design with a set-level confounder X_i and two control
// versions: treated outcome tau_b + X + eps, version-b control X + eps,
// version-a control delta + X + eps, so tau^b = tau_b and tau^a = tau_b - delta.
struct SimDesign {
  int sets = 100;                // I
  int treated_per_set = 1;       // m_i
  int controls_per_version = 2;
  double tau_b = 0.25;
  double delta = 0.0;
  double alpha = 0.05;
  int reps = 1000;
  std::uint64_t seed = 0;
  NullMethod ic_null = NullMethod::Normal;  // MonteCarlo for audit runs
  int mc_draws = 10000;
};

struct SimReport {
  double power_version = 0.0;  // Pr(I_c does not contain 0)
  double power_f = 0.0;        // Pr(F > c_alpha)
  double coverage_ic = 0.0;    // Pr(I_v contains I_c contains tau^b); I_v contains I_c holds by construction
  double coverage_iv = 0.0;    // Pr(I_v contains [tau_min, tau_max])
  double mc_se_version = 0.0;
  double mc_se_f = 0.0;
  int reps = 0;
};

inline void validate_design(const SimDesign& d) {
  require(d.sets >= 1, errc::invalid_input, "design needs at least one set");
  require(d.reps >= 1, errc::invalid_input, "design needs at least one replicate");
  require(d.treated_per_set == 1, errc::invalid_input,
          "design needs one treated per set for the full-match invariant");
  require(d.controls_per_version >= 1, errc::invalid_input,
          "design needs at least one control per version");
  require(d.alpha > 0.0 && d.alpha < 1.0, errc::invalid_input, "alpha must be in (0,1)");
}

// One replicate's data. The per-version matches filter controls within sets
// (the design is balanced over versions), sharing inference code with the
// re-matching workflow used for real data.
inline VersionData generate(const SimDesign& d, int rep) {
  validate_design(d);
  Rng rng = substream(d.seed, static_cast<std::uint64_t>(rep));
  Cohort all;
  all.covariate_names = {"x"};
  all.version_arm = VersionArm::Control;
  all.has_versions = true;
  for (int i = 0; i < d.sets; ++i) {
    const double x = rng.normal();
    MatchedSet s;
    s.set_id = i + 1;
    auto push = [&](const std::string& id, bool treated, Version v, double y) {
      Unit u;
      u.id = id;
      u.treated = treated;
      u.version = v;
      u.outcome = y;
      u.covariates = {x};
      s.members.push_back(all.units.size());
      ++s.size;
      if (treated) ++s.treated_count;
      all.units.push_back(std::move(u));
    };
    const std::string tag = "s" + std::to_string(i + 1);
    push(tag + "t", true, Version::None, d.tau_b + x + rng.normal());
    for (int j = 0; j < d.controls_per_version; ++j)
      push(tag + "a" + std::to_string(j + 1), false, Version::A, d.delta + x + rng.normal());
    for (int j = 0; j < d.controls_per_version; ++j)
      push(tag + "b" + std::to_string(j + 1), false, Version::B, x + rng.normal());
    all.sets.push_back(std::move(s));
  }
  validate(all);
  VersionData out;
  out.only_a = filter_within_sets(all, Version::A);
  out.only_b = filter_within_sets(all, Version::B);
  out.all = std::move(all);
  return out;
}

struct FTestResult {
  double F = 0.0;
  double critical = 0.0;
  bool reject = false;
};

// Omnibus F-test of any mean difference among treated, version-a controls and
// version-b controls, with the covariates entering linearly: full model
// y ~ 1 + 1{treated} + 1{version a} + X against reduced y ~ 1 + X, giving
// F(2, N - 3 - k).
inline FTestResult f_test(const VersionData& data, double alpha) {
  const Cohort& c = data.all;
  require(c.has_versions, errc::invalid_input, "f_test: version labels required");
  const std::size_t k = c.covariate_names.size();
  require(k >= 1, errc::invalid_input, "f_test: covariate required");
  std::size_t n_t = 0, n_a = 0, n_b = 0;
  for (const auto& u : c.units) {
    if (!c.on_version_arm(u)) ++n_t;
    else if (u.version == Version::A) ++n_a;
    else ++n_b;
  }
  require(n_t >= 1 && n_a >= 1 && n_b >= 1, errc::invalid_input,
          "f_test: all three groups must be present");

  const std::size_t n = c.units.size();
  const std::size_t p_full = 3 + k;
  require(n > p_full, errc::invalid_input, "f_test: not enough observations");

  // Least squares through normal equations; the design here is tiny and
  // well conditioned.
  auto fit_rss = [&](bool full) {
    const std::size_t p = full ? p_full : 1 + k;
    std::vector<double> xtx(p * p, 0.0), xty(p, 0.0);
    std::vector<double> row(p);
    double yty = 0.0;
    for (const auto& u : c.units) {
      std::size_t idx = 0;
      row[idx++] = 1.0;
      if (full) {
        row[idx++] = c.on_version_arm(u) ? 0.0 : 1.0;
        row[idx++] = (c.on_version_arm(u) && u.version == Version::A) ? 1.0 : 0.0;
      }
      for (std::size_t q = 0; q < k; ++q) row[idx++] = u.covariates[q];
      for (std::size_t a = 0; a < p; ++a) {
        for (std::size_t b = 0; b <= a; ++b) xtx[a * p + b] += row[a] * row[b];
        xty[a] += row[a] * u.outcome;
      }
      yty += u.outcome * u.outcome;
    }
    for (std::size_t a = 0; a < p; ++a)
      for (std::size_t b = a + 1; b < p; ++b) xtx[a * p + b] = xtx[b * p + a];
    require(detail::cholesky(xtx, p), errc::numeric, "f_test: rank-deficient design");
    std::vector<double> beta = xty;
    detail::cholesky_solve(xtx, p, beta);
    double fitted = 0.0;
    for (std::size_t a = 0; a < p; ++a) fitted += beta[a] * xty[a];
    return std::max(yty - fitted, 0.0);
  };

  const double rss_full = fit_rss(true);
  const double rss_reduced = fit_rss(false);
  const double df2 = static_cast<double>(n - p_full);
  const double num = std::max(rss_reduced - rss_full, 0.0) / 2.0;
  const double den = rss_full / df2;

  FTestResult res;
  res.critical = f2_upper_quantile(alpha, df2);
  const double tiny = 1e-12 * std::max(1.0, rss_reduced);
  if (den <= tiny) {
    res.F = (num <= tiny) ? 0.0 : std::numeric_limits<double>::infinity();
  } else {
    res.F = num / den;
  }
  res.reject = res.F > res.critical;
  return res;
}

// Power and coverage over independent replicates. Per-replicate seeds derive
// from (seed, rep), so estimates are identical for any thread count.
inline SimReport power_study(const SimDesign& d) {
  validate_design(d);
  const double tau_a = d.tau_b - d.delta;
  const double tau_min = std::min(d.tau_b, tau_a);
  const double tau_max = std::max(d.tau_b, tau_a);

  std::vector<std::uint8_t> rej_v(d.reps), rej_f(d.reps), cov_ic(d.reps), cov_iv(d.reps);
  parallel_for(static_cast<std::size_t>(d.reps), [&](std::size_t r) {
    const auto data = generate(d, static_cast<int>(r));
    NullSpec null;
    null.method = d.ic_null;
    null.draws = d.mc_draws;
    null.seed = d.seed * 1000003ULL + r;
    const StatisticSpec spec{};  // weighted mean difference
    const Interval ic = invert(data.all, d.alpha, spec, null, IntervalLabel::Ic);
    const Interval ia = invert(data.only_a, d.alpha, spec, null, IntervalLabel::Ia);
    const Interval ib = invert(data.only_b, d.alpha, spec, null, IntervalLabel::Ib);
    const Interval iv = interval_hull({ic, ia, ib}, IntervalLabel::Iv, d.alpha);
    rej_v[r] = !ic.contains(0.0);
    rej_f[r] = f_test(data, d.alpha).reject;
    cov_ic[r] = iv.contains(ic) && ic.contains(d.tau_b);
    cov_iv[r] = iv.lo <= tau_min && tau_max <= iv.hi;
  });

  auto rate = [&](const std::vector<std::uint8_t>& v) {
    std::size_t count = 0;
    for (auto b : v) count += b;
    return static_cast<double>(count) / static_cast<double>(v.size());
  };
  SimReport rep;
  rep.reps = d.reps;
  rep.power_version = rate(rej_v);
  rep.power_f = rate(rej_f);
  rep.coverage_ic = rate(cov_ic);
  rep.coverage_iv = rate(cov_iv);
  rep.mc_se_version = monte_carlo_se(rep.power_version, static_cast<std::size_t>(d.reps));
  rep.mc_se_f = monte_carlo_se(rep.power_f, static_cast<std::size_t>(d.reps));
  return rep;
}

}  // namespace vot
