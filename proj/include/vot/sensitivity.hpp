#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "vot/error.hpp"
#include "vot/intervals.hpp"
#include "vot/rand_test.hpp"
#include "vot/stats.hpp"

namespace vot {

struct GammaSpec {
  double gamma = 1.0;  // odds-ratio bound; 1 recovers randomization inference
};

struct AmplifyPair {
  double lambda = 2.0;  // odds multiplier for treatment
  double delta = 2.0;   // odds multiplier for a worse outcome
};

// Amplification of gamma: an unobserved covariate multiplying treatment odds
// by lambda and worse-outcome odds by delta acts like gamma = (lambda*delta + 1)/(lambda + delta).
inline double amplify(const AmplifyPair& p) {
  require(p.lambda > 1.0 && p.delta > 1.0, errc::invalid_input,
          "amplify requires lambda > 1 and delta > 1");
  return (p.lambda * p.delta + 1.0) / (p.lambda + p.delta);
}

struct WorstCaseMoments {
  double mean = 0.0;
  double variance = 0.0;
  int k = 0;  // number of positions handed relative odds gamma
};

// Worst-case mean and variance of one set's statistic contribution under the
// gamma odds bound. `values` holds the contribution of each admissible
// assignment; biasing the k largest upward by odds gamma is optimal for some
// k in 1..n-1, found by exhaustive scan (tie on mean -> larger variance).
// Singleton-control sets reduce to the same family of biased distributions,
// so callers never need to distinguish the singleton's arm.
inline WorstCaseMoments worst_case_moments(std::vector<double> values, double gamma) {
  require(gamma >= 1.0, errc::invalid_input, "gamma must be >= 1");
  require(values.size() >= 2, errc::invalid_input, "worst_case_moments needs >= 2 assignments");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  std::vector<double> s1(n + 1, 0.0), s2(n + 1, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    s1[j + 1] = s1[j] + values[j];
    s2[j + 1] = s2[j] + values[j] * values[j];
  }
  WorstCaseMoments best;
  bool first = true;
  for (std::size_t k = 1; k < n; ++k) {
    const double norm = gamma * static_cast<double>(k) + static_cast<double>(n - k);
    const double mu = ((s1[n - k] - s1[0]) + gamma * (s1[n] - s1[n - k])) / norm;
    const double m2 = ((s2[n - k] - s2[0]) + gamma * (s2[n] - s2[n - k])) / norm;
    const double nu = std::max(m2 - mu * mu, 0.0);
    if (first || mu > best.mean || (mu == best.mean && nu > best.variance)) {
      best = {mu, nu, static_cast<int>(k)};
      first = false;
    }
  }
  return best;
}

// P-value family bounding the randomization p-values under the gamma odds
// constraint via the separable normal approximation; plugs into the same
// inversion machinery as RandFamily.
struct GammaFamily {
  const Tester& tester;
  double gamma = 1.0;

  double p_upper(double tau0) const { return bound(tau0, /*upper=*/true); }
  double p_lower(double tau0) const { return bound(tau0, /*upper=*/false); }
  double statistic(double tau0) const { return tester.statistic(tau0); }
  double outcome_range() const { return tester.outcome_range(); }

  struct Deviate {
    double t_obs = 0.0;
    double mean = 0.0;
    double sd = 0.0;
  };

  Deviate deviate(double tau0, bool upper) const {
    const auto q = tester.scores(tau0);
    auto contrib = tester.per_set_contributions(q);
    Deviate d;
    d.t_obs = tester.statistic_from_scores(q);
    std::vector<double> mus(contrib.size()), nus(contrib.size());
    for (std::size_t i = 0; i < contrib.size(); ++i) {
      if (!upper)
        for (double& v : contrib[i]) v = -v;
      const auto wc = worst_case_moments(contrib[i], gamma);
      mus[i] = wc.mean;
      nus[i] = wc.variance;
    }
    d.mean = pairwise_sum(mus);
    d.sd = std::sqrt(pairwise_sum(nus));
    if (!upper) d.t_obs = -d.t_obs;
    return d;
  }

 private:
  double bound(double tau0, bool upper) const {
    const auto d = deviate(tau0, upper);
    if (d.sd > 0.0) return normal_sf((d.t_obs - d.mean) / d.sd);
    return (d.t_obs <= d.mean + NullDistribution::eps(d.t_obs)) ? 1.0 : 0.0;
  }
};

// Upper bounds on the one-sided p-values of H_tau0 over all treatment
// assignment distributions within the gamma odds bound. gamma = 1 reduces to
// the Normal-method randomization p-values.
inline TestResult gamma_pvalue_bound(const Cohort& match, double tau0, const GammaSpec& g,
                                     const StatisticSpec& spec = {}) {
  require(g.gamma >= 1.0, errc::invalid_input, "gamma must be >= 1");
  const Tester tester(match, spec);
  const GammaFamily fam{tester, g.gamma};
  TestResult res;
  res.tau0 = tau0;
  res.method = NullSpec{NullMethod::Normal, 0, 0};
  const auto dev = fam.deviate(tau0, /*upper=*/true);
  res.statistic = dev.t_obs;
  res.null_mean = dev.mean;
  res.null_sd = dev.sd;
  res.p_upper = fam.p_upper(tau0);
  res.p_lower = fam.p_lower(tau0);
  res.p_two_sided = std::min(1.0, 2.0 * std::min(res.p_upper, res.p_lower));
  return res;
}

// Interval family under the gamma bound: interval_family with the bounding
// p-values in place of the randomization ones. The simultaneous coverage
// guarantees carry over when the assignment bias is at most gamma.
inline IntervalSet sensitivity_interval(const VersionData& v, double alpha, const GammaSpec& g,
                                        const StatisticSpec& spec = {}) {
  require(g.gamma >= 1.0, errc::invalid_input, "gamma must be >= 1");
  validate_version_data(v);
  IntervalSet out;
  out.alpha = alpha;
  out.gamma = g.gamma;
  out.stat = spec;
  const Tester t_all(v.all, spec), t_a(v.only_a, spec), t_b(v.only_b, spec);
  out.ic = invert_family(GammaFamily{t_all, g.gamma}, alpha, IntervalLabel::Ic);
  out.ia = invert_family(GammaFamily{t_a, g.gamma}, alpha, IntervalLabel::Ia);
  out.ib = invert_family(GammaFamily{t_b, g.gamma}, alpha, IntervalLabel::Ib);
  out.iv = interval_hull({out.ic, out.ia, out.ib}, IntervalLabel::Iv, alpha);
  out.istar = interval_hull({out.ia, out.ib}, IntervalLabel::Istar, alpha);
  return out;
}

// Bonferroni triple under the gamma bound, for the plotdata layout.
inline std::vector<Interval> sensitivity_bonferroni(const VersionData& v, double alpha,
                                                    const GammaSpec& g,
                                                    const StatisticSpec& spec = {}) {
  require(g.gamma >= 1.0, errc::invalid_input, "gamma must be >= 1");
  validate_version_data(v);
  const Tester t_all(v.all, spec), t_a(v.only_a, spec), t_b(v.only_b, spec);
  return {
      invert_family(GammaFamily{t_all, g.gamma}, alpha / 3.0, IntervalLabel::BonferroniAll),
      invert_family(GammaFamily{t_a, g.gamma}, alpha / 3.0, IntervalLabel::BonferroniA),
      invert_family(GammaFamily{t_b, g.gamma}, alpha / 3.0, IntervalLabel::BonferroniB),
  };
}

}  // namespace vot
