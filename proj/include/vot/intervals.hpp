#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <string>
#include <vector>

#include "vot/cohort.hpp"
#include "vot/error.hpp"
#include "vot/rand_test.hpp"

namespace vot {

enum class IntervalLabel {
  Ic,
  Ia,
  Ib,
  Iv,
  Istar,
  BonferroniAll,
  BonferroniA,
  BonferroniB,
};

inline std::string to_string(IntervalLabel l) {
  switch (l) {
    case IntervalLabel::Ic: return "Ic";
    case IntervalLabel::Ia: return "Ia";
    case IntervalLabel::Ib: return "Ib";
    case IntervalLabel::Iv: return "Iv";
    case IntervalLabel::Istar: return "Istar";
    case IntervalLabel::BonferroniAll: return "BonferroniAll";
    case IntervalLabel::BonferroniA: return "BonferroniA";
    case IntervalLabel::BonferroniB: return "BonferroniB";
  }
  return "?";
}

struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  double alpha = 0.05;
  IntervalLabel label = IntervalLabel::Ic;

  bool contains(double x) const { return lo <= x && x <= hi; }
  bool contains(const Interval& other) const { return lo <= other.lo && other.hi <= hi; }
  double length() const { return hi - lo; }
};

// Shortest interval containing all inputs; equals the union when they
// overlap and bridges the gaps when they are disjoint.
inline Interval interval_hull(std::initializer_list<Interval> parts, IntervalLabel label,
                              double alpha) {
  Interval out;
  out.lo = std::numeric_limits<double>::infinity();
  out.hi = -std::numeric_limits<double>::infinity();
  for (const auto& it : parts) {
    out.lo = std::min(out.lo, it.lo);
    out.hi = std::max(out.hi, it.hi);
  }
  out.label = label;
  out.alpha = alpha;
  return out;
}

// Three full matches sharing the same treated units: against all controls and
// against each version of control separately.
struct VersionData {
  Cohort all;
  Cohort only_a;
  Cohort only_b;
};

inline void validate_version_data(const VersionData& v) {
  // All three matches must share the whole non-version arm: with versions of
  // control, each match uses every treated unit.
  auto anchor_ids = [](const Cohort& c) {
    std::vector<std::string> ids;
    const bool versions_on_control = c.version_arm == VersionArm::Control;
    for (const auto& u : c.units)
      if (u.treated == versions_on_control) ids.push_back(u.id);
    std::sort(ids.begin(), ids.end());
    return ids;
  };
  require(!v.all.sets.empty() && !v.only_a.sets.empty() && !v.only_b.sets.empty(),
          errc::invalid_input, "version data requires three matched cohorts");
  const auto ids = anchor_ids(v.all);
  require(anchor_ids(v.only_a) == ids && anchor_ids(v.only_b) == ids, errc::invalid_input,
          "the three matches must contain the same non-version-arm units");
}

struct IntervalSet {
  Interval ic, ia, ib, iv, istar;
  double alpha = 0.05;
  double gamma = 1.0;
  StatisticSpec stat;
};

// P-value family for the randomization test of H_tau0; the interface the
// inversion machinery needs (sensitivity supplies a Gamma-bound family with
// the same shape).
struct RandFamily {
  const Tester& tester;
  NullSpec null;

  double p_upper(double tau0) const {
    if (null.method == NullMethod::Normal) {
      const auto m = tester.moments(tau0);
      NullDistribution d;
      d.method = NullMethod::Normal;
      d.sd = std::sqrt(m.variance);
      return d.p_upper(m.t_obs);
    }
    const auto d = tester.null_distribution(tau0, null);
    return d.p_upper(tester.statistic(tau0));
  }

  double p_lower(double tau0) const {
    if (null.method == NullMethod::Normal) {
      const auto m = tester.moments(tau0);
      NullDistribution d;
      d.method = NullMethod::Normal;
      d.sd = std::sqrt(m.variance);
      return d.p_lower(m.t_obs);
    }
    const auto d = tester.null_distribution(tau0, null);
    return d.p_lower(tester.statistic(tau0));
  }

  double statistic(double tau0) const { return tester.statistic(tau0); }
  double outcome_range() const { return tester.outcome_range(); }
};

inline constexpr double kInvertTolerance = 1e-4;

namespace detail {

// Root of the (nonincreasing) statistic in tau0; a Hodges-Lehmann style
// center used only to seat the bisection brackets.
template <class Family>
double center_estimate(const Family& fam, double bound) {
  const double t0 = fam.statistic(0.0);
  double lo = t0, hi = t0;
  double step = std::max(1e-3, bound / 4096.0);
  for (int k = 0; k < 60 && fam.statistic(lo) < 0.0; ++k) {
    lo -= step;
    step *= 2.0;
    if (lo < -bound) return t0;
  }
  step = std::max(1e-3, bound / 4096.0);
  for (int k = 0; k < 60 && fam.statistic(hi) > 0.0; ++k) {
    hi += step;
    step *= 2.0;
    if (hi > bound) return t0;
  }
  for (int k = 0; k < 80 && hi - lo > kInvertTolerance; ++k) {
    const double mid = 0.5 * (lo + hi);
    if (fam.statistic(mid) > 0.0) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

struct PvalTrace {
  std::vector<std::pair<double, double>> evals;  // (tau0, p)
  void record(double tau, double p) { evals.emplace_back(tau, p); }
  // increasing: p should be nondecreasing in tau0.
  void check_monotone(bool increasing) {
    std::sort(evals.begin(), evals.end());
    for (std::size_t i = 1; i < evals.size(); ++i) {
      const double diff = evals[i].second - evals[i - 1].second;
      const bool bad = increasing ? diff < -1e-9 : diff > 1e-9;
      require(!bad, errc::non_monotone,
              "p-value path is not monotone in tau0; invert on a dense grid instead "
              "(ci --grid)");
    }
  }
};

// One-sided endpoint by expanding bracket plus bisection. `accept` must be
// monotone in tau0: accepted above the boundary when accept_above, below it
// otherwise. Returns +-infinity when no rejected tau0 exists within bounds.
template <class Accept>
double one_sided_endpoint(const Accept& accept, double center, double bound, bool accept_above) {
  const double sign = accept_above ? -1.0 : 1.0;  // direction toward rejection
  double t_acc = center;
  if (!accept(t_acc)) {
    // Center itself rejected: hunt for any accepted point on the accepted side.
    double step = std::max(1e-3, bound / 4096.0);
    double probe = center - sign * step;
    bool found = false;
    while (std::fabs(probe - center) <= bound) {
      if (accept(probe)) {
        found = true;
        break;
      }
      step *= 2.0;
      probe = center - sign * step;
    }
    require(found, errc::numeric, "confidence interval is empty within the search bound");
    double t_rej = center;
    t_acc = probe;
    while (std::fabs(t_acc - t_rej) > kInvertTolerance) {
      const double mid = 0.5 * (t_acc + t_rej);
      if (accept(mid)) t_acc = mid;
      else t_rej = mid;
    }
    return 0.5 * (t_acc + t_rej);
  }
  double step = std::max(1e-3, bound / 4096.0);
  double t_rej = t_acc + sign * step;
  while (accept(t_rej)) {
    if (std::fabs(t_rej - center) > bound)
      return accept_above ? -std::numeric_limits<double>::infinity()
                          : std::numeric_limits<double>::infinity();
    step *= 2.0;
    t_rej = t_acc + sign * step;
  }
  while (std::fabs(t_acc - t_rej) > kInvertTolerance) {
    const double mid = 0.5 * (t_acc + t_rej);
    if (accept(mid)) t_acc = mid;
    else t_rej = mid;
  }
  return 0.5 * (t_acc + t_rej);
}

}  // namespace detail

// Two-sided 1-alpha interval as the intersection of two one-sided 1-alpha/2
// intervals, each endpoint located by bisection to 1e-4 outcome units.
template <class Family>
Interval invert_family(const Family& fam, double alpha, IntervalLabel label) {
  require(alpha > 0.0 && alpha < 1.0, errc::invalid_input, "alpha must be in (0,1)");
  const double bound = 1000.0 * std::max(fam.outcome_range(), 1.0);
  const double center = detail::center_estimate(fam, bound);
  const double cut = alpha / 2.0;

  detail::PvalTrace up_trace, lo_trace;
  const auto accept_lower = [&](double tau0) {
    const double p = fam.p_upper(tau0);
    up_trace.record(tau0, p);
    return p > cut;
  };
  const auto accept_upper = [&](double tau0) {
    const double p = fam.p_lower(tau0);
    lo_trace.record(tau0, p);
    return p > cut;
  };

  Interval out;
  out.lo = detail::one_sided_endpoint(accept_lower, center, bound, /*accept_above=*/true);
  out.hi = detail::one_sided_endpoint(accept_upper, center, bound, /*accept_above=*/false);
  up_trace.check_monotone(/*increasing=*/true);
  lo_trace.check_monotone(/*increasing=*/false);
  if (out.lo > out.hi) std::swap(out.lo, out.hi);  // sub-tolerance crossing only
  out.alpha = alpha;
  out.label = label;
  return out;
}

// Dense-grid inversion fallback for non-monotone p-value paths: accept or
// reject every grid point and return the hull of the accepted set.
template <class Family>
Interval invert_family_grid(const Family& fam, double alpha, IntervalLabel label, double lo,
                            double hi, double step) {
  require(step > 0.0 && hi > lo, errc::invalid_input, "bad grid");
  const double cut = alpha / 2.0;
  Interval out;
  out.lo = std::numeric_limits<double>::infinity();
  out.hi = -std::numeric_limits<double>::infinity();
  for (double tau = lo; tau <= hi + 1e-12; tau += step) {
    if (fam.p_upper(tau) > cut && fam.p_lower(tau) > cut) {
      out.lo = std::min(out.lo, tau);
      out.hi = std::max(out.hi, tau);
    }
  }
  require(out.lo <= out.hi, errc::numeric, "no tau0 accepted on the grid");
  out.alpha = alpha;
  out.label = label;
  return out;
}

inline Interval invert(const Cohort& match, double alpha, const StatisticSpec& spec = {},
                       const NullSpec& null = {}, IntervalLabel label = IntervalLabel::Ic) {
  const Tester tester(match, spec);
  return invert_family(RandFamily{tester, null}, alpha, label);
}

// The simultaneous interval family: the conventional interval from all
// controls, the per-version intervals, the version interval I_v whose
// one-sided halves take the extreme of the three corresponding halves, and
// I_* over the two version intervals only. No multiplicity correction is
// applied: that is the point of the construction.
inline IntervalSet interval_family(const VersionData& v, double alpha,
                                   const StatisticSpec& spec = {}, const NullSpec& null = {}) {
  validate_version_data(v);
  IntervalSet out;
  out.alpha = alpha;
  out.stat = spec;
  out.ic = invert(v.all, alpha, spec, null, IntervalLabel::Ic);
  out.ia = invert(v.only_a, alpha, spec, null, IntervalLabel::Ia);
  out.ib = invert(v.only_b, alpha, spec, null, IntervalLabel::Ib);
  out.iv = interval_hull({out.ic, out.ia, out.ib}, IntervalLabel::Iv, alpha);
  out.istar = interval_hull({out.ia, out.ib}, IntervalLabel::Istar, alpha);
  return out;
}

// Bonferroni comparison: each of the three cohorts inverted at level alpha/3.
inline std::vector<Interval> bonferroni_family(const VersionData& v, double alpha,
                                               const StatisticSpec& spec = {},
                                               const NullSpec& null = {}) {
  validate_version_data(v);
  return {
      invert(v.all, alpha / 3.0, spec, null, IntervalLabel::BonferroniAll),
      invert(v.only_a, alpha / 3.0, spec, null, IntervalLabel::BonferroniA),
      invert(v.only_b, alpha / 3.0, spec, null, IntervalLabel::BonferroniB),
  };
}

}  // namespace vot
