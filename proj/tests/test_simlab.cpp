#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <vector>

#include "test_support.hpp"
#include "vot/simlab.hpp"
#include "vot/stats.hpp"

using vot::SimDesign;
using vot::Version;

TEST_CASE("normal quantile matches a bisection oracle on the cdf") {
  // The bisection oracle loses accuracy in the far tails (cdf error divided
  // by a vanishing density), so it covers the central range and a round trip
  // through the tail survival function covers the extremes.
  for (double p : {1e-4, 0.025, 0.2, 0.5, 0.8, 0.975, 0.9999}) {
    double lo = -40.0, hi = 40.0;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (vot::normal_cdf(mid) < p) lo = mid;
      else hi = mid;
    }
    CHECK(vot::normal_quantile(p) == doctest::Approx(0.5 * (lo + hi)).epsilon(1e-9));
  }
  for (double tail : {1e-10, 1e-7, 1e-3}) {
    CHECK(vot::normal_sf(vot::normal_quantile(1.0 - tail)) ==
          doctest::Approx(tail).epsilon(1e-9));
    CHECK(vot::normal_cdf(vot::normal_quantile(tail)) == doctest::Approx(tail).epsilon(1e-9));
  }
  CHECK(vot::normal_quantile(0.5) == doctest::Approx(0.0));
  CHECK(vot::normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
}

TEST_CASE("F(2, d2) tail matches Simpson quadrature of the density") {
  // pdf of F(2, d2) is (1 + 2x/d2)^(-(d2+2)/2).
  for (double d2 : {6.0, 50.0, 496.0}) {
    const double q = vot::f2_upper_quantile(0.05, d2);
    const auto pdf = [&](double x) { return std::pow(1.0 + 2.0 * x / d2, -(d2 + 2.0) / 2.0); };
    const int steps = 20000;
    const double h = q / steps;
    double integral = pdf(0.0) + pdf(q);
    for (int i = 1; i < steps; ++i) integral += (i % 2 ? 4.0 : 2.0) * pdf(i * h);
    integral *= h / 3.0;
    CHECK(integral == doctest::Approx(0.95).epsilon(1e-7));
    CHECK(vot::f2_sf(q, d2) == doctest::Approx(0.05).epsilon(1e-12));
  }
}

TEST_CASE("generate builds the balanced two-version design") {
  SimDesign d;
  d.sets = 100;
  d.tau_b = 0.25;
  const auto data = vot::generate(d, 0);
  CHECK(data.all.num_sets() == 100);
  for (const auto& s : data.all.sets) {
    CHECK(s.size == 5);
    CHECK(s.treated_count == 1);
  }
  int n_a = 0, n_b = 0;
  for (const auto& u : data.all.units) {
    if (u.version == Version::A) ++n_a;
    if (u.version == Version::B) ++n_b;
  }
  CHECK(n_a == 200);
  CHECK(n_b == 200);
  for (const auto& s : data.only_a.sets) {
    CHECK(s.size == 3);
    CHECK(s.treated_count == 1);
  }
  CHECK(data.only_a.num_units() == 300);
  // Every cohort records the set-level covariate.
  CHECK(data.all.covariate_names == std::vector<std::string>{"x"});
}

TEST_CASE("delta = 0 makes the two control versions indistinguishable") {
  SimDesign d;
  d.sets = 100;
  d.tau_b = 0.3;
  d.delta = 0.0;
  std::vector<double> ya, yb;
  for (int rep = 0; rep < 30; ++rep) {
    const auto data = vot::generate(d, rep);
    for (const auto& u : data.all.units) {
      if (u.version == Version::A) ya.push_back(u.outcome);
      if (u.version == Version::B) yb.push_back(u.outcome);
    }
  }
  std::sort(ya.begin(), ya.end());
  std::sort(yb.begin(), yb.end());
  double ks = 0.0;
  for (std::size_t i = 0; i < ya.size(); ++i) {
    const double fa = static_cast<double>(i + 1) / ya.size();
    const auto fb = static_cast<double>(std::upper_bound(yb.begin(), yb.end(), ya[i]) -
                                        yb.begin()) /
                    yb.size();
    ks = std::max(ks, std::fabs(fa - fb));
  }
  CHECK(ks <= 0.04);
}

TEST_CASE("generation is deterministic per (seed, rep) and across thread counts") {
  SimDesign d;
  d.sets = 20;
  d.tau_b = 0.25;
  d.delta = 0.1;
  d.seed = 99;
  const auto a = vot::generate(d, 3);
  const auto b = vot::generate(d, 3);
  CHECK(a.all == b.all);
  const auto c = vot::generate(d, 4);
  CHECK_FALSE(a.all == c.all);

  d.reps = 40;
  setenv("VE_THREADS", "1", 1);
  const auto serial = vot::power_study(d);
  setenv("VE_THREADS", "3", 1);
  const auto parallel = vot::power_study(d);
  unsetenv("VE_THREADS");
  CHECK(serial.power_version == parallel.power_version);
  CHECK(serial.power_f == parallel.power_f);
  CHECK(serial.coverage_ic == parallel.coverage_ic);
  CHECK(serial.coverage_iv == parallel.coverage_iv);
}

TEST_CASE("f test is zero on noiseless null data") {
  // Outcomes exactly linear in x with equal group means: full and reduced
  // models both fit perfectly.
  vot::Cohort all;
  all.covariate_names = {"x"};
  all.has_versions = true;
  for (int i = 0; i < 20; ++i) {
    vot::MatchedSet s;
    s.set_id = i + 1;
    const double x = 0.1 * i - 1.0;
    auto push = [&](const std::string& id, bool treated, Version v) {
      vot::Unit u;
      u.id = id;
      u.treated = treated;
      u.version = v;
      u.outcome = 2.0 * x + 1.0;
      u.covariates = {x};
      s.members.push_back(all.units.size());
      ++s.size;
      if (treated) ++s.treated_count;
      all.units.push_back(std::move(u));
    };
    const std::string tag = "s" + std::to_string(i);
    push(tag + "t", true, Version::None);
    push(tag + "a1", false, Version::A);
    push(tag + "a2", false, Version::A);
    push(tag + "b1", false, Version::B);
    push(tag + "b2", false, Version::B);
    all.sets.push_back(std::move(s));
  }
  vot::validate(all);
  vot::VersionData data;
  data.only_a = vot::filter_within_sets(all, Version::A);
  data.only_b = vot::filter_within_sets(all, Version::B);
  data.all = std::move(all);
  const auto res = vot::f_test(data, 0.05);
  CHECK(res.F == 0.0);
  CHECK_FALSE(res.reject);
}

TEST_CASE("f test size is near nominal under the null design") {
  SimDesign d;
  d.sets = 100;
  d.tau_b = 0.0;
  d.delta = 0.0;
  d.seed = 21;
  d.reps = 800;
  const auto rep = vot::power_study(d);
  CHECK(rep.power_f >= 0.03);
  CHECK(rep.power_f <= 0.075);
}

TEST_CASE("f test has near-certain power against a large effect") {
  SimDesign d;
  d.sets = 100;
  d.tau_b = 1.0;
  d.delta = 0.0;
  d.seed = 2;
  d.reps = 100;
  CHECK(vot::power_study(d).power_f >= 0.99);
}

TEST_CASE("version-method power decreases as the versions diverge") {
  SimDesign d;
  d.sets = 100;
  d.tau_b = 0.25;
  d.seed = 77;
  d.reps = 400;
  d.delta = 0.0;  // ratio 1
  const auto same = vot::power_study(d);
  d.delta = 0.25 * 0.75;  // ratio 0.25
  const auto spread = vot::power_study(d);
  CHECK(same.power_version > spread.power_version + 0.2);
}

TEST_CASE("f test power is invariant under swapping the version labels") {
  SimDesign d;
  d.sets = 100;
  d.seed = 31;
  d.reps = 400;
  d.tau_b = 0.3;
  d.delta = 0.1;  // tau^a = 0.2
  const auto base = vot::power_study(d);
  d.tau_b = 0.2;
  d.delta = -0.1;  // swapped roles: tau^a = 0.3
  const auto swapped = vot::power_study(d);
  CHECK(std::fabs(base.power_f - swapped.power_f) <= 0.1);
}

TEST_CASE("interval coverage near nominal at the true effect") {
  SimDesign d;
  d.sets = 100;
  d.tau_b = 0.3;
  d.delta = 0.0;
  d.seed = 13;
  d.reps = 200;
  const auto rep = vot::power_study(d);
  CHECK(rep.coverage_ic >= 0.9);
  CHECK(rep.coverage_iv >= rep.coverage_ic);  // I_v contains I_c
  CHECK(rep.mc_se_version == doctest::Approx(vot::monte_carlo_se(rep.power_version, 200)));
}

TEST_CASE("invalid designs are rejected") {
  SimDesign d;
  d.sets = 0;
  CHECK_THROWS_AS(vot::generate(d, 0), vot::error);
  d.sets = 10;
  d.treated_per_set = 2;
  CHECK_THROWS_AS(vot::generate(d, 0), vot::error);
}
