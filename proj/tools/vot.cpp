#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vot/balance.hpp"
#include "vot/cohort.hpp"
#include "vot/error.hpp"
#include "vot/full_match.hpp"
#include "vot/intervals.hpp"
#include "vot/mahalanobis.hpp"
#include "vot/rand_test.hpp"
#include "vot/sensitivity.hpp"
#include "vot/serialize.hpp"
#include "vot/simlab.hpp"

namespace {

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    return;
  }
  std::ofstream out(path);
  vot::require(out.good(), vot::errc::io, "cannot write '" + path + "'");
  out << content;
}

nlohmann::json interval_json(const vot::Interval& it) {
  nlohmann::json j;
  j["label"] = vot::to_string(it.label);
  j["lo"] = std::isinf(it.lo) ? nlohmann::json(nullptr) : nlohmann::json(it.lo);
  j["hi"] = std::isinf(it.hi) ? nlohmann::json(nullptr) : nlohmann::json(it.hi);
  j["alpha"] = it.alpha;
  return j;
}

struct CohortOpts {
  std::vector<std::string> covariates;
  std::string version_a = "a";
  std::string version_b = "b";
  std::string versions_on = "control";

  void attach(CLI::App* cmd) {
    cmd->add_option("--covariates", covariates,
                    "covariate column names (default: every remaining column)")
        ->delimiter(',');
    cmd->add_option("--version-a", version_a, "label mapped to version a")
        ->capture_default_str();
    cmd->add_option("--version-b", version_b, "label mapped to version b")
        ->capture_default_str();
    cmd->add_option("--versions-on", versions_on, "arm carrying versions: control|treated")
        ->check(CLI::IsMember({"control", "treated"}))
        ->capture_default_str();
  }

  vot::ColumnSpec spec() const {
    vot::ColumnSpec s;
    s.covariates = covariates;
    s.version_a = version_a;
    s.version_b = version_b;
    s.version_arm =
        versions_on == "treated" ? vot::VersionArm::Treated : vot::VersionArm::Control;
    return s;
  }
};

struct StatOpts {
  std::string stat = "mean";
  double scale = 0.0;  // 0: MAD policy

  void attach(CLI::App* cmd) {
    cmd->add_option("--stat", stat, "test statistic: mean|huber")
        ->check(CLI::IsMember({"mean", "huber"}))
        ->capture_default_str();
    cmd->add_option("--scale", scale,
                    "fixed Huber scale (> 0); default uses the global MAD");
  }

  vot::StatisticSpec spec() const {
    vot::StatisticSpec s;
    s.kind = (stat == "huber") ? vot::StatKind::HuberM : vot::StatKind::MeanDiff;
    if (scale > 0.0) {
      s.scale_policy = vot::ScalePolicy::Fixed;
      s.fixed_scale = scale;
    }
    return s;
  }
};

struct NullOpts {
  std::string method = "normal";
  int draws = 10000;
  std::uint64_t seed = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--null", method, "null distribution: exact|mc|normal")
        ->check(CLI::IsMember({"exact", "mc", "normal"}))
        ->capture_default_str();
    cmd->add_option("--draws", draws, "Monte Carlo draws (>= 1000)")->capture_default_str();
    cmd->add_option("--seed", seed, "seed for all randomness")->capture_default_str();
  }

  vot::NullSpec spec() const {
    vot::NullSpec s;
    if (method == "exact") s.method = vot::NullMethod::Exact;
    else if (method == "mc") s.method = vot::NullMethod::MonteCarlo;
    else s.method = vot::NullMethod::Normal;
    s.draws = draws;
    s.seed = seed;
    return s;
  }
};

struct VersionInputs {
  std::string all, a, b;

  void attach(CLI::App* cmd) {
    cmd->add_option("--input-all", all, "matched CSV: treated vs all controls")->required();
    cmd->add_option("--input-a", a, "matched CSV: treated vs version-a controls")->required();
    cmd->add_option("--input-b", b, "matched CSV: treated vs version-b controls")->required();
  }

  vot::VersionData load(const CohortOpts& opts) const {
    vot::VersionData v;
    v.all = vot::load_csv(all, opts.spec());
    v.only_a = vot::load_csv(a, opts.spec());
    v.only_b = vot::load_csv(b, opts.spec());
    return v;
  }
};

vot::RatioConstraint parse_ratio(const std::string& text) {
  const auto pos = text.find(':');
  vot::require(pos != std::string::npos && pos > 0 && pos + 1 < text.size(),
               vot::errc::invalid_input, "--ratio expects T:C, e.g. 6:6");
  vot::RatioConstraint r;
  try {
    r.max_treated_per_control = std::stoi(text.substr(0, pos));
    r.max_controls_per_treated = std::stoi(text.substr(pos + 1));
  } catch (const std::exception&) {
    vot::fail(vot::errc::invalid_input, "--ratio expects T:C, e.g. 6:6");
  }
  return r;
}

int run(int argc, char** argv) {
  CLI::App app{
      "vot: randomization inference for fully matched observational studies\n"
      "with two possible versions of treatment or control"};
  app.require_subcommand(1);

  // ---- match ----
  auto* match = app.add_subcommand("match", "optimal full match via min-cost flow");
  std::string match_in, match_out, ratio_text = "6:6", only_version;
  double caliper = 0.0;
  CohortOpts match_cohort;
  match->add_option("--input", match_in, "input cohort CSV")->required();
  match->add_option("--ratio", ratio_text,
                    "set-size bounds T:C (max treated per control : max controls per treated)")
      ->capture_default_str();
  match->add_option("--caliper", caliper, "forbid pairs farther apart than this distance");
  match->add_option("--only-version", only_version,
                    "restrict the version arm to one version before matching: a|b")
      ->check(CLI::IsMember({"a", "b"}));
  match->add_option("--out", match_out, "output CSV with set_id appended (default stdout)");
  match_cohort.attach(match);
  match->callback([&] {
    vot::Cohort c = vot::load_csv(match_in, match_cohort.spec());
    if (!only_version.empty())
      c = vot::subset_by_version(c, only_version == "a" ? vot::Version::A : vot::Version::B);
    c.sets.clear();  // re-match from scratch
    auto dm = vot::mahalanobis_distances(c);
    if (dm.regularized)
      std::cerr << "warning: singular covariance regularized for Mahalanobis distances\n";
    if (caliper > 0.0) vot::apply_caliper(dm, caliper);
    const auto matched = vot::optimal_full_match(c, dm, parse_ratio(ratio_text));
    std::ostringstream csv;
    vot::save_csv(matched, csv);
    if (match_out.empty()) {
      std::cout << csv.str();
    } else {
      write_text(match_out, csv.str());
      nlohmann::json j{{"schema", "1"},
                       {"kind", "match"},
                       {"sets", matched.num_sets()},
                       {"units", matched.num_units()},
                       {"treated", matched.treated_count()},
                       {"total_distance", vot::match_cost(matched, dm)}};
      std::cout << j.dump(2) << '\n';
    }
  });

  // ---- balance ----
  auto* balance = app.add_subcommand("balance", "standardized differences before/after matching");
  std::string bal_in, bal_out;
  CohortOpts bal_cohort;
  balance->add_option("--input", bal_in, "matched cohort CSV (set_id column)")->required();
  balance->add_option("--out", bal_out, "output JSON (default stdout)");
  bal_cohort.attach(balance);
  balance->callback([&] {
    const vot::Cohort c = vot::load_csv(bal_in, bal_cohort.spec());
    const auto rows = vot::balance_table(c, c);
    nlohmann::json j{{"schema", "1"}, {"kind", "balance"}};
    auto& arr = j["rows"] = nlohmann::json::array();
    for (const auto& r : rows)
      arr.push_back({{"covariate", r.covariate},
                     {"std_diff_before", r.std_diff_before},
                     {"std_diff_after", r.std_diff_after},
                     {"undefined", r.undefined}});
    write_text(bal_out, j.dump(2) + "\n");
  });

  // ---- test ----
  auto* test = app.add_subcommand("test", "randomization test of the shift hypothesis H_tau0");
  std::string test_in, test_out;
  double tau0 = 0.0, test_alpha = 0.05;
  CohortOpts test_cohort;
  StatOpts test_stat;
  NullOpts test_null;
  test->add_option("--input", test_in, "matched cohort CSV (set_id column)")->required();
  test->add_option("--tau0", tau0, "hypothesized constant effect")->capture_default_str();
  test->add_option("--alpha", test_alpha, "level for the reject flag")->capture_default_str();
  test->add_option("--out", test_out, "output JSON (default stdout)");
  test_cohort.attach(test);
  test_stat.attach(test);
  test_null.attach(test);
  test->callback([&] {
    const vot::Cohort c = vot::load_csv(test_in, test_cohort.spec());
    const auto res = vot::test(c, tau0, test_stat.spec(), test_null.spec());
    nlohmann::json j{{"schema", "1"},
                     {"kind", "test"},
                     {"tau0", res.tau0},
                     {"statistic", res.statistic},
                     {"p_upper", res.p_upper},
                     {"p_lower", res.p_lower},
                     {"p_two_sided", res.p_two_sided},
                     {"null_mean", res.null_mean},
                     {"null_sd", res.null_sd},
                     {"method", test_null.method},
                     {"draws", test_null.draws},
                     {"seed", test_null.seed},
                     {"alpha", test_alpha},
                     {"reject", res.p_two_sided <= test_alpha}};
    write_text(test_out, j.dump(2) + "\n");
  });

  // ---- ci ----
  auto* ci = app.add_subcommand("ci", "interval family I_c, I_a, I_b, I_v, I_*");
  VersionInputs ci_in;
  CohortOpts ci_cohort;
  StatOpts ci_stat;
  NullOpts ci_null;
  std::string ci_out;
  double ci_alpha = 0.05;
  bool ci_bonf = false, ci_grid = false;
  double grid_lo = -1.0, grid_hi = 1.0, grid_step = 1e-3;
  ci_in.attach(ci);
  ci->add_option("--alpha", ci_alpha, "family level")->capture_default_str();
  ci->add_flag("--bonferroni", ci_bonf, "also emit the Bonferroni triple at alpha/3");
  ci->add_flag("--grid", ci_grid, "dense-grid inversion instead of bisection");
  ci->add_option("--grid-lo", grid_lo, "grid lower bound")->capture_default_str();
  ci->add_option("--grid-hi", grid_hi, "grid upper bound")->capture_default_str();
  ci->add_option("--grid-step", grid_step, "grid step")->capture_default_str();
  ci->add_option("--out", ci_out, "output JSON (default stdout)");
  ci_cohort.attach(ci);
  ci_stat.attach(ci);
  ci_null.attach(ci);
  ci->callback([&] {
    const auto v = ci_in.load(ci_cohort);
    vot::IntervalSet fam;
    if (ci_grid) {
      vot::validate_version_data(v);
      const vot::Tester ta(v.all, ci_stat.spec());
      const vot::Tester tA(v.only_a, ci_stat.spec());
      const vot::Tester tB(v.only_b, ci_stat.spec());
      fam.alpha = ci_alpha;
      fam.stat = ci_stat.spec();
      fam.ic = vot::invert_family_grid(vot::RandFamily{ta, ci_null.spec()}, ci_alpha,
                                       vot::IntervalLabel::Ic, grid_lo, grid_hi, grid_step);
      fam.ia = vot::invert_family_grid(vot::RandFamily{tA, ci_null.spec()}, ci_alpha,
                                       vot::IntervalLabel::Ia, grid_lo, grid_hi, grid_step);
      fam.ib = vot::invert_family_grid(vot::RandFamily{tB, ci_null.spec()}, ci_alpha,
                                       vot::IntervalLabel::Ib, grid_lo, grid_hi, grid_step);
      fam.iv = vot::interval_hull({fam.ic, fam.ia, fam.ib}, vot::IntervalLabel::Iv, ci_alpha);
      fam.istar = vot::interval_hull({fam.ia, fam.ib}, vot::IntervalLabel::Istar, ci_alpha);
    } else {
      fam = vot::interval_family(v, ci_alpha, ci_stat.spec(), ci_null.spec());
    }
    nlohmann::json j{{"schema", "1"}, {"kind", "intervals"}, {"alpha", ci_alpha},
                     {"gamma", 1.0},  {"stat", ci_stat.stat}};
    auto& arr = j["intervals"] = nlohmann::json::array();
    for (const auto* it : {&fam.ic, &fam.ia, &fam.ib, &fam.iv, &fam.istar})
      arr.push_back(interval_json(*it));
    if (ci_bonf)
      for (const auto& it : vot::bonferroni_family(v, ci_alpha, ci_stat.spec(), ci_null.spec()))
        arr.push_back(interval_json(it));
    write_text(ci_out, j.dump(2) + "\n");
  });

  // ---- sensitivity ----
  auto* sens = app.add_subcommand("sensitivity", "gamma-sensitivity interval families");
  VersionInputs sens_in;
  CohortOpts sens_cohort;
  StatOpts sens_stat;
  std::vector<double> gammas;
  std::string sens_out;
  double sens_alpha = 0.05;
  sens_in.attach(sens);
  sens->add_option("--gamma", gammas, "odds-ratio bound(s) >= 1 (repeatable; default 1)")
      ->expected(-1);
  sens->add_option("--alpha", sens_alpha, "family level")->capture_default_str();
  sens->add_option("--out", sens_out, "output JSON (default stdout)");
  sens_cohort.attach(sens);
  sens_stat.attach(sens);
  sens->callback([&] {
    const auto v = sens_in.load(sens_cohort);
    if (gammas.empty()) gammas.push_back(1.0);
    nlohmann::json j{{"schema", "1"}, {"kind", "sensitivity"}, {"alpha", sens_alpha},
                     {"stat", sens_stat.stat}};
    auto& fams = j["families"] = nlohmann::json::array();
    for (double g : gammas) {
      const auto fam = vot::sensitivity_interval(v, sens_alpha, {g}, sens_stat.spec());
      nlohmann::json jf{{"gamma", g}};
      auto& arr = jf["intervals"] = nlohmann::json::array();
      for (const auto* it : {&fam.ic, &fam.ia, &fam.ib, &fam.iv, &fam.istar})
        arr.push_back(interval_json(*it));
      fams.push_back(std::move(jf));
    }
    write_text(sens_out, j.dump(2) + "\n");
  });

  // ---- amplify ----
  auto* amp = app.add_subcommand("amplify", "gamma equivalent of a (lambda, delta) pair");
  vot::AmplifyPair pair;
  amp->add_option("--lambda", pair.lambda, "treatment odds multiplier (> 1)")->required();
  amp->add_option("--delta", pair.delta, "worse-outcome odds multiplier (> 1)")->required();
  amp->callback([&] { std::cout << fmt(vot::amplify(pair)) << '\n'; });

  // ---- simulate ----
  auto* sim = app.add_subcommand("simulate", "power/coverage study on the synthetic design");
  std::vector<double> taubs, ratios;
  std::string sim_out, sim_null = "normal";
  vot::SimDesign base;
  sim->add_option("--taub", taubs, "tau^b value(s) (repeatable; default 0.25 0.4)")
      ->expected(-1);
  sim->add_option("--ratio-a", ratios,
                  "tau^a / tau^b ratio(s) (repeatable; default: eight preset ratios)")
      ->expected(-1);
  sim->add_option("--sets", base.sets, "matched sets per replicate")->capture_default_str();
  sim->add_option("--controls-per-version", base.controls_per_version,
                  "controls of each version per set")
      ->capture_default_str();
  sim->add_option("--reps", base.reps, "replicates per cell")->capture_default_str();
  sim->add_option("--seed", base.seed, "master seed")->capture_default_str();
  sim->add_option("--alpha", base.alpha, "test level")->capture_default_str();
  sim->add_option("--null", sim_null, "null for I_c: normal|mc (mc audits the fast path)")
      ->check(CLI::IsMember({"normal", "mc"}))
      ->capture_default_str();
  sim->add_option("--draws", base.mc_draws, "Monte Carlo draws when --null mc")
      ->capture_default_str();
  sim->add_option("--out", sim_out, "output CSV (default stdout)");
  sim->callback([&] {
    if (taubs.empty()) taubs = {0.25, 0.4};
    if (ratios.empty()) ratios = {1.0, 0.95, 0.9, 0.75, 0.65, 0.6, 0.5, 0.25};
    base.ic_null = (sim_null == "mc") ? vot::NullMethod::MonteCarlo : vot::NullMethod::Normal;
    std::string csv =
        "tau_b,ratio_a,tau_a,delta,reps,seed,alpha,power_version,mc_se_version,"
        "power_f,mc_se_f,coverage_ic,coverage_iv\n";
    for (double tb : taubs) {
      for (double ra : ratios) {
        vot::SimDesign d = base;
        d.tau_b = tb;
        d.delta = tb * (1.0 - ra);
        const auto rep = vot::power_study(d);
        csv += fmt(tb) + ',' + fmt(ra) + ',' + fmt(tb - d.delta) + ',' + fmt(d.delta) + ',' +
               std::to_string(rep.reps) + ',' + std::to_string(d.seed) + ',' + fmt(d.alpha) +
               ',' + fmt(rep.power_version) + ',' + fmt(rep.mc_se_version) + ',' +
               fmt(rep.power_f) + ',' + fmt(rep.mc_se_f) + ',' + fmt(rep.coverage_ic) + ',' +
               fmt(rep.coverage_iv) + '\n';
      }
    }
    write_text(sim_out, csv);
  });

  // ---- plotdata ----
  auto* plot = app.add_subcommand("plotdata", "CSV of (label, lo, hi, gamma) interval rows");
  VersionInputs plot_in;
  CohortOpts plot_cohort;
  StatOpts plot_stat;
  std::vector<double> plot_gammas;
  std::string plot_out;
  double plot_alpha = 0.05;
  bool plot_bonf = false;
  plot_in.attach(plot);
  plot->add_option("--gamma", plot_gammas, "odds-ratio bound(s) >= 1 (repeatable; default 1)")
      ->expected(-1);
  plot->add_option("--alpha", plot_alpha, "family level")->capture_default_str();
  plot->add_flag("--bonferroni", plot_bonf, "include the Bonferroni triple per gamma");
  plot->add_option("--out", plot_out, "output CSV (default stdout)");
  plot_cohort.attach(plot);
  plot_stat.attach(plot);
  plot->callback([&] {
    const auto v = plot_in.load(plot_cohort);
    if (plot_gammas.empty()) plot_gammas.push_back(1.0);
    std::string csv = "label,lo,hi,gamma\n";
    auto row = [&](const vot::Interval& it, double g) {
      csv += vot::to_string(it.label) + ',' + fmt(it.lo) + ',' + fmt(it.hi) + ',' + fmt(g) + '\n';
    };
    for (double g : plot_gammas) {
      const auto fam = vot::sensitivity_interval(v, plot_alpha, {g}, plot_stat.spec());
      for (const auto* it : {&fam.ic, &fam.ia, &fam.ib, &fam.iv, &fam.istar}) row(*it, g);
      if (plot_bonf)
        for (const auto& it : vot::sensitivity_bonferroni(v, plot_alpha, {g}, plot_stat.spec()))
          row(it, g);
    }
    write_text(plot_out, csv);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const vot::error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
