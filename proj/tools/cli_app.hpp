#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "autodml/config.hpp"
#include "autodml/csv.hpp"
#include "autodml/diagnostics.hpp"
#include "autodml/inference.hpp"
#include "autodml/oracle.hpp"
#include "autodml/report.hpp"
#include "autodml/surrogate.hpp"

namespace autodml::cli {

enum ExitCode { kOk = 0, kUsage = 2, kNumerical = 3 };

namespace detail {

// "-" writes to `fallback` (stdout in the binary).
inline void emit(const std::string& path, std::ostream& fallback, const std::function<void(std::ostream&)>& write) {
  if (path.empty() || path == "-") {
    write(fallback);
    return;
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw ValidationError("cannot write " + path);
  write(file);
  if (!file) throw ValidationError("failed writing " + path);
}

inline std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

inline std::string fmt12(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline void print_tables(std::ostream& out, const char* name, const OracleTables& tables) {
  for (int t = 1; t <= tables.periods(); ++t) {
    const auto& v = tables.values[t - 1];
    for (Eigen::Index s = 0; s < v.rows(); ++s) {
      out << name << t << "[s=" << s << "] =";
      for (Eigen::Index k = 0; k < v.cols(); ++k) out << ' ' << fmt12(v(s, k));
      bool any = false;
      for (Eigen::Index k = 0; k < v.cols(); ++k) any = any || tables.zero_mass[t - 1](s, k);
      if (any) {
        out << "  # zero mass at k =";
        for (Eigen::Index k = 0; k < v.cols(); ++k)
          if (tables.zero_mass[t - 1](s, k)) out << ' ' << k;
      }
      out << '\n';
    }
  }
}

struct SeedOption {
  long long value = -1;
  std::uint64_t resolve(std::uint64_t fallback) const {
    return value >= 0 ? static_cast<std::uint64_t>(value) : fallback;
  }
};

inline void add_seed(CLI::App* app, SeedOption& seed) {
  app->add_option("--seed", seed.value, "random seed (overrides the config)")->check(CLI::NonNegativeNumber);
}

}  // namespace detail

// Runs the command line; returns the process exit code. Regular output goes
// to `out` when a path is "-", diagnostics go to `err` as one line each.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Automated debiased estimation of dynamic treatment effects", "autodml"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  std::string dgp_path, plan_path, config_path, data_path, out_path = "-", summary_path, short_path, long_path;
  long long n = 0, reps = 0;
  int jobs = 1, draws = 100;
  bool clever = false;
  detail::SeedOption seed;
  std::vector<long long> sizes;

  auto* simulate = app.add_subcommand("simulate", "draw a panel from a DGP file");
  simulate->add_option("--dgp", dgp_path, "DGP file")->required();
  simulate->add_option("--n", n, "number of trajectories")->required();
  detail::add_seed(simulate, seed);
  simulate->add_option("--out", out_path, "CSV output path ('-' for stdout)");

  auto* estimate = app.add_subcommand("estimate", "cross-fitted estimate from a panel CSV");
  estimate->add_option("--data", data_path, "panel CSV")->required();
  estimate->add_option("--plan", plan_path, "plan file")->required();
  estimate->add_option("--config", config_path, "estimator config file");
  estimate->add_option("--out", out_path, "JSON report path");
  estimate->add_flag("--clever-covariate", clever, "fit regressions with the representer column");
  estimate->add_option("--jobs", jobs, "parallel folds")->check(CLI::PositiveNumber);
  detail::add_seed(estimate, seed);

  auto* oracle = app.add_subcommand("oracle", "exact theta, regressions and representers of a DGP");
  oracle->add_option("--dgp", dgp_path, "DGP file")->required();
  oracle->add_option("--plan", plan_path, "plan file")->required();
  oracle->add_option("--out", out_path, "output path");
  detail::add_seed(oracle, seed);

  auto* diagnose = app.add_subcommand("diagnose", "population orthogonality, mixed-bias and robustness checks");
  diagnose->add_option("--dgp", dgp_path, "DGP file")->required();
  diagnose->add_option("--plan", plan_path, "plan file")->required();
  diagnose->add_option("--draws", draws, "random perturbations for the mixed-bias check")->check(CLI::PositiveNumber);
  diagnose->add_option("--out", out_path, "JSON output path");
  detail::add_seed(diagnose, seed);

  auto* mc = app.add_subcommand("mc", "Monte Carlo coverage experiment");
  mc->add_option("--dgp", dgp_path, "DGP file")->required();
  mc->add_option("--plan", plan_path, "plan file")->required();
  mc->add_option("--config", config_path, "estimator config file");
  mc->add_option("--reps", reps, "replicates")->required();
  mc->add_option("--n", n, "sample size per replicate")->required();
  mc->add_option("--jobs", jobs, "parallel replicates")->check(CLI::PositiveNumber);
  mc->add_option("--out", out_path, "per-replicate CSV path");
  mc->add_option("--summary", summary_path, "summary JSON path (default: stdout)");
  detail::add_seed(mc, seed);

  auto* rates = app.add_subcommand("rates", "nuisance error rates against the oracle");
  rates->add_option("--dgp", dgp_path, "DGP file")->required();
  rates->add_option("--plan", plan_path, "plan file")->required();
  rates->add_option("--config", config_path, "estimator config file");
  rates->add_option("--n", sizes, "sample sizes")->required()->expected(2, 64);
  rates->add_option("--reps", reps, "replicates per sample size");
  rates->add_option("--jobs", jobs, "parallel fits")->check(CLI::PositiveNumber);
  rates->add_option("--out", out_path, "JSON output path");
  detail::add_seed(rates, seed);

  auto* surrogate = app.add_subcommand("surrogate-estimate", "two-sample long-term effect estimate");
  surrogate->add_option("--short", short_path, "short-term CSV (x_*, t, s_*)")->required();
  surrogate->add_option("--long", long_path, "long-term CSV (x_*, s_*, y)")->required();
  surrogate->add_option("--config", config_path, "estimator config file");
  surrogate->add_option("--out", out_path, "JSON report path");
  surrogate->add_option("--jobs", jobs, "parallel folds")->check(CLI::PositiveNumber);
  detail::add_seed(surrogate, seed);

  std::string command = "autodml";
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "autodml: error=usage message=" << detail::quote(e.what()) << '\n';
    return kUsage;
  }

  try {
    const auto load_config = [&] {
      return config_path.empty() ? config::ConfigFile::parse("", "<defaults>") : config::ConfigFile::load(config_path);
    };
    if (simulate->parsed()) {
      command = "simulate";
      if (n < 1) throw ValidationError("n must be >= 1");
      const DiscreteDGP dgp = config::build_dgp(config::ConfigFile::load(dgp_path));
      const PanelDataset data = dgp.simulate(static_cast<std::size_t>(n), seed.resolve(dgp.seed()));
      detail::emit(out_path, out, [&](std::ostream& o) { csv::write_panel(o, data); });
    } else if (estimate->parsed()) {
      command = "estimate";
      const TreatmentFunctional plan = config::build_plan(config::ConfigFile::load(plan_path));
      auto settings = config::EstimatorSettings::from(load_config());
      settings.seed = seed.resolve(settings.seed);
      if (clever) settings.clever_covariate = true;
      const PanelDataset data = csv::read_panel_file(data_path, settings.schema(plan.periods()));
      const FitConfig cfg = settings.fit_config(data);
      EstimateOptions opt;
      opt.clever_covariate = settings.clever_covariate;
      opt.jobs = jobs;
      opt.level = settings.level;
      const EstimateReport rep = dml_estimate(data, plan, cfg, settings.folds, settings.seed, opt);
      detail::emit(out_path, out, [&](std::ostream& o) { o << report::to_json(rep).dump(2) << '\n'; });
    } else if (oracle->parsed()) {
      command = "oracle";
      const DiscreteDGP dgp = config::build_dgp(config::ConfigFile::load(dgp_path));
      const TreatmentFunctional plan = config::build_plan(config::ConfigFile::load(plan_path));
      const double theta = oracle_theta(dgp, plan);
      const OracleTables f = oracle_nested_regressions(dgp, plan);
      const OracleTables a = oracle_riesz(dgp, plan);
      detail::emit(out_path, out, [&](std::ostream& o) {
        o << "theta=" << detail::fmt12(theta) << '\n';
        o << "plan=" << plan.description() << '\n';
        detail::print_tables(o, "f", f);
        detail::print_tables(o, "a", a);
      });
    } else if (diagnose->parsed()) {
      command = "diagnose";
      const DiscreteDGP dgp = config::build_dgp(config::ConfigFile::load(dgp_path));
      const TreatmentFunctional plan = config::build_plan(config::ConfigFile::load(plan_path));
      DiagnosticOptions opt;
      opt.seed = seed.resolve(dgp.seed());
      opt.mixed_bias_draws = draws;
      const auto checks = run_diagnostics(dgp, plan, opt);
      const auto doc = report::to_json(checks);
      detail::emit(out_path, out, [&](std::ostream& o) { o << doc.dump(2) << '\n'; });
      if (!doc["passed"].get<bool>()) {
        err << "autodml: error=check command=diagnose message=\"one or more checks failed\"\n";
        return kNumerical;
      }
    } else if (mc->parsed()) {
      command = "mc";
      if (reps < 1) throw ValidationError("reps must be >= 1");
      if (n < 1) throw ValidationError("n must be >= 1");
      const DiscreteDGP dgp = config::build_dgp(config::ConfigFile::load(dgp_path));
      const TreatmentFunctional plan = config::build_plan(config::ConfigFile::load(plan_path));
      auto settings = config::EstimatorSettings::from(load_config());
      settings.seed = seed.resolve(settings.seed);
      // Feature maps come from a pilot draw so every replicate shares them.
      const PanelDataset pilot = dgp.simulate(static_cast<std::size_t>(n), mix_seed(settings.seed, 0));
      FitConfig cfg = settings.fit_config(pilot);
      for (int t = 1; t <= dgp.periods(); ++t)
        if (settings.feature_kind(t) == "tabular" && !settings.state_arity.count(t) && !settings.state_arity.count(0))
          cfg.features[static_cast<std::size_t>(t - 1)] = grid_feature_map(dgp, t);
      EstimateOptions opt;
      opt.clever_covariate = settings.clever_covariate;
      opt.level = settings.level;
      const McSummary s = mc_experiment(dgp, plan, cfg, static_cast<std::size_t>(reps), static_cast<std::size_t>(n),
                                        settings.folds, settings.seed, jobs, opt);
      detail::emit(out_path, out, [&](std::ostream& o) { report::write_mc_csv(o, s); });
      auto doc = report::to_json(s);
      report::Json config_echo = report::Json::object();
      for (const auto& [k, v] : describe_config(cfg, plan, settings.folds, settings.seed, opt)) config_echo[k] = v;
      doc["config"] = config_echo;
      if (!summary_path.empty()) detail::emit(summary_path, out, [&](std::ostream& o) { o << doc.dump(2) << '\n'; });
      else if (out_path != "-" && !out_path.empty()) out << doc.dump(2) << '\n';
    } else if (rates->parsed()) {
      command = "rates";
      const DiscreteDGP dgp = config::build_dgp(config::ConfigFile::load(dgp_path));
      const TreatmentFunctional plan = config::build_plan(config::ConfigFile::load(plan_path));
      auto settings = config::EstimatorSettings::from(load_config());
      settings.seed = seed.resolve(settings.seed);
      std::vector<std::size_t> ns;
      for (long long v : sizes) {
        if (v < 1) throw ValidationError("sample sizes must be >= 1");
        ns.push_back(static_cast<std::size_t>(v));
      }
      FitConfig cfg = settings.fit_config(dgp.simulate(ns.front(), mix_seed(settings.seed, 0)));
      for (int t = 1; t <= dgp.periods(); ++t)
        if (settings.feature_kind(t) == "tabular" && !settings.state_arity.count(t) && !settings.state_arity.count(0))
          cfg.features[static_cast<std::size_t>(t - 1)] = grid_feature_map(dgp, t);
      const RateTable table =
          rate_table(dgp, plan, cfg, ns, reps > 0 ? static_cast<std::size_t>(reps) : 1, settings.seed, jobs);
      detail::emit(out_path, out, [&](std::ostream& o) { o << report::to_json(table).dump(2) << '\n'; });
    } else if (surrogate->parsed()) {
      command = "surrogate-estimate";
      auto settings = config::SurrogateSettings::from(load_config());
      settings.seed = seed.resolve(settings.seed);
      const SurrogatePair data = csv::read_surrogate_files(short_path, long_path);
      const SurrogateConfig cfg = settings.surrogate_config(data);
      const SurrogateReport rep = surrogate_estimate(data, cfg, settings.folds, settings.seed, jobs, settings.level);
      detail::emit(out_path, out, [&](std::ostream& o) { o << report::to_json(rep).dump(2) << '\n'; });
    }
  } catch (const ValidationError& e) {
    err << "autodml: error=validation command=" << command << " message=" << detail::quote(e.what()) << '\n';
    return kUsage;
  } catch (const NumericalError& e) {
    err << "autodml: error=numerical command=" << command << " message=" << detail::quote(e.what()) << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    err << "autodml: error=internal command=" << command << " message=" << detail::quote(e.what()) << '\n';
    return kNumerical;
  }
  return kOk;
}

}  // namespace autodml::cli
