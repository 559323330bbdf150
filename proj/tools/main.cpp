#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>

#include "convsccs/config.hpp"
#include "convsccs/errors.hpp"
#include "convsccs/estimator.hpp"
#include "convsccs/metrics.hpp"
#include "convsccs/parallel.hpp"
#include "convsccs/rng.hpp"
#include "convsccs/simulator.hpp"
#include "convsccs/version.hpp"
#include "svg_plot.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace convsccs;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                       start)
      .count();
}

// Run manifests are written last and atomically; a manifest present means
// the run completed and records everything needed to reproduce it.
void write_manifest(const fs::path& out_dir, json manifest) {
  manifest["tool_version"] = CONVSCCS_VERSION;
  const fs::path final_path = out_dir / "manifest.json";
  const fs::path tmp_path = out_dir / "manifest.json.tmp";
  {
    std::ofstream out(tmp_path);
    if (!out) {
      throw ValidationError("cannot write manifest in " + out_dir.string());
    }
    out << manifest.dump(2) << "\n";
  }
  fs::rename(tmp_path, final_path);
}

void ensure_out_dir(const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    throw ValidationError("cannot create output directory " + out_dir + ": " +
                          ec.message());
  }
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
  return out;
}

json config_entries_json(const KeyValueConfig& config) {
  json entries = json::object();
  for (const auto& [key, value] : config.entries()) entries[key] = value;
  return entries;
}

IngestConfig ingest_config_from(const KeyValueConfig& config) {
  IngestConfig ingest;
  ingest.n_intervals = static_cast<int>(config.get_int("n_intervals"));
  ingest.interval_length = config.get_double("interval_length", 1.0);
  if (config.has("origin_date")) {
    ingest.origin_date = config.get_string("origin_date");
  }
  const std::string delim = config.get_string("delimiter", ",");
  if (delim.size() != 1) {
    throw ConfigError("delimiter must be a single character");
  }
  ingest.delimiter = delim[0];
  return ingest;
}

PipelineConfig pipeline_config_from(const KeyValueConfig& config,
                                    std::optional<std::uint64_t> seed_override,
                                    int n_jobs) {
  PipelineConfig pipeline;
  pipeline.window_length =
      static_cast<int>(config.get_int("window_length", 50));
  pipeline.baseline_group_width =
      static_cast<int>(config.get_int("baseline_group_width", 50));

  pipeline.run_cv = config.get_bool("run_cv", true);
  pipeline.search.n_folds = static_cast<int>(config.get_int("n_folds", 3));
  const std::string search = config.get_string("search", "random");
  if (search == "random") {
    pipeline.search.search = HyperSearchConfig::Search::random;
  } else if (search == "grid") {
    pipeline.search.search = HyperSearchConfig::Search::grid;
  } else {
    throw ConfigError("search must be 'random' or 'grid', got '" + search +
                      "'");
  }
  pipeline.search.n_candidates =
      static_cast<int>(config.get_int("n_candidates", 50));
  pipeline.search.gamma_tv_range = {config.get_double("gamma_tv_min", 1e-4),
                                    config.get_double("gamma_tv_max", 10.0)};
  pipeline.search.gamma_gl_range = {config.get_double("gamma_gl_min", 1e-4),
                                    config.get_double("gamma_gl_max", 10.0)};
  pipeline.search.n_strata = static_cast<int>(config.get_int("n_strata", 4));

  pipeline.penalty.gamma_tv = config.get_double("gamma_tv", 0.0);
  pipeline.penalty.gamma_gl = config.get_double("gamma_gl", 0.0);

  pipeline.solver.n_epochs = static_cast<int>(config.get_int("n_epochs", 100));
  pipeline.solver.tolerance = config.get_double("tolerance", 1e-6);
  pipeline.solver.step_size = config.get_double("step_size", 0.0);
  const std::string variant = config.get_string("solver", "svrg");
  if (variant == "svrg") {
    pipeline.solver.variant = SolverVariant::svrg;
  } else if (variant == "full_prox_grad") {
    pipeline.solver.variant = SolverVariant::full_prox_grad;
  } else {
    throw ConfigError("solver must be 'svrg' or 'full_prox_grad'");
  }

  pipeline.refit = config.get_bool("refit", true);
  pipeline.bootstrap = config.get_bool("bootstrap", true);
  pipeline.n_bootstrap = static_cast<int>(config.get_int("n_bootstrap", 200));
  pipeline.confidence = config.get_double("confidence", 0.95);
  pipeline.n_jobs = n_jobs;
  pipeline.rng_seed = seed_override
                          ? *seed_override
                          : static_cast<std::uint64_t>(config.get_int("seed", 0));
  return pipeline;
}

GapPolicy gap_policy_from(const KeyValueConfig& config) {
  const std::string policy = config.get_string("gap_policy", "first_only");
  if (policy == "first_only") return GapPolicy::first_only;
  if (policy == "error") return GapPolicy::error;
  if (policy == "keep") return GapPolicy::keep;
  throw ConfigError("gap_policy must be first_only, error or keep");
}

void write_truth_files(const fs::path& out_dir, const SimTruth& truth,
                       const CohortTimeline& cohort) {
  auto exposures = open_output(out_dir / "truth_exposures.csv");
  exposures << std::setprecision(17) << "drug,lag,rel_incidence\n";
  for (int j = 0; j < truth.exposure_curves.rows(); ++j) {
    for (int l = 0; l < truth.exposure_curves.cols(); ++l) {
      exposures << cohort.drug_labels[j] << "," << l << ","
                << truth.exposure_curves(j, l) << "\n";
    }
  }
  auto baseline = open_output(out_dir / "truth_baseline.csv");
  baseline << std::setprecision(17) << "interval,value\n";
  for (int k = 0; k < truth.baseline.size(); ++k) {
    baseline << k << "," << truth.baseline[k] << "\n";
  }
}

int cmd_simulate(const std::string& scenario_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed) {
  const auto start = std::chrono::steady_clock::now();
  const KeyValueConfig config = KeyValueConfig::parse_file(scenario_path);
  SimScenario scenario = scenario_from_config(config);
  if (seed) scenario.rng_seed = *seed;

  ensure_out_dir(out_dir);
  SimTruth truth;
  const CohortTimeline cohort = simulate_cohort(scenario, &truth);
  const double sim_seconds = seconds_since(start);

  write_event_file((fs::path(out_dir) / "cohort.csv").string(), cohort);
  write_truth_files(out_dir, truth, cohort);

  write_manifest(out_dir, json{
      {"command", "simulate"},
      {"scenario_file", scenario_path},
      {"scenario", config_entries_json(config)},
      {"seed", scenario.rng_seed},
      {"out_dir", out_dir},
      {"n_patients", cohort.n_patients()},
      {"n_drugs", cohort.n_drugs()},
      {"timings", {{"simulate_seconds", sim_seconds}}},
  });
  return 0;
}

int cmd_fit(const std::string& cohort_path, const std::string& config_path,
            const std::string& out_dir, std::optional<std::uint64_t> seed,
            int n_jobs, bool no_bootstrap, bool drop_non_cases) {
  const KeyValueConfig config = KeyValueConfig::parse_file(config_path);
  const IngestConfig ingest = ingest_config_from(config);

  const auto t0 = std::chrono::steady_clock::now();
  CohortTimeline cohort = read_event_file(cohort_path, ingest);

  ValidationReport report;
  CohortTimeline cases = validate_cases(cohort, &report);
  if (report.dropped_non_cases > 0 && !drop_non_cases) {
    throw ValidationError(
        std::to_string(report.dropped_non_cases) +
        " patients have no outcome events; pass --drop-non-cases to drop "
        "them");
  }

  PipelineConfig pipeline = pipeline_config_from(config, seed, n_jobs);
  cases = enforce_exposure_gaps(cases, pipeline.window_length,
                                gap_policy_from(config));
  if (no_bootstrap) pipeline.bootstrap = false;
  const double ingest_seconds = seconds_since(t0);

  const auto t1 = std::chrono::steady_clock::now();
  const FitResult result = run_fit_pipeline(cases, pipeline);
  const double fit_seconds = seconds_since(t1);

  ensure_out_dir(out_dir);
  const LaggedDesign design = build_lagged_design(
      cases, pipeline.window_length, pipeline.baseline_group_width);
  {
    auto out = open_output(fs::path(out_dir) / "fit_report.csv");
    write_fit_report(out, result, cases, design);
  }
  if (!result.cv_table.empty()) {
    auto out = open_output(fs::path(out_dir) / "cv_table.csv");
    write_cv_table(out, result.cv_table, result.cv_chosen_index);
  }
  if (config.get_bool("plots", true)) {
    const RelativeIncidence ri =
        relative_incidence(result.refit_params, design);
    for (int j = 0; j < cases.n_drugs(); ++j) {
      Eigen::VectorXd lower, upper;
      if (result.has_bands()) {
        lower = result.exposure_ci_lower.row(j);
        upper = result.exposure_ci_upper.row(j);
      }
      cli::write_ri_plot(
          (fs::path(out_dir) / ("plot_" + cases.drug_labels[j] + ".svg"))
              .string(),
          cases.drug_labels[j], ri.exposures.row(j), lower, upper);
    }
  }

  write_manifest(out_dir, json{
      {"command", "fit"},
      {"cohort_file", cohort_path},
      {"config_file", config_path},
      {"config", config_entries_json(config)},
      {"seed", pipeline.rng_seed},
      {"jobs", n_jobs},
      {"out_dir", out_dir},
      {"dropped_non_cases", report.dropped_non_cases},
      {"n_cases", cases.n_patients()},
      {"chosen_gamma_tv", result.chosen_penalty.gamma_tv},
      {"chosen_gamma_gl", result.chosen_penalty.gamma_gl},
      {"bootstrap_samples", result.n_bootstrap},
      {"timings",
       {{"ingest_seconds", ingest_seconds}, {"fit_seconds", fit_seconds}}},
  });
  return 0;
}

double quantile_of(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const double pos = q * (values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(values.size() - 1, lo + 1);
  const double w = pos - lo;
  return (1.0 - w) * values[lo] + w * values[hi];
}

int cmd_benchmark(const std::string& config_path, const std::string& out_dir,
                  std::optional<std::uint64_t> seed, int n_jobs) {
  const KeyValueConfig study = KeyValueConfig::parse_file(config_path);
  const std::string scenario_path = study.get_string("scenario");
  const KeyValueConfig scenario_config =
      KeyValueConfig::parse_file(scenario_path);
  const SimScenario base_scenario = scenario_from_config(scenario_config);
  const int n_replicates =
      static_cast<int>(study.get_int("n_replicates", 10));
  if (n_replicates < 1) throw ConfigError("n_replicates must be >= 1");
  const std::uint64_t master_seed =
      seed ? *seed : static_cast<std::uint64_t>(study.get_int("seed", 0));

  PipelineConfig pipeline_template = pipeline_config_from(study, 0, 1);
  // the benchmark defaults to skipping the bootstrap (the error metric does
  // not use the bands); an explicit bootstrap = true in the study restores it
  pipeline_template.bootstrap = study.get_bool("bootstrap", false);

  struct ReplicateRow {
    EvalReport report;
    double simulate_seconds = 0.0;
    double fit_seconds = 0.0;
  };
  std::vector<ReplicateRow> rows(n_replicates);

  parallel_for(n_replicates, n_jobs, [&](int r) {
    SimScenario scenario = base_scenario;
    scenario.rng_seed = derive_seed(master_seed, 100 + r);

    const auto t0 = std::chrono::steady_clock::now();
    SimTruth truth;
    const CohortTimeline cohort = simulate_cohort(scenario, &truth);
    rows[r].simulate_seconds = seconds_since(t0);

    PipelineConfig pipeline = pipeline_template;
    pipeline.rng_seed = derive_seed(master_seed, 200 + r);
    pipeline.n_jobs = 1;  // replicates are already parallel

    const auto t1 = std::chrono::steady_clock::now();
    const FitResult fit = run_fit_pipeline(cohort, pipeline);
    rows[r].fit_seconds = seconds_since(t1);

    const LaggedDesign design = build_lagged_design(
        cohort, pipeline.window_length, pipeline.baseline_group_width);
    const RelativeIncidence ri = relative_incidence(fit.refit_params, design);
    rows[r].report =
        evaluate(ri.exposures, truth.exposure_curves, ri.baseline,
                 truth.baseline);
  });

  ensure_out_dir(out_dir);
  {
    auto out = open_output(fs::path(out_dir) / "mae_table.csv");
    out << std::setprecision(17) << "replicate,exposure_mae,baseline_mae\n";
    for (int r = 0; r < n_replicates; ++r) {
      out << r << "," << rows[r].report.exposure_mae << ","
          << rows[r].report.baseline_mae << "\n";
    }
  }
  {
    std::vector<double> exposure, baseline;
    for (const auto& row : rows) {
      exposure.push_back(row.report.exposure_mae);
      baseline.push_back(row.report.baseline_mae);
    }
    auto out = open_output(fs::path(out_dir) / "mae_summary.csv");
    out << std::setprecision(17) << "metric,min,q1,median,q3,max\n";
    for (const auto& [name, values] :
         {std::pair{std::string("exposure_mae"), exposure},
          std::pair{std::string("baseline_mae"), baseline}}) {
      out << name << "," << quantile_of(values, 0.0) << ","
          << quantile_of(values, 0.25) << "," << quantile_of(values, 0.5)
          << "," << quantile_of(values, 0.75) << ","
          << quantile_of(values, 1.0) << "\n";
    }
  }
  {
    auto out = open_output(fs::path(out_dir) / "runtimes.csv");
    out << std::setprecision(6)
        << "replicate,simulate_seconds,fit_seconds,total_seconds\n";
    for (int r = 0; r < n_replicates; ++r) {
      out << r << "," << rows[r].simulate_seconds << "," << rows[r].fit_seconds
          << "," << rows[r].simulate_seconds + rows[r].fit_seconds << "\n";
    }
  }

  write_manifest(out_dir, json{
      {"command", "benchmark"},
      {"config_file", config_path},
      {"scenario_file", scenario_path},
      {"study", config_entries_json(study)},
      {"scenario", config_entries_json(scenario_config)},
      {"seed", master_seed},
      {"jobs", n_jobs},
      {"n_replicates", n_replicates},
      {"out_dir", out_dir},
  });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ConvSCCS: penalized convolutional self-controlled case "
               "series estimation, simulation and benchmarking"};
  app.require_subcommand(1);

  std::string scenario_path, cohort_path, config_path, out_dir;
  std::optional<std::uint64_t> seed;
  int n_jobs = 1;
  bool no_bootstrap = false, drop_non_cases = false;

  auto* simulate = app.add_subcommand("simulate", "Simulate a cohort");
  simulate->add_option("--scenario", scenario_path, "Scenario config file")
      ->required();
  simulate->add_option("--out", out_dir, "Output directory")->required();
  simulate->add_option("--seed", seed, "Override the scenario seed");

  auto* fit = app.add_subcommand("fit", "Fit a cohort event file");
  fit->add_option("--cohort", cohort_path, "Cohort event file")->required();
  fit->add_option("--config", config_path, "Fit config file")->required();
  fit->add_option("--out", out_dir, "Output directory")->required();
  fit->add_option("--seed", seed, "Override the config seed");
  fit->add_option("--jobs", n_jobs, "Parallel workers for CV and bootstrap");
  fit->add_flag("--no-bootstrap", no_bootstrap, "Skip the confidence bands");
  fit->add_flag("--drop-non-cases", drop_non_cases,
                "Drop patients without outcome events instead of failing");

  auto* benchmark = app.add_subcommand(
      "benchmark", "Replicate simulation + fit and report error metrics");
  benchmark->add_option("--config", config_path, "Study config file")
      ->required();
  benchmark->add_option("--out", out_dir, "Output directory")->required();
  benchmark->add_option("--seed", seed, "Override the study seed");
  benchmark->add_option("--jobs", n_jobs, "Parallel replicates");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return cmd_simulate(scenario_path, out_dir, seed);
    if (fit->parsed()) {
      return cmd_fit(cohort_path, config_path, out_dir, seed, n_jobs,
                     no_bootstrap, drop_non_cases);
    }
    return cmd_benchmark(config_path, out_dir, seed, n_jobs);
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DivergenceError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
