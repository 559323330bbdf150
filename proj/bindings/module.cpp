#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "convsccs/errors.hpp"
#include "convsccs/estimator.hpp"
#include "convsccs/metrics.hpp"
#include "convsccs/prox.hpp"
#include "convsccs/simulator.hpp"
#include "convsccs/timeline.hpp"
#include "convsccs/version.hpp"

namespace py = pybind11;
using namespace convsccs;

namespace {

GapPolicy gap_policy_from_name(const std::string& name) {
  if (name == "first_only") return GapPolicy::first_only;
  if (name == "error") return GapPolicy::error;
  if (name == "keep") return GapPolicy::keep;
  throw ConfigError("gap policy must be first_only, error or keep");
}

// Python-facing view of a finished fit: curves on the relative-incidence
// scale plus the selection and support metadata.
struct PyFitResult {
  Eigen::MatrixXd exposure_curves;
  Eigen::VectorXd baseline_curve;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd penalized_coefficients;
  Eigen::MatrixXd exposure_ci_lower, exposure_ci_upper;
  Eigen::VectorXd baseline_ci_lower, baseline_ci_upper;
  double gamma_tv = 0.0, gamma_gl = 0.0;
  std::vector<std::tuple<double, double, double, double>> cv_table;
  int cv_chosen_index = -1;
  std::vector<std::vector<std::tuple<int, int, double>>> support;
  std::vector<bool> zero_drugs;
  int n_bootstrap = 0;
};

PyFitResult package_result(const FitResult& result,
                           const CohortTimeline& cohort) {
  const LaggedDesign design = build_lagged_design(
      cohort, result.window_length, result.baseline_group_width);
  const RelativeIncidence ri = relative_incidence(result.refit_params, design);

  PyFitResult out;
  out.exposure_curves = ri.exposures;
  out.baseline_curve = ri.baseline;
  out.coefficients = result.refit_params.values;
  out.penalized_coefficients = result.params.values;
  out.exposure_ci_lower = result.exposure_ci_lower;
  out.exposure_ci_upper = result.exposure_ci_upper;
  out.baseline_ci_lower = result.baseline_ci_lower;
  out.baseline_ci_upper = result.baseline_ci_upper;
  out.gamma_tv = result.chosen_penalty.gamma_tv;
  out.gamma_gl = result.chosen_penalty.gamma_gl;
  for (const auto& candidate : result.cv_table) {
    out.cv_table.emplace_back(candidate.penalty.gamma_tv,
                              candidate.penalty.gamma_gl, candidate.mean,
                              candidate.se);
  }
  out.cv_chosen_index = result.cv_chosen_index;
  for (const auto& s : result.support) {
    std::vector<std::tuple<int, int, double>> segments;
    for (const auto& seg : s.segments) {
      segments.emplace_back(seg.start_lag, seg.end_lag, seg.value);
    }
    out.support.push_back(std::move(segments));
    out.zero_drugs.push_back(s.is_zero);
  }
  out.n_bootstrap = result.n_bootstrap;
  return out;
}

SimScenario scenario_from_kwargs(int n_drugs, int n_offdiag_nonzeros,
                                 int n_patients, int n_intervals,
                                 int window_length,
                                 const std::vector<std::string>& profiles,
                                 double window_end_offset_mean,
                                 std::uint64_t seed) {
  SimScenario scenario;
  scenario.n_drugs = n_drugs;
  scenario.n_offdiag_nonzeros = n_offdiag_nonzeros;
  scenario.n_patients = n_patients;
  scenario.n_intervals = n_intervals;
  scenario.window_length = window_length;
  scenario.window_end_offset_mean = window_end_offset_mean;
  scenario.rng_seed = seed;
  if (profiles.size() == 1 && profiles[0] == "set1") {
    scenario.profile_kinds = set1_profiles();
  } else if (profiles.size() == 1 && profiles[0] == "set2") {
    scenario.profile_kinds = set2_profiles();
  } else {
    for (const auto& name : profiles) {
      scenario.profile_kinds.push_back(risk_profile_kind_from_string(name));
    }
  }
  scenario.validate();
  return scenario;
}

}  // namespace

PYBIND11_MODULE(_convsccs, m) {
  m.doc() = "Penalized convolutional self-controlled case series estimation";
  m.attr("__version__") = CONVSCCS_VERSION;

  py::register_exception<ValidationError>(m, "ValidationError",
                                          PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DivergenceError>(m, "DivergenceError",
                                          PyExc_RuntimeError);

  py::class_<CohortTimeline>(m, "Cohort")
      .def_property_readonly("n_patients", &CohortTimeline::n_patients)
      .def_property_readonly("n_drugs", &CohortTimeline::n_drugs)
      .def_property_readonly(
          "n_intervals",
          [](const CohortTimeline& c) { return c.grid.n_intervals; })
      .def_property_readonly(
          "drug_labels",
          [](const CohortTimeline& c) { return c.drug_labels; })
      .def("__repr__", [](const CohortTimeline& c) {
        return "<Cohort: " + std::to_string(c.n_patients()) + " cases, " +
               std::to_string(c.n_drugs()) + " drugs, " +
               std::to_string(c.grid.n_intervals) + " intervals>";
      });

  py::class_<PyFitResult>(m, "FitResult")
      .def_readonly("exposure_curves", &PyFitResult::exposure_curves)
      .def_readonly("baseline_curve", &PyFitResult::baseline_curve)
      .def_readonly("coefficients", &PyFitResult::coefficients)
      .def_readonly("penalized_coefficients",
                    &PyFitResult::penalized_coefficients)
      .def_readonly("exposure_ci_lower", &PyFitResult::exposure_ci_lower)
      .def_readonly("exposure_ci_upper", &PyFitResult::exposure_ci_upper)
      .def_readonly("baseline_ci_lower", &PyFitResult::baseline_ci_lower)
      .def_readonly("baseline_ci_upper", &PyFitResult::baseline_ci_upper)
      .def_readonly("gamma_tv", &PyFitResult::gamma_tv)
      .def_readonly("gamma_gl", &PyFitResult::gamma_gl)
      .def_readonly("cv_table", &PyFitResult::cv_table)
      .def_readonly("cv_chosen_index", &PyFitResult::cv_chosen_index)
      .def_readonly("support", &PyFitResult::support)
      .def_readonly("zero_drugs", &PyFitResult::zero_drugs)
      .def_readonly("n_bootstrap", &PyFitResult::n_bootstrap);

  m.def(
      "read_event_file",
      [](const std::string& path, int n_intervals, double interval_length,
         const std::optional<std::string>& origin_date,
         const std::string& delimiter) {
        IngestConfig config;
        config.n_intervals = n_intervals;
        config.interval_length = interval_length;
        config.origin_date = origin_date;
        if (delimiter.size() != 1) {
          throw ConfigError("delimiter must be a single character");
        }
        config.delimiter = delimiter[0];
        return read_event_file(path, config);
      },
      py::arg("path"), py::arg("n_intervals"), py::arg("interval_length") = 1.0,
      py::arg("origin_date") = std::nullopt, py::arg("delimiter") = ",");

  m.def(
      "write_event_file",
      [](const CohortTimeline& cohort, const std::string& path) {
        write_event_file(path, cohort);
      },
      py::arg("cohort"), py::arg("path"));

  m.def(
      "validate_cases",
      [](const CohortTimeline& cohort) {
        ValidationReport report;
        CohortTimeline cases = validate_cases(cohort, &report);
        return py::make_tuple(cases, report.dropped_non_cases);
      },
      py::arg("cohort"),
      "Drop non-case patients; returns (cohort, n_dropped)");

  m.def(
      "enforce_exposure_gaps",
      [](const CohortTimeline& cohort, int window_length,
         const std::string& policy) {
        return enforce_exposure_gaps(cohort, window_length,
                                     gap_policy_from_name(policy));
      },
      py::arg("cohort"), py::arg("window_length"),
      py::arg("policy") = "first_only");

  m.def("simulate_cohort",
        [](int n_drugs, int n_offdiag_nonzeros, int n_patients,
           int n_intervals, int window_length,
           const std::vector<std::string>& profiles,
           double window_end_offset_mean, std::uint64_t seed) {
          const SimScenario scenario = scenario_from_kwargs(
              n_drugs, n_offdiag_nonzeros, n_patients, n_intervals,
              window_length, profiles, window_end_offset_mean, seed);
          SimTruth truth;
          CohortTimeline cohort = simulate_cohort(scenario, &truth);
          return py::make_tuple(cohort, truth.exposure_curves, truth.baseline);
        },
        py::arg("n_drugs") = 4, py::arg("n_offdiag_nonzeros") = 8,
        py::arg("n_patients") = 1000, py::arg("n_intervals") = 750,
        py::arg("window_length") = 50,
        py::arg("profiles") = std::vector<std::string>{"set1"},
        py::arg("window_end_offset_mean") = 250.0, py::arg("seed") = 0,
        "Simulate a case-only cohort; returns (cohort, true_exposure_curves, "
        "true_baseline)");

  m.def(
      "make_risk_profile",
      [](const std::string& kind, int window_length) {
        return make_risk_profile(risk_profile_kind_from_string(kind),
                                 window_length)
            .values;
      },
      py::arg("kind"), py::arg("window_length") = 50);

  m.def("prox_tv", &prox_tv, py::arg("block"), py::arg("threshold"));
  m.def("prox_group_l2", &prox_group_l2, py::arg("block"),
        py::arg("threshold"));

  m.def(
      "neg_log_likelihood",
      [](const CohortTimeline& cohort, const Eigen::VectorXd& coeffs,
         int window_length, int baseline_group_width) {
        const LaggedDesign design =
            build_lagged_design(cohort, window_length, baseline_group_width);
        if (coeffs.size() != design.n_params()) {
          throw ConfigError("expected " + std::to_string(design.n_params()) +
                            " coefficients, got " +
                            std::to_string(coeffs.size()));
        }
        return neg_log_likelihood(coeffs, design, cohort);
      },
      py::arg("cohort"), py::arg("coefficients"), py::arg("window_length"),
      py::arg("baseline_group_width"));

  m.def(
      "n_model_params",
      [](const CohortTimeline& cohort, int window_length,
         int baseline_group_width) {
        return build_lagged_design(cohort, window_length, baseline_group_width)
            .n_params();
      },
      py::arg("cohort"), py::arg("window_length"),
      py::arg("baseline_group_width"));

  m.def(
      "fit",
      [](const CohortTimeline& cohort, int window_length,
         int baseline_group_width, double gamma_tv, double gamma_gl,
         int n_epochs, double tolerance, std::uint64_t seed, bool refit,
         int n_bootstrap, double confidence, int n_jobs) {
        PipelineConfig config;
        config.window_length = window_length;
        config.baseline_group_width = baseline_group_width;
        config.run_cv = false;
        config.penalty = PenaltyConfig{gamma_tv, gamma_gl};
        config.solver.n_epochs = n_epochs;
        config.solver.tolerance = tolerance;
        config.refit = refit;
        config.bootstrap = n_bootstrap > 0;
        config.n_bootstrap = n_bootstrap;
        config.confidence = confidence;
        config.n_jobs = n_jobs;
        config.rng_seed = seed;
        return package_result(run_fit_pipeline(cohort, config), cohort);
      },
      py::arg("cohort"), py::arg("window_length"),
      py::arg("baseline_group_width"), py::arg("gamma_tv"),
      py::arg("gamma_gl"), py::arg("n_epochs") = 100,
      py::arg("tolerance") = 1e-6, py::arg("seed") = 0,
      py::arg("refit") = true, py::arg("n_bootstrap") = 0,
      py::arg("confidence") = 0.95, py::arg("n_jobs") = 1,
      "Penalized fit at fixed hyper-parameters, with optional refit and "
      "bootstrap bands");

  m.def(
      "fit_cv",
      [](const CohortTimeline& cohort, int window_length,
         int baseline_group_width, int n_folds, int n_candidates,
         std::pair<double, double> gamma_tv_range,
         std::pair<double, double> gamma_gl_range, int n_epochs,
         double tolerance, std::uint64_t seed, int n_bootstrap,
         double confidence, int n_jobs) {
        PipelineConfig config;
        config.window_length = window_length;
        config.baseline_group_width = baseline_group_width;
        config.run_cv = true;
        config.search.n_folds = n_folds;
        config.search.n_candidates = n_candidates;
        config.search.gamma_tv_range = gamma_tv_range;
        config.search.gamma_gl_range = gamma_gl_range;
        config.solver.n_epochs = n_epochs;
        config.solver.tolerance = tolerance;
        config.bootstrap = n_bootstrap > 0;
        config.n_bootstrap = n_bootstrap;
        config.confidence = confidence;
        config.n_jobs = n_jobs;
        config.rng_seed = seed;
        return package_result(run_fit_pipeline(cohort, config), cohort);
      },
      py::arg("cohort"), py::arg("window_length"),
      py::arg("baseline_group_width"), py::arg("n_folds") = 3,
      py::arg("n_candidates") = 50,
      py::arg("gamma_tv_range") = std::pair<double, double>{1e-4, 10.0},
      py::arg("gamma_gl_range") = std::pair<double, double>{1e-4, 10.0},
      py::arg("n_epochs") = 100, py::arg("tolerance") = 1e-6,
      py::arg("seed") = 0, py::arg("n_bootstrap") = 0,
      py::arg("confidence") = 0.95, py::arg("n_jobs") = 1,
      "Cross-validated fit (stratified folds, random search, one-SE rule), "
      "with refit and optional bootstrap bands");

  m.def("mae",
        py::overload_cast<const Eigen::MatrixXd&, const Eigen::MatrixXd&>(&mae),
        py::arg("estimated"), py::arg("truth"));
  m.def("normalize_baseline", &normalize_baseline, py::arg("curve"),
        py::arg("interval_length") = 1.0);
}
