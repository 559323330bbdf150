#include "convsccs/solver.hpp"

#include <cmath>

#include "convsccs/errors.hpp"
#include "convsccs/rng.hpp"

namespace convsccs {

void SolverConfig::validate() const {
  if (step_size < 0.0 && step_size != step_size) {
    throw ConfigError("step_size must be finite");
  }
  if (tolerance < 0.0) throw ConfigError("tolerance must be >= 0");
  if (n_epochs < 1) throw ConfigError("n_epochs must be >= 1");
}

double objective(const Eigen::VectorXd& coeffs, const LaggedDesign& design,
                 const CohortTimeline& cohort, const ParamLayout& layout,
                 const PenaltyConfig& penalty) {
  return neg_log_likelihood(coeffs, design, cohort) +
         penalty_value(coeffs, layout, penalty);
}

double objective(const ModelParams& params, const LaggedDesign& design,
                 const CohortTimeline& cohort, const PenaltyConfig& penalty) {
  params.validate(design);
  return objective(params.values, design, cohort, params.layout, penalty);
}

namespace {

struct RunResult {
  Eigen::VectorXd coeffs;
  std::vector<double> objective;
  bool converged = false;
  bool finite = true;
  int epochs_used = 0;
};

// Per-patient gradient of the 1/n-averaged loss is the patient score itself;
// sampling patients uniformly makes it an unbiased estimate of the full
// gradient.
void patient_gradient(const Eigen::VectorXd& coeffs, const LaggedDesign& design,
                      const CohortTimeline& cohort, int patient,
                      Eigen::VectorXd& out) {
  out.setZero();
  accumulate_patient_gradient(coeffs, design, cohort, patient, out);
}

RunResult run_svrg(const LaggedDesign& design, const CohortTimeline& cohort,
                   const PenaltyConfig& penalty, const SolverConfig& config,
                   const Eigen::VectorXd& init, double step) {
  const ParamLayout& layout = design.layout();
  const int m = design.n_patients();
  const int inner =
      config.inner_iters_per_epoch > 0 ? config.inner_iters_per_epoch : m;

  RunResult res;
  res.coeffs = init;
  Eigen::VectorXd w = init;
  Eigen::VectorXd anchor = init;
  Eigen::VectorXd anchor_grad(design.n_params());
  Eigen::VectorXd g_cur(design.n_params());
  Eigen::VectorXd g_anchor(design.n_params());

  Rng rng(config.rng_seed);

  double best_obj = objective(init, design, cohort, layout, penalty);
  res.objective.push_back(best_obj);
  if (!std::isfinite(best_obj)) {
    res.finite = false;
    return res;
  }
  Eigen::VectorXd best_w = init;
  double prev_obj = best_obj;

  for (int epoch = 1; epoch <= config.n_epochs; ++epoch) {
    anchor = w;
    anchor_grad = gradient(anchor, design, cohort);
    for (int t = 0; t < inner; ++t) {
      const int i = static_cast<int>(rng.uniform_index(m));
      patient_gradient(w, design, cohort, i, g_cur);
      patient_gradient(anchor, design, cohort, i, g_anchor);
      w.noalias() -= step * (g_cur - g_anchor + anchor_grad);
      prox_penalty_in_place(w, layout, penalty, step);
    }
    const double obj = objective(w, design, cohort, layout, penalty);
    res.objective.push_back(obj);
    res.epochs_used = epoch;
    if (!std::isfinite(obj)) {
      res.finite = false;
      return res;
    }
    if (obj < best_obj) {
      best_obj = obj;
      best_w = w;
    }
    const double rel =
        std::abs(prev_obj - obj) / std::max(1.0, std::abs(prev_obj));
    if (rel <= config.tolerance) {
      res.converged = true;
      break;
    }
    prev_obj = obj;
  }
  res.coeffs = best_w;
  return res;
}

RunResult run_full_prox_grad(const LaggedDesign& design,
                             const CohortTimeline& cohort,
                             const PenaltyConfig& penalty,
                             const SolverConfig& config,
                             const Eigen::VectorXd& init, double step) {
  const ParamLayout& layout = design.layout();
  RunResult res;
  Eigen::VectorXd w = init;

  double prev_obj = objective(init, design, cohort, layout, penalty);
  res.objective.push_back(prev_obj);
  if (!std::isfinite(prev_obj)) {
    res.finite = false;
    res.coeffs = init;
    return res;
  }
  double best_obj = prev_obj;
  Eigen::VectorXd best_w = init;

  for (int epoch = 1; epoch <= config.n_epochs; ++epoch) {
    w.noalias() -= step * gradient(w, design, cohort);
    prox_penalty_in_place(w, layout, penalty, step);
    const double obj = objective(w, design, cohort, layout, penalty);
    res.objective.push_back(obj);
    res.epochs_used = epoch;
    if (!std::isfinite(obj)) {
      res.finite = false;
      res.coeffs = w;
      return res;
    }
    if (obj < best_obj) {
      best_obj = obj;
      best_w = w;
    }
    const double rel =
        std::abs(prev_obj - obj) / std::max(1.0, std::abs(prev_obj));
    if (rel <= config.tolerance) {
      res.converged = true;
      break;
    }
    prev_obj = obj;
  }
  res.coeffs = std::move(best_w);
  return res;
}

}  // namespace

FitTrace solve(const LaggedDesign& design, const CohortTimeline& cohort,
               const PenaltyConfig& penalty, const SolverConfig& config,
               const ModelParams& init) {
  config.validate();
  penalty.validate();
  init.validate(design);
  if (design.n_patients() == 0) {
    throw ConfigError("cannot fit an empty cohort");
  }
  if (design.n_patients() != cohort.n_patients()) {
    throw ConfigError("design and cohort patient counts differ");
  }

  // 1/L works for the deterministic variant; the stochastic one needs the
  // usual fraction of it to damp the inner-loop limit cycle.
  const double scale = config.variant == SolverVariant::svrg ? 0.25 : 1.0;
  double step = config.step_size > 0.0
                    ? config.step_size
                    : scale / lipschitz_estimate(design, cohort);

  constexpr int kMaxBackoffs = 30;
  for (int attempt = 0; attempt <= kMaxBackoffs; ++attempt) {
    RunResult res =
        config.variant == SolverVariant::svrg
            ? run_svrg(design, cohort, penalty, config, init.values, step)
            : run_full_prox_grad(design, cohort, penalty, config, init.values,
                                 step);
    if (res.finite) {
      FitTrace trace;
      trace.objective = std::move(res.objective);
      trace.params = ModelParams{design.layout(), std::move(res.coeffs)};
      trace.converged = res.converged;
      trace.epochs_used = res.epochs_used;
      trace.step_used = step;
      return trace;
    }
    step *= 0.5;  // divergence backoff
  }
  throw DivergenceError(
      "objective became non-finite even after step-size backoff; the problem "
      "is likely ill-scaled");
}

}  // namespace convsccs
