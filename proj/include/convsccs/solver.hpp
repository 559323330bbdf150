#pragma once

#include <cstdint>
#include <vector>

#include "convsccs/prox.hpp"

namespace convsccs {

enum class SolverVariant { svrg, full_prox_grad };

struct SolverConfig {
  double step_size = 0.0;  // <= 0: use 1/L with the crude curvature bound
  int n_epochs = 100;
  int inner_iters_per_epoch = 0;  // <= 0: one pass (number of cases)
  double tolerance = 1e-6;        // relative objective change
  std::uint64_t rng_seed = 0;
  SolverVariant variant = SolverVariant::svrg;

  void validate() const;
};

struct FitTrace {
  std::vector<double> objective;  // penalized objective per epoch (entry 0 = init)
  ModelParams params;
  bool converged = false;
  int epochs_used = 0;
  double step_used = 0.0;
};

// neg_log_likelihood + penalty_value.
double objective(const ModelParams& params, const LaggedDesign& design,
                 const CohortTimeline& cohort, const PenaltyConfig& penalty);
double objective(const Eigen::VectorXd& coeffs, const LaggedDesign& design,
                 const CohortTimeline& cohort, const ParamLayout& layout,
                 const PenaltyConfig& penalty);

// Minimizes the penalized objective. The svrg variant refreshes a full
// gradient anchor at each epoch, then takes inner steps on uniformly sampled
// patients with the variance-reduced gradient, proxing after every step. The
// full_prox_grad variant takes deterministic proximal gradient steps and
// serves as the internal reference. Halves the step and restarts when the
// objective goes non-finite; throws DivergenceError when that keeps failing.
FitTrace solve(const LaggedDesign& design, const CohortTimeline& cohort,
               const PenaltyConfig& penalty, const SolverConfig& config,
               const ModelParams& init);

}  // namespace convsccs
