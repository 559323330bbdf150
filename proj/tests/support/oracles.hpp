#pragma once

#include <Eigen/Core>
#include <functional>

#include "convsccs/rng.hpp"
#include "convsccs/timeline.hpp"

namespace convsccs::testing {

// Generic convergent first-order oracle (ADMM with scalar soft-thresholding
// and a bisection-based group step) for
//   argmin_u 0.5 ||u - v||^2 + tv_threshold * TV(u) + gl_threshold * ||u||_2.
// Independent of the production prox path.
Eigen::VectorXd oracle_prox_composite(const Eigen::VectorXd& v,
                                      double tv_threshold,
                                      double gl_threshold,
                                      double tol = 1e-13);

// Second independent TV oracle: discrete taut string through the tube
// [S_k - t, S_k + t] with pinned endpoints, solved by cyclic coordinate
// descent on the tube QP; the prox is the string's increment sequence.
Eigen::VectorXd oracle_prox_tv_taut_string(const Eigen::VectorXd& v,
                                           double threshold);

// Term-by-term evaluation of the discrete conditional-Poisson likelihood
// straight from the raw cohort (never touches LaggedDesign): for every
// in-window interval, log-intensity = phi_{g(k)} + sum over drugs and starts
// of theta at the lag when 0 <= lag <= p.
double naive_neg_log_likelihood(const Eigen::VectorXd& coeffs,
                                const CohortTimeline& cohort,
                                int window_length, int baseline_group_width);

Eigen::VectorXd finite_difference_gradient(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double step = 1e-5);

struct SmallInstance {
  CohortTimeline cohort;
  int window_length = 2;
  int baseline_group_width = 2;
};

// Baseline-only fit (theta pinned at zero) plus the largest per-drug-block
// gradient norm there: any gamma_gl above that norm makes the all-zero theta
// satisfy the group-lasso optimality condition.
struct KktAtZero {
  Eigen::VectorXd coeffs;  // full-length, theta block zero
  double max_block_norm = 0.0;
};
KktAtZero kkt_threshold_at_zero(const CohortTimeline& cohort,
                                int window_length, int baseline_group_width);

// Mean-centers the baseline block (the likelihood's one flat direction) so
// parameter vectors from different solvers compare meaningfully.
Eigen::VectorXd gauge_fixed(const Eigen::VectorXd& coeffs, int n_baseline);

// Random little cohort with events and exposures; every patient is a case.
SmallInstance random_instance(Rng& rng, int max_patients = 10,
                              int max_intervals = 20, int max_drugs = 3,
                              int max_window = 5);

Eigen::VectorXd random_coeffs(Rng& rng, int n, double scale = 1.0);

}  // namespace convsccs::testing
