#pragma once

#include <Eigen/Core>

#include "convsccs/likelihood.hpp"

namespace convsccs {

// Penalty levels for the exposure blocks; the baseline block is never
// penalized.
struct PenaltyConfig {
  double gamma_tv = 0.0;
  double gamma_gl = 0.0;

  void validate() const;
};

// gamma_tv * sum_j sum_k |theta^j_{k+1} - theta^j_k| + gamma_gl * sum_j
// ||theta^j||_2
double penalty_value(const ModelParams& params, const PenaltyConfig& config);
double penalty_value(const Eigen::VectorXd& coeffs, const ParamLayout& layout,
                     const PenaltyConfig& config);

// Exact solution of argmin_u 0.5 ||u - v||^2 + threshold * sum |u_{k+1} -
// u_k| in one forward pass (Condat's direct algorithm). Fused coordinates
// come out bitwise equal.
Eigen::VectorXd prox_tv(const Eigen::VectorXd& block, double threshold);

// Group soft-thresholding: max(0, 1 - threshold/||v||) * v, exactly zero when
// ||v|| <= threshold.
Eigen::VectorXd prox_group_l2(const Eigen::VectorXd& block, double threshold);

// Blockwise prox of step * (gamma_tv * TV + gamma_gl * ||.||_2): TV first,
// then group soft-thresholding (the exact prox of the sum for this pair).
// The baseline block passes through unchanged.
ModelParams prox_penalty(const ModelParams& params, const PenaltyConfig& config,
                         double step);
void prox_penalty_in_place(Eigen::VectorXd& coeffs, const ParamLayout& layout,
                           const PenaltyConfig& config, double step);

}  // namespace convsccs
