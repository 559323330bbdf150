#pragma once

#include <Eigen/Core>

#include "convsccs/design.hpp"
#include "convsccs/timeline.hpp"

namespace convsccs {

// Coefficients on the log scale: baseline step function phi followed by one
// lag block theta^j per drug. The per-individual constants of the intensity
// cancel from the conditional likelihood and are not represented here.
struct ModelParams {
  ParamLayout layout;
  Eigen::VectorXd values;

  static ModelParams zeros(const ParamLayout& layout) {
    return {layout, Eigen::VectorXd::Zero(layout.n_params())};
  }

  Eigen::VectorBlock<Eigen::VectorXd> baseline() {
    return values.segment(0, layout.n_baseline_groups);
  }
  Eigen::VectorBlock<const Eigen::VectorXd> baseline() const {
    return values.segment(0, layout.n_baseline_groups);
  }
  Eigen::VectorBlock<Eigen::VectorXd> exposure_block(int drug) {
    return values.segment(layout.block_offset(drug), layout.n_lags);
  }
  Eigen::VectorBlock<const Eigen::VectorXd> exposure_block(int drug) const {
    return values.segment(layout.block_offset(drug), layout.n_lags);
  }

  void validate(const LaggedDesign& design) const;
};

// p_ik = lambda_ik / sum_k' lambda_ik' over the patient's in-window
// intervals, computed from log-intensities via max-shifted normalization.
Eigen::VectorXd per_patient_probs(const Eigen::VectorXd& coeffs,
                                  const LaggedDesign& design, int patient);

// -sum_k y_ik log p_ik for one patient (no 1/n factor).
double per_patient_neg_log_likelihood(const Eigen::VectorXd& coeffs,
                                      const LaggedDesign& design,
                                      const CohortTimeline& cohort,
                                      int patient);

// Adds this patient's score contribution (no 1/n factor) into grad.
void accumulate_patient_gradient(const Eigen::VectorXd& coeffs,
                                 const LaggedDesign& design,
                                 const CohortTimeline& cohort, int patient,
                                 Eigen::VectorXd& grad);

// (1/n) sum_i of the per-patient terms, n = number of cases.
double neg_log_likelihood(const Eigen::VectorXd& coeffs,
                          const LaggedDesign& design,
                          const CohortTimeline& cohort);

Eigen::VectorXd gradient(const Eigen::VectorXd& coeffs,
                         const LaggedDesign& design,
                         const CohortTimeline& cohort);

// ModelParams-facing wrappers.
Eigen::VectorXd per_patient_probs(const ModelParams& params,
                                  const LaggedDesign& design, int patient);
double neg_log_likelihood(const ModelParams& params, const LaggedDesign& design,
                          const CohortTimeline& cohort);
Eigen::VectorXd gradient(const ModelParams& params, const LaggedDesign& design,
                         const CohortTimeline& cohort);

// Crude curvature bound for the default solver step: mean event count per
// case times the largest active-row squared norm.
double lipschitz_estimate(const LaggedDesign& design,
                          const CohortTimeline& cohort);

}  // namespace convsccs
