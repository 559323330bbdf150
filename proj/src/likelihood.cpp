#include "convsccs/likelihood.hpp"

#include <cmath>
#include <limits>

#include "convsccs/errors.hpp"

namespace convsccs {

void ModelParams::validate(const LaggedDesign& design) const {
  if (static_cast<int>(values.size()) != design.n_params()) {
    throw ConfigError("parameter vector length " +
                      std::to_string(values.size()) +
                      " does not match design (" +
                      std::to_string(design.n_params()) + ")");
  }
  if (!values.allFinite()) throw ConfigError("parameters must be finite");
}

namespace {

// Log-intensities over the patient's window; returns the window max for the
// log-sum-exp shift.
double fill_log_intensities(const Eigen::VectorXd& coeffs,
                            const LaggedDesign::PatientRows& rows,
                            Eigen::VectorXd& s) {
  const int w = rows.window_length();
  s.resize(w);
  double s_max = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < w; ++r) {
    double v = 0.0;
    for (std::int32_t e = rows.offsets[r]; e < rows.offsets[r + 1]; ++e) {
      v += rows.mults[e] * coeffs[rows.coords[e]];
    }
    s[r] = v;
    if (v > s_max) s_max = v;
  }
  return s_max;
}

}  // namespace

Eigen::VectorXd per_patient_probs(const Eigen::VectorXd& coeffs,
                                  const LaggedDesign& design, int patient) {
  const auto& rows = design.patient(patient);
  if (rows.window_length() <= 0) {
    throw std::domain_error("patient " + std::to_string(patient) +
                            " has an empty observation window");
  }
  Eigen::VectorXd s;
  const double s_max = fill_log_intensities(coeffs, rows, s);
  Eigen::VectorXd probs = (s.array() - s_max).exp();
  probs /= probs.sum();
  return probs;
}

double per_patient_neg_log_likelihood(const Eigen::VectorXd& coeffs,
                                      const LaggedDesign& design,
                                      const CohortTimeline& cohort,
                                      int patient) {
  const auto& rows = design.patient(patient);
  const auto& timeline = cohort.patients[patient];
  Eigen::VectorXd s;
  const double s_max = fill_log_intensities(coeffs, rows, s);
  const double lse = s_max + std::log((s.array() - s_max).exp().sum());
  double value = 0.0;
  int n_events = 0;
  for (int r = 0; r < rows.window_length(); ++r) {
    const int y = timeline.event_counts[r];
    if (y == 0) continue;
    value -= y * s[r];
    n_events += y;
  }
  return value + n_events * lse;
}

void accumulate_patient_gradient(const Eigen::VectorXd& coeffs,
                                 const LaggedDesign& design,
                                 const CohortTimeline& cohort, int patient,
                                 Eigen::VectorXd& grad) {
  const auto& rows = design.patient(patient);
  const auto& timeline = cohort.patients[patient];
  Eigen::VectorXd s;
  const double s_max = fill_log_intensities(coeffs, rows, s);
  Eigen::VectorXd probs = (s.array() - s_max).exp();
  probs /= probs.sum();

  const int n_events = timeline.n_events();
  for (int r = 0; r < rows.window_length(); ++r) {
    const int y = timeline.event_counts[r];
    const double weight = n_events * probs[r] - y;
    if (weight == 0.0) continue;
    for (std::int32_t e = rows.offsets[r]; e < rows.offsets[r + 1]; ++e) {
      grad[rows.coords[e]] += weight * rows.mults[e];
    }
  }
}

double neg_log_likelihood(const Eigen::VectorXd& coeffs,
                          const LaggedDesign& design,
                          const CohortTimeline& cohort) {
  const int n = design.n_patients();
  if (n == 0) return 0.0;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    total += per_patient_neg_log_likelihood(coeffs, design, cohort, i);
  }
  return total / n;
}

Eigen::VectorXd gradient(const Eigen::VectorXd& coeffs,
                         const LaggedDesign& design,
                         const CohortTimeline& cohort) {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(design.n_params());
  const int n = design.n_patients();
  if (n == 0) return grad;
  for (int i = 0; i < n; ++i) {
    accumulate_patient_gradient(coeffs, design, cohort, i, grad);
  }
  grad /= n;
  return grad;
}

Eigen::VectorXd per_patient_probs(const ModelParams& params,
                                  const LaggedDesign& design, int patient) {
  params.validate(design);
  return per_patient_probs(params.values, design, patient);
}

double neg_log_likelihood(const ModelParams& params, const LaggedDesign& design,
                          const CohortTimeline& cohort) {
  params.validate(design);
  return neg_log_likelihood(params.values, design, cohort);
}

Eigen::VectorXd gradient(const ModelParams& params, const LaggedDesign& design,
                         const CohortTimeline& cohort) {
  params.validate(design);
  return gradient(params.values, design, cohort);
}

double lipschitz_estimate(const LaggedDesign& design,
                          const CohortTimeline& cohort) {
  const int n = design.n_patients();
  if (n == 0) return 1.0;
  double total_events = 0.0;
  for (const auto& p : cohort.patients) total_events += p.n_events();
  const double estimate = (total_events / n) * design.max_row_sq_norm();
  return std::max(estimate, 1e-12);
}

}  // namespace convsccs
