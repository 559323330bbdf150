#include "convsccs/metrics.hpp"

#include "convsccs/errors.hpp"

namespace convsccs {

double mae(const Eigen::MatrixXd& estimated, const Eigen::MatrixXd& truth) {
  if (estimated.rows() != truth.rows() || estimated.cols() != truth.cols()) {
    throw ConfigError("MAE curve shapes do not match");
  }
  if (estimated.size() == 0) throw ConfigError("MAE of empty curves");
  return (estimated - truth).array().abs().mean();
}

double mae(const Eigen::VectorXd& estimated, const Eigen::VectorXd& truth) {
  if (estimated.size() != truth.size()) {
    throw ConfigError("MAE curve shapes do not match");
  }
  if (estimated.size() == 0) throw ConfigError("MAE of empty curves");
  return (estimated - truth).array().abs().mean();
}

std::vector<double> per_drug_mae(const Eigen::MatrixXd& estimated,
                                 const Eigen::MatrixXd& truth) {
  if (estimated.rows() != truth.rows() || estimated.cols() != truth.cols()) {
    throw ConfigError("MAE curve shapes do not match");
  }
  std::vector<double> out(estimated.rows());
  for (int j = 0; j < estimated.rows(); ++j) {
    out[j] = (estimated.row(j) - truth.row(j)).array().abs().mean();
  }
  return out;
}

Eigen::VectorXd normalize_baseline(const Eigen::VectorXd& curve,
                                   double interval_length) {
  if (curve.size() == 0) throw ConfigError("cannot normalize an empty curve");
  if ((curve.array() <= 0.0).any()) {
    throw std::domain_error("baseline values must be positive");
  }
  const double integral = curve.sum() * interval_length;
  return curve / integral;
}

EvalReport evaluate(const Eigen::MatrixXd& estimated_exposures,
                    const Eigen::MatrixXd& true_exposures,
                    const Eigen::VectorXd& estimated_baseline,
                    const Eigen::VectorXd& true_baseline) {
  EvalReport report;
  report.exposure_mae = mae(estimated_exposures, true_exposures);
  report.per_drug_mae = per_drug_mae(estimated_exposures, true_exposures);
  report.baseline_mae = mae(normalize_baseline(estimated_baseline),
                            normalize_baseline(true_baseline));
  return report;
}

}  // namespace convsccs
