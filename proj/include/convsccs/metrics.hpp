#pragma once

#include <Eigen/Core>
#include <vector>

namespace convsccs {

struct EvalReport {
  double exposure_mae = 0.0;
  double baseline_mae = 0.0;
  std::vector<double> per_drug_mae;
};

// Mean absolute difference over all (drug, lag) entries; curves are rows.
double mae(const Eigen::MatrixXd& estimated, const Eigen::MatrixXd& truth);
double mae(const Eigen::VectorXd& estimated, const Eigen::VectorXd& truth);

std::vector<double> per_drug_mae(const Eigen::MatrixXd& estimated,
                                 const Eigen::MatrixXd& truth);

// Scales a positive per-interval curve so its discrete integral (sum times
// interval length) equals one.
Eigen::VectorXd normalize_baseline(const Eigen::VectorXd& curve,
                                   double interval_length = 1.0);

// Exposure MAE on the raw relative-incidence scale plus baseline MAE after
// normalizing both curves.
EvalReport evaluate(const Eigen::MatrixXd& estimated_exposures,
                    const Eigen::MatrixXd& true_exposures,
                    const Eigen::VectorXd& estimated_baseline,
                    const Eigen::VectorXd& true_baseline);

}  // namespace convsccs
