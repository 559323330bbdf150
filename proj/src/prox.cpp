#include "convsccs/prox.hpp"

#include <cmath>

#include "convsccs/errors.hpp"

namespace convsccs {

void PenaltyConfig::validate() const {
  if (gamma_tv < 0.0 || gamma_gl < 0.0) {
    throw ConfigError("penalty levels must be nonnegative");
  }
}

double penalty_value(const Eigen::VectorXd& coeffs, const ParamLayout& layout,
                     const PenaltyConfig& config) {
  config.validate();
  double tv = 0.0, gl = 0.0;
  for (int j = 0; j < layout.n_drugs; ++j) {
    const auto block = coeffs.segment(layout.block_offset(j), layout.n_lags);
    for (int k = 0; k + 1 < layout.n_lags; ++k) {
      tv += std::abs(block[k + 1] - block[k]);
    }
    gl += block.norm();
  }
  return config.gamma_tv * tv + config.gamma_gl * gl;
}

double penalty_value(const ModelParams& params, const PenaltyConfig& config) {
  return penalty_value(params.values, params.layout, config);
}

// Condat's direct 1-D total variation algorithm: a single forward pass that
// commits fused segments as soon as a jump becomes unavoidable. Committed
// segments share one stored double, so fused coefficients compare equal
// bitwise.
Eigen::VectorXd prox_tv(const Eigen::VectorXd& y, double lambda) {
  if (lambda < 0.0) throw ConfigError("TV threshold must be >= 0");
  const int n = static_cast<int>(y.size());
  Eigen::VectorXd x(n);
  if (n == 0) return x;
  if (lambda == 0.0 || n == 1) return y;

  int k = 0, k0 = 0, km = 0, kp = 0;
  double vmin = y[0] - lambda;
  double vmax = y[0] + lambda;
  double umin = lambda;
  double umax = -lambda;

  bool fresh_segment = true;  // just entered, or just after a tail jump
  for (;;) {
    if (fresh_segment && k == n - 1) {
      x[k] = vmin + umin;
      return x;
    }
    fresh_segment = false;

    if (k < n - 1) {
      if (y[k + 1] + umin < vmin - lambda) {
        // negative jump: the segment [k0, km] locks at vmin
        for (int i = k0; i <= km; ++i) x[i] = vmin;
        k = k0 = km = kp = km + 1;
        vmin = y[k];
        vmax = y[k] + 2.0 * lambda;
        umin = lambda;
        umax = -lambda;
      } else if (y[k + 1] + umax > vmax + lambda) {
        // positive jump: the segment [k0, kp] locks at vmax
        for (int i = k0; i <= kp; ++i) x[i] = vmax;
        k = k0 = km = kp = kp + 1;
        vmin = y[k] - 2.0 * lambda;
        vmax = y[k];
        umin = lambda;
        umax = -lambda;
      } else {
        // no jump: absorb y[k+1] and re-balance the segment bounds
        ++k;
        umin += y[k] - vmin;
        umax += y[k] - vmax;
        if (umin >= lambda) {
          vmin += (umin - lambda) / (k - k0 + 1);
          umin = lambda;
          km = k;
        }
        if (umax <= -lambda) {
          vmax += (umax + lambda) / (k - k0 + 1);
          umax = -lambda;
          kp = k;
        }
      }
      continue;
    }

    // reached the last sample: resolve the tail
    if (umin < 0.0) {
      for (int i = k0; i <= km; ++i) x[i] = vmin;
      k = k0 = km = km + 1;
      vmin = y[k];
      umin = lambda;
      umax = y[k] + lambda - vmax;
      fresh_segment = true;
    } else if (umax > 0.0) {
      for (int i = k0; i <= kp; ++i) x[i] = vmax;
      k = k0 = kp = kp + 1;
      vmax = y[k];
      umax = -lambda;
      umin = y[k] - lambda - vmin;
      fresh_segment = true;
    } else {
      const double v = vmin + umin / (k - k0 + 1);
      for (int i = k0; i < n; ++i) x[i] = v;
      return x;
    }
  }
}

Eigen::VectorXd prox_group_l2(const Eigen::VectorXd& block, double threshold) {
  if (threshold < 0.0) throw ConfigError("group threshold must be >= 0");
  if (threshold == 0.0) return block;
  const double norm = block.norm();
  if (norm <= threshold) return Eigen::VectorXd::Zero(block.size());
  return (1.0 - threshold / norm) * block;
}

void prox_penalty_in_place(Eigen::VectorXd& coeffs, const ParamLayout& layout,
                           const PenaltyConfig& config, double step) {
  config.validate();
  if (step <= 0.0) throw ConfigError("prox step must be > 0");
  for (int j = 0; j < layout.n_drugs; ++j) {
    auto block = coeffs.segment(layout.block_offset(j), layout.n_lags);
    Eigen::VectorXd fused = prox_tv(block, step * config.gamma_tv);
    block = prox_group_l2(fused, step * config.gamma_gl);
  }
}

ModelParams prox_penalty(const ModelParams& params, const PenaltyConfig& config,
                         double step) {
  ModelParams out = params;
  prox_penalty_in_place(out.values, out.layout, config, step);
  return out;
}

}  // namespace convsccs
