#include "oracles.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "convsccs/solver.hpp"

namespace convsccs::testing {

namespace {

double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

// prox of tau * ||.||_2 at c, found by bisection on the scale so the oracle
// does not reuse the closed form under test.
Eigen::VectorXd group_step_bisect(const Eigen::VectorXd& c, double tau) {
  const double norm = c.norm();
  if (norm == 0.0) return c;
  // minimize h(a) = 0.5 (a-1)^2 norm^2 + tau a norm over a >= 0
  auto dh = [&](double a) { return (a - 1.0) * norm * norm + tau * norm; };
  if (dh(0.0) >= 0.0) return Eigen::VectorXd::Zero(c.size());
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (dh(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi) * c;
}

}  // namespace

Eigen::VectorXd oracle_prox_composite(const Eigen::VectorXd& v,
                                      double tv_threshold,
                                      double gl_threshold, double tol) {
  const int n = static_cast<int>(v.size());
  if (n == 0) return v;
  if (n == 1) {
    // TV vanishes; only the group term remains
    return group_step_bisect(v, gl_threshold);
  }

  const double rho = 1.0;
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n - 1, n);
  for (int i = 0; i < n - 1; ++i) {
    D(i, i) = -1.0;
    D(i, i + 1) = 1.0;
  }
  const Eigen::MatrixXd M = (1.0 + rho) * Eigen::MatrixXd::Identity(n, n) +
                            rho * D.transpose() * D;
  const Eigen::LDLT<Eigen::MatrixXd> solver(M);

  Eigen::VectorXd u = v;
  Eigen::VectorXd z1 = D * u;
  Eigen::VectorXd z2 = u;
  Eigen::VectorXd w1 = Eigen::VectorXd::Zero(n - 1);
  Eigen::VectorXd w2 = Eigen::VectorXd::Zero(n);

  for (int it = 0; it < 400000; ++it) {
    const Eigen::VectorXd u_prev = u;
    u = solver.solve(v + rho * (D.transpose() * (z1 - w1) + (z2 - w2)));
    const Eigen::VectorXd Du = D * u;
    for (int i = 0; i < n - 1; ++i) {
      z1[i] = soft_threshold(Du[i] + w1[i], tv_threshold / rho);
    }
    z2 = group_step_bisect(u + w2, gl_threshold / rho);
    w1 += Du - z1;
    w2 += u - z2;

    const double res = std::max({(Du - z1).lpNorm<Eigen::Infinity>(),
                                 (u - z2).lpNorm<Eigen::Infinity>(),
                                 (u - u_prev).lpNorm<Eigen::Infinity>()});
    if (res < tol) break;
  }
  // z2 carries the exact zero when the group term wins
  return z2;
}

Eigen::VectorXd oracle_prox_tv_taut_string(const Eigen::VectorXd& v,
                                           double threshold) {
  const int n = static_cast<int>(v.size());
  if (n <= 1 || threshold == 0.0) return v;

  // running sums S_0..S_n, string f pinned at both ends
  Eigen::VectorXd s(n + 1);
  s[0] = 0.0;
  for (int k = 0; k < n; ++k) s[k + 1] = s[k] + v[k];

  Eigen::VectorXd f = s;  // feasible start (tube has width threshold > 0)
  for (int sweep = 0; sweep < 2000000; ++sweep) {
    double change = 0.0;
    for (int k = 1; k < n; ++k) {
      const double target = 0.5 * (f[k - 1] + f[k + 1]);
      const double clipped =
          std::clamp(target, s[k] - threshold, s[k] + threshold);
      change = std::max(change, std::abs(clipped - f[k]));
      f[k] = clipped;
    }
    if (change < 1e-15) break;
  }

  Eigen::VectorXd out(n);
  for (int k = 0; k < n; ++k) out[k] = f[k + 1] - f[k];
  return out;
}

double naive_neg_log_likelihood(const Eigen::VectorXd& coeffs,
                                const CohortTimeline& cohort,
                                int window_length,
                                int baseline_group_width) {
  const int K = cohort.grid.n_intervals;
  const int n_groups = std::max(1, K / baseline_group_width);
  const int d = cohort.n_drugs();
  const auto group_of = [&](int k) {
    return std::min(k / baseline_group_width, n_groups - 1);
  };
  const auto theta = [&](int drug, int lag) {
    return coeffs[n_groups + drug * (window_length + 1) + lag];
  };

  double total = 0.0;
  for (const auto& patient : cohort.patients) {
    std::vector<double> lambda;
    for (int k = patient.obs_start; k < patient.obs_end; ++k) {
      double log_int = coeffs[group_of(k)];
      for (int j = 0; j < d; ++j) {
        for (const auto& [c, mult] : patient.exposure_starts[j]) {
          const int lag = k - c;
          if (lag >= 0 && lag <= window_length) {
            log_int += mult * theta(j, lag);
          }
        }
      }
      lambda.push_back(std::exp(log_int));
    }
    double denom = 0.0;
    for (double l : lambda) denom += l;
    for (int k = patient.obs_start; k < patient.obs_end; ++k) {
      const int y = patient.event_count_at(k);
      if (y > 0) total -= y * std::log(lambda[k - patient.obs_start] / denom);
    }
  }
  return total / cohort.n_patients();
}

Eigen::VectorXd finite_difference_gradient(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double step) {
  Eigen::VectorXd grad(x.size());
  Eigen::VectorXd probe = x;
  for (int c = 0; c < x.size(); ++c) {
    probe[c] = x[c] + step;
    const double up = f(probe);
    probe[c] = x[c] - step;
    const double down = f(probe);
    probe[c] = x[c];
    grad[c] = (up - down) / (2.0 * step);
  }
  return grad;
}

SmallInstance random_instance(Rng& rng, int max_patients, int max_intervals,
                              int max_drugs, int max_window) {
  SmallInstance inst;
  const int m = 1 + static_cast<int>(rng.uniform_index(max_patients));
  const int d = 1 + static_cast<int>(rng.uniform_index(max_drugs));
  const int p = static_cast<int>(rng.uniform_index(max_window + 1));
  const int K = std::max(p + 2, 4 + static_cast<int>(rng.uniform_index(
                                        std::max(1, max_intervals - 3))));
  inst.window_length = p;
  inst.baseline_group_width =
      1 + static_cast<int>(rng.uniform_index(std::max(1, K / 2)));

  inst.cohort.grid = IntervalGrid::make(K);
  for (int j = 0; j < d; ++j) {
    inst.cohort.drug_labels.push_back("drug_" + std::to_string(j));
  }
  for (int i = 0; i < m; ++i) {
    PatientTimeline patient;
    patient.patient_id = "p" + std::to_string(i);
    patient.obs_start = static_cast<int>(rng.uniform_index(K - 1));
    patient.obs_end =
        patient.obs_start + 1 +
        static_cast<int>(rng.uniform_index(K - patient.obs_start));
    patient.event_counts.assign(patient.window_length(), 0);
    const int n_events = 1 + static_cast<int>(rng.uniform_index(3));
    for (int e = 0; e < n_events; ++e) {
      ++patient.event_counts[rng.uniform_index(patient.window_length())];
    }
    patient.exposure_starts.assign(d, {});
    for (int j = 0; j < d; ++j) {
      const int n_starts = static_cast<int>(rng.uniform_index(3));
      std::vector<int> starts;
      for (int s = 0; s < n_starts; ++s) {
        starts.push_back(static_cast<int>(rng.uniform_index(K)));
      }
      std::sort(starts.begin(), starts.end());
      starts.erase(std::unique(starts.begin(), starts.end()), starts.end());
      for (int c : starts) patient.exposure_starts[j].emplace_back(c, 1);
    }
    inst.cohort.patients.push_back(std::move(patient));
  }
  // the event format derives drug labels from exposure records, so keep
  // every drug represented somewhere
  for (int j = 0; j < d; ++j) {
    bool seen = false;
    for (const auto& p : inst.cohort.patients) {
      seen = seen || !p.exposure_starts[j].empty();
    }
    if (!seen) {
      auto& p = inst.cohort.patients[rng.uniform_index(m)];
      p.exposure_starts[j].emplace_back(
          static_cast<int>(rng.uniform_index(K)), 1);
    }
  }

  // a baseline bucket that some window covers but that holds no events sends
  // its phi coordinate to -inf (the MLE is not attained); give every covered
  // bucket an event so solver-comparison tests face a well-posed problem
  const int width = inst.baseline_group_width;
  const int n_groups = std::max(1, K / width);
  const auto group_of = [&](int k) { return std::min(k / width, n_groups - 1); };
  for (int g = 0; g < n_groups; ++g) {
    bool covered = false, has_event = false;
    for (const auto& p : inst.cohort.patients) {
      for (int k = p.obs_start; k < p.obs_end; ++k) {
        if (group_of(k) != g) continue;
        covered = true;
        has_event = has_event || p.event_count_at(k) > 0;
      }
    }
    if (!covered || has_event) continue;
    std::vector<std::pair<int, int>> slots;  // (patient, interval)
    for (int i = 0; i < m; ++i) {
      const auto& p = inst.cohort.patients[i];
      for (int k = p.obs_start; k < p.obs_end; ++k) {
        if (group_of(k) == g) slots.emplace_back(i, k);
      }
    }
    const auto [pi, k] = slots[rng.uniform_index(slots.size())];
    auto& p = inst.cohort.patients[pi];
    ++p.event_counts[k - p.obs_start];
  }

  inst.cohort.validate();
  return inst;
}

Eigen::VectorXd random_coeffs(Rng& rng, int n, double scale) {
  Eigen::VectorXd out(n);
  for (int i = 0; i < n; ++i) out[i] = rng.uniform(-scale, scale);
  return out;
}

KktAtZero kkt_threshold_at_zero(const CohortTimeline& cohort,
                                int window_length, int baseline_group_width) {
  const LaggedDesign design =
      build_lagged_design(cohort, window_length, baseline_group_width);
  const ParamLayout& layout = design.layout();

  std::vector<int> map(layout.n_params(), -1);
  for (int g = 0; g < layout.n_baseline_groups; ++g) map[g] = g;
  const LaggedDesign baseline_only =
      design.remap(map, layout.n_baseline_groups);

  SolverConfig cfg;
  cfg.variant = SolverVariant::full_prox_grad;
  cfg.n_epochs = 20000;
  cfg.tolerance = 1e-14;
  const FitTrace trace =
      solve(baseline_only, cohort, PenaltyConfig{},
            cfg, ModelParams::zeros(baseline_only.layout()));

  KktAtZero out;
  out.coeffs = Eigen::VectorXd::Zero(layout.n_params());
  out.coeffs.segment(0, layout.n_baseline_groups) = trace.params.values;
  const Eigen::VectorXd grad = gradient(out.coeffs, design, cohort);
  for (int j = 0; j < layout.n_drugs; ++j) {
    out.max_block_norm =
        std::max(out.max_block_norm,
                 grad.segment(layout.block_offset(j), layout.n_lags).norm());
  }
  return out;
}

Eigen::VectorXd gauge_fixed(const Eigen::VectorXd& coeffs, int n_baseline) {
  Eigen::VectorXd out = coeffs;
  out.segment(0, n_baseline).array() -=
      coeffs.segment(0, n_baseline).mean();
  return out;
}

}  // namespace convsccs::testing
