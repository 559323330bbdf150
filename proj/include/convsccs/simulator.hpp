#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "convsccs/rng.hpp"
#include "convsccs/timeline.hpp"

namespace convsccs {

// Multivariate Hawkes process with exponential kernels: component j has
// intensity mu_j + sum_{j'} sum_k A_{j,j'} * alpha * exp(-alpha (t - t_k^j')).
struct HawkesConfig {
  Eigen::VectorXd baselines;  // mu_j >= 0
  Eigen::MatrixXd adjacency;  // A, nonnegative, largest singular value < 1
  double decay = 0.5;         // alpha
  double horizon = 0.0;

  int n_drugs() const { return static_cast<int>(baselines.size()); }
  void validate() const;
};

enum class RiskProfileKind {
  null,
  constant,
  early_decreasing,
  slow_decreasing,
  unimodal,
  rapid_drop,
  intermediate,
  late,
  delayed,
};

RiskProfileKind risk_profile_kind_from_string(const std::string& name);
std::string to_string(RiskProfileKind kind);

struct RiskProfile {
  RiskProfileKind kind = RiskProfileKind::null;
  Eigen::VectorXd values;  // relative incidence at lags 0..p, all > 0

  void validate() const;
};

// Profile vector for the named shape over lags 0..p. Non-null shapes peak
// between 1.5 and 2.
RiskProfile make_risk_profile(RiskProfileKind kind, int window_length = 50);

// The two profile assignments used by the benchmark scenarios.
std::vector<RiskProfileKind> set1_profiles();  // 4 drugs
std::vector<RiskProfileKind> set2_profiles();  // 14 drugs, 7 null

struct SimScenario {
  int n_drugs = 4;
  int n_offdiag_nonzeros = 8;          // q
  int n_patients = 0;                  // m
  int n_intervals = 750;               // K
  int window_length = 50;              // p
  double hawkes_decay = 0.5;           // alpha
  double adjacency_scale = 0.1;        // target largest singular value
  std::vector<RiskProfileKind> profile_kinds;  // length n_drugs
  double window_end_offset_mean = 250.0;       // mean of e_i in b_i = B - e_i
  double window_end_anchor = -1.0;             // B; < 0 means K
  // optional per-patient multiplicative constants, log-uniform in
  // [individual_effect_low, individual_effect_high]
  std::optional<std::pair<double, double>> individual_effect_range;
  std::uint64_t rng_seed = 0;

  void validate() const;
  // phi(t) ~ 8 sin(0.01 t) + 9 evaluated on interval midpoints... on indices.
  Eigen::VectorXd baseline_curve() const;
};

struct SimTruth {
  Eigen::MatrixXd exposure_curves;   // n_drugs x (p+1), relative incidence
  Eigen::VectorXd baseline;          // length K, normalized to unit integral
};

// mu_j ~ U[0, 5e-3]; A_jj = mu_j; q uniformly chosen off-diagonal entries ~
// U[0, 5e-3]; A rescaled so its largest singular value equals
// adjacency_scale; decay fixed at alpha.
HawkesConfig sample_adjacency(int n_drugs, int n_offdiag_nonzeros, Rng& rng,
                              double decay = 0.5, double horizon = 750.0,
                              double scale = 0.1);

// Ogata thinning; returns sorted event times per drug within [0, horizon).
std::vector<std::vector<double>> simulate_hawkes(const HawkesConfig& config,
                                                 Rng& rng);

// First event per drug, floored to its interval index; drugs without events
// get no exposure.
std::vector<std::optional<int>> exposures_from_events(
    const std::vector<std::vector<double>>& event_times,
    const IntervalGrid& grid);

// lambda_ik = individual_effect * baseline(k) * prod_j profile_j[k - c_j]
// for k < obs_end, zero beyond.
Eigen::VectorXd compute_intensities(
    const Eigen::VectorXd& baseline_curve,
    const std::vector<RiskProfile>& profiles,
    const std::vector<std::optional<int>>& exposure_starts, int obs_end,
    double individual_effect = 1.0);

// One event interval drawn from Mult(1; lambda / sum lambda).
int simulate_outcome(const Eigen::VectorXd& intensities, Rng& rng);

// End-to-end protocol: one adjacency per cohort, per-patient exposures,
// window ends B - Exp(mean), intensities, one outcome per patient. Returns a
// validated case-only cohort plus the ground truth the metrics need.
CohortTimeline simulate_cohort(const SimScenario& scenario,
                               SimTruth* truth = nullptr);

class KeyValueConfig;

// Scenario files: d, q, m, n_intervals, window_length, profiles (a list of
// kind names or the presets set1/set2), seed, and the optional knobs.
SimScenario scenario_from_config(const KeyValueConfig& config);

}  // namespace convsccs
