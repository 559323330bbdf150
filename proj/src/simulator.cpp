#include "convsccs/simulator.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "convsccs/config.hpp"
#include "convsccs/errors.hpp"
#include "convsccs/metrics.hpp"

namespace convsccs {

void HawkesConfig::validate() const {
  const int d = n_drugs();
  if (d < 1) throw ConfigError("Hawkes config needs at least one component");
  if (adjacency.rows() != d || adjacency.cols() != d) {
    throw ConfigError("adjacency shape does not match the baselines");
  }
  if (!baselines.allFinite() || (baselines.array() < 0.0).any()) {
    throw ConfigError("Hawkes baselines must be finite and nonnegative");
  }
  if (!adjacency.allFinite() || (adjacency.array() < 0.0).any()) {
    throw ConfigError("adjacency entries must be finite and nonnegative");
  }
  if (decay <= 0.0) throw ConfigError("Hawkes decay must be > 0");
  if (horizon <= 0.0) throw ConfigError("Hawkes horizon must be > 0");
  const double sv =
      Eigen::JacobiSVD<Eigen::MatrixXd>(adjacency).singularValues()(0);
  if (sv > 1.0) {
    throw ConfigError("adjacency largest singular value exceeds 1 (unstable)");
  }
}

RiskProfileKind risk_profile_kind_from_string(const std::string& name) {
  if (name == "null") return RiskProfileKind::null;
  if (name == "constant") return RiskProfileKind::constant;
  if (name == "early_decreasing") return RiskProfileKind::early_decreasing;
  if (name == "slow_decreasing") return RiskProfileKind::slow_decreasing;
  if (name == "unimodal") return RiskProfileKind::unimodal;
  if (name == "rapid_drop") return RiskProfileKind::rapid_drop;
  if (name == "intermediate") return RiskProfileKind::intermediate;
  if (name == "late") return RiskProfileKind::late;
  if (name == "delayed") return RiskProfileKind::delayed;
  throw ConfigError("unknown risk profile kind '" + name + "'");
}

std::string to_string(RiskProfileKind kind) {
  switch (kind) {
    case RiskProfileKind::null: return "null";
    case RiskProfileKind::constant: return "constant";
    case RiskProfileKind::early_decreasing: return "early_decreasing";
    case RiskProfileKind::slow_decreasing: return "slow_decreasing";
    case RiskProfileKind::unimodal: return "unimodal";
    case RiskProfileKind::rapid_drop: return "rapid_drop";
    case RiskProfileKind::intermediate: return "intermediate";
    case RiskProfileKind::late: return "late";
    case RiskProfileKind::delayed: return "delayed";
  }
  throw ConfigError("unknown risk profile kind");
}

void RiskProfile::validate() const {
  if (values.size() < 1) throw ConfigError("risk profile has no values");
  if ((values.array() <= 0.0).any()) {
    throw ConfigError("risk profile values must be positive");
  }
  if (kind == RiskProfileKind::null) {
    if ((values.array() != 1.0).any()) {
      throw ConfigError("null risk profile must be identically one");
    }
    return;
  }
  const double peak = values.maxCoeff();
  if (peak < 1.5 || peak > 2.0) {
    throw ConfigError("risk profile '" + to_string(kind) +
                      "' peaks at " + std::to_string(peak) +
                      ", outside [1.5, 2]");
  }
}

RiskProfile make_risk_profile(RiskProfileKind kind, int window_length) {
  if (window_length < 1) throw ConfigError("window_length must be >= 1");
  const int p = window_length;
  RiskProfile profile;
  profile.kind = kind;
  profile.values.resize(p + 1);

  const auto logistic_ramp = [&](double k0) {
    for (int k = 0; k <= p; ++k) {
      profile.values[k] = 1.0 + 0.8 / (1.0 + std::exp(-(k - k0) / 3.0));
    }
  };

  switch (kind) {
    case RiskProfileKind::null:
      profile.values.setOnes();
      break;
    case RiskProfileKind::constant:
      profile.values.setConstant(1.5);
      break;
    case RiskProfileKind::early_decreasing:
      for (int k = 0; k <= p; ++k) {
        profile.values[k] = 1.0 + 0.8 * std::exp(-k / 8.0);
      }
      break;
    case RiskProfileKind::slow_decreasing:
      for (int k = 0; k <= p; ++k) {
        profile.values[k] = 1.0 + 0.8 * (1.0 - static_cast<double>(k) / p);
      }
      break;
    case RiskProfileKind::unimodal: {
      const double center = std::floor(p / 2.0);
      const double sigma = p / 8.0;
      for (int k = 0; k <= p; ++k) {
        const double z = (k - center) / sigma;
        profile.values[k] = 1.0 + 0.8 * std::exp(-0.5 * z * z);
      }
      break;
    }
    case RiskProfileKind::rapid_drop:
      for (int k = 0; k <= p; ++k) {
        profile.values[k] = k <= 5 ? 1.8 : 1.0;
      }
      break;
    case RiskProfileKind::intermediate:
      logistic_ramp(p / 4.0);
      break;
    case RiskProfileKind::late:
      logistic_ramp(p / 2.0);
      break;
    case RiskProfileKind::delayed:
      logistic_ramp(3.0 * p / 4.0);
      break;
  }
  profile.validate();
  return profile;
}

std::vector<RiskProfileKind> set1_profiles() {
  return {RiskProfileKind::unimodal, RiskProfileKind::constant,
          RiskProfileKind::early_decreasing, RiskProfileKind::slow_decreasing};
}

std::vector<RiskProfileKind> set2_profiles() {
  std::vector<RiskProfileKind> kinds(7, RiskProfileKind::null);
  kinds.insert(kinds.end(),
               {RiskProfileKind::unimodal, RiskProfileKind::constant,
                RiskProfileKind::early_decreasing, RiskProfileKind::rapid_drop,
                RiskProfileKind::intermediate, RiskProfileKind::late,
                RiskProfileKind::delayed});
  return kinds;
}

void SimScenario::validate() const {
  if (n_drugs < 1) throw ConfigError("scenario needs n_drugs >= 1");
  if (n_patients < 0) throw ConfigError("scenario n_patients must be >= 0");
  if (n_intervals < 2) throw ConfigError("scenario needs n_intervals >= 2");
  if (window_length < 1 || window_length >= n_intervals) {
    throw ConfigError("scenario window_length must be in [1, n_intervals)");
  }
  const int max_q = n_drugs * (n_drugs - 1);
  if (n_offdiag_nonzeros < 0 || n_offdiag_nonzeros > max_q) {
    throw ConfigError("scenario q must be in [0, d(d-1)] = [0, " +
                      std::to_string(max_q) + "]");
  }
  if (static_cast<int>(profile_kinds.size()) != n_drugs) {
    throw ConfigError("scenario lists " +
                      std::to_string(profile_kinds.size()) +
                      " profiles for " + std::to_string(n_drugs) + " drugs");
  }
  if (window_end_offset_mean <= 0.0) {
    throw ConfigError("window_end_offset_mean must be > 0");
  }
  if (individual_effect_range) {
    const auto& [lo, hi] = *individual_effect_range;
    if (lo <= 0.0 || hi < lo) {
      throw ConfigError("individual effect range must satisfy 0 < low <= high");
    }
  }
  if (hawkes_decay <= 0.0) throw ConfigError("hawkes_decay must be > 0");
  if (adjacency_scale <= 0.0 || adjacency_scale >= 1.0) {
    throw ConfigError("adjacency_scale must be in (0, 1)");
  }
}

Eigen::VectorXd SimScenario::baseline_curve() const {
  Eigen::VectorXd curve(n_intervals);
  for (int k = 0; k < n_intervals; ++k) {
    curve[k] = 8.0 * std::sin(0.01 * k) + 9.0;
  }
  return curve;
}

HawkesConfig sample_adjacency(int n_drugs, int n_offdiag_nonzeros, Rng& rng,
                              double decay, double horizon, double scale) {
  const int d = n_drugs;
  if (d < 1) throw ConfigError("sample_adjacency needs n_drugs >= 1");
  const int max_q = d * (d - 1);
  if (n_offdiag_nonzeros < 0 || n_offdiag_nonzeros > max_q) {
    throw ConfigError("q must be in [0, d(d-1)]");
  }

  HawkesConfig config;
  config.decay = decay;
  config.horizon = horizon;
  config.baselines.resize(d);
  for (int j = 0; j < d; ++j) config.baselines[j] = rng.uniform(0.0, 5e-3);

  config.adjacency = Eigen::MatrixXd::Zero(d, d);
  config.adjacency.diagonal() = config.baselines;

  std::vector<std::pair<int, int>> offdiag;
  offdiag.reserve(max_q);
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < d; ++c) {
      if (r != c) offdiag.emplace_back(r, c);
    }
  }
  rng.shuffle(offdiag);
  for (int e = 0; e < n_offdiag_nonzeros; ++e) {
    config.adjacency(offdiag[e].first, offdiag[e].second) =
        rng.uniform(0.0, 5e-3);
  }

  const double sv =
      Eigen::JacobiSVD<Eigen::MatrixXd>(config.adjacency).singularValues()(0);
  if (sv > 0.0) config.adjacency *= scale / sv;
  config.validate();
  return config;
}

std::vector<std::vector<double>> simulate_hawkes(const HawkesConfig& config,
                                                 Rng& rng) {
  config.validate();
  const int d = config.n_drugs();
  const double alpha = config.decay;
  std::vector<std::vector<double>> events(d);

  // G[j] = sum over past events of drug j of exp(-alpha (t - t_k)); the
  // intensity of drug i is mu_i + alpha * sum_j A_{i,j} G[j], which decays
  // between events, so the total right after an event dominates all later
  // values until the next one.
  Eigen::VectorXd excitation = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd intensity(d);
  double t = 0.0;

  const auto intensities_at = [&](const Eigen::VectorXd& g) {
    intensity = config.baselines + alpha * (config.adjacency * g);
  };

  for (;;) {
    intensities_at(excitation);
    const double bound = intensity.sum();
    if (bound <= 0.0) break;
    const double wait = rng.exponential(bound);
    if (t + wait >= config.horizon) break;
    t += wait;
    excitation *= std::exp(-alpha * wait);
    intensities_at(excitation);
    const double total = intensity.sum();
    if (total > bound * (1.0 + 1e-9)) {
      throw std::logic_error("thinning bound violated");
    }
    const double u = rng.uniform() * bound;
    if (u < total) {
      double acc = 0.0;
      int drug = d - 1;
      for (int j = 0; j < d; ++j) {
        acc += intensity[j];
        if (u < acc) {
          drug = j;
          break;
        }
      }
      events[drug].push_back(t);
      excitation[drug] += 1.0;
    }
  }
  return events;
}

std::vector<std::optional<int>> exposures_from_events(
    const std::vector<std::vector<double>>& event_times,
    const IntervalGrid& grid) {
  std::vector<std::optional<int>> exposures(event_times.size());
  for (std::size_t j = 0; j < event_times.size(); ++j) {
    if (event_times[j].empty()) continue;
    const double first = *std::min_element(event_times[j].begin(),
                                           event_times[j].end());
    const int k = static_cast<int>(
        std::floor((first - grid.global_start) / grid.interval_length));
    if (k >= 0 && k < grid.n_intervals) exposures[j] = k;
  }
  return exposures;
}

Eigen::VectorXd compute_intensities(
    const Eigen::VectorXd& baseline_curve,
    const std::vector<RiskProfile>& profiles,
    const std::vector<std::optional<int>>& exposure_starts, int obs_end,
    double individual_effect) {
  const int K = static_cast<int>(baseline_curve.size());
  if (obs_end < 1 || obs_end > K) {
    throw ConfigError("observation end outside the grid");
  }
  if (profiles.size() != exposure_starts.size()) {
    throw ConfigError("profiles and exposures disagree on the drug count");
  }
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(K);
  for (int k = 0; k < obs_end; ++k) {
    double v = individual_effect * baseline_curve[k];
    for (std::size_t j = 0; j < profiles.size(); ++j) {
      if (!exposure_starts[j]) continue;
      const int lag = k - *exposure_starts[j];
      if (lag < 0 || lag >= profiles[j].values.size()) continue;
      v *= profiles[j].values[lag];
    }
    lambda[k] = v;
  }
  return lambda;
}

int simulate_outcome(const Eigen::VectorXd& intensities, Rng& rng) {
  const double total = intensities.sum();
  if (!(total > 0.0)) {
    throw std::domain_error("all-zero intensity vector");
  }
  const double u = rng.uniform() * total;
  double acc = 0.0;
  int last_positive = -1;
  for (int k = 0; k < intensities.size(); ++k) {
    if (intensities[k] <= 0.0) continue;
    last_positive = k;
    acc += intensities[k];
    if (u < acc) return k;
  }
  return last_positive;  // u == total up to rounding
}

CohortTimeline simulate_cohort(const SimScenario& scenario, SimTruth* truth) {
  scenario.validate();
  const int K = scenario.n_intervals;
  const int p = scenario.window_length;

  CohortTimeline cohort;
  cohort.grid = IntervalGrid::make(K);

  std::vector<RiskProfile> profiles;
  profiles.reserve(scenario.n_drugs);
  std::vector<int> kind_seen;
  kind_seen.assign(9, 0);
  for (int j = 0; j < scenario.n_drugs; ++j) {
    const RiskProfileKind kind = scenario.profile_kinds[j];
    profiles.push_back(make_risk_profile(kind, p));
    const int n = ++kind_seen[static_cast<int>(kind)];
    std::string label = to_string(kind);
    const bool repeated =
        std::count(scenario.profile_kinds.begin(), scenario.profile_kinds.end(),
                   kind) > 1;
    if (repeated) label += "_" + std::to_string(n);
    cohort.drug_labels.push_back(label);
  }

  const Eigen::VectorXd baseline = scenario.baseline_curve();
  if (truth) {
    truth->exposure_curves.resize(scenario.n_drugs, p + 1);
    for (int j = 0; j < scenario.n_drugs; ++j) {
      truth->exposure_curves.row(j) = profiles[j].values.transpose();
    }
    truth->baseline = normalize_baseline(baseline);
  }

  Rng adjacency_rng(derive_seed(scenario.rng_seed, 0));
  const HawkesConfig hawkes = sample_adjacency(
      scenario.n_drugs, scenario.n_offdiag_nonzeros, adjacency_rng,
      scenario.hawkes_decay, static_cast<double>(K), scenario.adjacency_scale);

  const double anchor =
      scenario.window_end_anchor > 0.0 ? scenario.window_end_anchor
                                       : static_cast<double>(K);
  const int id_width =
      std::max(1, static_cast<int>(std::to_string(
                      std::max(scenario.n_patients - 1, 1)).size()));

  for (int i = 0; i < scenario.n_patients; ++i) {
    Rng rng(derive_seed(scenario.rng_seed, 1 + static_cast<std::uint64_t>(i)));
    const auto events = simulate_hawkes(hawkes, rng);
    const auto exposures = exposures_from_events(events, cohort.grid);

    const double offset =
        rng.exponential(1.0 / scenario.window_end_offset_mean);
    const int obs_end = std::clamp(
        static_cast<int>(std::floor(anchor - offset)), 1, K);

    double effect = 1.0;
    if (scenario.individual_effect_range) {
      const auto& [lo, hi] = *scenario.individual_effect_range;
      effect = rng.log_uniform(lo, hi);
    }

    const Eigen::VectorXd lambda =
        compute_intensities(baseline, profiles, exposures, obs_end, effect);
    const int event_interval = simulate_outcome(lambda, rng);

    PatientTimeline patient;
    std::ostringstream id;
    id << "p";
    id.width(id_width);
    id.fill('0');
    id << i;
    patient.patient_id = id.str();
    patient.obs_start = 0;
    patient.obs_end = obs_end;
    patient.event_counts.assign(obs_end, 0);
    patient.event_counts[event_interval] = 1;
    patient.exposure_starts.assign(scenario.n_drugs, {});
    for (int j = 0; j < scenario.n_drugs; ++j) {
      if (exposures[j]) patient.exposure_starts[j].emplace_back(*exposures[j], 1);
    }
    cohort.patients.push_back(std::move(patient));
  }

  cohort.validate();
  return cohort;
}

SimScenario scenario_from_config(const KeyValueConfig& config) {
  SimScenario scenario;
  scenario.n_drugs = static_cast<int>(config.get_int("d"));
  scenario.n_offdiag_nonzeros = static_cast<int>(config.get_int("q"));
  scenario.n_patients = static_cast<int>(config.get_int("m"));
  scenario.n_intervals = static_cast<int>(config.get_int("n_intervals", 750));
  scenario.window_length =
      static_cast<int>(config.get_int("window_length", 50));
  scenario.hawkes_decay = config.get_double("hawkes_decay", 0.5);
  scenario.adjacency_scale = config.get_double("adjacency_scale", 0.1);
  scenario.window_end_offset_mean =
      config.get_double("window_end_offset_mean", 250.0);
  scenario.window_end_anchor = config.get_double("window_end_anchor", -1.0);
  scenario.rng_seed = static_cast<std::uint64_t>(config.get_int("seed", 0));

  const std::string profiles = config.get_string("profiles");
  if (profiles == "set1") {
    scenario.profile_kinds = set1_profiles();
  } else if (profiles == "set2") {
    scenario.profile_kinds = set2_profiles();
  } else {
    for (const std::string& name : config.get_list("profiles")) {
      scenario.profile_kinds.push_back(risk_profile_kind_from_string(name));
    }
  }

  if (config.has("individual_effect_low") ||
      config.has("individual_effect_high")) {
    scenario.individual_effect_range =
        std::make_pair(config.get_double("individual_effect_low"),
                       config.get_double("individual_effect_high"));
  }

  scenario.validate();
  return scenario;
}

}  // namespace convsccs
