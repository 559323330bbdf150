#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "convsccs/errors.hpp"
#include "convsccs/simulator.hpp"
#include "convsccs/timeline.hpp"

using namespace convsccs;

namespace {

SimScenario set1_scenario(int m, std::uint64_t seed) {
  SimScenario scenario;
  scenario.n_drugs = 4;
  scenario.n_offdiag_nonzeros = 8;
  scenario.n_patients = m;
  scenario.n_intervals = 750;
  scenario.window_length = 50;
  scenario.profile_kinds = set1_profiles();
  scenario.rng_seed = seed;
  return scenario;
}

std::string cohort_bytes(const CohortTimeline& cohort) {
  std::ostringstream out;
  write_event_file(out, cohort);
  return out.str();
}

}  // namespace

TEST_SUITE("simulator") {

TEST_CASE("sampled adjacency matches the documented construction") {
  Rng rng(42);
  const HawkesConfig config = sample_adjacency(4, 8, rng);

  const double top =
      Eigen::JacobiSVD<Eigen::MatrixXd>(config.adjacency).singularValues()(0);
  CHECK(std::abs(top - 0.1) < 1e-10);

  int offdiag_nonzeros = 0;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      if (r != c && config.adjacency(r, c) > 0.0) ++offdiag_nonzeros;
    }
  }
  CHECK(offdiag_nonzeros == 8);
  CHECK(config.decay == 0.5);
  for (int j = 0; j < 4; ++j) {
    CHECK(config.baselines[j] >= 0.0);
    CHECK(config.baselines[j] <= 5e-3);
    CHECK(config.adjacency(j, j) > 0.0);  // diagonal seeded from mu
  }

  SUBCASE("the set-2 shape works as well") {
    Rng rng2(43);
    const HawkesConfig c2 = sample_adjacency(14, 24, rng2);
    const double sv =
        Eigen::JacobiSVD<Eigen::MatrixXd>(c2.adjacency).singularValues()(0);
    CHECK(std::abs(sv - 0.1) < 1e-10);
  }
  SUBCASE("q out of range is rejected") {
    Rng rng3(44);
    CHECK_THROWS_AS(sample_adjacency(4, 13, rng3), ConfigError);
  }
}

TEST_CASE("hawkes with zero rates produces no events") {
  HawkesConfig config;
  config.baselines = Eigen::VectorXd::Zero(3);
  config.adjacency = Eigen::MatrixXd::Zero(3, 3);
  config.horizon = 100.0;
  Rng rng(1);
  const auto events = simulate_hawkes(config, rng);
  for (const auto& times : events) CHECK(times.empty());
}

TEST_CASE("pure poisson counts match their mean") {
  HawkesConfig config;
  config.baselines = Eigen::VectorXd::Constant(2, 0.005);
  config.adjacency = Eigen::MatrixXd::Zero(2, 2);
  config.horizon = 750.0;

  const int n_replicates = 1000;
  double total = 0.0, total_sq = 0.0;
  for (int r = 0; r < n_replicates; ++r) {
    Rng rng(derive_seed(1234, r));
    const auto events = simulate_hawkes(config, rng);
    const double count = events[0].size() + events[1].size();
    total += count;
    total_sq += count * count;
  }
  const double mean = total / n_replicates;
  const double var = total_sq / n_replicates - mean * mean;
  const double se = std::sqrt(var / n_replicates);
  const double expected = 2 * 0.005 * 750.0;  // 7.5
  CHECK(std::abs(mean - expected) <= 3.0 * se);
}

TEST_CASE("hawkes mean counts match the branching formula") {
  Rng seed_rng(77);
  const HawkesConfig config = sample_adjacency(3, 4, seed_rng, 0.5, 500.0);

  // with exponential kernels the branching matrix is the adjacency itself
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(3, 3);
  const Eigen::VectorXd expected_rates =
      (eye - config.adjacency).inverse() * config.baselines;
  const double expected = expected_rates.sum() * config.horizon;

  const int n_replicates = 1000;
  double total = 0.0, total_sq = 0.0;
  for (int r = 0; r < n_replicates; ++r) {
    Rng rng(derive_seed(4321, r));
    const auto events = simulate_hawkes(config, rng);
    double count = 0;
    for (const auto& times : events) count += times.size();
    total += count;
    total_sq += count * count;
  }
  const double mean = total / n_replicates;
  const double var = total_sq / n_replicates - mean * mean;
  const double se = std::sqrt(var / n_replicates);
  CHECK(std::abs(mean - expected) <= 3.0 * se);
}

TEST_CASE("exposures keep the first event per drug") {
  const IntervalGrid grid = IntervalGrid::make(100);
  const auto exposures =
      exposures_from_events({{12.3, 40.0}, {}, {12.9, 12.4}}, grid);
  REQUIRE(exposures.size() == 3);
  CHECK(*exposures[0] == 12);
  CHECK_FALSE(exposures[1].has_value());
  CHECK(*exposures[2] == 12);  // same interval as drug 0
}

TEST_CASE("risk profile shapes") {
  SUBCASE("null profile is identically one") {
    const RiskProfile profile = make_risk_profile(RiskProfileKind::null, 50);
    REQUIRE(profile.values.size() == 51);
    CHECK((profile.values.array() == 1.0).all());
  }
  SUBCASE("constant profile sits at 1.5") {
    const RiskProfile profile =
        make_risk_profile(RiskProfileKind::constant, 50);
    CHECK((profile.values.array() == 1.5).all());
  }
  SUBCASE("every shape stays positive and peaks in [1.5, 2]") {
    for (RiskProfileKind kind :
         {RiskProfileKind::constant, RiskProfileKind::early_decreasing,
          RiskProfileKind::slow_decreasing, RiskProfileKind::unimodal,
          RiskProfileKind::rapid_drop, RiskProfileKind::intermediate,
          RiskProfileKind::late, RiskProfileKind::delayed}) {
      const RiskProfile profile = make_risk_profile(kind, 50);
      CHECK(profile.values.size() == 51);
      CHECK((profile.values.array() > 0.0).all());
      CHECK(profile.values.maxCoeff() >= 1.5);
      CHECK(profile.values.maxCoeff() <= 2.0);
    }
  }
  SUBCASE("unknown names are rejected") {
    CHECK_THROWS_AS(risk_profile_kind_from_string("sawtooth"), ConfigError);
  }
  SUBCASE("set compositions") {
    CHECK(set1_profiles().size() == 4);
    const auto set2 = set2_profiles();
    CHECK(set2.size() == 14);
    CHECK(std::count(set2.begin(), set2.end(), RiskProfileKind::null) == 7);
  }
}

TEST_CASE("intensities multiply baseline, profiles and the censoring cut") {
  SimScenario scenario = set1_scenario(1, 9);
  scenario.n_intervals = 60;
  scenario.window_length = 10;
  const Eigen::VectorXd baseline = scenario.baseline_curve();
  const RiskProfile null_profile =
      make_risk_profile(RiskProfileKind::null, 10);
  const RiskProfile bump = make_risk_profile(RiskProfileKind::constant, 10);

  SUBCASE("no exposures reproduce the baseline inside the window") {
    const Eigen::VectorXd lambda =
        compute_intensities(baseline, {null_profile}, {std::nullopt}, 40);
    for (int k = 0; k < 40; ++k) CHECK(lambda[k] == baseline[k]);
    for (int k = 40; k < 60; ++k) CHECK(lambda[k] == 0.0);
  }
  SUBCASE("null profiles change nothing") {
    const Eigen::VectorXd without =
        compute_intensities(baseline, {null_profile}, {std::nullopt}, 40);
    const Eigen::VectorXd with =
        compute_intensities(baseline, {null_profile}, {std::optional<int>(5)},
                            40);
    CHECK((without - with).lpNorm<Eigen::Infinity>() == 0.0);
  }
  SUBCASE("profile values multiply at the right lags") {
    const Eigen::VectorXd lambda = compute_intensities(
        baseline, {bump}, {std::optional<int>(5)}, 40);
    CHECK(lambda[4] == baseline[4]);
    CHECK(lambda[5] == 1.5 * baseline[5]);
    CHECK(lambda[15] == 1.5 * baseline[15]);
    CHECK(lambda[16] == baseline[16]);
  }
  SUBCASE("profile values beyond the risk window never matter") {
    RiskProfile longer = bump;
    const Eigen::VectorXd before = compute_intensities(
        baseline, {bump}, {std::optional<int>(5)}, 40);
    // same profile vector; the window chop happens via the lag bound
    CHECK(before[16] == baseline[16]);
  }
}

TEST_CASE("outcome draws") {
  SUBCASE("point mass always drawn") {
    Eigen::VectorXd lambda = Eigen::VectorXd::Zero(10);
    lambda[7] = 3.0;
    for (int t = 0; t < 25; ++t) {
      Rng rng(t);
      CHECK(simulate_outcome(lambda, rng) == 7);
    }
  }
  SUBCASE("all-zero intensities are a domain error") {
    Rng rng(0);
    Eigen::VectorXd lambda = Eigen::VectorXd::Zero(4);
    CHECK_THROWS_AS(simulate_outcome(lambda, rng), std::domain_error);
  }
  SUBCASE("normalized probabilities sum to one") {
    Rng rng(5);
    Eigen::VectorXd lambda(6);
    for (int i = 0; i < 6; ++i) lambda[i] = rng.uniform(0.1, 3.0);
    const Eigen::VectorXd probs = lambda / lambda.sum();
    CHECK(std::abs(probs.sum() - 1.0) < 1e-12);
  }
  SUBCASE("flat intensities draw uniformly (chi-square)") {
    Eigen::VectorXd lambda = Eigen::VectorXd::Ones(10);
    std::vector<int> counts(10, 0);
    const int n_draws = 10000;
    Rng rng(2025);
    for (int t = 0; t < n_draws; ++t) ++counts[simulate_outcome(lambda, rng)];
    double chi2 = 0.0;
    const double expected = n_draws / 10.0;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    CHECK(chi2 < 27.88);  // chi-square(9) at alpha = 0.001
  }
}

TEST_CASE("cohort simulation") {
  SUBCASE("zero patients give an empty cohort") {
    SimScenario scenario = set1_scenario(0, 3);
    SimTruth truth;
    const CohortTimeline cohort = simulate_cohort(scenario, &truth);
    CHECK(cohort.n_patients() == 0);
    CHECK(cohort.n_drugs() == 4);
    CHECK(truth.exposure_curves.rows() == 4);
    CHECK(truth.exposure_curves.cols() == 51);
  }
  SUBCASE("fixed seeds reproduce the cohort bit for bit") {
    const SimScenario scenario = set1_scenario(25, 99);
    const CohortTimeline a = simulate_cohort(scenario);
    const CohortTimeline b = simulate_cohort(scenario);
    CHECK(cohort_bytes(a) == cohort_bytes(b));
  }
  SUBCASE("set-1 dimensions and case-only structure") {
    SimTruth truth;
    const SimScenario scenario = set1_scenario(40, 7);
    const CohortTimeline cohort = simulate_cohort(scenario, &truth);
    CHECK(cohort.n_patients() == 40);
    CHECK(cohort.n_drugs() == 4);
    CHECK(cohort.grid.n_intervals == 750);
    for (const auto& p : cohort.patients) {
      CHECK(p.n_events() == 1);
      CHECK(p.obs_start == 0);
      CHECK(p.obs_end >= 1);
      CHECK(p.obs_end <= 750);
    }
    CHECK(truth.baseline.size() == 750);
    CHECK(std::abs(truth.baseline.sum() - 1.0) < 1e-12);
  }
  SUBCASE("window ends concentrate near the documented mean") {
    const SimScenario scenario = set1_scenario(400, 11);
    const CohortTimeline cohort = simulate_cohort(scenario);
    double mean_end = 0.0;
    for (const auto& p : cohort.patients) mean_end += p.obs_end;
    mean_end /= cohort.n_patients();
    CHECK(mean_end > 420.0);
    CHECK(mean_end < 580.0);
  }
}

TEST_CASE("individual effects cancel from outcome laws") {
  SimScenario plain = set1_scenario(30, 314);
  plain.n_intervals = 120;
  plain.window_length = 20;
  plain.individual_effect_range = std::make_pair(1.0, 1.0);
  SimScenario scaled = plain;
  scaled.individual_effect_range = std::make_pair(0.1, 10.0);

  const CohortTimeline a = simulate_cohort(plain);
  const CohortTimeline b = simulate_cohort(scaled);

  // identical random draws, scaled intensities: same outcomes, and the
  // normalized probability vectors match to rounding
  CHECK(cohort_bytes(a) == cohort_bytes(b));

  const Eigen::VectorXd baseline = plain.baseline_curve();
  std::vector<RiskProfile> profiles;
  for (auto kind : plain.profile_kinds) {
    profiles.push_back(make_risk_profile(kind, plain.window_length));
  }
  Rng probe(derive_seed(314, 1));  // patient 0 stream
  const auto events = simulate_hawkes(
      sample_adjacency(4, 8, *[] {
        static Rng r(derive_seed(314, 0));
        return &r;
      }()),
      probe);
  const auto exposures = exposures_from_events(events, a.grid);
  const int obs_end = a.patients[0].obs_end;
  const Eigen::VectorXd l1 =
      compute_intensities(baseline, profiles, exposures, obs_end, 1.0);
  const Eigen::VectorXd l2 =
      compute_intensities(baseline, profiles, exposures, obs_end, 7.3);
  const Eigen::VectorXd p1 = l1 / l1.sum();
  const Eigen::VectorXd p2 = l2 / l2.sum();
  CHECK((p1 - p2).lpNorm<Eigen::Infinity>() < 1e-12);
}

}  // TEST_SUITE
