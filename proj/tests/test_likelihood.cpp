#include <doctest.h>

#include <cmath>

#include "convsccs/likelihood.hpp"
#include "convsccs/rng.hpp"
#include "support/oracles.hpp"

using namespace convsccs;

namespace {

CohortTimeline tiny_cohort(int K, int event_interval) {
  CohortTimeline cohort;
  cohort.grid = IntervalGrid::make(K);
  PatientTimeline p;
  p.patient_id = "a";
  p.obs_start = 0;
  p.obs_end = K;
  p.event_counts.assign(K, 0);
  p.event_counts[event_interval] = 1;
  cohort.patients.push_back(std::move(p));
  cohort.validate();
  return cohort;
}

}  // namespace

TEST_SUITE("likelihood") {

TEST_CASE("uniform probabilities at zero parameters") {
  const CohortTimeline cohort = tiny_cohort(3, 1);
  const LaggedDesign design = build_lagged_design(cohort, 1, 3);
  const ModelParams params = ModelParams::zeros(design.layout());
  const Eigen::VectorXd probs = per_patient_probs(params, design, 0);
  REQUIRE(probs.size() == 3);
  for (int r = 0; r < 3; ++r) {
    CHECK(probs[r] == doctest::Approx(1.0 / 3).epsilon(1e-14));
  }
  CHECK(std::abs(probs.sum() - 1.0) < 1e-12);
}

TEST_CASE("normalized exponentials of the baseline steps") {
  const CohortTimeline cohort = tiny_cohort(3, 1);
  const LaggedDesign design = build_lagged_design(cohort, 1, 1);
  ModelParams params = ModelParams::zeros(design.layout());
  params.values[0] = std::log(1.0);
  params.values[1] = std::log(2.0);
  params.values[2] = std::log(1.0);
  const Eigen::VectorXd probs = per_patient_probs(params, design, 0);
  CHECK(probs[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(probs[1] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(probs[2] == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("per-patient constant shifts cancel") {
  const CohortTimeline cohort = tiny_cohort(4, 2);
  const LaggedDesign design = build_lagged_design(cohort, 1, 2);
  Rng rng(5);
  Eigen::VectorXd coeffs = testing::random_coeffs(rng, design.n_params());
  const Eigen::VectorXd base = per_patient_probs(coeffs, design, 0);
  // the patient's active baseline groups cover all of phi here, so adding a
  // constant to phi shifts every in-window log-intensity by that constant
  Eigen::VectorXd shifted = coeffs;
  shifted.segment(0, design.layout().n_baseline_groups).array() += 3.7;
  const Eigen::VectorXd after = per_patient_probs(shifted, design, 0);
  CHECK((base - after).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK(std::abs(per_patient_neg_log_likelihood(coeffs, design, cohort, 0) -
                 per_patient_neg_log_likelihood(shifted, design, cohort, 0)) <
        1e-12);
}

TEST_CASE("known negative log-likelihood values") {
  SUBCASE("uniform window of three") {
    const CohortTimeline cohort = tiny_cohort(3, 0);
    const LaggedDesign design = build_lagged_design(cohort, 1, 3);
    const ModelParams params = ModelParams::zeros(design.layout());
    CHECK(neg_log_likelihood(params, design, cohort) ==
          doctest::Approx(std::log(3.0)).epsilon(1e-12));
  }
  SUBCASE("event in the likely interval") {
    const CohortTimeline cohort = tiny_cohort(3, 1);
    const LaggedDesign design = build_lagged_design(cohort, 1, 1);
    ModelParams params = ModelParams::zeros(design.layout());
    params.values[1] = std::log(2.0);
    CHECK(neg_log_likelihood(params, design, cohort) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
}

TEST_CASE("matches the naive term-by-term evaluation") {
  Rng rng(101);
  for (int trial = 0; trial < 30; ++trial) {
    const auto inst = testing::random_instance(rng, 4, 8, 2, 3);
    const LaggedDesign design = build_lagged_design(
        inst.cohort, inst.window_length, inst.baseline_group_width);
    const Eigen::VectorXd coeffs =
        testing::random_coeffs(rng, design.n_params());
    const double fast = neg_log_likelihood(coeffs, design, inst.cohort);
    const double naive = testing::naive_neg_log_likelihood(
        coeffs, inst.cohort, inst.window_length, inst.baseline_group_width);
    CHECK(fast == doctest::Approx(naive).epsilon(1e-10));
  }
}

TEST_CASE("analytic gradient matches central differences") {
  Rng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto inst = testing::random_instance(rng, 10, 20, 3, 5);
    const LaggedDesign design = build_lagged_design(
        inst.cohort, inst.window_length, inst.baseline_group_width);
    const Eigen::VectorXd coeffs =
        testing::random_coeffs(rng, design.n_params(), 0.5);
    const Eigen::VectorXd analytic = gradient(coeffs, design, inst.cohort);
    const Eigen::VectorXd numeric = testing::finite_difference_gradient(
        [&](const Eigen::VectorXd& x) {
          return neg_log_likelihood(x, design, inst.cohort);
        },
        coeffs);
    const double scale = std::max(1e-8, numeric.lpNorm<Eigen::Infinity>());
    const double err =
        (analytic - numeric).lpNorm<Eigen::Infinity>() / scale;
    worst = std::max(worst, err);
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("gradient is zero at a symmetric point") {
  // two intervals, one bucket each, event in the first: at zero params the
  // expected coordinate count for each bucket equals 1/2, observed (1, 0),
  // so the phi gradient is (-1/2, 1/2) and theta is untouched; with the
  // event split evenly it vanishes
  CohortTimeline cohort = tiny_cohort(2, 0);
  cohort.patients[0].event_counts = {1, 1};
  const LaggedDesign design = build_lagged_design(cohort, 0, 1);
  const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(design.n_params());
  const Eigen::VectorXd grad = gradient(zeros, design, cohort);
  CHECK(grad.lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("duplicating every patient leaves the gradient unchanged") {
  Rng rng(31);
  const auto inst = testing::random_instance(rng, 5, 12, 2, 3);
  CohortTimeline doubled = inst.cohort;
  for (const auto& p : inst.cohort.patients) {
    PatientTimeline copy = p;
    copy.patient_id += "_copy";
    doubled.patients.push_back(std::move(copy));
  }
  const LaggedDesign design = build_lagged_design(
      inst.cohort, inst.window_length, inst.baseline_group_width);
  const LaggedDesign design2 = build_lagged_design(
      doubled, inst.window_length, inst.baseline_group_width);
  const Eigen::VectorXd coeffs = testing::random_coeffs(rng, design.n_params());
  const Eigen::VectorXd g1 = gradient(coeffs, design, inst.cohort);
  const Eigen::VectorXd g2 = gradient(coeffs, design2, doubled);
  CHECK((g1 - g2).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("per-patient terms average to the full likelihood") {
  Rng rng(47);
  const auto inst = testing::random_instance(rng, 6, 12, 2, 3);
  const LaggedDesign design = build_lagged_design(
      inst.cohort, inst.window_length, inst.baseline_group_width);
  const Eigen::VectorXd coeffs = testing::random_coeffs(rng, design.n_params());
  double total = 0.0;
  for (int i = 0; i < inst.cohort.n_patients(); ++i) {
    total += per_patient_neg_log_likelihood(coeffs, design, inst.cohort, i);
  }
  total /= inst.cohort.n_patients();
  CHECK(total ==
        doctest::Approx(neg_log_likelihood(coeffs, design, inst.cohort))
            .epsilon(1e-12));

  SUBCASE("single patient cohort") {
    CohortTimeline single = inst.cohort;
    single.patients.resize(1);
    const LaggedDesign d1 = build_lagged_design(single, inst.window_length,
                                                inst.baseline_group_width);
    CHECK(per_patient_neg_log_likelihood(coeffs, d1, single, 0) ==
          doctest::Approx(neg_log_likelihood(coeffs, d1, single))
              .epsilon(1e-12));
  }
}

TEST_CASE("uniform window gives log(window length) per event") {
  const CohortTimeline cohort = tiny_cohort(7, 4);
  const LaggedDesign design = build_lagged_design(cohort, 2, 7);
  const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(design.n_params());
  CHECK(per_patient_neg_log_likelihood(zeros, design, cohort, 0) ==
        doctest::Approx(std::log(7.0)).epsilon(1e-12));
}

TEST_CASE("baseline shift leaves the objective flat") {
  Rng rng(99);
  const auto inst = testing::random_instance(rng, 8, 14, 2, 4);
  const LaggedDesign design = build_lagged_design(
      inst.cohort, inst.window_length, inst.baseline_group_width);
  Eigen::VectorXd coeffs = testing::random_coeffs(rng, design.n_params());
  const double before = neg_log_likelihood(coeffs, design, inst.cohort);
  coeffs.segment(0, design.layout().n_baseline_groups).array() += 0.83;
  const double after = neg_log_likelihood(coeffs, design, inst.cohort);
  CHECK(std::abs(before - after) < 1e-10);
}

TEST_CASE("gradient baseline block sums to zero") {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const auto inst = testing::random_instance(rng, 8, 14, 2, 4);
    const LaggedDesign design = build_lagged_design(
        inst.cohort, inst.window_length, inst.baseline_group_width);
    const Eigen::VectorXd coeffs =
        testing::random_coeffs(rng, design.n_params());
    const Eigen::VectorXd grad = gradient(coeffs, design, inst.cohort);
    CHECK(std::abs(grad.segment(0, design.layout().n_baseline_groups).sum()) <
          1e-10);
  }
}

TEST_CASE("objective is convex along random chords") {
  Rng rng(333);
  for (int trial = 0; trial < 20; ++trial) {
    const auto inst = testing::random_instance(rng, 6, 10, 2, 3);
    const LaggedDesign design = build_lagged_design(
        inst.cohort, inst.window_length, inst.baseline_group_width);
    const Eigen::VectorXd x = testing::random_coeffs(rng, design.n_params());
    const Eigen::VectorXd y = testing::random_coeffs(rng, design.n_params());
    const double t = rng.uniform(0.05, 0.95);
    const double lhs =
        neg_log_likelihood(t * x + (1.0 - t) * y, design, inst.cohort);
    const double rhs = t * neg_log_likelihood(x, design, inst.cohort) +
                       (1.0 - t) * neg_log_likelihood(y, design, inst.cohort);
    CHECK(lhs <= rhs + 1e-10);
  }
}

}  // TEST_SUITE
