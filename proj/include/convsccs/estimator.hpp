#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "convsccs/solver.hpp"

namespace convsccs {

struct HyperSearchConfig {
  enum class Search { grid, random };

  int n_folds = 3;
  Search search = Search::random;
  int n_candidates = 50;
  std::pair<double, double> gamma_tv_range{1e-4, 10.0};
  std::pair<double, double> gamma_gl_range{1e-4, 10.0};
  int n_strata = 4;  // quantile strata of the first event interval
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct CvCandidate {
  PenaltyConfig penalty;
  double mean = 0.0;  // mean held-out negative log-likelihood per case
  double se = 0.0;    // sample std over folds / sqrt(V)
  std::vector<double> fold_scores;
};

struct CvResult {
  PenaltyConfig chosen;
  int chosen_index = -1;
  std::vector<CvCandidate> table;
};

// Maximal run of equal consecutive lag coefficients; [start_lag, end_lag).
struct SupportSegment {
  int start_lag = 0;
  int end_lag = 0;
  double value = 0.0;
};

struct DrugSupport {
  bool is_zero = false;
  std::vector<SupportSegment> segments;  // partition of 0..p
};

struct FitResult {
  ModelParams params;        // penalized estimate (the support source)
  ModelParams refit_params;  // unpenalized refit on the support; == params
                             // until refit_on_support runs
  PenaltyConfig chosen_penalty;
  std::vector<CvCandidate> cv_table;
  int cv_chosen_index = -1;
  std::vector<DrugSupport> support;
  int window_length = 0;
  int baseline_group_width = 1;
  // 95%-style bands on the relative-incidence scale; zero-sized when the
  // bootstrap was skipped. Baseline bands live on the normalized curve.
  Eigen::MatrixXd exposure_ci_lower, exposure_ci_upper;  // d x (p+1)
  Eigen::VectorXd baseline_ci_lower, baseline_ci_upper;  // K
  int n_bootstrap = 0;

  bool has_bands() const { return exposure_ci_lower.size() > 0; }
};

// Penalized fit with support extraction; no CV, no bands. Requires a
// validated case-only cohort.
FitResult fit(const CohortTimeline& cohort, int window_length,
              int baseline_group_width, const PenaltyConfig& penalty,
              const SolverConfig& solver_config);

// Stratified V-fold selection of (gamma_tv, gamma_gl) scored by the
// unpenalized held-out negative log-likelihood, picking the most penalized
// candidate within one standard error of the best (largest gamma_gl, ties by
// largest gamma_tv).
CvResult cross_validate(const CohortTimeline& cohort, int window_length,
                        int baseline_group_width,
                        const HyperSearchConfig& search,
                        const SolverConfig& solver_config, int n_jobs = 1);

// Selection applied to precomputed scores; exposed so the rule itself is
// testable in isolation.
int select_one_standard_error(const std::vector<CvCandidate>& table);

// Maximizes the unpenalized likelihood with coefficients tied within each
// fused segment and zero blocks pinned at zero; full-batch variant on the
// reduced parameterization. Returns full-length coefficients.
ModelParams refit_on_support(const CohortTimeline& cohort,
                             const FitResult& fit,
                             const SolverConfig& solver_config);

struct BootstrapBands {
  Eigen::MatrixXd exposure_lower, exposure_upper;
  Eigen::VectorXd baseline_lower, baseline_upper;
};

// Parametric bootstrap: resamples each patient's n_i events from the fitted
// multinomial, refits on the fixed support, and returns empirical quantile
// bands of the relative incidences across replicates.
BootstrapBands bootstrap_ci(const CohortTimeline& cohort,
                            const FitResult& fit, int n_replicates,
                            double confidence, std::uint64_t rng_seed,
                            const SolverConfig& solver_config, int n_jobs = 1);

struct RelativeIncidence {
  Eigen::MatrixXd exposures;  // d x (p+1), exp(theta)
  Eigen::VectorXd baseline;   // length K, normalized to unit integral
};

RelativeIncidence relative_incidence(const ModelParams& params,
                                     const LaggedDesign& design);

// Support extraction from a penalized estimate: exact-equality runs per
// block (the TV prox emits fused values bitwise equal) and exact-zero
// detection per block.
std::vector<DrugSupport> extract_support(const ModelParams& params);

struct PipelineConfig {
  int window_length = 50;
  int baseline_group_width = 50;
  bool run_cv = true;
  HyperSearchConfig search;
  PenaltyConfig penalty;  // used directly when run_cv is false
  SolverConfig solver;
  bool refit = true;
  bool bootstrap = true;
  int n_bootstrap = 200;
  double confidence = 0.95;
  int n_jobs = 1;
  std::uint64_t rng_seed = 0;
};

// cross_validate -> fit -> refit_on_support -> bootstrap_ci, with all child
// seeds derived from the pipeline seed.
FitResult run_fit_pipeline(const CohortTimeline& cohort,
                           const PipelineConfig& config);

// One row per (drug, lag) with the fitted coefficient, relative incidence and
// bands, then one row per baseline group on the normalized scale.
void write_fit_report(std::ostream& out, const FitResult& result,
                      const CohortTimeline& cohort, const LaggedDesign& design,
                      char delimiter = ',');
void write_cv_table(std::ostream& out, const std::vector<CvCandidate>& table,
                    int chosen_index, char delimiter = ',');

}  // namespace convsccs
