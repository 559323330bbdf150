#include "convsccs/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>

#include "convsccs/errors.hpp"
#include "convsccs/metrics.hpp"
#include "convsccs/parallel.hpp"
#include "convsccs/rng.hpp"

namespace convsccs {

void HyperSearchConfig::validate() const {
  if (n_folds < 2) throw ConfigError("cross-validation needs n_folds >= 2");
  if (n_candidates < 1) throw ConfigError("n_candidates must be >= 1");
  if (n_strata < 1) throw ConfigError("n_strata must be >= 1");
  for (const auto& [lo, hi] : {gamma_tv_range, gamma_gl_range}) {
    if (lo <= 0.0 || hi < lo) {
      throw ConfigError("hyper-parameter ranges must satisfy 0 < low <= high");
    }
  }
}

namespace {

void require_case_only(const CohortTimeline& cohort) {
  for (const auto& p : cohort.patients) {
    if (p.n_events() < 1) {
      throw ValidationError("patient " + p.patient_id +
                            " has no outcome events; run validate_cases first");
    }
  }
}

double sample_quantile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const double pos = q * (values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
  const double w = pos - lo;
  return (1.0 - w) * values[lo] + w * values[hi];
}

CohortTimeline subset_cohort(const CohortTimeline& cohort,
                             const std::vector<int>& indices) {
  CohortTimeline out;
  out.grid = cohort.grid;
  out.drug_labels = cohort.drug_labels;
  out.patients.reserve(indices.size());
  for (int i : indices) out.patients.push_back(cohort.patients[i]);
  return out;
}

// Reduced parameterization of a fixed support: every baseline group stays
// free, each fused segment of a non-zero block shares one coordinate, zero
// blocks are dropped.
struct SupportSpace {
  std::vector<int> coord_map;  // full coord -> reduced coord or -1
  int n_reduced = 0;

  Eigen::VectorXd reduce(const Eigen::VectorXd& full) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n_reduced);
    for (std::size_t c = 0; c < coord_map.size(); ++c) {
      if (coord_map[c] >= 0) out[coord_map[c]] = full[c];
    }
    return out;
  }

  Eigen::VectorXd expand(const Eigen::VectorXd& reduced, int n_full) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n_full);
    for (std::size_t c = 0; c < coord_map.size(); ++c) {
      if (coord_map[c] >= 0) out[c] = reduced[coord_map[c]];
    }
    return out;
  }
};

SupportSpace support_space(const ParamLayout& layout,
                           const std::vector<DrugSupport>& support) {
  if (static_cast<int>(support.size()) != layout.n_drugs) {
    throw ConfigError("support does not cover every drug block");
  }
  SupportSpace space;
  space.coord_map.assign(layout.n_params(), -1);
  int next = 0;
  for (int g = 0; g < layout.n_baseline_groups; ++g) {
    space.coord_map[g] = next++;
  }
  for (int j = 0; j < layout.n_drugs; ++j) {
    if (support[j].is_zero) continue;
    for (const auto& seg : support[j].segments) {
      const int idx = next++;
      for (int l = seg.start_lag; l < seg.end_lag; ++l) {
        space.coord_map[layout.block_offset(j) + l] = idx;
      }
    }
  }
  space.n_reduced = next;
  return space;
}

}  // namespace

std::vector<DrugSupport> extract_support(const ModelParams& params) {
  const ParamLayout& layout = params.layout;
  std::vector<DrugSupport> support(layout.n_drugs);
  for (int j = 0; j < layout.n_drugs; ++j) {
    const auto block = params.exposure_block(j);
    DrugSupport& s = support[j];
    s.is_zero = (block.array() == 0.0).all();
    int start = 0;
    for (int l = 1; l <= layout.n_lags; ++l) {
      if (l == layout.n_lags || block[l] != block[start]) {
        s.segments.push_back({start, l, block[start]});
        start = l;
      }
    }
  }
  return support;
}

FitResult fit(const CohortTimeline& cohort, int window_length,
              int baseline_group_width, const PenaltyConfig& penalty,
              const SolverConfig& solver_config) {
  require_case_only(cohort);
  const LaggedDesign design =
      build_lagged_design(cohort, window_length, baseline_group_width);
  const ModelParams init = ModelParams::zeros(design.layout());
  FitTrace trace = solve(design, cohort, penalty, solver_config, init);

  FitResult result;
  result.params = trace.params;
  result.refit_params = trace.params;
  result.chosen_penalty = penalty;
  result.support = extract_support(result.params);
  result.window_length = window_length;
  result.baseline_group_width = baseline_group_width;
  return result;
}

int select_one_standard_error(const std::vector<CvCandidate>& table) {
  if (table.empty()) throw ConfigError("empty cross-validation table");
  int best = 0;
  for (int c = 1; c < static_cast<int>(table.size()); ++c) {
    if (table[c].mean < table[best].mean) best = c;
  }
  const double threshold = table[best].mean + table[best].se;
  int chosen = best;
  for (int c = 0; c < static_cast<int>(table.size()); ++c) {
    if (table[c].mean > threshold) continue;
    const auto more_penalized = [&](const CvCandidate& a,
                                    const CvCandidate& b) {
      if (a.penalty.gamma_gl != b.penalty.gamma_gl) {
        return a.penalty.gamma_gl > b.penalty.gamma_gl;
      }
      return a.penalty.gamma_tv > b.penalty.gamma_tv;
    };
    if (more_penalized(table[c], table[chosen])) chosen = c;
  }
  return chosen;
}

CvResult cross_validate(const CohortTimeline& cohort, int window_length,
                        int baseline_group_width,
                        const HyperSearchConfig& search,
                        const SolverConfig& solver_config, int n_jobs) {
  search.validate();
  require_case_only(cohort);
  const int m = cohort.n_patients();
  const int V = search.n_folds;
  if (m < V) {
    throw ConfigError("cohort of " + std::to_string(m) +
                      " cases cannot be split into " + std::to_string(V) +
                      " folds");
  }

  // Stratify by the quantile of the first event's interval, then deal fold
  // labels round-robin within each stratum (shuffled for exchangeability).
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return cohort.patients[a].first_event_interval() <
           cohort.patients[b].first_event_interval();
  });
  const int n_strata = std::min(search.n_strata, m);
  std::vector<int> fold_of(m, 0);
  Rng fold_rng(derive_seed(search.rng_seed, 0));
  int rr = 0;
  for (int s = 0; s < n_strata; ++s) {
    const int begin = static_cast<int>(static_cast<long>(s) * m / n_strata);
    const int end = static_cast<int>(static_cast<long>(s + 1) * m / n_strata);
    std::vector<int> chunk(order.begin() + begin, order.begin() + end);
    fold_rng.shuffle(chunk);
    for (int idx : chunk) fold_of[idx] = rr++ % V;
  }

  std::vector<PenaltyConfig> candidates;
  if (search.search == HyperSearchConfig::Search::random) {
    Rng cand_rng(derive_seed(search.rng_seed, 1));
    candidates.reserve(search.n_candidates);
    for (int c = 0; c < search.n_candidates; ++c) {
      PenaltyConfig penalty;
      penalty.gamma_tv = cand_rng.log_uniform(search.gamma_tv_range.first,
                                              search.gamma_tv_range.second);
      penalty.gamma_gl = cand_rng.log_uniform(search.gamma_gl_range.first,
                                              search.gamma_gl_range.second);
      candidates.push_back(penalty);
    }
  } else {
    const int per_axis = std::max(
        1, static_cast<int>(std::lround(std::sqrt(search.n_candidates))));
    const auto axis = [per_axis](std::pair<double, double> range) {
      std::vector<double> values;
      if (per_axis == 1) {
        values.push_back(std::sqrt(range.first * range.second));
        return values;
      }
      const double llo = std::log(range.first), lhi = std::log(range.second);
      for (int i = 0; i < per_axis; ++i) {
        values.push_back(std::exp(llo + (lhi - llo) * i / (per_axis - 1)));
      }
      return values;
    };
    for (double tv : axis(search.gamma_tv_range)) {
      for (double gl : axis(search.gamma_gl_range)) {
        candidates.push_back(PenaltyConfig{tv, gl});
      }
    }
  }

  std::vector<CohortTimeline> train_cohorts(V), val_cohorts(V);
  std::vector<LaggedDesign> train_designs(V), val_designs(V);
  for (int f = 0; f < V; ++f) {
    std::vector<int> train_idx, val_idx;
    for (int i = 0; i < m; ++i) {
      (fold_of[i] == f ? val_idx : train_idx).push_back(i);
    }
    train_cohorts[f] = subset_cohort(cohort, train_idx);
    val_cohorts[f] = subset_cohort(cohort, val_idx);
    train_designs[f] =
        build_lagged_design(train_cohorts[f], window_length,
                            baseline_group_width);
    val_designs[f] = build_lagged_design(val_cohorts[f], window_length,
                                         baseline_group_width);
  }

  const int n_cand = static_cast<int>(candidates.size());
  std::vector<std::vector<double>> scores(n_cand, std::vector<double>(V, 0.0));
  parallel_for(n_cand * V, n_jobs, [&](int task) {
    const int c = task / V;
    const int f = task % V;
    SolverConfig cfg = solver_config;
    cfg.rng_seed = derive_seed(search.rng_seed, 2 + task);
    const ModelParams init = ModelParams::zeros(train_designs[f].layout());
    const FitTrace trace =
        solve(train_designs[f], train_cohorts[f], candidates[c], cfg, init);
    scores[c][f] = neg_log_likelihood(trace.params.values, val_designs[f],
                                      val_cohorts[f]);
  });

  CvResult result;
  result.table.reserve(n_cand);
  for (int c = 0; c < n_cand; ++c) {
    CvCandidate entry;
    entry.penalty = candidates[c];
    entry.fold_scores = scores[c];
    entry.mean =
        std::accumulate(scores[c].begin(), scores[c].end(), 0.0) / V;
    double ss = 0.0;
    for (double v : scores[c]) ss += (v - entry.mean) * (v - entry.mean);
    entry.se = std::sqrt(ss / (V - 1)) / std::sqrt(static_cast<double>(V));
    result.table.push_back(std::move(entry));
  }
  result.chosen_index = select_one_standard_error(result.table);
  result.chosen = result.table[result.chosen_index].penalty;
  return result;
}

ModelParams refit_on_support(const CohortTimeline& cohort,
                             const FitResult& fit,
                             const SolverConfig& solver_config) {
  require_case_only(cohort);
  const LaggedDesign design = build_lagged_design(
      cohort, fit.window_length, fit.baseline_group_width);
  const ParamLayout& layout = design.layout();
  const SupportSpace space = support_space(layout, fit.support);
  const LaggedDesign reduced = design.remap(space.coord_map, space.n_reduced);

  SolverConfig cfg = solver_config;
  cfg.variant = SolverVariant::full_prox_grad;
  const ModelParams init{reduced.layout(), space.reduce(fit.params.values)};
  const FitTrace trace = solve(reduced, cohort, PenaltyConfig{}, cfg, init);

  return ModelParams{layout,
                     space.expand(trace.params.values, layout.n_params())};
}

RelativeIncidence relative_incidence(const ModelParams& params,
                                     const LaggedDesign& design) {
  const ParamLayout& layout = params.layout;
  RelativeIncidence out;
  out.exposures.resize(layout.n_drugs, layout.n_lags);
  for (int j = 0; j < layout.n_drugs; ++j) {
    out.exposures.row(j) = params.exposure_block(j).array().exp().transpose();
  }
  const int K = design.n_intervals();
  Eigen::VectorXd raw(K);
  for (int k = 0; k < K; ++k) {
    raw[k] = std::exp(params.values[design.baseline_group_of(k)]);
  }
  out.baseline = normalize_baseline(raw);
  return out;
}

BootstrapBands bootstrap_ci(const CohortTimeline& cohort, const FitResult& fit,
                            int n_replicates, double confidence,
                            std::uint64_t rng_seed,
                            const SolverConfig& solver_config, int n_jobs) {
  if (n_replicates < 2) throw ConfigError("bootstrap needs >= 2 replicates");
  if (confidence <= 0.0 || confidence >= 1.0) {
    throw ConfigError("confidence level must be in (0, 1)");
  }
  require_case_only(cohort);

  const LaggedDesign design = build_lagged_design(
      cohort, fit.window_length, fit.baseline_group_width);
  const ParamLayout& layout = design.layout();
  const SupportSpace space = support_space(layout, fit.support);
  const LaggedDesign reduced = design.remap(space.coord_map, space.n_reduced);
  const Eigen::VectorXd reduced_init = space.reduce(fit.refit_params.values);

  const int m = cohort.n_patients();
  std::vector<Eigen::VectorXd> probs(m);
  for (int i = 0; i < m; ++i) {
    probs[i] = per_patient_probs(fit.refit_params.values, design, i);
  }

  const int K = design.n_intervals();
  const int n_theta = layout.n_drugs * layout.n_lags;
  Eigen::MatrixXd theta_samples(n_replicates, n_theta);
  Eigen::MatrixXd baseline_samples(n_replicates, K);

  SolverConfig cfg = solver_config;
  cfg.variant = SolverVariant::full_prox_grad;

  parallel_for(n_replicates, n_jobs, [&](int b) {
    Rng rng(derive_seed(rng_seed, 1 + static_cast<std::uint64_t>(b)));
    CohortTimeline replicate = cohort;
    for (int i = 0; i < m; ++i) {
      auto& patient = replicate.patients[i];
      const int n_events = patient.n_events();
      std::fill(patient.event_counts.begin(), patient.event_counts.end(), 0);
      for (int e = 0; e < n_events; ++e) {
        const double u = rng.uniform();
        double acc = 0.0;
        int drawn = patient.window_length() - 1;
        for (int r = 0; r < patient.window_length(); ++r) {
          acc += probs[i][r];
          if (u < acc) {
            drawn = r;
            break;
          }
        }
        ++patient.event_counts[drawn];
      }
    }
    SolverConfig rep_cfg = cfg;
    rep_cfg.rng_seed = derive_seed(rng_seed, 70000 + b);
    const ModelParams init{reduced.layout(), reduced_init};
    const FitTrace trace =
        solve(reduced, replicate, PenaltyConfig{}, rep_cfg, init);
    const Eigen::VectorXd full =
        space.expand(trace.params.values, layout.n_params());
    const ModelParams full_params{layout, full};
    const RelativeIncidence ri = relative_incidence(full_params, design);
    for (int j = 0; j < layout.n_drugs; ++j) {
      theta_samples.row(b).segment(j * layout.n_lags, layout.n_lags) =
          ri.exposures.row(j);
    }
    baseline_samples.row(b) = ri.baseline.transpose();
  });

  const double tail = (1.0 - confidence) / 2.0;
  const RelativeIncidence point = relative_incidence(fit.refit_params, design);

  BootstrapBands bands;
  bands.exposure_lower.resize(layout.n_drugs, layout.n_lags);
  bands.exposure_upper.resize(layout.n_drugs, layout.n_lags);
  for (int j = 0; j < layout.n_drugs; ++j) {
    for (int l = 0; l < layout.n_lags; ++l) {
      const int col = j * layout.n_lags + l;
      std::vector<double> column(theta_samples.col(col).data(),
                                 theta_samples.col(col).data() + n_replicates);
      double lo = sample_quantile(column, tail);
      double hi = sample_quantile(std::move(column), 1.0 - tail);
      lo = std::min(lo, point.exposures(j, l));
      hi = std::max(hi, point.exposures(j, l));
      bands.exposure_lower(j, l) = lo;
      bands.exposure_upper(j, l) = hi;
    }
  }
  bands.baseline_lower.resize(K);
  bands.baseline_upper.resize(K);
  for (int k = 0; k < K; ++k) {
    std::vector<double> column(baseline_samples.col(k).data(),
                               baseline_samples.col(k).data() + n_replicates);
    double lo = sample_quantile(column, tail);
    double hi = sample_quantile(std::move(column), 1.0 - tail);
    bands.baseline_lower[k] = std::min(lo, point.baseline[k]);
    bands.baseline_upper[k] = std::max(hi, point.baseline[k]);
  }
  return bands;
}

FitResult run_fit_pipeline(const CohortTimeline& cohort,
                           const PipelineConfig& config) {
  PenaltyConfig chosen = config.penalty;
  std::vector<CvCandidate> cv_table;
  int chosen_index = -1;
  if (config.run_cv) {
    HyperSearchConfig search = config.search;
    search.rng_seed = derive_seed(config.rng_seed, 11);
    const CvResult cv =
        cross_validate(cohort, config.window_length,
                       config.baseline_group_width, search, config.solver,
                       config.n_jobs);
    chosen = cv.chosen;
    cv_table = cv.table;
    chosen_index = cv.chosen_index;
  }

  SolverConfig fit_solver = config.solver;
  fit_solver.rng_seed = derive_seed(config.rng_seed, 12);
  FitResult result = fit(cohort, config.window_length,
                         config.baseline_group_width, chosen, fit_solver);
  result.cv_table = std::move(cv_table);
  result.cv_chosen_index = chosen_index;

  if (config.refit) {
    SolverConfig refit_solver = config.solver;
    refit_solver.rng_seed = derive_seed(config.rng_seed, 13);
    result.refit_params = refit_on_support(cohort, result, refit_solver);
  }

  if (config.bootstrap) {
    const BootstrapBands bands = bootstrap_ci(
        cohort, result, config.n_bootstrap, config.confidence,
        derive_seed(config.rng_seed, 14), config.solver, config.n_jobs);
    result.exposure_ci_lower = bands.exposure_lower;
    result.exposure_ci_upper = bands.exposure_upper;
    result.baseline_ci_lower = bands.baseline_lower;
    result.baseline_ci_upper = bands.baseline_upper;
    result.n_bootstrap = config.n_bootstrap;
  }
  return result;
}

namespace {

int segment_of(const DrugSupport& support, int lag) {
  for (int s = 0; s < static_cast<int>(support.segments.size()); ++s) {
    if (lag >= support.segments[s].start_lag &&
        lag < support.segments[s].end_lag) {
      return s;
    }
  }
  return -1;
}

}  // namespace

void write_fit_report(std::ostream& out, const FitResult& result,
                      const CohortTimeline& cohort, const LaggedDesign& design,
                      char delimiter) {
  const char d = delimiter;
  const ParamLayout& layout = result.refit_params.layout;
  out << std::setprecision(17);
  out << "drug" << d << "lag" << d << "coef" << d << "rel_incidence" << d
      << "ci_low" << d << "ci_high" << d << "segment_id" << "\n";
  const RelativeIncidence ri = relative_incidence(result.refit_params, design);
  for (int j = 0; j < layout.n_drugs; ++j) {
    for (int l = 0; l < layout.n_lags; ++l) {
      out << cohort.drug_labels[j] << d << l << d
          << result.refit_params.values[layout.block_offset(j) + l] << d
          << ri.exposures(j, l) << d;
      if (result.has_bands()) {
        out << result.exposure_ci_lower(j, l) << d
            << result.exposure_ci_upper(j, l);
      } else {
        out << d;
      }
      out << d << segment_of(result.support[j], l) << "\n";
    }
  }
  // baseline rows: one per group, on the normalized relative-incidence scale
  for (int g = 0; g < layout.n_baseline_groups; ++g) {
    int rep_interval = -1;
    for (int k = 0; k < design.n_intervals(); ++k) {
      if (design.baseline_group_of(k) == g) {
        rep_interval = k;
        break;
      }
    }
    out << "baseline" << d << g << d << result.refit_params.values[g] << d
        << (rep_interval >= 0 ? ri.baseline[rep_interval] : 0.0) << d;
    if (result.has_bands() && rep_interval >= 0) {
      out << result.baseline_ci_lower[rep_interval] << d
          << result.baseline_ci_upper[rep_interval];
    } else {
      out << d;
    }
    out << d << g << "\n";
  }
}

void write_cv_table(std::ostream& out, const std::vector<CvCandidate>& table,
                    int chosen_index, char delimiter) {
  const char d = delimiter;
  out << std::setprecision(17);
  out << "gamma_tv" << d << "gamma_gl" << d << "mean_validation_nll" << d
      << "se" << d << "chosen" << "\n";
  for (int c = 0; c < static_cast<int>(table.size()); ++c) {
    out << table[c].penalty.gamma_tv << d << table[c].penalty.gamma_gl << d
        << table[c].mean << d << table[c].se << d
        << (c == chosen_index ? 1 : 0) << "\n";
  }
}

}  // namespace convsccs
