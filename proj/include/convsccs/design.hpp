#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "convsccs/timeline.hpp"

namespace convsccs {

// Coefficient vector layout: [phi_0..phi_{G-1} | theta^0_0..theta^0_p | ...].
struct ParamLayout {
  int n_baseline_groups = 0;
  int n_drugs = 0;
  int n_lags = 0;  // p + 1 coefficients per drug

  int n_params() const { return n_baseline_groups + n_drugs * n_lags; }
  int block_offset(int drug) const {
    return n_baseline_groups + drug * n_lags;
  }
  bool is_baseline(int coord) const { return coord < n_baseline_groups; }
};

// Sparse per-(patient, interval) lists of active coefficient coordinates with
// integer multiplicities. Each in-window interval activates exactly one
// baseline coordinate plus one theta coordinate per exposure start within
// reach (lag 0..p). Stored CSR-style per patient.
class LaggedDesign {
 public:
  struct PatientRows {
    int obs_start = 0;
    int obs_end = 0;
    std::vector<std::int32_t> offsets;  // window_length + 1
    std::vector<std::int32_t> coords;
    std::vector<std::int32_t> mults;

    int window_length() const { return obs_end - obs_start; }
  };

  LaggedDesign() = default;
  LaggedDesign(ParamLayout layout, int window_length,
               std::vector<PatientRows> rows)
      : layout_(layout), window_length_(window_length), rows_(std::move(rows)) {}

  const ParamLayout& layout() const { return layout_; }
  int n_params() const { return layout_.n_params(); }
  int window_length() const { return window_length_; }
  int n_patients() const { return static_cast<int>(rows_.size()); }
  const PatientRows& patient(int i) const { return rows_[i]; }

  int baseline_group_of(int interval) const;
  int baseline_group_width() const { return baseline_group_width_; }
  int n_intervals() const { return n_intervals_; }

  // (coordinate, multiplicity) pairs sorted by coordinate; empty outside the
  // patient's window.
  std::vector<std::pair<int, int>> active_coordinates(int patient,
                                                      int interval) const;

  // Largest squared Euclidean norm of an interval's multiplicity vector;
  // feeds the crude Lipschitz estimate used for the default step size.
  double max_row_sq_norm() const;

  // Design over a collapsed coefficient space: coordinate c of this design
  // maps to coord_map[c] (or is dropped when coord_map[c] < 0); entries
  // mapping to the same coordinate merge their multiplicities. Used for
  // refits on a fixed support, where fused lags share one free parameter.
  // The result's layout has no exposure blocks, i.e. nothing is penalized.
  LaggedDesign remap(const std::vector<int>& coord_map, int new_n_params) const;

 private:
  ParamLayout layout_;
  int window_length_ = 0;
  std::vector<PatientRows> rows_;
  int baseline_group_width_ = 1;
  int n_intervals_ = 0;

  friend LaggedDesign build_lagged_design(const CohortTimeline&, int, int);
};

// window_length is p: an exposure start at interval c contributes the theta
// coordinate of lag k - c for intervals k with 0 <= k - c <= p. Baseline
// coordinates follow equal-width interval buckets; the last bucket absorbs a
// remainder when n_intervals is not divisible by the width.
LaggedDesign build_lagged_design(const CohortTimeline& cohort,
                                 int window_length, int baseline_group_width);

}  // namespace convsccs
