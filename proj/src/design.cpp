#include "convsccs/design.hpp"

#include <algorithm>
#include <map>

#include "convsccs/errors.hpp"

namespace convsccs {

int LaggedDesign::baseline_group_of(int interval) const {
  const int g = interval / baseline_group_width_;
  return std::min(g, layout_.n_baseline_groups - 1);
}

std::vector<std::pair<int, int>> LaggedDesign::active_coordinates(
    int patient, int interval) const {
  const PatientRows& rows = rows_[patient];
  if (interval < rows.obs_start || interval >= rows.obs_end) return {};
  const int r = interval - rows.obs_start;
  std::vector<std::pair<int, int>> out;
  for (std::int32_t e = rows.offsets[r]; e < rows.offsets[r + 1]; ++e) {
    out.emplace_back(rows.coords[e], rows.mults[e]);
  }
  return out;
}

double LaggedDesign::max_row_sq_norm() const {
  double best = 0.0;
  for (const auto& rows : rows_) {
    for (int r = 0; r < rows.window_length(); ++r) {
      double s = 0.0;
      for (std::int32_t e = rows.offsets[r]; e < rows.offsets[r + 1]; ++e) {
        s += static_cast<double>(rows.mults[e]) * rows.mults[e];
      }
      best = std::max(best, s);
    }
  }
  return best;
}

LaggedDesign LaggedDesign::remap(const std::vector<int>& coord_map,
                                 int new_n_params) const {
  if (static_cast<int>(coord_map.size()) != n_params()) {
    throw ConfigError("coordinate map does not match design size");
  }
  LaggedDesign out = *this;
  out.layout_ = ParamLayout{new_n_params, 0, 0};
  for (auto& rows : out.rows_) {
    std::vector<std::int32_t> offsets{0};
    std::vector<std::int32_t> coords;
    std::vector<std::int32_t> mults;
    offsets.reserve(rows.offsets.size());
    for (int r = 0; r < rows.window_length(); ++r) {
      std::map<int, int> merged;
      for (std::int32_t e = rows.offsets[r]; e < rows.offsets[r + 1]; ++e) {
        const int c = coord_map[rows.coords[e]];
        if (c < 0) continue;
        if (c >= new_n_params) {
          throw ConfigError("coordinate map exceeds the reduced size");
        }
        merged[c] += rows.mults[e];
      }
      for (const auto& [c, m] : merged) {
        coords.push_back(c);
        mults.push_back(m);
      }
      offsets.push_back(static_cast<std::int32_t>(coords.size()));
    }
    rows.offsets = std::move(offsets);
    rows.coords = std::move(coords);
    rows.mults = std::move(mults);
  }
  return out;
}

LaggedDesign build_lagged_design(const CohortTimeline& cohort,
                                 int window_length,
                                 int baseline_group_width) {
  if (window_length < 0) throw ConfigError("window_length must be >= 0");
  if (window_length >= cohort.grid.n_intervals) {
    throw ConfigError("risk window (" + std::to_string(window_length) +
                      ") is not shorter than the study period (" +
                      std::to_string(cohort.grid.n_intervals) + " intervals)");
  }
  if (baseline_group_width < 1) {
    throw ConfigError("baseline_group_width must be >= 1");
  }

  const int K = cohort.grid.n_intervals;
  const int n_groups = std::max(1, K / baseline_group_width);

  LaggedDesign design;
  design.layout_ = ParamLayout{n_groups, cohort.n_drugs(), window_length + 1};
  design.window_length_ = window_length;
  design.baseline_group_width_ = baseline_group_width;
  design.n_intervals_ = K;

  design.rows_.reserve(cohort.n_patients());
  for (const auto& p : cohort.patients) {
    LaggedDesign::PatientRows rows;
    rows.obs_start = p.obs_start;
    rows.obs_end = p.obs_end;
    rows.offsets.reserve(p.window_length() + 1);
    rows.offsets.push_back(0);

    std::vector<std::pair<int, int>> active;
    for (int k = p.obs_start; k < p.obs_end; ++k) {
      active.clear();
      active.emplace_back(design.baseline_group_of(k), 1);
      for (int j = 0; j < cohort.n_drugs(); ++j) {
        const int base = design.layout_.block_offset(j);
        for (const auto& [c, mult] : p.exposure_starts[j]) {
          const int lag = k - c;
          if (lag < 0) break;  // starts sorted ascending
          if (lag > window_length) continue;
          active.emplace_back(base + lag, mult);
        }
      }
      std::sort(active.begin(), active.end());
      const int batch_start = rows.offsets.back();
      for (const auto& [coord, mult] : active) {
        if (static_cast<int>(rows.coords.size()) > batch_start &&
            rows.coords.back() == coord) {
          rows.mults.back() += mult;  // merge duplicate coordinates
        } else {
          rows.coords.push_back(coord);
          rows.mults.push_back(mult);
        }
      }
      rows.offsets.push_back(static_cast<std::int32_t>(rows.coords.size()));
    }
    design.rows_.push_back(std::move(rows));
  }
  return design;
}

}  // namespace convsccs
