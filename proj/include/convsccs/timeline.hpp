#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace convsccs {

// Uniform partition of the study period into n_intervals intervals of equal
// length. All internal arithmetic is in interval indices 0..n_intervals-1;
// interval_length only matters when converting raw timestamps.
struct IntervalGrid {
  double global_start = 0.0;
  double global_end = 0.0;
  int n_intervals = 0;
  double interval_length = 1.0;

  static IntervalGrid make(int n_intervals, double interval_length = 1.0,
                           double global_start = 0.0);

  void validate() const;
};

// One case's history on the grid. The observation window is the half-open
// interval range [obs_start, obs_end); event counts are indexed over the
// whole grid but are zero outside the window.
struct PatientTimeline {
  std::string patient_id;
  int obs_start = 0;
  int obs_end = 0;
  // y_k for k in [obs_start, obs_end), stored densely over the window:
  // event_counts[k - obs_start] is the count in interval k.
  std::vector<int> event_counts;
  // per drug: sorted strictly-increasing interval indices with multiplicity
  std::vector<std::vector<std::pair<int, int>>> exposure_starts;

  int window_length() const { return obs_end - obs_start; }
  int n_events() const;
  int event_count_at(int interval) const;
  // interval of the first outcome event; requires n_events() >= 1
  int first_event_interval() const;
};

struct CohortTimeline {
  IntervalGrid grid;
  std::vector<PatientTimeline> patients;
  std::vector<std::string> drug_labels;

  int n_drugs() const { return static_cast<int>(drug_labels.size()); }
  int n_patients() const { return static_cast<int>(patients.size()); }

  void validate() const;
};

// Label-based structural equality (drug index permutations compare equal).
bool equivalent(const CohortTimeline& a, const CohortTimeline& b);

struct EventRecord {
  std::string patient_id;
  enum class Kind { exposure, outcome, window_start, window_end } kind;
  std::string drug;   // exposures only
  int interval = 0;   // floored interval index
};

// How raw `start` fields are mapped to interval indices. Plain integers are
// interval indices already; ISO dates (YYYY-MM-DD) need an origin date and
// the grid's interval_length in days.
struct IngestConfig {
  int n_intervals = 0;
  double interval_length = 1.0;
  std::optional<std::string> origin_date;  // required when dates appear
  char delimiter = ',';
};

CohortTimeline ingest_events(const std::vector<EventRecord>& records,
                             const IngestConfig& config);

// Parses the delimited event format (header patient_id,kind,drug,start) and
// ingests it. Parse errors carry the 1-based line number.
CohortTimeline read_event_file(std::istream& in, const IngestConfig& config);
CohortTimeline read_event_file(const std::string& path,
                               const IngestConfig& config);

void write_event_file(std::ostream& out, const CohortTimeline& cohort,
                      char delimiter = ',');
void write_event_file(const std::string& path, const CohortTimeline& cohort,
                      char delimiter = ',');

struct ValidationReport {
  int dropped_non_cases = 0;
  int retained = 0;

  bool empty() const { return dropped_non_cases == 0; }
};

// Drops patients with no outcome events (the likelihood only sees cases) and
// checks the remaining timelines' invariants.
CohortTimeline validate_cases(const CohortTimeline& cohort,
                              ValidationReport* report = nullptr);

enum class GapPolicy { first_only, error, keep };

// The lagged design assumes exposure starts of the same drug are more than
// window_length intervals apart. `first_only` drops any start within
// window_length of a retained earlier one, `error` aborts on violations,
// `keep` passes everything through (additive overlap semantics).
CohortTimeline enforce_exposure_gaps(const CohortTimeline& cohort,
                                     int window_length, GapPolicy policy);

int days_from_civil(int year, int month, int day);
int parse_iso_date(const std::string& text);

}  // namespace convsccs
