#include "convsccs/timeline.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "convsccs/errors.hpp"

namespace convsccs {

IntervalGrid IntervalGrid::make(int n_intervals, double interval_length,
                                double global_start) {
  IntervalGrid g;
  g.n_intervals = n_intervals;
  g.interval_length = interval_length;
  g.global_start = global_start;
  g.global_end = global_start + n_intervals * interval_length;
  g.validate();
  return g;
}

void IntervalGrid::validate() const {
  if (n_intervals < 1) throw ConfigError("grid needs at least one interval");
  if (interval_length <= 0.0) throw ConfigError("interval_length must be > 0");
  const double span = global_end - global_start;
  if (std::abs(span - n_intervals * interval_length) > 1e-9 * (1.0 + span)) {
    throw ConfigError("grid span does not equal n_intervals * interval_length");
  }
}

int PatientTimeline::n_events() const {
  return std::accumulate(event_counts.begin(), event_counts.end(), 0);
}

int PatientTimeline::event_count_at(int interval) const {
  if (interval < obs_start || interval >= obs_end) return 0;
  return event_counts[interval - obs_start];
}

int PatientTimeline::first_event_interval() const {
  for (int k = 0; k < static_cast<int>(event_counts.size()); ++k) {
    if (event_counts[k] > 0) return obs_start + k;
  }
  throw ValidationError("patient " + patient_id + " has no events");
}

void CohortTimeline::validate() const {
  grid.validate();
  std::set<std::string> ids;
  for (const auto& p : patients) {
    if (!ids.insert(p.patient_id).second) {
      throw ValidationError("duplicate patient id " + p.patient_id);
    }
    if (p.obs_start < 0 || p.obs_end > grid.n_intervals ||
        p.obs_start >= p.obs_end) {
      throw ValidationError("patient " + p.patient_id +
                            " has an invalid observation window");
    }
    if (static_cast<int>(p.event_counts.size()) != p.window_length()) {
      throw ValidationError("patient " + p.patient_id +
                            " event counts do not span the window");
    }
    if (static_cast<int>(p.exposure_starts.size()) !=
        static_cast<int>(drug_labels.size())) {
      throw ValidationError("patient " + p.patient_id +
                            " exposure lists do not match drug count");
    }
    for (int c : p.event_counts) {
      if (c < 0) {
        throw ValidationError("patient " + p.patient_id +
                              " has a negative event count");
      }
    }
    for (const auto& starts : p.exposure_starts) {
      int prev = -1;
      for (const auto& [c, mult] : starts) {
        if (c < 0 || c >= grid.n_intervals) {
          throw ValidationError("patient " + p.patient_id +
                                " exposure start outside the grid");
        }
        if (c <= prev) {
          throw ValidationError("patient " + p.patient_id +
                                " exposure starts not strictly increasing");
        }
        if (mult < 1) {
          throw ValidationError("patient " + p.patient_id +
                                " exposure multiplicity below one");
        }
        prev = c;
      }
    }
  }
}

bool equivalent(const CohortTimeline& a, const CohortTimeline& b) {
  if (a.grid.n_intervals != b.grid.n_intervals) return false;
  if (a.n_drugs() != b.n_drugs() || a.n_patients() != b.n_patients())
    return false;

  std::map<std::string, int> a_drug, b_drug;
  for (int j = 0; j < a.n_drugs(); ++j) a_drug[a.drug_labels[j]] = j;
  for (int j = 0; j < b.n_drugs(); ++j) b_drug[b.drug_labels[j]] = j;
  if (a_drug.size() != b_drug.size()) return false;
  for (const auto& [label, ja] : a_drug) {
    if (!b_drug.count(label)) return false;
  }

  std::map<std::string, const PatientTimeline*> b_by_id;
  for (const auto& p : b.patients) b_by_id[p.patient_id] = &p;
  for (const auto& pa : a.patients) {
    auto it = b_by_id.find(pa.patient_id);
    if (it == b_by_id.end()) return false;
    const PatientTimeline& pb = *it->second;
    if (pa.obs_start != pb.obs_start || pa.obs_end != pb.obs_end) return false;
    if (pa.event_counts != pb.event_counts) return false;
    for (const auto& [label, ja] : a_drug) {
      if (pa.exposure_starts[ja] != pb.exposure_starts[b_drug.at(label)])
        return false;
    }
  }
  return true;
}

namespace {

// Howard Hinnant's days-from-civil; interval-index arithmetic wants plain
// integer day counts rather than chrono types.
int days_from_civil_impl(int y, int m, int d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<int>(doe) - 719468;
}

bool looks_like_integer(const std::string& s) {
  if (s.empty()) return false;
  std::size_t i = (s[0] == '+' || s[0] == '-') ? 1 : 0;
  if (i == s.size()) return false;
  for (; i < s.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  }
  return true;
}

struct PendingPatient {
  std::optional<int> window_start;
  std::optional<int> window_end;
  std::vector<int> outcomes;                     // interval indices
  std::vector<std::pair<int, int>> exposures;    // (drug index, interval)
  int order = 0;
};

}  // namespace

int days_from_civil(int year, int month, int day) {
  return days_from_civil_impl(year, month, day);
}

int parse_iso_date(const std::string& text) {
  int y = 0, m = 0, d = 0;
  char dash1 = 0, dash2 = 0;
  std::istringstream ss(text);
  ss >> y >> dash1 >> m >> dash2 >> d;
  if (ss.fail() || dash1 != '-' || dash2 != '-' || m < 1 || m > 12 || d < 1 ||
      d > 31) {
    throw ValidationError("cannot parse ISO date '" + text + "'");
  }
  return days_from_civil_impl(y, m, d);
}

CohortTimeline ingest_events(const std::vector<EventRecord>& records,
                             const IngestConfig& config) {
  if (config.n_intervals < 1) {
    throw ConfigError("ingest config needs n_intervals >= 1");
  }

  CohortTimeline cohort;
  cohort.grid = IntervalGrid::make(config.n_intervals, config.interval_length);

  std::unordered_map<std::string, int> drug_index;
  std::map<std::string, PendingPatient> pending;
  std::vector<std::string> patient_order;

  for (const auto& rec : records) {
    // window_end is an exclusive bound, so n_intervals itself is legal there
    const int limit = rec.kind == EventRecord::Kind::window_end
                          ? config.n_intervals + 1
                          : config.n_intervals;
    if (rec.interval < 0 || rec.interval >= limit) {
      throw ValidationError("event for patient " + rec.patient_id +
                            " at interval " + std::to_string(rec.interval) +
                            " falls outside the grid");
    }
    auto [it, inserted] = pending.try_emplace(rec.patient_id);
    if (inserted) {
      it->second.order = static_cast<int>(patient_order.size());
      patient_order.push_back(rec.patient_id);
    }
    PendingPatient& p = it->second;
    switch (rec.kind) {
      case EventRecord::Kind::window_start:
        if (p.window_start) {
          throw ValidationError("patient " + rec.patient_id +
                                " has more than one window_start record");
        }
        p.window_start = rec.interval;
        break;
      case EventRecord::Kind::window_end:
        if (p.window_end) {
          throw ValidationError("patient " + rec.patient_id +
                                " has more than one window_end record");
        }
        p.window_end = rec.interval;
        break;
      case EventRecord::Kind::outcome:
        p.outcomes.push_back(rec.interval);
        break;
      case EventRecord::Kind::exposure: {
        if (rec.drug.empty()) {
          throw ValidationError("exposure record for patient " +
                                rec.patient_id + " has no drug label");
        }
        auto [dit, dnew] = drug_index.try_emplace(
            rec.drug, static_cast<int>(cohort.drug_labels.size()));
        if (dnew) cohort.drug_labels.push_back(rec.drug);
        p.exposures.emplace_back(dit->second, rec.interval);
        break;
      }
    }
  }

  const int d = cohort.n_drugs();
  for (const auto& id : patient_order) {
    const PendingPatient& p = pending.at(id);
    if (!p.window_start || !p.window_end) {
      if (!p.outcomes.empty()) {
        throw ValidationError("patient " + id +
                              " has outcomes but no observation window");
      }
      if (!p.exposures.empty()) {
        throw ValidationError("patient " + id +
                              " has exposures but no observation window");
      }
      continue;
    }
    PatientTimeline t;
    t.patient_id = id;
    t.obs_start = *p.window_start;
    t.obs_end = *p.window_end;
    if (t.obs_start >= t.obs_end || t.obs_end > config.n_intervals) {
      throw ValidationError("patient " + id +
                            " has an empty or out-of-grid observation window");
    }
    t.event_counts.assign(t.window_length(), 0);
    for (int k : p.outcomes) {
      if (k < t.obs_start || k >= t.obs_end) {
        throw ValidationError("outcome for patient " + id + " at interval " +
                              std::to_string(k) +
                              " lies outside the observation window");
      }
      ++t.event_counts[k - t.obs_start];
    }
    t.exposure_starts.assign(d, {});
    std::vector<std::vector<int>> raw(d);
    for (const auto& [j, c] : p.exposures) raw[j].push_back(c);
    for (int j = 0; j < d; ++j) {
      std::sort(raw[j].begin(), raw[j].end());
      for (int c : raw[j]) {
        auto& starts = t.exposure_starts[j];
        if (!starts.empty() && starts.back().first == c) {
          ++starts.back().second;
        } else {
          starts.emplace_back(c, 1);
        }
      }
    }
    cohort.patients.push_back(std::move(t));
  }

  cohort.validate();
  return cohort;
}

namespace {

EventRecord::Kind parse_kind(const std::string& s, int line) {
  if (s == "exposure") return EventRecord::Kind::exposure;
  if (s == "outcome") return EventRecord::Kind::outcome;
  if (s == "window_start") return EventRecord::Kind::window_start;
  if (s == "window_end") return EventRecord::Kind::window_end;
  throw ValidationError("line " + std::to_string(line) +
                        ": unknown record kind '" + s + "'");
}

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, delim)) out.push_back(field);
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

}  // namespace

CohortTimeline read_event_file(std::istream& in, const IngestConfig& config) {
  std::vector<EventRecord> records;
  std::string line;
  int line_no = 0;
  std::optional<int> origin_days;
  if (config.origin_date) origin_days = parse_iso_date(*config.origin_date);

  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;  // header row: patient_id,kind,drug,start
      continue;
    }
    auto fields = split_line(line, config.delimiter);
    if (fields.size() != 4) {
      throw ValidationError("line " + std::to_string(line_no) + ": expected 4 fields, got " +
                            std::to_string(fields.size()));
    }
    EventRecord rec;
    rec.patient_id = fields[0];
    if (rec.patient_id.empty()) {
      throw ValidationError("line " + std::to_string(line_no) +
                            ": empty patient_id");
    }
    rec.kind = parse_kind(fields[1], line_no);
    rec.drug = fields[2];
    const std::string& start = fields[3];
    if (looks_like_integer(start)) {
      int value = 0;
      auto [ptr, ec] =
          std::from_chars(start.data(), start.data() + start.size(), value);
      if (ec != std::errc()) {
        throw ValidationError("line " + std::to_string(line_no) +
                              ": cannot parse start '" + start + "'");
      }
      rec.interval = value;
    } else {
      if (!origin_days) {
        throw ValidationError("line " + std::to_string(line_no) +
                              ": date start '" + start +
                              "' needs an origin_date in the grid config");
      }
      int days;
      try {
        days = parse_iso_date(start);
      } catch (const ValidationError&) {
        throw ValidationError("line " + std::to_string(line_no) +
                              ": cannot parse start '" + start + "'");
      }
      rec.interval = static_cast<int>(
          std::floor((days - *origin_days) / config.interval_length));
    }
    records.push_back(std::move(rec));
  }
  return ingest_events(records, config);
}

CohortTimeline read_event_file(const std::string& path,
                               const IngestConfig& config) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open event file " + path);
  return read_event_file(in, config);
}

void write_event_file(std::ostream& out, const CohortTimeline& cohort,
                      char delimiter) {
  const char d = delimiter;
  out << "patient_id" << d << "kind" << d << "drug" << d << "start\n";
  for (const auto& p : cohort.patients) {
    out << p.patient_id << d << "window_start" << d << d << p.obs_start << "\n";
    out << p.patient_id << d << "window_end" << d << d << p.obs_end << "\n";
    for (int k = p.obs_start; k < p.obs_end; ++k) {
      for (int c = 0; c < p.event_count_at(k); ++c) {
        out << p.patient_id << d << "outcome" << d << d << k << "\n";
      }
    }
    for (int j = 0; j < cohort.n_drugs(); ++j) {
      for (const auto& [start, mult] : p.exposure_starts[j]) {
        for (int c = 0; c < mult; ++c) {
          out << p.patient_id << d << "exposure" << d << cohort.drug_labels[j]
              << d << start << "\n";
        }
      }
    }
  }
}

void write_event_file(const std::string& path, const CohortTimeline& cohort,
                      char delimiter) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open " + path + " for writing");
  write_event_file(out, cohort, delimiter);
}

CohortTimeline validate_cases(const CohortTimeline& cohort,
                              ValidationReport* report) {
  cohort.validate();
  CohortTimeline out;
  out.grid = cohort.grid;
  out.drug_labels = cohort.drug_labels;
  ValidationReport rep;
  for (const auto& p : cohort.patients) {
    if (p.n_events() < 1) {
      ++rep.dropped_non_cases;
      continue;
    }
    out.patients.push_back(p);
  }
  rep.retained = out.n_patients();
  if (report) *report = rep;
  return out;
}

CohortTimeline enforce_exposure_gaps(const CohortTimeline& cohort,
                                     int window_length, GapPolicy policy) {
  if (window_length < 1) throw ConfigError("window_length must be >= 1");
  if (policy == GapPolicy::keep) return cohort;

  CohortTimeline out = cohort;
  for (auto& p : out.patients) {
    for (int j = 0; j < out.n_drugs(); ++j) {
      auto& starts = p.exposure_starts[j];
      if (starts.empty()) continue;
      if (policy == GapPolicy::error) {
        int prev = starts.front().first;
        if (starts.front().second > 1) {
          throw ValidationError("patient " + p.patient_id + ", drug " +
                                out.drug_labels[j] +
                                ": duplicate exposure starts violate the gap "
                                "assumption");
        }
        for (std::size_t i = 1; i < starts.size(); ++i) {
          if (starts[i].second > 1 || starts[i].first - prev <= window_length) {
            throw ValidationError(
                "patient " + p.patient_id + ", drug " + out.drug_labels[j] +
                ": exposure starts closer than the risk window length");
          }
          prev = starts[i].first;
        }
      } else {  // first_only
        std::vector<std::pair<int, int>> kept;
        int last_kept = std::numeric_limits<int>::min();
        for (const auto& [c, mult] : starts) {
          if (kept.empty() || c - last_kept > window_length) {
            kept.emplace_back(c, 1);
            last_kept = c;
          }
        }
        starts = std::move(kept);
      }
    }
  }
  return out;
}

}  // namespace convsccs
