#pragma once

// Stream-level entry points shared by the command-line tool and the tests.

#include <algorithm>
#include <istream>
#include <optional>
#include <ostream>
#include <set>

#include "linkshift/aggregate.hpp"
#include "linkshift/ingest.hpp"
#include "linkshift/output.hpp"
#include "linkshift/pipeline.hpp"
#include "linkshift/state.hpp"

namespace linkshift {

struct RunStats {
  std::size_t records = 0;
  std::size_t skipped_lines = 0;
  std::size_t first_skipped_line = 0;
  std::size_t late_records = 0;
  std::size_t bins = 0;
  std::size_t delay_alarms = 0;
  std::size_t forwarding_alarms = 0;
  std::size_t events = 0;
};

struct RunOptions {
  std::optional<Checkpoint> resume;
  // Close events still open at the end of input. Off when the run is one
  // segment of a resumable sequence.
  bool flush_events = true;
  std::ostream* series = nullptr;
};

// Reads records, runs the pipeline, and writes alarms and events as
// newline-delimited JSON. Returns the final state in `final_state` if set.
inline RunStats run_stream(std::istream& in, const PrefixTable& table, const PipelineConfig& cfg, std::ostream& out,
                           const RunOptions& opts = {}, Checkpoint* final_state = nullptr) {
  Pipeline pipeline(cfg, table);
  if (opts.resume) restore(pipeline, *opts.resume);
  RunStats stats;
  auto sink = [&](const BinOutput& bin) {
    ++stats.bins;
    for (const auto& a : bin.delay) write_line(out, to_json(a, cfg.bins));
    for (const auto& a : bin.forwarding) write_line(out, to_json(a, cfg.bins));
    for (const auto& e : bin.aggregate.events) write_line(out, to_json(e, cfg.bins));
    if (opts.series) {
      for (const auto& p : bin.aggregate.series) write_line(*opts.series, to_json(p, cfg.bins));
    }
    stats.delay_alarms += bin.delay.size();
    stats.forwarding_alarms += bin.forwarding.size();
    stats.events += bin.aggregate.events.size();
  };
  BinDriver driver(pipeline, sink);
  RecordReader reader(in, &table);
  while (auto rec = reader.next()) {
    ++stats.records;
    driver.add(std::move(*rec));
  }
  driver.finish();
  if (opts.flush_events) {
    for (const auto& e : pipeline.aggregator().flush()) {
      write_line(out, to_json(e, cfg.bins));
      ++stats.events;
    }
  }
  stats.skipped_lines = reader.skipped();
  stats.first_skipped_line = reader.first_skipped_line();
  stats.late_records = driver.late_records();
  if (final_state) *final_state = capture(pipeline);
  return stats;
}

// Bins covered by an offline analysis. Unset ends default to the first and
// last alarm; the span always includes every alarm.
struct BinSpan {
  std::optional<BinIndex> first;
  std::optional<BinIndex> last;
};

namespace detail {
inline std::pair<BinIndex, BinIndex> bin_range(const AlarmLog& log, const BinSpan& span) {
  BinIndex lo = 0, hi = -1;
  bool any = false;
  auto see = [&](BinIndex b) {
    lo = any ? std::min(lo, b) : b;
    hi = any ? std::max(hi, b) : b;
    any = true;
  };
  for (const auto& a : log.delay) see(a.bin);
  for (const auto& a : log.forwarding) see(a.bin);
  if (!any) return {lo, hi};
  if (span.first) lo = std::min(lo, *span.first);
  if (span.last) hi = std::max(hi, *span.last);
  return {lo, hi};
}
}  // namespace detail

// Per-AS severity series and magnitudes over the full span of an alarm log.
inline void write_magnitudes(const AlarmLog& log, const PrefixTable& table, const BinConfig& bins,
                             std::size_t window, std::ostream& out, const BinSpan& span = {}) {
  const auto [first, last] = detail::bin_range(log, span);
  for (const auto& [asn, evidence] : assign_alarms(log.delay, log.forwarding, table)) {
    const auto series = build_series(asn, evidence, first, last);
    const auto dmag = magnitude(series.delay, window);
    const auto fmag = magnitude(series.forwarding, window);
    for (std::size_t i = 0; i < series.delay.size(); ++i) {
      StreamingAggregator::SeriesPoint p{asn, first + static_cast<BinIndex>(i), series.delay[i], dmag[i],
                                         series.forwarding[i], fmag[i]};
      write_line(out, to_json(p, bins));
    }
  }
}

inline std::vector<EventReport> characterize_log(const AlarmLog& log, const PrefixTable& table,
                                                 const AggregateConfig& cfg, std::optional<Asn> only = std::nullopt,
                                                 const BinSpan& span = {}) {
  const auto [first, last] = detail::bin_range(log, span);
  std::vector<EventReport> out;
  for (const auto& [asn, evidence] : assign_alarms(log.delay, log.forwarding, table)) {
    if (only && *only != asn) continue;
    auto reports = characterize_events(asn, evidence, first, last, cfg);
    out.insert(out.end(), reports.begin(), reports.end());
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const EventReport& a, const EventReport& b) { return a.peak_bin < b.peak_bin; });
  return out;
}

}  // namespace linkshift
