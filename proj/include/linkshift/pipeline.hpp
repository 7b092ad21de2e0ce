#pragma once

// Bin-by-bin analysis loop: differential RTTs, diversity filter, median
// characterization, detection against references, reference update; the
// forwarding model and per-AS aggregation run on the same bin.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <thread>
#include <unordered_map>
#include <vector>

#include "linkshift/aggregate.hpp"
#include "linkshift/delaydetect.hpp"
#include "linkshift/diffrtt.hpp"
#include "linkshift/fwdetect.hpp"
#include "linkshift/ingest.hpp"
#include "linkshift/random.hpp"

namespace linkshift {

struct PipelineConfig {
  BinConfig bins;
  DiversityConfig diversity;
  DelayDetectConfig delay;
  double tau = -0.25;
  double fw_alpha = 0.01;
  std::uint64_t seed = 0;
  AggregateConfig aggregate;
  unsigned threads = 1;
  // Declared probing rate (traceroutes per hour); enables the bin-width check.
  std::optional<double> probe_rate;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void validate(const PipelineConfig& cfg) {
  if (cfg.bins.width <= 0) throw ConfigError("bin width must be positive");
  if (cfg.diversity.min_as < 1) throw ConfigError("min-as must be at least 1");
  if (!(cfg.delay.alpha > 0.0 && cfg.delay.alpha < 1.0)) throw ConfigError("alpha must be in (0, 1)");
  if (!(cfg.fw_alpha > 0.0 && cfg.fw_alpha < 1.0)) throw ConfigError("fw-alpha must be in (0, 1)");
  if (cfg.aggregate.window < 2) throw ConfigError("window must hold at least 2 bins");
  if (cfg.probe_rate) {
    const double hours = static_cast<double>(cfg.bins.width) / 3600.0;
    try {
      min_detectable_event(*cfg.probe_rate, static_cast<double>(cfg.diversity.min_as), hours);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
}

template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads <= 1 || n < 64) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(threads, n);
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
}

struct BinOutput {
  BinIndex bin = 0;
  std::vector<DelayAlarm> delay;
  std::vector<ForwardingAlarm> forwarding;
  StreamingAggregator::BinResult aggregate;
  std::size_t records = 0;
  std::size_t links_seen = 0;
  std::size_t links_accepted = 0;
  std::size_t patterns = 0;
};

class Pipeline {
 public:
  Pipeline(PipelineConfig cfg, const PrefixTable& table)
      : cfg_(std::move(cfg)), table_(table), aggregator_(cfg_.aggregate) {
    validate(cfg_);
  }

  const PipelineConfig& config() const { return cfg_; }

  BinOutput process_bin(BinIndex bin, std::span<const TracerouteRecord> records) {
    if (last_completed_ && bin <= *last_completed_) {
      throw std::logic_error("bins must be processed in increasing order");
    }
    BinOutput out;
    out.bin = bin;
    out.records = records.size();

    // Step 1: differential RTTs per link.
    std::unordered_map<LinkKey, LinkObservations, LinkKeyHash> links;
    std::unordered_map<PatternKey, HopCounts, PatternKeyHash> patterns;
    for (const auto& rec : records) {
      for (auto& ld : extract_links(rec)) {
        auto& obs = links[ld.key];
        obs.key = ld.key;
        obs.bin = bin;
        obs.add(rec.probe_id, rec.probe_asn, ld.deltas);
      }
      accumulate_patterns(rec, patterns);
    }
    out.links_seen = links.size();

    std::vector<const LinkObservations*> ordered;
    ordered.reserve(links.size());
    for (const auto& [key, obs] : links) ordered.push_back(&obs);
    std::sort(ordered.begin(), ordered.end(),
              [](const LinkObservations* a, const LinkObservations* b) { return a->key < b->key; });

    // Steps 2-4 are independent per link; results land in per-link slots.
    struct LinkResult {
      bool accepted = false;
      MedianEstimate estimate;
      std::optional<DelayAlarm> alarm;
    };
    std::vector<LinkResult> results(ordered.size());
    std::vector<const DelayReference*> refs(ordered.size(), nullptr);
    for (std::size_t i = 0; i < ordered.size(); ++i) {
      if (auto it = delay_refs_.find(ordered[i]->key); it != delay_refs_.end()) refs[i] = &it->second;
    }
    parallel_for(ordered.size(), cfg_.threads, [&](std::size_t i) {
      const auto& obs = *ordered[i];
      const auto seed = derive_seed(cfg_.seed, obs.key.hash(), static_cast<std::uint64_t>(bin));
      auto [verdict, kept] = enforce_diversity(obs, cfg_.diversity, seed);
      if (!verdict.accepted || kept.samples.empty()) return;
      auto& res = results[i];
      res.accepted = true;
      res.estimate = characterize(kept, cfg_.delay.z);
      if (refs[i] && res.estimate.n_samples >= cfg_.delay.min_samples) {
        res.alarm = detect(obs.key, bin, res.estimate, *refs[i], cfg_.delay.min_diff_ms);
      }
    });

    // Step 5: every accepted observation feeds its reference.
    for (std::size_t i = 0; i < ordered.size(); ++i) {
      auto& res = results[i];
      if (!res.accepted) continue;
      ++out.links_accepted;
      auto& ref = delay_refs_[ordered[i]->key];
      ref = update_reference(std::move(ref), res.estimate, cfg_.delay.alpha);
      if (res.alarm) out.delay.push_back(std::move(*res.alarm));
    }

    // Forwarding model.
    std::vector<ForwardingPattern> fw;
    fw.reserve(patterns.size());
    for (auto& [key, counts] : patterns) fw.push_back({key, bin, std::move(counts)});
    std::sort(fw.begin(), fw.end(),
              [](const ForwardingPattern& a, const ForwardingPattern& b) { return a.key < b.key; });
    out.patterns = fw.size();
    for (const auto& pattern : fw) {
      auto it = fw_refs_.find(pattern.key);
      std::optional<ForwardingReference> prev;
      if (it != fw_refs_.end()) {
        prev = std::move(it->second);
        if (auto alarm = detect_forwarding(pattern, *prev, cfg_.tau)) out.forwarding.push_back(std::move(*alarm));
      }
      fw_refs_[pattern.key] = update_fw_reference(prev, pattern, cfg_.fw_alpha);
    }

    // Aggregation.
    out.aggregate = aggregator_.process_bin(bin, assign_alarms(out.delay, out.forwarding, table_));
    last_completed_ = bin;
    return out;
  }

  std::optional<BinIndex> last_completed() const { return last_completed_; }

  std::unordered_map<LinkKey, DelayReference, LinkKeyHash>& delay_references() { return delay_refs_; }
  const std::unordered_map<LinkKey, DelayReference, LinkKeyHash>& delay_references() const { return delay_refs_; }
  std::unordered_map<PatternKey, ForwardingReference, PatternKeyHash>& forwarding_references() { return fw_refs_; }
  const std::unordered_map<PatternKey, ForwardingReference, PatternKeyHash>& forwarding_references() const {
    return fw_refs_;
  }
  StreamingAggregator& aggregator() { return aggregator_; }
  const StreamingAggregator& aggregator() const { return aggregator_; }
  void set_last_completed(std::optional<BinIndex> bin) { last_completed_ = bin; }

 private:
  PipelineConfig cfg_;
  const PrefixTable& table_;
  std::unordered_map<LinkKey, DelayReference, LinkKeyHash> delay_refs_;
  std::unordered_map<PatternKey, ForwardingReference, PatternKeyHash> fw_refs_;
  StreamingAggregator aggregator_;
  std::optional<BinIndex> last_completed_;
};

// Groups a time-ordered record stream into bins and drives the pipeline.
// Records may arrive up to `lag` bins out of order; anything older than the
// last processed bin is dropped and counted. Empty bins in gaps are still
// processed so per-AS windows see their zeros.
class BinDriver {
 public:
  using Sink = std::function<void(const BinOutput&)>;

  BinDriver(Pipeline& pipeline, Sink sink, BinIndex lag = 1)
      : pipeline_(pipeline), sink_(std::move(sink)), lag_(lag) {}

  void add(TracerouteRecord rec) {
    const BinIndex bin = bin_index(rec.timestamp, pipeline_.config().bins);
    if (auto done = pipeline_.last_completed(); done && bin <= *done) {
      ++late_;
      return;
    }
    pending_[bin].push_back(std::move(rec));
    newest_ = newest_ ? std::max(*newest_, bin) : bin;
    while (!pending_.empty() && pending_.begin()->first < *newest_ - lag_) flush_front();
  }

  void finish() {
    while (!pending_.empty()) flush_front();
  }

  std::size_t late_records() const { return late_; }

 private:
  void flush_front() {
    auto node = pending_.extract(pending_.begin());
    const BinIndex bin = node.key();
    if (auto done = pipeline_.last_completed()) {
      for (BinIndex gap = *done + 1; gap < bin; ++gap) sink_(pipeline_.process_bin(gap, {}));
    }
    sink_(pipeline_.process_bin(bin, node.mapped()));
  }

  Pipeline& pipeline_;
  Sink sink_;
  BinIndex lag_;
  std::map<BinIndex, std::vector<TracerouteRecord>> pending_;
  std::optional<BinIndex> newest_;
  std::size_t late_ = 0;
};

}  // namespace linkshift
