#pragma once

// Per-AS aggregation of alarms: severity series, robust magnitude scores,
// event extraction, TF-IDF characterization over /24 prefixes, and the
// connected components of alarmed links.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <unordered_map>
#include <vector>

#include "linkshift/delaydetect.hpp"
#include "linkshift/fwdetect.hpp"
#include "linkshift/ip.hpp"

namespace linkshift {

// Addresses without a covering prefix are grouped here.
inline constexpr Asn kUnknownAsn = 0;

enum class AlarmKind { Delay, Forwarding };

inline const char* to_string(AlarmKind k) { return k == AlarmKind::Delay ? "delay" : "forwarding"; }

inline Asn asn_or_unknown(const PrefixTable& table, const IpAddress& addr) {
  return table.lookup(addr).value_or(kUnknownAsn);
}

// One alarm's share of an AS: |d| for delay changes, r_i for forwarding.
struct Evidence {
  BinIndex bin = 0;
  AlarmKind kind = AlarmKind::Delay;
  double severity = 0.0;
  std::vector<IpAddress> addresses;
  std::optional<LinkKey> link;
};

using AsGroups = std::map<Asn, std::vector<Evidence>>;

// A delay alarm joins the group of each distinct AS on its link. Each
// forwarding responsibility goes to its next hop's AS; the unresponsive
// bucket belongs to nobody.
inline AsGroups assign_alarms(std::span<const DelayAlarm> delay, std::span<const ForwardingAlarm> forwarding,
                              const PrefixTable& table) {
  AsGroups groups;
  for (const auto& a : delay) {
    const Asn near_as = asn_or_unknown(table, a.link.near);
    const Asn far_as = asn_or_unknown(table, a.link.far);
    Evidence ev{a.bin, AlarmKind::Delay, std::fabs(a.deviation), {a.link.near, a.link.far}, a.link};
    groups[near_as].push_back(ev);
    if (far_as != near_as) groups[far_as].push_back(std::move(ev));
  }
  for (const auto& a : forwarding) {
    for (const auto& r : a.responsibilities) {
      if (!r.hop) continue;
      groups[asn_or_unknown(table, *r.hop)].push_back(
          {a.bin, AlarmKind::Forwarding, r.score, {*r.hop}, std::nullopt});
    }
  }
  return groups;
}

struct AsSeries {
  Asn asn = 0;
  BinIndex first_bin = 0;
  std::vector<double> delay;  // one value per bin from first_bin, 0 when quiet
  std::vector<double> forwarding;
};

inline AsSeries build_series(Asn asn, std::span<const Evidence> evidence, BinIndex first_bin,
                             BinIndex last_bin) {
  AsSeries s{asn, first_bin, {}, {}};
  const auto n = static_cast<std::size_t>(std::max<BinIndex>(0, last_bin - first_bin + 1));
  s.delay.assign(n, 0.0);
  s.forwarding.assign(n, 0.0);
  for (const auto& ev : evidence) {
    if (ev.bin < first_bin || ev.bin > last_bin) continue;
    auto& series = ev.kind == AlarmKind::Delay ? s.delay : s.forwarding;
    series[static_cast<std::size_t>(ev.bin - first_bin)] += ev.severity;
  }
  return s;
}

namespace detail {
inline double median_inplace(std::vector<double>& v) {
  const std::size_t n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  const double upper = *mid;
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}
}  // namespace detail

inline constexpr double kMadConsistency = 1.4826;

// Magnitude of `current` against a window that already contains it.
inline std::optional<double> magnitude_of(std::span<const double> window, double current) {
  if (window.size() < 2) return std::nullopt;
  std::vector<double> buf(window.begin(), window.end());
  const double med = detail::median_inplace(buf);
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = std::fabs(window[i] - med);
  const double mad = detail::median_inplace(buf);
  return (current - med) / (1.0 + kMadConsistency * mad);
}

// Trailing window of `window` bins ending at (and including) each bin.
inline std::vector<std::optional<double>> magnitude(std::span<const double> series, std::size_t window = 168) {
  std::vector<std::optional<double>> out(series.size());
  for (std::size_t t = 0; t < series.size(); ++t) {
    const std::size_t begin = t + 1 >= window ? t + 1 - window : 0;
    out[t] = magnitude_of(series.subspan(begin, t + 1 - begin), series[t]);
  }
  return out;
}

struct EventSpan {
  std::size_t first = 0;  // indices into the series
  std::size_t last = 0;
  std::size_t peak = 0;
  double peak_magnitude = 0.0;
};

enum class EventRange { Contiguous, PeakOnly };

inline std::vector<EventSpan> find_events(std::span<const std::optional<double>> mags, double threshold,
                                          EventRange mode = EventRange::Contiguous) {
  std::vector<EventSpan> out;
  std::optional<EventSpan> open;
  for (std::size_t t = 0; t <= mags.size(); ++t) {
    const bool hot = t < mags.size() && mags[t] && std::fabs(*mags[t]) > threshold;
    if (hot) {
      if (!open) {
        open = EventSpan{t, t, t, *mags[t]};
      } else {
        open->last = t;
        if (std::fabs(*mags[t]) > std::fabs(open->peak_magnitude)) {
          open->peak = t;
          open->peak_magnitude = *mags[t];
        }
      }
    } else if (open) {
      if (mode == EventRange::PeakOnly) open->first = open->last = open->peak;
      out.push_back(*open);
      open.reset();
    }
  }
  return out;
}

using TermCounts = std::map<Prefix, std::size_t>;

inline double tfidf_score(std::size_t frequency, std::size_t documents, std::size_t documents_with_term) {
  if (frequency == 0 || documents_with_term == 0) return 0.0;
  return static_cast<double>(frequency) *
         std::log(1.0 + static_cast<double>(documents) / static_cast<double>(documents_with_term));
}

struct PrefixScore {
  Prefix prefix;
  double score = 0.0;
};

// Scores the terms of the event documents against the whole collection.
// Frequencies are summed over all event documents.
inline std::vector<PrefixScore> tfidf_characterize(std::span<const TermCounts> documents,
                                                   std::span<const std::size_t> event_documents) {
  std::map<Prefix, std::size_t> doc_freq;
  for (const auto& doc : documents) {
    for (const auto& [prefix, count] : doc) {
      if (count > 0) ++doc_freq[prefix];
    }
  }
  std::map<Prefix, std::size_t> event_freq;
  for (std::size_t idx : event_documents) {
    for (const auto& [prefix, count] : documents[idx]) event_freq[prefix] += count;
  }
  std::vector<PrefixScore> out;
  for (const auto& [prefix, f] : event_freq) {
    if (f == 0) continue;
    out.push_back({prefix, tfidf_score(f, documents.size(), doc_freq[prefix])});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const PrefixScore& a, const PrefixScore& b) { return a.score > b.score; });
  return out;
}

inline void add_terms(TermCounts& doc, const Evidence& ev) {
  for (const auto& addr : ev.addresses) ++doc[aggregation_prefix(addr)];
}

struct Component {
  std::vector<IpAddress> nodes;
  std::vector<LinkKey> edges;
};

// Undirected connectivity over alarmed links. Components come out ordered by
// their smallest address; nodes and edges are sorted.
inline std::vector<Component> connected_alarms(std::span<const LinkKey> links) {
  std::map<IpAddress, std::size_t> ids;
  for (const auto& l : links) {
    ids.try_emplace(l.near, 0);
    ids.try_emplace(l.far, 0);
  }
  std::vector<IpAddress> nodes;
  nodes.reserve(ids.size());
  for (auto& [addr, id] : ids) {
    id = nodes.size();
    nodes.push_back(addr);
  }
  std::vector<std::size_t> parent(nodes.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&parent](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& l : links) {
    const auto a = find(ids[l.near]);
    const auto b = find(ids[l.far]);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::map<std::size_t, Component> comps;
  for (std::size_t i = 0; i < nodes.size(); ++i) comps[find(i)].nodes.push_back(nodes[i]);
  std::set<LinkKey> seen;
  for (const auto& l : links) {
    if (seen.insert(l).second) comps[find(ids[l.near])].edges.push_back(l);
  }
  std::vector<Component> out;
  for (auto& [root, c] : comps) {
    std::sort(c.edges.begin(), c.edges.end());
    out.push_back(std::move(c));
  }
  return out;
}

struct EventReport {
  Asn asn = 0;
  AlarmKind kind = AlarmKind::Delay;
  BinIndex first_bin = 0;
  BinIndex last_bin = 0;
  BinIndex peak_bin = 0;
  double peak_magnitude = 0.0;
  std::vector<PrefixScore> prefixes;
  std::vector<Component> components;
};

struct AggregateConfig {
  std::size_t window = 168;
  double event_threshold = 5.0;
  EventRange range = EventRange::Contiguous;
  std::size_t top_k = 10;
};

// Whole-history analysis of one AS: every bin in the range is a document.
inline std::vector<EventReport> characterize_events(Asn asn, std::span<const Evidence> evidence,
                                                    BinIndex first_bin, BinIndex last_bin,
                                                    const AggregateConfig& cfg) {
  const auto series = build_series(asn, evidence, first_bin, last_bin);
  const auto n = series.delay.size();
  std::vector<EventReport> reports;
  for (AlarmKind kind : {AlarmKind::Delay, AlarmKind::Forwarding}) {
    const auto& values = kind == AlarmKind::Delay ? series.delay : series.forwarding;
    const auto mags = magnitude(values, cfg.window);
    std::vector<TermCounts> docs(n);
    std::vector<std::vector<LinkKey>> links(n);
    for (const auto& ev : evidence) {
      if (ev.kind != kind || ev.bin < first_bin || ev.bin > last_bin) continue;
      const auto idx = static_cast<std::size_t>(ev.bin - first_bin);
      add_terms(docs[idx], ev);
      if (ev.link) links[idx].push_back(*ev.link);
    }
    for (const auto& span : find_events(mags, cfg.event_threshold, cfg.range)) {
      EventReport rep{asn, kind, first_bin + static_cast<BinIndex>(span.first),
                      first_bin + static_cast<BinIndex>(span.last), first_bin + static_cast<BinIndex>(span.peak),
                      span.peak_magnitude, {}, {}};
      std::vector<std::size_t> event_docs;
      std::vector<LinkKey> event_links;
      for (std::size_t i = span.first; i <= span.last; ++i) {
        event_docs.push_back(i);
        event_links.insert(event_links.end(), links[i].begin(), links[i].end());
      }
      rep.prefixes = tfidf_characterize(docs, event_docs);
      if (rep.prefixes.size() > cfg.top_k) rep.prefixes.resize(cfg.top_k);
      rep.components = connected_alarms(event_links);
      reports.push_back(std::move(rep));
    }
  }
  return reports;
}

// Incremental per-AS tracker for the streaming pipeline. Each AS keeps a
// trailing window of bin documents; the window doubles as the TF-IDF
// collection when an event closes.
class StreamingAggregator {
 public:
  struct BinDoc {
    BinIndex bin = 0;
    double delay = 0.0;
    double forwarding = 0.0;
    TermCounts delay_terms;
    TermCounts forwarding_terms;
    std::vector<LinkKey> delay_links;

    bool quiet() const { return delay == 0.0 && forwarding == 0.0 && delay_terms.empty() && forwarding_terms.empty(); }
    friend bool operator==(const BinDoc&, const BinDoc&) = default;
  };

  struct OpenEvent {
    BinIndex first = 0;
    BinIndex last = 0;
    BinIndex peak = 0;
    double peak_magnitude = 0.0;
    friend bool operator==(const OpenEvent&, const OpenEvent&) = default;
  };

  struct AsState {
    std::deque<BinDoc> window;
    std::optional<OpenEvent> delay_event;
    std::optional<OpenEvent> forwarding_event;
    friend bool operator==(const AsState&, const AsState&) = default;
  };

  struct SeriesPoint {
    Asn asn = 0;
    BinIndex bin = 0;
    double delay = 0.0;
    std::optional<double> delay_magnitude;
    double forwarding = 0.0;
    std::optional<double> forwarding_magnitude;
  };

  struct BinResult {
    std::vector<SeriesPoint> series;
    std::vector<EventReport> events;
  };

  explicit StreamingAggregator(AggregateConfig cfg = {}) : cfg_(cfg) {}

  const AggregateConfig& config() const { return cfg_; }

  // Bins must arrive in increasing order without gaps.
  BinResult process_bin(BinIndex bin, const AsGroups& groups) {
    if (!first_bin_) first_bin_ = bin;
    for (const auto& [asn, evidence] : groups) {
      if (!states_.contains(asn)) {
        auto& st = states_[asn];
        const BinIndex span = static_cast<BinIndex>(cfg_.window) - 1;
        for (BinIndex b = std::max(*first_bin_, bin - span); b < bin; ++b) st.window.emplace_back().bin = b;
      }
    }
    BinResult result;
    for (auto it = states_.begin(); it != states_.end();) {
      const Asn asn = it->first;
      auto& st = it->second;
      BinDoc doc;
      doc.bin = bin;
      if (auto g = groups.find(asn); g != groups.end()) {
        for (const auto& ev : g->second) {
          if (ev.kind == AlarmKind::Delay) {
            doc.delay += ev.severity;
            add_terms(doc.delay_terms, ev);
            if (ev.link) doc.delay_links.push_back(*ev.link);
          } else {
            doc.forwarding += ev.severity;
            add_terms(doc.forwarding_terms, ev);
          }
        }
      }
      st.window.push_back(std::move(doc));
      while (st.window.size() > cfg_.window) st.window.pop_front();

      SeriesPoint point{asn, bin, st.window.back().delay, {}, st.window.back().forwarding, {}};
      point.delay_magnitude = window_magnitude(st, AlarmKind::Delay);
      point.forwarding_magnitude = window_magnitude(st, AlarmKind::Forwarding);
      step_event(asn, st, AlarmKind::Delay, bin, point.delay_magnitude, result.events);
      step_event(asn, st, AlarmKind::Forwarding, bin, point.forwarding_magnitude, result.events);
      result.series.push_back(point);

      const bool idle = !st.delay_event && !st.forwarding_event &&
                        std::all_of(st.window.begin(), st.window.end(), [](const BinDoc& d) { return d.quiet(); });
      it = idle ? states_.erase(it) : std::next(it);
    }
    last_bin_ = bin;
    return result;
  }

  // Closes every open event, e.g. at the end of a one-shot run.
  std::vector<EventReport> flush() {
    std::vector<EventReport> out;
    for (auto& [asn, st] : states_) {
      for (AlarmKind kind : {AlarmKind::Delay, AlarmKind::Forwarding}) {
        auto& ev = kind == AlarmKind::Delay ? st.delay_event : st.forwarding_event;
        if (ev) {
          out.push_back(close_event(asn, st, kind, *ev));
          ev.reset();
        }
      }
    }
    return out;
  }

  std::map<Asn, AsState>& states() { return states_; }
  const std::map<Asn, AsState>& states() const { return states_; }
  std::optional<BinIndex>& first_bin() { return first_bin_; }
  const std::optional<BinIndex>& first_bin() const { return first_bin_; }
  std::optional<BinIndex>& last_bin() { return last_bin_; }

 private:
  std::optional<double> window_magnitude(const AsState& st, AlarmKind kind) const {
    std::vector<double> values;
    values.reserve(st.window.size());
    for (const auto& d : st.window) values.push_back(kind == AlarmKind::Delay ? d.delay : d.forwarding);
    return magnitude_of(values, values.back());
  }

  void step_event(Asn asn, AsState& st, AlarmKind kind, BinIndex bin, std::optional<double> mag,
                  std::vector<EventReport>& out) {
    auto& ev = kind == AlarmKind::Delay ? st.delay_event : st.forwarding_event;
    const bool hot = mag && std::fabs(*mag) > cfg_.event_threshold;
    if (hot) {
      if (!ev) {
        ev = OpenEvent{bin, bin, bin, *mag};
      } else {
        ev->last = bin;
        if (std::fabs(*mag) > std::fabs(ev->peak_magnitude)) {
          ev->peak = bin;
          ev->peak_magnitude = *mag;
        }
      }
    } else if (ev) {
      out.push_back(close_event(asn, st, kind, *ev));
      ev.reset();
    }
  }

  EventReport close_event(Asn asn, const AsState& st, AlarmKind kind, const OpenEvent& ev) const {
    EventReport rep{asn, kind, ev.first, ev.last, ev.peak, ev.peak_magnitude, {}, {}};
    if (cfg_.range == EventRange::PeakOnly) rep.first_bin = rep.last_bin = ev.peak;
    std::vector<TermCounts> docs;
    std::vector<std::size_t> event_docs;
    std::vector<LinkKey> links;
    for (const auto& d : st.window) {
      if (d.bin >= rep.first_bin && d.bin <= rep.last_bin) {
        event_docs.push_back(docs.size());
        if (kind == AlarmKind::Delay) links.insert(links.end(), d.delay_links.begin(), d.delay_links.end());
      }
      docs.push_back(kind == AlarmKind::Delay ? d.delay_terms : d.forwarding_terms);
    }
    rep.prefixes = tfidf_characterize(docs, event_docs);
    if (rep.prefixes.size() > cfg_.top_k) rep.prefixes.resize(cfg_.top_k);
    rep.components = connected_alarms(links);
    return rep;
  }

  AggregateConfig cfg_;
  std::map<Asn, AsState> states_;
  std::optional<BinIndex> first_bin_;
  std::optional<BinIndex> last_bin_;
};

}  // namespace linkshift
