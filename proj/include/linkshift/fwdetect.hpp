#pragma once

// Packet forwarding model: per (router, destination) next-hop packet counts,
// a smoothed reference, Pearson correlation against it, and per-hop
// responsibility for anomalous patterns.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "linkshift/ingest.hpp"
#include "linkshift/ip.hpp"
#include "linkshift/random.hpp"

namespace linkshift {

// nullopt is the aggregate bucket for unresponsive next hops and lost packets.
using NextHop = std::optional<IpAddress>;
using HopCounts = std::map<NextHop, double>;

inline std::string to_string(const NextHop& hop) { return hop ? hop->to_string() : std::string("*"); }

struct PatternKey {
  IpAddress router;
  IpAddress destination;

  std::uint64_t hash() const { return splitmix64(router.hash()) ^ destination.hash(); }
  friend auto operator<=>(const PatternKey&, const PatternKey&) = default;
  friend bool operator==(const PatternKey&, const PatternKey&) = default;
};

struct PatternKeyHash {
  std::size_t operator()(const PatternKey& k) const { return static_cast<std::size_t>(k.hash()); }
};

struct ForwardingPattern {
  PatternKey key;
  BinIndex bin = 0;
  HopCounts counts;
};

struct ForwardingReference {
  PatternKey key;
  HopCounts counts;
  std::size_t bins_observed = 0;

  friend bool operator==(const ForwardingReference&, const ForwardingReference&) = default;
};

// Adds one traceroute's transitions to `patterns`. Every probe packet that
// reached the position after a responsive router R counts once: toward the
// replying address, or toward the unresponsive bucket when it timed out.
inline void accumulate_patterns(const TracerouteRecord& rec,
                                std::unordered_map<PatternKey, HopCounts, PatternKeyHash>& patterns) {
  for (std::size_t i = 0; i + 1 < rec.hops.size(); ++i) {
    const Hop& r = rec.hops[i];
    const Hop& next = rec.hops[i + 1];
    if (!r.responsive() || next.index != r.index + 1) continue;
    if (next.responsive() && *next.from == *r.from) continue;
    if (next.rtts.empty() && next.timeouts == 0) continue;
    auto& counts = patterns[PatternKey{*r.from, rec.dst_addr}];
    if (next.responsive()) counts[next.from] += static_cast<double>(next.rtts.size());
    if (next.timeouts > 0) counts[std::nullopt] += static_cast<double>(next.timeouts);
  }
}

inline std::vector<ForwardingPattern> build_patterns(std::span<const TracerouteRecord> records,
                                                     BinIndex bin) {
  std::unordered_map<PatternKey, HopCounts, PatternKeyHash> acc;
  for (const auto& rec : records) accumulate_patterns(rec, acc);
  std::vector<ForwardingPattern> out;
  out.reserve(acc.size());
  for (auto& [key, counts] : acc) out.push_back({key, bin, std::move(counts)});
  std::sort(out.begin(), out.end(),
            [](const ForwardingPattern& a, const ForwardingPattern& b) { return a.key < b.key; });
  return out;
}

struct AlignedCounts {
  std::vector<NextHop> hops;
  std::vector<double> observed;
  std::vector<double> reference;
};

// Aligns both patterns over the union of next hops; absent hops count 0.
inline AlignedCounts align(const HopCounts& observed, const HopCounts& reference) {
  AlignedCounts out;
  auto a = observed.begin();
  auto b = reference.begin();
  while (a != observed.end() || b != reference.end()) {
    if (b == reference.end() || (a != observed.end() && a->first < b->first)) {
      out.hops.push_back(a->first);
      out.observed.push_back(a->second);
      out.reference.push_back(0.0);
      ++a;
    } else if (a == observed.end() || b->first < a->first) {
      out.hops.push_back(b->first);
      out.observed.push_back(0.0);
      out.reference.push_back(b->second);
      ++b;
    } else {
      out.hops.push_back(a->first);
      out.observed.push_back(a->second);
      out.reference.push_back(b->second);
      ++a;
      ++b;
    }
  }
  return out;
}

struct Correlation {
  double rho = 1.0;
  bool undefined_variance = false;
};

namespace detail {
inline bool proportional(std::span<const double> x, std::span<const double> y) {
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  if (sx <= 0.0 || sy <= 0.0) return sx == sy;
  const double c = sx / sy;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::fabs(x[i] - c * y[i]) > 1e-9 * std::max(sx, 1.0)) return false;
  }
  return true;
}
}  // namespace detail

inline Correlation pearson(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (n < 2 || sxx <= 0.0 || syy <= 0.0) {
    return {detail::proportional(x, y) ? 1.0 : 0.0, true};
  }
  return {std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0), false};
}

inline Correlation correlate(const HopCounts& observed, const HopCounts& reference) {
  const auto aligned = align(observed, reference);
  return pearson(aligned.observed, aligned.reference);
}

struct Responsibility {
  NextHop hop;
  double score = 0.0;
  double observed = 0.0;
  double reference = 0.0;
};

struct ForwardingAlarm {
  PatternKey key;
  BinIndex bin = 0;
  double rho = 0.0;
  std::vector<Responsibility> responsibilities;  // ordered by next hop
};

// r_i = -rho * (p_i - ref_i) / sum_j |p_j - ref_j|
inline std::vector<Responsibility> responsibilities(const AlignedCounts& aligned, double rho) {
  double total = 0.0;
  for (std::size_t i = 0; i < aligned.hops.size(); ++i) {
    total += std::fabs(aligned.observed[i] - aligned.reference[i]);
  }
  std::vector<Responsibility> out;
  out.reserve(aligned.hops.size());
  for (std::size_t i = 0; i < aligned.hops.size(); ++i) {
    const double diff = aligned.observed[i] - aligned.reference[i];
    out.push_back({aligned.hops[i], total > 0.0 ? -rho * diff / total : 0.0, aligned.observed[i],
                   aligned.reference[i]});
  }
  return out;
}

inline std::optional<ForwardingAlarm> detect_forwarding(const ForwardingPattern& pattern,
                                                        const ForwardingReference& reference,
                                                        double tau) {
  const auto aligned = align(pattern.counts, reference.counts);
  const auto corr = pearson(aligned.observed, aligned.reference);
  if (!(corr.rho < tau)) return std::nullopt;
  ForwardingAlarm alarm{pattern.key, pattern.bin, corr.rho, responsibilities(aligned, corr.rho)};
  // Identical patterns correlate perfectly, so some hop must have moved.
  assert(std::any_of(alarm.responsibilities.begin(), alarm.responsibilities.end(),
                     [](const Responsibility& r) { return r.observed != r.reference; }));
  return alarm;
}

inline constexpr double kForwardingPruneEpsilon = 1e-9;

inline ForwardingReference update_fw_reference(const std::optional<ForwardingReference>& reference,
                                               const ForwardingPattern& pattern, double alpha) {
  if (!reference || reference->bins_observed == 0) {
    return ForwardingReference{pattern.key, pattern.counts, 1};
  }
  ForwardingReference next{reference->key, {}, reference->bins_observed + 1};
  const auto aligned = align(pattern.counts, reference->counts);
  for (std::size_t i = 0; i < aligned.hops.size(); ++i) {
    const double v = alpha * aligned.observed[i] + (1.0 - alpha) * aligned.reference[i];
    if (v >= kForwardingPruneEpsilon) next.counts.emplace(aligned.hops[i], v);
  }
  return next;
}

}  // namespace linkshift
