#pragma once

// Differential RTTs between adjacent traceroute hops, and the probe-diversity
// filter that discards links whose samples are dominated by a few ASes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

#include "linkshift/ingest.hpp"
#include "linkshift/ip.hpp"
#include "linkshift/random.hpp"

namespace linkshift {

// Directional: (near, far) as seen on the forward path.
struct LinkKey {
  IpAddress near;
  IpAddress far;

  std::uint64_t hash() const { return splitmix64(near.hash()) ^ far.hash(); }
  friend auto operator<=>(const LinkKey&, const LinkKey&) = default;
  friend bool operator==(const LinkKey&, const LinkKey&) = default;
};

struct LinkKeyHash {
  std::size_t operator()(const LinkKey& k) const { return static_cast<std::size_t>(k.hash()); }
};

struct LinkDeltas {
  LinkKey key;
  std::vector<double> deltas;
};

// Adjacent means consecutive hop indices, both responsive. For h samples at
// the near end and k at the far end this yields h*k deltas far - near.
inline std::vector<LinkDeltas> extract_links(const TracerouteRecord& rec) {
  std::vector<LinkDeltas> out;
  for (std::size_t i = 1; i < rec.hops.size(); ++i) {
    const Hop& x = rec.hops[i - 1];
    const Hop& y = rec.hops[i];
    if (y.index != x.index + 1 || !x.responsive() || !y.responsive()) continue;
    if (*x.from == *y.from) continue;
    LinkDeltas link{{*x.from, *y.from}, {}};
    link.deltas.reserve(x.rtts.size() * y.rtts.size());
    for (double rx : x.rtts) {
      for (double ry : y.rtts) link.deltas.push_back(ry - rx);
    }
    out.push_back(std::move(link));
  }
  return out;
}

struct DeltaSample {
  ProbeId probe = 0;
  std::optional<Asn> asn;
  double delta = 0.0;
};

struct LinkObservations {
  LinkKey key;
  BinIndex bin = 0;
  std::vector<DeltaSample> samples;

  void add(ProbeId probe, std::optional<Asn> asn, const std::vector<double>& deltas) {
    for (double d : deltas) samples.push_back({probe, asn, d});
  }

  // Multiset union; order of samples carries no meaning downstream.
  void merge(const LinkObservations& other) {
    samples.insert(samples.end(), other.samples.begin(), other.samples.end());
  }

  // Distinct probes per AS; probes without an AS are not counted.
  std::map<Asn, std::vector<ProbeId>> probes_by_as() const {
    std::map<Asn, std::vector<ProbeId>> groups;
    for (const auto& s : samples) {
      if (s.asn) groups[*s.asn].push_back(s.probe);
    }
    for (auto& [asn, probes] : groups) {
      std::sort(probes.begin(), probes.end());
      probes.erase(std::unique(probes.begin(), probes.end()), probes.end());
    }
    return groups;
  }

  std::map<Asn, std::size_t> as_counts() const {
    std::map<Asn, std::size_t> counts;
    for (const auto& [asn, probes] : probes_by_as()) counts[asn] = probes.size();
    return counts;
  }

  std::size_t probe_count() const {
    std::vector<ProbeId> ids;
    ids.reserve(samples.size());
    for (const auto& s : samples) ids.push_back(s.probe);
    std::sort(ids.begin(), ids.end());
    return static_cast<std::size_t>(std::unique(ids.begin(), ids.end()) - ids.begin());
  }

  std::vector<double> deltas() const {
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.delta);
    return out;
  }
};

// Normalized Shannon entropy of probe counts across ASes, in [0, 1].
// Zero counts are ignored; a single AS gives 0.
template <typename Range>
double entropy_of(const Range& counts) {
  double total = 0.0;
  std::size_t n = 0;
  for (auto c : counts) {
    if (c > 0) {
      total += static_cast<double>(c);
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("entropy of an empty AS distribution");
  if (n == 1) return 0.0;
  double h = 0.0;
  for (auto c : counts) {
    if (c <= 0) continue;
    const double p = static_cast<double>(c) / total;
    h -= p * std::log(p);
  }
  return std::clamp(h / std::log(static_cast<double>(n)), 0.0, 1.0);
}

inline double entropy(const std::map<Asn, std::size_t>& as_counts) {
  std::vector<std::size_t> counts;
  counts.reserve(as_counts.size());
  for (const auto& [asn, c] : as_counts) counts.push_back(c);
  return entropy_of(counts);
}

struct DiversityConfig {
  std::size_t min_as = 3;
  double entropy_threshold = 0.5;
};

struct DiversityVerdict {
  bool accepted = false;
  double entropy = 0.0;
  std::size_t distinct_as = 0;
  std::vector<ProbeId> removed_probes;  // in removal order
};

// Drops random probes from the most represented AS (lowest ASN on ties)
// until the entropy exceeds the threshold. Rejected links keep no samples.
inline std::pair<DiversityVerdict, LinkObservations> enforce_diversity(
    const LinkObservations& obs, const DiversityConfig& cfg, std::uint64_t seed) {
  if (cfg.min_as < 1) throw std::invalid_argument("min_as must be at least 1");
  DiversityVerdict verdict;
  LinkObservations filtered{obs.key, obs.bin, {}};

  auto groups = obs.probes_by_as();
  auto current_entropy = [&groups] {
    std::vector<std::size_t> counts;
    for (const auto& [asn, probes] : groups) counts.push_back(probes.size());
    return counts.empty() ? 0.0 : entropy_of(counts);
  };

  verdict.distinct_as = groups.size();
  verdict.entropy = current_entropy();
  if (groups.size() < cfg.min_as) return {verdict, filtered};

  std::size_t budget = 0;
  for (const auto& [asn, probes] : groups) budget += probes.size();

  Rng rng(seed);
  while (verdict.entropy <= cfg.entropy_threshold && budget-- > 0) {
    auto largest = groups.begin();
    for (auto it = groups.begin(); it != groups.end(); ++it) {
      if (it->second.size() > largest->second.size()) largest = it;
    }
    auto& probes = largest->second;
    const auto pick = static_cast<std::ptrdiff_t>(uniform_index(rng, probes.size()));
    verdict.removed_probes.push_back(probes[static_cast<std::size_t>(pick)]);
    probes.erase(probes.begin() + pick);
    if (probes.empty()) groups.erase(largest);
    verdict.distinct_as = groups.size();
    if (groups.size() < cfg.min_as) {
      verdict.entropy = current_entropy();
      return {verdict, filtered};
    }
    verdict.entropy = current_entropy();
  }
  if (verdict.entropy <= cfg.entropy_threshold) return {verdict, filtered};

  verdict.accepted = true;
  const std::unordered_set<ProbeId> removed(verdict.removed_probes.begin(),
                                            verdict.removed_probes.end());
  filtered.samples.reserve(obs.samples.size());
  for (const auto& s : obs.samples) {
    if (!removed.contains(s.probe)) filtered.samples.push_back(s);
  }
  return {verdict, std::move(filtered)};
}

}  // namespace linkshift
