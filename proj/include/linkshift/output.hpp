#pragma once

// Newline-delimited JSON records emitted by the pipeline. Every record has a
// "type" field: "delay", "forwarding", "event" or "magnitude". Bins are
// written as their start timestamp.

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "linkshift/aggregate.hpp"
#include "linkshift/delaydetect.hpp"
#include "linkshift/fwdetect.hpp"
#include "linkshift/ingest.hpp"

namespace linkshift {

using nlohmann::json;

inline json to_json(const DelayAlarm& a, const BinConfig& bins) {
  const auto& o = a.observed;
  const auto& r = a.reference;
  return json{{"type", "delay"},
              {"bin", bin_at(a.bin, bins).start},
              {"near", a.link.near.to_string()},
              {"far", a.link.far.to_string()},
              {"direction", to_string(a.direction)},
              {"deviation", a.deviation},
              {"median", o.median},
              {"ci_low", o.ci_low},
              {"ci_high", o.ci_high},
              {"n_samples", o.n_samples},
              {"n_probes", o.n_probes},
              {"n_asns", o.n_asns},
              {"ref_median", r.median},
              {"ref_low", r.low},
              {"ref_high", r.high},
              {"degenerate", a.degenerate},
              {"low_n", a.low_n}};
}

inline json to_json(const ForwardingAlarm& a, const BinConfig& bins) {
  json hops = json::array();
  for (const auto& r : a.responsibilities) {
    hops.push_back({{"hop", to_string(r.hop)}, {"r", r.score}, {"count", r.observed}, {"ref", r.reference}});
  }
  return json{{"type", "forwarding"},
              {"bin", bin_at(a.bin, bins).start},
              {"router", a.key.router.to_string()},
              {"dst", a.key.destination.to_string()},
              {"rho", a.rho},
              {"responsibilities", std::move(hops)}};
}

inline json to_json(const EventReport& e, const BinConfig& bins) {
  json prefixes = json::array();
  for (const auto& p : e.prefixes) prefixes.push_back({{"prefix", p.prefix.to_string()}, {"score", p.score}});
  json components = json::array();
  for (const auto& c : e.components) {
    json nodes = json::array();
    for (const auto& n : c.nodes) nodes.push_back(n.to_string());
    json edges = json::array();
    for (const auto& l : c.edges) edges.push_back({l.near.to_string(), l.far.to_string()});
    components.push_back({{"nodes", std::move(nodes)}, {"edges", std::move(edges)}});
  }
  return json{{"type", "event"},
              {"asn", e.asn},
              {"kind", to_string(e.kind)},
              {"bin", bin_at(e.peak_bin, bins).start},
              {"bin_start", bin_at(e.first_bin, bins).start},
              {"bin_end", bin_at(e.last_bin, bins).start},
              {"magnitude", e.peak_magnitude},
              {"prefixes", std::move(prefixes)},
              {"components", std::move(components)}};
}

inline json to_json(const StreamingAggregator::SeriesPoint& p, const BinConfig& bins) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return json{{"type", "magnitude"},
              {"asn", p.asn},
              {"bin", bin_at(p.bin, bins).start},
              {"delay", p.delay},
              {"delay_mag", opt(p.delay_magnitude)},
              {"forwarding", p.forwarding},
              {"forwarding_mag", opt(p.forwarding_magnitude)}};
}

inline void write_line(std::ostream& out, const json& j) { out << j.dump() << '\n'; }

// Alarms read back from a pipeline output file, enough for re-aggregation.
struct AlarmLog {
  std::vector<DelayAlarm> delay;
  std::vector<ForwardingAlarm> forwarding;
  std::size_t skipped = 0;
};

namespace detail {
inline IpAddress need_address(const json& j, const char* key) {
  auto a = IpAddress::parse(j.at(key).get<std::string>());
  if (!a) throw std::invalid_argument(std::string("bad address in ") + key);
  return *a;
}
}  // namespace detail

inline AlarmLog read_alarms(std::istream& in, const BinConfig& bins) {
  AlarmLog log;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("type")) {
      ++log.skipped;
      continue;
    }
    try {
      const auto type = j.at("type").get<std::string>();
      if (type == "delay") {
        DelayAlarm a;
        a.link = {detail::need_address(j, "near"), detail::need_address(j, "far")};
        a.bin = bin_index(j.at("bin").get<Timestamp>(), bins);
        a.deviation = j.at("deviation").get<double>();
        a.direction = a.deviation >= 0 ? Direction::Increase : Direction::Decrease;
        log.delay.push_back(std::move(a));
      } else if (type == "forwarding") {
        ForwardingAlarm a;
        a.key = {detail::need_address(j, "router"), detail::need_address(j, "dst")};
        a.bin = bin_index(j.at("bin").get<Timestamp>(), bins);
        a.rho = j.at("rho").get<double>();
        for (const auto& r : j.at("responsibilities")) {
          Responsibility resp;
          const auto hop = r.at("hop").get<std::string>();
          if (hop != "*") resp.hop = detail::need_address(r, "hop");
          resp.score = r.at("r").get<double>();
          resp.observed = r.value("count", 0.0);
          resp.reference = r.value("ref", 0.0);
          a.responsibilities.push_back(std::move(resp));
        }
        log.forwarding.push_back(std::move(a));
      }
    } catch (const std::exception&) {
      ++log.skipped;
    }
  }
  return log;
}

}  // namespace linkshift
