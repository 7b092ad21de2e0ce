#pragma once

// Ground-truth traceroute generator: a small AS topology with per-link
// forward delays, per-(router, probe) return-path terms and heavy-tailed
// noise, plus scripted congestion, loss and reroute events.
//
// RTT of a packet answered by hop X for probe P:
//   sum of forward link delays up to X + eps(X, P) + noise
// where noise ~ lognormal(noise_mu, noise_sigma), multiplied by
// U(outlier_min, outlier_max) with probability outlier_prob.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "linkshift/ingest.hpp"
#include "linkshift/ip.hpp"
#include "linkshift/random.hpp"

namespace linkshift::synth {

class SynthError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Router {
  std::string name;
  IpAddress address;
  Asn asn = 0;
  friend bool operator==(const Router&, const Router&) = default;
};

struct Probe {
  ProbeId id = 0;
  IpAddress address;
  Asn asn = 0;
  friend bool operator==(const Probe&, const Probe&) = default;
};

struct Path {
  ProbeId probe = 0;
  std::vector<std::size_t> routers;  // indices; the last one is the destination
  friend bool operator==(const Path&, const Path&) = default;
};

struct Params {
  Timestamp start = 1420070400;  // 2015-01-01T00:00:00Z
  std::int64_t bin_width = 3600;
  int rate = 2;     // traceroutes per hour per (probe, destination)
  int packets = 3;  // probe packets per hop
  double access_delay = 1.0;
  double default_delay = 2.0;
  double eps_max = 2.0;
  std::uint64_t eps_seed = 1;
  double noise_mu = -0.6931471805599453;  // ln 0.5
  double noise_sigma = 0.6;
  double outlier_prob = 0.01;
  double outlier_min = 10.0;
  double outlier_max = 100.0;
  friend bool operator==(const Params&, const Params&) = default;
};

struct Topology {
  Params params;
  std::vector<PrefixTable::Entry> prefixes;
  std::vector<Router> routers;
  std::vector<Probe> probes;
  std::map<std::pair<std::size_t, std::size_t>, double> link_delays;
  std::map<std::pair<std::size_t, ProbeId>, double> return_terms;
  std::vector<Path> paths;

  std::optional<std::size_t> router_index(const std::string& name) const {
    for (std::size_t i = 0; i < routers.size(); ++i) {
      if (routers[i].name == name) return i;
    }
    return std::nullopt;
  }

  const Probe* probe(ProbeId id) const {
    for (const auto& p : probes) {
      if (p.id == id) return &p;
    }
    return nullptr;
  }

  double link_delay(std::size_t from, std::size_t to) const {
    auto it = link_delays.find({from, to});
    return it == link_delays.end() ? params.default_delay : it->second;
  }

  // Constant per (router, probe); drawn from eps_seed unless set explicitly.
  double return_term(std::size_t router, ProbeId probe) const {
    if (auto it = return_terms.find({router, probe}); it != return_terms.end()) return it->second;
    const std::uint64_t bits = derive_seed(params.eps_seed, routers[router].address.hash(), probe);
    return params.eps_max * static_cast<double>(bits >> 11) * 0x1.0p-53;
  }

  PrefixTable prefix_table() const { return PrefixTable(prefixes); }

  std::size_t records_per_bin() const {
    return paths.size() * static_cast<std::size_t>(std::max(params.rate, 0));
  }

  friend bool operator==(const Topology&, const Topology&) = default;
};

enum class EventKind { Congestion, Loss, Reroute };

struct ScriptEvent {
  EventKind kind = EventKind::Congestion;
  std::size_t router = 0;   // congestion: near end; loss and reroute: the router
  std::size_t other = 0;    // congestion: far end; reroute: old next hop
  std::size_t replacement = 0;  // reroute: new next hop
  double added_ms = 0.0;
  double jitter_ms = 0.0;
  double drop_probability = 0.0;
  std::int64_t start_bin = 0;  // [start_bin, end_bin), relative to params.start
  std::int64_t end_bin = 0;

  bool active(std::int64_t bin) const { return bin >= start_bin && bin < end_bin; }
};

struct AnomalyScript {
  std::vector<ScriptEvent> events;
};

namespace detail {

[[noreturn]] inline void fail(std::size_t line, const std::string& what) {
  throw SynthError("line " + std::to_string(line) + ": " + what);
}

inline IpAddress parse_address(const std::string& text, std::size_t line) {
  auto a = IpAddress::parse(text);
  if (!a) fail(line, "bad address '" + text + "'");
  return *a;
}

template <typename T>
T parse_number(const std::string& text, std::size_t line) {
  std::istringstream in(text);
  T v{};
  if (!(in >> v) || !in.eof()) fail(line, "bad number '" + text + "'");
  return v;
}

inline std::size_t need_router(const Topology& topo, const std::string& name, std::size_t line) {
  auto idx = topo.router_index(name);
  if (!idx) fail(line, "unknown router '" + name + "'");
  return *idx;
}

}  // namespace detail

// Line-oriented topology grammar; '#' starts a comment.
//   param   <name> <value>
//   prefix  <network> <length> <asn>
//   router  <name> <address> [asn]
//   probe   <id> <address> [asn]
//   link    <from-router> <to-router> <delay-ms>
//   eps     <router> <probe-id> <ms>
//   path    <probe-id> <router> ... <destination-router>
// Missing ASNs are resolved from the prefix lines declared before them.
inline Topology parse_topology(std::istream& in) {
  using detail::fail;
  Topology topo;
  PrefixTable table;
  std::string raw;
  std::size_t lineno = 0;
  auto resolve_asn = [&](const IpAddress& addr, std::vector<std::string>& f, std::size_t idx) -> Asn {
    if (f.size() > idx) return detail::parse_number<Asn>(f[idx], lineno);
    auto asn = table.lookup(addr);
    if (!asn) fail(lineno, "no prefix covers " + addr.to_string());
    return *asn;
  };
  while (std::getline(in, raw)) {
    ++lineno;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    std::istringstream tokens(raw);
    std::vector<std::string> f;
    for (std::string t; tokens >> t;) f.push_back(t);
    if (f.empty()) continue;
    const std::string& kw = f[0];
    if (kw == "param") {
      if (f.size() != 3) fail(lineno, "param expects a name and a value");
      auto& p = topo.params;
      const std::string& v = f[2];
      if (f[1] == "start") p.start = detail::parse_number<Timestamp>(v, lineno);
      else if (f[1] == "bin_width") p.bin_width = detail::parse_number<std::int64_t>(v, lineno);
      else if (f[1] == "rate") p.rate = detail::parse_number<int>(v, lineno);
      else if (f[1] == "packets") p.packets = detail::parse_number<int>(v, lineno);
      else if (f[1] == "access_delay") p.access_delay = detail::parse_number<double>(v, lineno);
      else if (f[1] == "default_delay") p.default_delay = detail::parse_number<double>(v, lineno);
      else if (f[1] == "eps_max") p.eps_max = detail::parse_number<double>(v, lineno);
      else if (f[1] == "eps_seed") p.eps_seed = detail::parse_number<std::uint64_t>(v, lineno);
      else if (f[1] == "noise_mu") p.noise_mu = detail::parse_number<double>(v, lineno);
      else if (f[1] == "noise_sigma") p.noise_sigma = detail::parse_number<double>(v, lineno);
      else if (f[1] == "outlier_prob") p.outlier_prob = detail::parse_number<double>(v, lineno);
      else if (f[1] == "outlier_min") p.outlier_min = detail::parse_number<double>(v, lineno);
      else if (f[1] == "outlier_max") p.outlier_max = detail::parse_number<double>(v, lineno);
      else fail(lineno, "unknown param '" + f[1] + "'");
    } else if (kw == "prefix") {
      if (f.size() != 4) fail(lineno, "prefix expects network, length and asn");
      PrefixTable::Entry e{{detail::parse_address(f[1], lineno), detail::parse_number<int>(f[2], lineno)},
                           detail::parse_number<Asn>(f[3], lineno)};
      e.prefix.network = e.prefix.network.masked(e.prefix.length);
      table.insert(e.prefix, e.asn);
      topo.prefixes.push_back(e);
    } else if (kw == "router") {
      if (f.size() < 3 || f.size() > 4) fail(lineno, "router expects name, address [asn]");
      if (topo.router_index(f[1])) fail(lineno, "duplicate router '" + f[1] + "'");
      const auto addr = detail::parse_address(f[2], lineno);
      topo.routers.push_back({f[1], addr, resolve_asn(addr, f, 3)});
    } else if (kw == "probe") {
      if (f.size() < 3 || f.size() > 4) fail(lineno, "probe expects id, address [asn]");
      const auto id = detail::parse_number<ProbeId>(f[1], lineno);
      if (topo.probe(id)) fail(lineno, "duplicate probe " + f[1]);
      const auto addr = detail::parse_address(f[2], lineno);
      topo.probes.push_back({id, addr, resolve_asn(addr, f, 3)});
    } else if (kw == "link") {
      if (f.size() != 4) fail(lineno, "link expects from, to and delay");
      topo.link_delays[{detail::need_router(topo, f[1], lineno), detail::need_router(topo, f[2], lineno)}] =
          detail::parse_number<double>(f[3], lineno);
    } else if (kw == "eps") {
      if (f.size() != 4) fail(lineno, "eps expects router, probe and value");
      topo.return_terms[{detail::need_router(topo, f[1], lineno), detail::parse_number<ProbeId>(f[2], lineno)}] =
          detail::parse_number<double>(f[3], lineno);
    } else if (kw == "path") {
      if (f.size() < 3) fail(lineno, "path expects a probe and at least one router");
      Path path{detail::parse_number<ProbeId>(f[1], lineno), {}};
      if (!topo.probe(path.probe)) fail(lineno, "unknown probe " + f[1]);
      std::set<std::size_t> seen;
      for (std::size_t i = 2; i < f.size(); ++i) {
        const auto r = detail::need_router(topo, f[i], lineno);
        if (!seen.insert(r).second) fail(lineno, "path revisits router '" + f[i] + "'");
        path.routers.push_back(r);
      }
      topo.paths.push_back(std::move(path));
    } else {
      fail(lineno, "unknown keyword '" + kw + "'");
    }
  }
  if (topo.params.bin_width <= 0 || topo.params.rate <= 0 || topo.params.packets <= 0) {
    throw SynthError("bin_width, rate and packets must be positive");
  }
  return topo;
}

inline void write_topology(std::ostream& out, const Topology& topo) {
  const auto& p = topo.params;
  const auto old_precision = out.precision(17);
  out << "param start " << p.start << "\nparam bin_width " << p.bin_width << "\nparam rate " << p.rate
      << "\nparam packets " << p.packets << "\nparam access_delay " << p.access_delay
      << "\nparam default_delay " << p.default_delay << "\nparam eps_max " << p.eps_max
      << "\nparam eps_seed " << p.eps_seed << "\nparam noise_mu " << p.noise_mu << "\nparam noise_sigma "
      << p.noise_sigma << "\nparam outlier_prob " << p.outlier_prob << "\nparam outlier_min " << p.outlier_min
      << "\nparam outlier_max " << p.outlier_max << "\n\n";
  for (const auto& e : topo.prefixes) {
    out << "prefix " << e.prefix.network.to_string() << ' ' << e.prefix.length << ' ' << e.asn << '\n';
  }
  out << '\n';
  for (const auto& r : topo.routers) out << "router " << r.name << ' ' << r.address.to_string() << ' ' << r.asn << '\n';
  out << '\n';
  for (const auto& pr : topo.probes) out << "probe " << pr.id << ' ' << pr.address.to_string() << ' ' << pr.asn << '\n';
  out << '\n';
  for (const auto& [k, d] : topo.link_delays) {
    out << "link " << topo.routers[k.first].name << ' ' << topo.routers[k.second].name << ' ' << d << '\n';
  }
  for (const auto& [k, e] : topo.return_terms) out << "eps " << topo.routers[k.first].name << ' ' << k.second << ' ' << e << '\n';
  out << '\n';
  for (const auto& path : topo.paths) {
    out << "path " << path.probe;
    for (auto r : path.routers) out << ' ' << topo.routers[r].name;
    out << '\n';
  }
  out.precision(old_precision);
}

// Script grammar, bins relative to the topology start, end exclusive:
//   congestion <near> <far> <added-ms> <jitter-ms> <start-bin> <end-bin>
//   loss       <router> <drop-probability> <start-bin> <end-bin>
//   reroute    <router> <old-next-hop> <new-next-hop> <start-bin> <end-bin>
inline AnomalyScript parse_script(std::istream& in, const Topology& topo) {
  using detail::fail;
  AnomalyScript script;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    std::istringstream tokens(raw);
    std::vector<std::string> f;
    for (std::string t; tokens >> t;) f.push_back(t);
    if (f.empty()) continue;
    ScriptEvent ev;
    auto bins = [&](std::size_t at) {
      ev.start_bin = detail::parse_number<std::int64_t>(f[at], lineno);
      ev.end_bin = detail::parse_number<std::int64_t>(f[at + 1], lineno);
      if (ev.end_bin <= ev.start_bin) fail(lineno, "empty bin range");
    };
    if (f[0] == "congestion") {
      if (f.size() != 7) fail(lineno, "congestion expects near, far, added, jitter, start, end");
      ev.kind = EventKind::Congestion;
      ev.router = detail::need_router(topo, f[1], lineno);
      ev.other = detail::need_router(topo, f[2], lineno);
      ev.added_ms = detail::parse_number<double>(f[3], lineno);
      ev.jitter_ms = detail::parse_number<double>(f[4], lineno);
      bins(5);
      bool used = false;
      for (const auto& p : topo.paths) {
        for (std::size_t i = 1; i < p.routers.size(); ++i) {
          used |= p.routers[i - 1] == ev.router && p.routers[i] == ev.other;
        }
      }
      if (!used) fail(lineno, "no path crosses link " + f[1] + " -> " + f[2]);
    } else if (f[0] == "loss") {
      if (f.size() != 5) fail(lineno, "loss expects router, probability, start, end");
      ev.kind = EventKind::Loss;
      ev.router = detail::need_router(topo, f[1], lineno);
      ev.drop_probability = detail::parse_number<double>(f[2], lineno);
      if (ev.drop_probability < 0.0 || ev.drop_probability > 1.0) fail(lineno, "probability outside [0, 1]");
      bins(3);
    } else if (f[0] == "reroute") {
      if (f.size() != 6) fail(lineno, "reroute expects router, old, new, start, end");
      ev.kind = EventKind::Reroute;
      ev.router = detail::need_router(topo, f[1], lineno);
      ev.other = detail::need_router(topo, f[2], lineno);
      ev.replacement = detail::need_router(topo, f[3], lineno);
      bins(4);
    } else {
      fail(lineno, "unknown event '" + f[0] + "'");
    }
    script.events.push_back(ev);
  }
  return script;
}

// 20 probes in 5 access ASes, a transit AS with three core routers, and two
// destination ASes:
//   probe -> access(AS k) -> core1 (k <= 3) | core2 (k > 3) -> core3 -> border_d -> dest_d
inline Topology default_topology() {
  Topology topo;
  auto add_prefix = [&](const char* net, int len, Asn asn) {
    topo.prefixes.push_back({{*IpAddress::parse(net), len}, asn});
  };
  auto add_router = [&](std::string name, const char* addr, Asn asn) {
    topo.routers.push_back({std::move(name), *IpAddress::parse(addr), asn});
    return topo.routers.size() - 1;
  };
  std::vector<std::size_t> access;
  for (int k = 1; k <= 5; ++k) {
    const Asn asn = 64500 + static_cast<Asn>(k);
    const std::string net = "10." + std::to_string(k) + ".0.0";
    add_prefix(net.c_str(), 16, asn);
    const std::string addr = "10." + std::to_string(k) + ".0.1";
    access.push_back(add_router("access" + std::to_string(k), addr.c_str(), asn));
  }
  add_prefix("100.64.0.0", 16, 65010);
  add_prefix("192.0.2.0", 24, 65020);
  add_prefix("198.51.100.0", 24, 65030);
  const auto core1 = add_router("core1", "100.64.1.1", 65010);
  const auto core2 = add_router("core2", "100.64.2.1", 65010);
  const auto core3 = add_router("core3", "100.64.3.1", 65010);
  const auto border1 = add_router("border1", "192.0.2.1", 65020);
  const auto dest1 = add_router("dest1", "192.0.2.10", 65020);
  const auto border2 = add_router("border2", "198.51.100.1", 65030);
  const auto dest2 = add_router("dest2", "198.51.100.10", 65030);

  for (std::size_t k = 0; k < access.size(); ++k) {
    topo.link_delays[{access[k], k < 3 ? core1 : core2}] = 2.0;
  }
  topo.link_delays[{core1, core3}] = 5.0;
  topo.link_delays[{core2, core3}] = 4.0;
  topo.link_delays[{core3, border1}] = 8.0;
  topo.link_delays[{core3, border2}] = 12.0;
  topo.link_delays[{border1, dest1}] = 1.0;
  topo.link_delays[{border2, dest2}] = 1.0;

  ProbeId next_id = 1001;
  for (int k = 1; k <= 5; ++k) {
    for (int j = 1; j <= 4; ++j) {
      const std::string addr = "10." + std::to_string(k) + ".1." + std::to_string(j);
      const ProbeId id = next_id++;
      topo.probes.push_back({id, *IpAddress::parse(addr), 64500 + static_cast<Asn>(k)});
      const auto acc = access[static_cast<std::size_t>(k - 1)];
      const auto core = k <= 3 ? core1 : core2;
      topo.paths.push_back({id, {acc, core, core3, border1, dest1}});
      topo.paths.push_back({id, {acc, core, core3, border2, dest2}});
    }
  }
  return topo;
}

class Generator {
 public:
  Generator(const Topology& topo, const AnomalyScript& script, std::uint64_t seed)
      : topo_(topo), script_(script), seed_(seed) {}

  // All traceroutes initiated in relative bin `bin`, ordered by
  // (timestamp, probe, destination).
  std::vector<TracerouteRecord> generate_bin(std::int64_t bin) const {
    const auto& p = topo_.params;
    std::vector<TracerouteRecord> out;
    out.reserve(topo_.records_per_bin());
    const std::int64_t spacing = p.bin_width / p.rate;
    for (std::size_t path_idx = 0; path_idx < topo_.paths.size(); ++path_idx) {
      const Path& path = topo_.paths[path_idx];
      const Probe& probe = *topo_.probe(path.probe);
      Rng phase_rng(derive_seed(seed_, 0x70686173ull, path_idx));
      const auto phase = static_cast<std::int64_t>(uniform_index(phase_rng, static_cast<std::uint64_t>(std::max<std::int64_t>(spacing, 1))));
      for (int k = 0; k < p.rate; ++k) {
        const Timestamp ts = p.start + bin * p.bin_width + phase + k * spacing;
        Rng rng(derive_seed(seed_, static_cast<std::uint64_t>(bin), path_idx, static_cast<std::uint64_t>(k)));
        out.push_back(trace(path, probe, ts, bin, rng));
      }
    }
    std::sort(out.begin(), out.end(), [](const TracerouteRecord& a, const TracerouteRecord& b) {
      return std::tie(a.timestamp, a.probe_id, a.dst_addr) < std::tie(b.timestamp, b.probe_id, b.dst_addr);
    });
    return out;
  }

  template <typename Sink>
  void generate(std::int64_t bins, Sink&& sink) const {
    for (std::int64_t b = 0; b < bins; ++b) {
      for (auto& rec : generate_bin(b)) sink(rec);
    }
  }

  void write(std::ostream& out, std::int64_t bins) const {
    generate(bins, [&out](const TracerouteRecord& rec) { write_record(out, rec); });
  }

 private:
  TracerouteRecord trace(const Path& path, const Probe& probe, Timestamp ts, std::int64_t bin, Rng& rng) const {
    const auto& p = topo_.params;
    std::vector<std::size_t> hops = path.routers;
    for (const auto& ev : script_.events) {
      if (ev.kind != EventKind::Reroute || !ev.active(bin)) continue;
      for (std::size_t i = 0; i + 1 < hops.size(); ++i) {
        if (hops[i] == ev.router && hops[i + 1] == ev.other) hops[i + 1] = ev.replacement;
      }
    }

    TracerouteRecord rec;
    rec.probe_id = probe.id;
    rec.probe_addr = probe.address;
    rec.timestamp = ts;
    rec.dst_addr = topo_.routers[hops.back()].address;

    double base = p.access_delay;
    for (std::size_t i = 0; i < hops.size(); ++i) {
      if (i > 0) base += topo_.link_delay(hops[i - 1], hops[i]);
      Hop hop;
      hop.index = static_cast<int>(i) + 1;
      for (int pkt = 0; pkt < p.packets; ++pkt) {
        double fwd = base;
        bool lost = false;
        for (const auto& ev : script_.events) {
          if (!ev.active(bin)) continue;
          if (ev.kind == EventKind::Congestion) {
            for (std::size_t j = 1; j <= i; ++j) {
              if (hops[j - 1] == ev.router && hops[j] == ev.other) {
                fwd += std::max(0.0, ev.added_ms + ev.jitter_ms * standard_normal(rng));
              }
            }
          } else if (ev.kind == EventKind::Loss) {
            for (std::size_t j = 0; j <= i; ++j) {
              if (hops[j] == ev.router && uniform01(rng) < ev.drop_probability) lost = true;
            }
          }
        }
        double noise = lognormal(rng, p.noise_mu, p.noise_sigma);
        if (uniform01(rng) < p.outlier_prob) noise *= uniform(rng, p.outlier_min, p.outlier_max);
        if (lost) {
          ++hop.timeouts;
          continue;
        }
        const double rtt = fwd + topo_.return_term(hops[i], probe.id) + noise;
        hop.rtts.push_back(std::round(rtt * 1000.0) / 1000.0);
      }
      if (!hop.rtts.empty()) hop.from = topo_.routers[hops[i]].address;
      rec.hops.push_back(std::move(hop));
    }
    return rec;
  }

  const Topology& topo_;
  const AnomalyScript& script_;
  std::uint64_t seed_;
};

}  // namespace linkshift::synth
