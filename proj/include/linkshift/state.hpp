#pragma once

// Checkpoint file holding every per-key reference and the per-AS windows so
// a later invocation resumes exactly where the previous one stopped.
//
// Format (text, one item per line, keys in sorted order):
//   linkshift-checkpoint <version>
//   bins <width> <epoch>
//   last_completed <bin|->
//   first_bin <bin|->
//   delay_refs <n>
//     <near> <far> <bins_observed> <median> <low> <high> <k> [<m> <l> <h>]*k
//   fw_refs <n>
//     <router> <dst> <bins_observed> <k> [<hop|*> <count>]*k
//   as_states <n>
//     as <asn> <docs> <delay-event> <forwarding-event>   event: - | <first> <last> <peak> <mag>
//     doc <bin> <delay> <fw> <k> [<prefix> <count>]*k <k> [<prefix> <count>]*k <k> [<near> <far>]*k
//   checksum <fnv1a-64 of all preceding bytes, hex>
// Reals are C99 hex floats, so a reload reproduces every bit.

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>

#include "linkshift/pipeline.hpp"

namespace linkshift {

inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  enum class Code { Io, Version, Integrity, Format, Config };
  CheckpointError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

struct Checkpoint {
  int version = kCheckpointVersion;
  BinConfig bins;
  std::optional<BinIndex> last_completed;
  std::optional<BinIndex> first_bin;
  std::map<LinkKey, DelayReference> delay;
  std::map<PatternKey, ForwardingReference> forwarding;
  std::map<Asn, StreamingAggregator::AsState> as_states;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline Checkpoint capture(const Pipeline& p) {
  Checkpoint c;
  c.bins = p.config().bins;
  c.last_completed = p.last_completed();
  c.first_bin = p.aggregator().first_bin();
  for (const auto& [k, v] : p.delay_references()) c.delay.emplace(k, v);
  for (const auto& [k, v] : p.forwarding_references()) c.forwarding.emplace(k, v);
  c.as_states = p.aggregator().states();
  return c;
}

inline void restore(Pipeline& p, const Checkpoint& c) {
  const auto& bins = p.config().bins;
  if (bins.width != c.bins.width || bins.epoch != c.bins.epoch) {
    throw CheckpointError(CheckpointError::Code::Config,
                          "checkpoint was written with bin width " + std::to_string(c.bins.width) +
                              " and epoch " + std::to_string(c.bins.epoch));
  }
  p.set_last_completed(c.last_completed);
  auto& delay = p.delay_references();
  delay.clear();
  for (const auto& [k, v] : c.delay) delay.emplace(k, v);
  auto& fw = p.forwarding_references();
  fw.clear();
  for (const auto& [k, v] : c.forwarding) fw.emplace(k, v);
  p.aggregator().states() = c.as_states;
  p.aggregator().first_bin() = c.first_bin;
  p.aggregator().last_bin() = c.last_completed;
}

namespace detail {

inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

class Tokens {
 public:
  explicit Tokens(std::string_view text) : in_(std::string(text)) {}

  std::string word() {
    std::string w;
    if (!(in_ >> w)) bad("unexpected end of checkpoint");
    return w;
  }

  void expect(const char* keyword) {
    if (word() != keyword) bad(std::string("expected '") + keyword + "'");
  }

  std::int64_t integer() {
    const auto w = word();
    char* end = nullptr;
    const long long v = std::strtoll(w.c_str(), &end, 10);
    if (end == w.c_str() || *end != '\0') bad("bad integer '" + w + "'");
    return v;
  }

  std::uint64_t count() {
    const auto v = integer();
    if (v < 0) bad("negative count");
    return static_cast<std::uint64_t>(v);
  }

  double real() {
    const auto w = word();
    char* end = nullptr;
    const double v = std::strtod(w.c_str(), &end);
    if (end == w.c_str() || *end != '\0') bad("bad real '" + w + "'");
    return v;
  }

  std::optional<std::int64_t> maybe_integer() {
    const auto w = word();
    if (w == "-") return std::nullopt;
    char* end = nullptr;
    const long long v = std::strtoll(w.c_str(), &end, 10);
    if (end == w.c_str() || *end != '\0') bad("bad integer '" + w + "'");
    return v;
  }

  IpAddress address() {
    const auto w = word();
    auto a = IpAddress::parse(w);
    if (!a) bad("bad address '" + w + "'");
    return *a;
  }

  Prefix prefix() {
    const auto w = word();
    const auto slash = w.find('/');
    auto a = slash == std::string::npos ? std::nullopt : IpAddress::parse(std::string_view(w).substr(0, slash));
    if (!a) bad("bad prefix '" + w + "'");
    return Prefix{*a, std::atoi(w.c_str() + slash + 1)};
  }

  bool at_end() {
    in_ >> std::ws;
    return in_.eof();
  }

  [[noreturn]] static void bad(const std::string& what) {
    throw CheckpointError(CheckpointError::Code::Format, "malformed checkpoint: " + what);
  }

 private:
  std::istringstream in_;
};

}  // namespace detail

inline std::string serialize(const Checkpoint& c) {
  using detail::hexfloat;
  std::ostringstream out;
  auto opt = [](const std::optional<BinIndex>& b) { return b ? std::to_string(*b) : std::string("-"); };
  out << "linkshift-checkpoint " << c.version << '\n';
  out << "bins " << c.bins.width << ' ' << c.bins.epoch << '\n';
  out << "last_completed " << opt(c.last_completed) << '\n';
  out << "first_bin " << opt(c.first_bin) << '\n';
  out << "delay_refs " << c.delay.size() << '\n';
  for (const auto& [k, r] : c.delay) {
    out << k.near.to_string() << ' ' << k.far.to_string() << ' ' << r.bins_observed << ' ' << hexfloat(r.median)
        << ' ' << hexfloat(r.low) << ' ' << hexfloat(r.high) << ' ' << r.warmup.size();
    for (const auto& w : r.warmup) out << ' ' << hexfloat(w.median) << ' ' << hexfloat(w.low) << ' ' << hexfloat(w.high);
    out << '\n';
  }
  out << "fw_refs " << c.forwarding.size() << '\n';
  for (const auto& [k, r] : c.forwarding) {
    out << k.router.to_string() << ' ' << k.destination.to_string() << ' ' << r.bins_observed << ' '
        << r.counts.size();
    for (const auto& [hop, v] : r.counts) out << ' ' << to_string(hop) << ' ' << hexfloat(v);
    out << '\n';
  }
  out << "as_states " << c.as_states.size() << '\n';
  auto event = [](const std::optional<StreamingAggregator::OpenEvent>& e) {
    if (!e) return std::string("-");
    return std::to_string(e->first) + ' ' + std::to_string(e->last) + ' ' + std::to_string(e->peak) + ' ' +
           hexfloat(e->peak_magnitude);
  };
  auto terms = [&out](const TermCounts& t) {
    out << ' ' << t.size();
    for (const auto& [p, n] : t) out << ' ' << p.to_string() << ' ' << n;
  };
  for (const auto& [asn, st] : c.as_states) {
    out << "as " << asn << ' ' << st.window.size() << ' ' << event(st.delay_event) << ' '
        << event(st.forwarding_event) << '\n';
    for (const auto& d : st.window) {
      out << "doc " << d.bin << ' ' << hexfloat(d.delay) << ' ' << hexfloat(d.forwarding);
      terms(d.delay_terms);
      terms(d.forwarding_terms);
      out << ' ' << d.delay_links.size();
      for (const auto& l : d.delay_links) out << ' ' << l.near.to_string() << ' ' << l.far.to_string();
      out << '\n';
    }
  }
  std::string body = out.str();
  char sum[40];
  std::snprintf(sum, sizeof(sum), "checksum %016" PRIx64 "\n", detail::fnv1a(body));
  return body + sum;
}

inline Checkpoint deserialize(std::string_view text) {
  using Code = CheckpointError::Code;
  const auto mark = text.rfind("checksum ");
  if (mark == std::string_view::npos) throw CheckpointError(Code::Integrity, "checkpoint has no checksum");
  const auto body = text.substr(0, mark);
  {
    std::uint64_t stored = 0;
    const std::string tail(text.substr(mark + 9));
    char* end = nullptr;
    stored = std::strtoull(tail.c_str(), &end, 16);
    if (end == tail.c_str() || stored != detail::fnv1a(body)) {
      throw CheckpointError(Code::Integrity, "checkpoint checksum mismatch");
    }
  }

  detail::Tokens in(body);
  Checkpoint c;
  in.expect("linkshift-checkpoint");
  c.version = static_cast<int>(in.integer());
  if (c.version != kCheckpointVersion) {
    throw CheckpointError(Code::Version, "checkpoint version " + std::to_string(c.version) + " is not supported (expected " +
                                             std::to_string(kCheckpointVersion) + ")");
  }
  in.expect("bins");
  c.bins.width = in.integer();
  c.bins.epoch = in.integer();
  in.expect("last_completed");
  c.last_completed = in.maybe_integer();
  in.expect("first_bin");
  c.first_bin = in.maybe_integer();

  in.expect("delay_refs");
  for (auto n = in.count(); n > 0; --n) {
    LinkKey k{in.address(), in.address()};
    DelayReference r;
    r.bins_observed = in.count();
    r.median = in.real();
    r.low = in.real();
    r.high = in.real();
    for (auto w = in.count(); w > 0; --w) {
      DelayReference::Pending p{};
      p.median = in.real();
      p.low = in.real();
      p.high = in.real();
      r.warmup.push_back(p);
    }
    c.delay.emplace(k, std::move(r));
  }

  in.expect("fw_refs");
  for (auto n = in.count(); n > 0; --n) {
    ForwardingReference r;
    r.key = {in.address(), in.address()};
    r.bins_observed = in.count();
    for (auto h = in.count(); h > 0; --h) {
      const auto hop = in.word();
      NextHop next;
      if (hop != "*") {
        next = IpAddress::parse(hop);
        if (!next) detail::Tokens::bad("bad next hop '" + hop + "'");
      }
      r.counts.emplace(next, in.real());
    }
    c.forwarding.emplace(r.key, std::move(r));
  }

  in.expect("as_states");
  auto read_event = [&in]() -> std::optional<StreamingAggregator::OpenEvent> {
    auto first = in.maybe_integer();
    if (!first) return std::nullopt;
    StreamingAggregator::OpenEvent e;
    e.first = *first;
    e.last = in.integer();
    e.peak = in.integer();
    e.peak_magnitude = in.real();
    return e;
  };
  auto read_terms = [&in](TermCounts& t) {
    for (auto n = in.count(); n > 0; --n) {
      const auto p = in.prefix();
      t[p] = in.count();
    }
  };
  for (auto n = in.count(); n > 0; --n) {
    in.expect("as");
    const auto asn = static_cast<Asn>(in.count());
    auto& st = c.as_states[asn];
    const auto docs = in.count();
    st.delay_event = read_event();
    st.forwarding_event = read_event();
    for (auto d = docs; d > 0; --d) {
      in.expect("doc");
      StreamingAggregator::BinDoc doc;
      doc.bin = in.integer();
      doc.delay = in.real();
      doc.forwarding = in.real();
      read_terms(doc.delay_terms);
      read_terms(doc.forwarding_terms);
      for (auto l = in.count(); l > 0; --l) doc.delay_links.push_back({in.address(), in.address()});
      st.window.push_back(std::move(doc));
    }
  }
  if (!in.at_end()) detail::Tokens::bad("trailing data");
  return c;
}

// Temp file + rename: a failed save leaves the previous checkpoint intact.
inline void save(const Checkpoint& c, const std::filesystem::path& path) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(CheckpointError::Code::Io, "cannot write " + tmp.string());
    const auto text = serialize(c);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw CheckpointError(CheckpointError::Code::Io, "short write to " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw CheckpointError(CheckpointError::Code::Io, "cannot replace " + path.string());
  }
}

inline Checkpoint load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Code::Io, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

}  // namespace linkshift
