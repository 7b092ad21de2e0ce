#pragma once

// Traceroute records in the public Atlas result layout, time binning, and a
// line-oriented reader that skips malformed input.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "rapidjson/document.h"
#include "linkshift/ip.hpp"

namespace linkshift {

using ProbeId = std::uint64_t;
using Timestamp = std::int64_t;  // seconds since the Unix epoch, UTC

struct Hop {
  int index = 0;
  std::optional<IpAddress> from;  // nullopt: unresponsive
  std::vector<double> rtts;       // ms, finite and > 0
  int timeouts = 0;               // probe packets sent at this TTL without a reply

  bool responsive() const { return from.has_value() && !rtts.empty(); }
  int packets_sent() const { return static_cast<int>(rtts.size()) + timeouts; }

  friend bool operator==(const Hop&, const Hop&) = default;
};

struct TracerouteRecord {
  ProbeId probe_id = 0;
  std::optional<IpAddress> probe_addr;
  std::optional<Asn> probe_asn;
  Timestamp timestamp = 0;
  IpAddress dst_addr;
  std::vector<Hop> hops;

  friend bool operator==(const TracerouteRecord&, const TracerouteRecord&) = default;
};

struct BinConfig {
  std::int64_t width = 3600;  // seconds
  Timestamp epoch = 0;
  friend bool operator==(const BinConfig&, const BinConfig&) = default;
};

struct TimeBin {
  Timestamp start = 0;
  std::int64_t width = 3600;

  Timestamp end() const { return start + width; }
  friend auto operator<=>(const TimeBin&, const TimeBin&) = default;
};

using BinIndex = std::int64_t;

inline BinIndex bin_index(Timestamp ts, const BinConfig& cfg) {
  if (cfg.width <= 0) throw std::invalid_argument("bin width must be positive");
  const std::int64_t offset = ts - cfg.epoch;
  std::int64_t q = offset / cfg.width;
  if (offset % cfg.width != 0 && offset < 0) --q;
  return q;
}

inline TimeBin bin_at(BinIndex index, const BinConfig& cfg) {
  return TimeBin{cfg.epoch + index * cfg.width, cfg.width};
}

inline TimeBin assign_bin(Timestamp ts, const BinConfig& cfg) {
  return bin_at(bin_index(ts, cfg), cfg);
}

class IngestError : public std::runtime_error {
 public:
  IngestError(const std::string& what, std::size_t line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

using Value = rapidjson::Value;

inline const Value* member(const Value& obj, const char* key) {
  auto it = obj.FindMember(key);
  return it == obj.MemberEnd() ? nullptr : &it->value;
}

inline std::optional<IpAddress> address_field(const Value& obj, const char* key) {
  const Value* v = member(obj, key);
  if (!v || !v->IsString()) return std::nullopt;
  return IpAddress::parse(std::string_view(v->GetString(), v->GetStringLength()));
}

// Builds one hop from its per-packet replies. The first responding address
// owns the hop; replies from other addresses (per-packet load balancing)
// are dropped, as are late replies and non-positive RTTs.
inline std::optional<Hop> parse_hop(const Value& h) {
  const Value* idx = member(h, "hop");
  if (!idx || !idx->IsInt()) return std::nullopt;
  Hop hop;
  hop.index = idx->GetInt();
  if (hop.index <= 0) return std::nullopt;
  const Value* replies = member(h, "result");
  if (!replies) {
    // Hop-level error (e.g. sendto failure): nothing was measured.
    if (member(h, "error")) return hop;
    return std::nullopt;
  }
  if (!replies->IsArray()) return std::nullopt;
  for (const auto& r : replies->GetArray()) {
    if (!r.IsObject()) return std::nullopt;
    if (member(r, "x")) {
      ++hop.timeouts;
      continue;
    }
    if (member(r, "late")) continue;
    auto from = address_field(r, "from");
    if (!from) continue;
    if (!hop.from) hop.from = from;
    if (*hop.from != *from) continue;
    const Value* rtt = member(r, "rtt");
    if (!rtt || !rtt->IsNumber()) continue;
    const double v = rtt->GetDouble();
    if (std::isfinite(v) && v > 0) hop.rtts.push_back(v);
  }
  // An address without a single usable sample is treated as unresponsive.
  if (hop.rtts.empty()) hop.from.reset();
  return hop;
}

}  // namespace detail

// Parses one line. Returns nullopt for malformed input.
inline std::optional<TracerouteRecord> parse_record(std::string_view line,
                                                    const PrefixTable* table = nullptr) {
  rapidjson::Document doc;
  doc.Parse<rapidjson::kParseFullPrecisionFlag>(line.data(), line.size());
  if (doc.HasParseError() || !doc.IsObject()) return std::nullopt;

  TracerouteRecord rec;
  const auto* prb = detail::member(doc, "prb_id");
  const auto* ts = detail::member(doc, "timestamp");
  const auto* res = detail::member(doc, "result");
  if (!prb || !prb->IsUint64() || !ts || !ts->IsInt64() || !res || !res->IsArray()) return std::nullopt;
  rec.probe_id = prb->GetUint64();
  rec.timestamp = ts->GetInt64();
  auto dst = detail::address_field(doc, "dst_addr");
  if (!dst) return std::nullopt;
  rec.dst_addr = *dst;
  rec.probe_addr = detail::address_field(doc, "from");

  if (const auto* asn = detail::member(doc, "prb_asn"); asn && asn->IsUint()) {
    rec.probe_asn = asn->GetUint();
  } else if (table && rec.probe_addr) {
    rec.probe_asn = table->lookup(*rec.probe_addr);
  }

  rec.hops.reserve(res->Size());
  for (const auto& h : res->GetArray()) {
    if (!h.IsObject()) return std::nullopt;
    auto hop = detail::parse_hop(h);
    if (!hop) return std::nullopt;
    rec.hops.push_back(std::move(*hop));
  }
  // Strictly increasing hop indices; the first occurrence of a duplicate wins.
  std::stable_sort(rec.hops.begin(), rec.hops.end(),
                   [](const Hop& a, const Hop& b) { return a.index < b.index; });
  rec.hops.erase(std::unique(rec.hops.begin(), rec.hops.end(),
                             [](const Hop& a, const Hop& b) { return a.index == b.index; }),
                 rec.hops.end());
  return rec;
}

inline nlohmann::json to_json(const TracerouteRecord& rec) {
  using json = nlohmann::json;
  json doc = json::object();
  doc["prb_id"] = rec.probe_id;
  if (rec.probe_addr) doc["from"] = rec.probe_addr->to_string();
  doc["timestamp"] = rec.timestamp;
  doc["dst_addr"] = rec.dst_addr.to_string();
  json hops = json::array();
  for (const auto& hop : rec.hops) {
    json replies = json::array();
    const std::string from = hop.from ? hop.from->to_string() : std::string{};
    for (double rtt : hop.rtts) replies.push_back({{"from", from}, {"rtt", rtt}});
    for (int i = 0; i < hop.timeouts; ++i) replies.push_back({{"x", "*"}});
    hops.push_back({{"hop", hop.index}, {"result", std::move(replies)}});
  }
  doc["result"] = std::move(hops);
  return doc;
}

inline void write_record(std::ostream& out, const TracerouteRecord& rec) {
  out << to_json(rec).dump() << '\n';
}

// Pulls records from newline-delimited input. Malformed lines are counted
// and skipped; a failing stream is fatal.
class RecordReader {
 public:
  explicit RecordReader(std::istream& in, const PrefixTable* table = nullptr)
      : in_(in), table_(table) {}

  std::optional<TracerouteRecord> next() {
    std::string line;
    while (true) {
      if (!std::getline(in_, line)) {
        if (in_.bad()) throw IngestError("unreadable input stream", line_ + 1);
        return std::nullopt;
      }
      ++line_;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      if (auto rec = parse_record(line, table_)) return rec;
      ++skipped_;
      if (first_skipped_ == 0) first_skipped_ = line_;
    }
  }

  std::size_t lines_read() const { return line_; }
  std::size_t skipped() const { return skipped_; }
  std::size_t first_skipped_line() const { return first_skipped_; }

 private:
  std::istream& in_;
  const PrefixTable* table_;
  std::size_t line_ = 0;
  std::size_t skipped_ = 0;
  std::size_t first_skipped_ = 0;
};

inline std::vector<TracerouteRecord> parse_records(std::istream& in, const PrefixTable* table = nullptr,
                                                   std::size_t* skipped = nullptr) {
  RecordReader reader(in, table);
  std::vector<TracerouteRecord> out;
  while (auto rec = reader.next()) out.push_back(std::move(*rec));
  if (skipped) *skipped = reader.skipped();
  return out;
}

}  // namespace linkshift
