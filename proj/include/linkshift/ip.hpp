#pragma once

// IP addresses, prefixes and the longest-prefix-match table used to map
// router and probe addresses onto origin AS numbers.

#include <arpa/inet.h>

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace linkshift {

using Asn = std::uint32_t;

enum class Family : std::uint8_t { V4 = 4, V6 = 6 };

// Address-agnostic IP value. IPv4 addresses occupy the first four bytes.
class IpAddress {
 public:
  IpAddress() = default;

  static IpAddress v4(std::uint32_t host_order) {
    IpAddress a;
    a.family_ = Family::V4;
    a.bytes_[0] = static_cast<std::uint8_t>(host_order >> 24);
    a.bytes_[1] = static_cast<std::uint8_t>(host_order >> 16);
    a.bytes_[2] = static_cast<std::uint8_t>(host_order >> 8);
    a.bytes_[3] = static_cast<std::uint8_t>(host_order);
    return a;
  }

  static std::optional<IpAddress> parse(std::string_view text) {
    char buf[INET6_ADDRSTRLEN + 1];
    if (text.empty() || text.size() > INET6_ADDRSTRLEN) return std::nullopt;
    std::memcpy(buf, text.data(), text.size());
    buf[text.size()] = '\0';
    IpAddress a;
    if (text.find(':') == std::string_view::npos) {
      if (inet_pton(AF_INET, buf, a.bytes_.data()) != 1) return std::nullopt;
      a.family_ = Family::V4;
    } else {
      if (inet_pton(AF_INET6, buf, a.bytes_.data()) != 1) return std::nullopt;
      a.family_ = Family::V6;
    }
    return a;
  }

  Family family() const { return family_; }
  bool is_v4() const { return family_ == Family::V4; }
  int bit_width() const { return is_v4() ? 32 : 128; }
  const std::array<std::uint8_t, 16>& bytes() const { return bytes_; }

  std::uint32_t v4_value() const {
    return (std::uint32_t{bytes_[0]} << 24) | (std::uint32_t{bytes_[1]} << 16) |
           (std::uint32_t{bytes_[2]} << 8) | std::uint32_t{bytes_[3]};
  }

  // Keeps the first `length` bits and zeroes the rest.
  IpAddress masked(int length) const {
    IpAddress a = *this;
    const int width = bit_width();
    length = std::clamp(length, 0, width);
    for (int i = 0; i < width / 8; ++i) {
      const int keep = std::clamp(length - i * 8, 0, 8);
      a.bytes_[i] &= static_cast<std::uint8_t>(keep == 0 ? 0 : 0xFFu << (8 - keep));
    }
    return a;
  }

  std::string to_string() const {
    char buf[INET6_ADDRSTRLEN];
    inet_ntop(is_v4() ? AF_INET : AF_INET6, bytes_.data(), buf, sizeof(buf));
    return buf;
  }

  friend auto operator<=>(const IpAddress&, const IpAddress&) = default;
  friend bool operator==(const IpAddress&, const IpAddress&) = default;

  std::uint64_t hash() const {
    // FNV-1a; stable across platforms so derived seeds are reproducible.
    std::uint64_t h = 0xcbf29ce484222325ull ^ static_cast<std::uint8_t>(family_);
    const int n = is_v4() ? 4 : 16;
    for (int i = 0; i < n; ++i) {
      h ^= bytes_[i];
      h *= 0x100000001b3ull;
    }
    return h;
  }

 private:
  Family family_ = Family::V4;
  std::array<std::uint8_t, 16> bytes_{};
};

struct Prefix {
  IpAddress network;
  int length = 0;

  bool contains(const IpAddress& addr) const {
    return addr.family() == network.family() && addr.masked(length) == network;
  }

  std::string to_string() const { return network.to_string() + "/" + std::to_string(length); }

  friend auto operator<=>(const Prefix&, const Prefix&) = default;
  friend bool operator==(const Prefix&, const Prefix&) = default;
};

// /24 for IPv4, /64 for IPv6.
inline Prefix aggregation_prefix(const IpAddress& addr) {
  const int len = addr.is_v4() ? 24 : 64;
  return Prefix{addr.masked(len), len};
}

struct IpAddressHash {
  std::size_t operator()(const IpAddress& a) const { return static_cast<std::size_t>(a.hash()); }
};

class PrefixTableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Immutable after loading; lookups probe one hash map per populated prefix
// length, longest first.
class PrefixTable {
 public:
  struct Entry {
    Prefix prefix;
    Asn asn;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  PrefixTable() = default;

  explicit PrefixTable(std::vector<Entry> entries) {
    for (auto& e : entries) insert(e.prefix, e.asn);
  }

  void insert(const Prefix& p, Asn asn) {
    const int width = p.network.bit_width();
    if (p.length < 0 || p.length > width) {
      throw PrefixTableError("prefix length out of range: " + p.to_string());
    }
    Prefix norm{p.network.masked(p.length), p.length};
    auto& levels = p.network.is_v4() ? v4_ : v6_;
    if (levels.empty()) levels.resize(static_cast<std::size_t>(width) + 1);
    auto [it, inserted] = levels[static_cast<std::size_t>(p.length)].try_emplace(norm.network, asn);
    if (inserted) {
      entries_.push_back({norm, asn});
    }
    auto& lens = p.network.is_v4() ? v4_lengths_ : v6_lengths_;
    if (std::find(lens.begin(), lens.end(), p.length) == lens.end()) {
      lens.push_back(p.length);
      std::sort(lens.begin(), lens.end(), std::greater<>());
    }
  }

  std::optional<Asn> lookup(const IpAddress& addr) const {
    const auto& levels = addr.is_v4() ? v4_ : v6_;
    const auto& lens = addr.is_v4() ? v4_lengths_ : v6_lengths_;
    for (int len : lens) {
      const auto& level = levels[static_cast<std::size_t>(len)];
      auto it = level.find(addr.masked(len));
      if (it != level.end()) return it->second;
    }
    return std::nullopt;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  // pfx2as text: `prefix<TAB>length<TAB>asn`. Multi-origin fields such as
  // "123_456" or "123,456" resolve to the first AS. Blank lines and lines
  // starting with '#' are ignored.
  static PrefixTable parse(std::istream& in) {
    PrefixTable table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      std::istringstream fields(line);
      std::string net, len_text, asn_text;
      if (!(fields >> net >> len_text >> asn_text)) {
        throw PrefixTableError("pfx2as line " + std::to_string(lineno) + ": expected 3 fields");
      }
      auto addr = IpAddress::parse(net);
      if (!addr) throw PrefixTableError("pfx2as line " + std::to_string(lineno) + ": bad prefix");
      const auto cut = asn_text.find_first_of("_,");
      if (cut != std::string::npos) asn_text.resize(cut);
      try {
        const int len = std::stoi(len_text);
        const unsigned long asn = std::stoul(asn_text);
        table.insert(Prefix{*addr, len}, static_cast<Asn>(asn));
      } catch (const std::logic_error&) {
        throw PrefixTableError("pfx2as line " + std::to_string(lineno) + ": bad number");
      }
    }
    return table;
  }

  static PrefixTable load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw PrefixTableError("cannot open prefix table: " + path);
    return parse(in);
  }

  void write(std::ostream& out) const {
    for (const auto& e : entries_) {
      out << e.prefix.network.to_string() << '\t' << e.prefix.length << '\t' << e.asn << '\n';
    }
  }

 private:
  using Level = std::unordered_map<IpAddress, Asn, IpAddressHash>;
  std::vector<Level> v4_, v6_;
  std::vector<int> v4_lengths_, v6_lengths_;
  std::vector<Entry> entries_;
};

}  // namespace linkshift

template <>
struct std::hash<linkshift::IpAddress> {
  std::size_t operator()(const linkshift::IpAddress& a) const noexcept {
    return static_cast<std::size_t>(a.hash());
  }
};
