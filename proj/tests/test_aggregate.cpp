#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

#include "linkshift/aggregate.hpp"
#include "oracles.hpp"

using namespace linkshift;

namespace {

IpAddress ip(const char* s) { return *IpAddress::parse(s); }

PrefixTable table() {
  std::istringstream in("10.1.0.0\t16\t1\n10.2.0.0\t16\t2\n10.3.0.0\t16\t3\n");
  return PrefixTable::parse(in);
}

DelayAlarm delay_alarm(const char* near, const char* far, BinIndex bin, double d) {
  DelayAlarm a;
  a.link = {ip(near), ip(far)};
  a.bin = bin;
  a.deviation = d;
  a.direction = d > 0 ? Direction::Increase : Direction::Decrease;
  return a;
}

ForwardingAlarm fw_alarm(BinIndex bin, std::vector<std::pair<NextHop, double>> scores) {
  ForwardingAlarm a;
  a.key = {ip("10.1.0.1"), ip("192.0.2.1")};
  a.bin = bin;
  a.rho = -0.5;
  for (auto& [hop, r] : scores) a.responsibilities.push_back({hop, r, 0, 0});
  return a;
}

double delay_total(const AsGroups& g, Asn asn) {
  double s = 0;
  if (auto it = g.find(asn); it != g.end()) {
    for (const auto& ev : it->second) {
      if (ev.kind == AlarmKind::Delay) s += ev.severity;
    }
  }
  return s;
}

double fw_total(const AsGroups& g, Asn asn) {
  double s = 0;
  if (auto it = g.find(asn); it != g.end()) {
    for (const auto& ev : it->second) {
      if (ev.kind == AlarmKind::Forwarding) s += ev.severity;
    }
  }
  return s;
}

// Trailing-window magnitude written directly from the definition.
std::optional<double> magnitude_oracle(const std::vector<double>& x, std::size_t t, std::size_t w) {
  const std::size_t begin = t + 1 >= w ? t + 1 - w : 0;
  std::vector<double> win(x.begin() + static_cast<std::ptrdiff_t>(begin), x.begin() + static_cast<std::ptrdiff_t>(t) + 1);
  if (win.size() < 2) return std::nullopt;
  const double med = oracle::sorted_median(win);
  std::vector<double> dev;
  for (double v : win) dev.push_back(std::fabs(v - med));
  return (x[t] - med) / (1 + 1.4826 * oracle::sorted_median(dev));
}

}  // namespace

TEST(AssignAlarms, DelayLinkAcrossTwoAses) {
  const std::vector<DelayAlarm> delay{delay_alarm("10.1.0.1", "10.2.0.1", 5, 4.0)};
  const auto groups = assign_alarms(delay, {}, table());
  EXPECT_DOUBLE_EQ(delay_total(groups, 1), 4.0);
  EXPECT_DOUBLE_EQ(delay_total(groups, 2), 4.0);
  EXPECT_EQ(groups.size(), 2u);
}

TEST(AssignAlarms, DecreaseContributesMagnitude) {
  const std::vector<DelayAlarm> delay{delay_alarm("10.1.0.1", "10.1.0.2", 5, -3.0)};
  const auto groups = assign_alarms(delay, {}, table());
  EXPECT_DOUBLE_EQ(delay_total(groups, 1), 3.0);
  EXPECT_EQ(groups.at(1).size(), 1u);
}

TEST(AssignAlarms, ForwardingScoresCancelWithinAs) {
  const std::vector<ForwardingAlarm> fw{fw_alarm(5, {{ip("10.1.0.7"), -0.3}, {ip("10.1.0.8"), 0.3}})};
  const auto groups = assign_alarms({}, fw, table());
  EXPECT_DOUBLE_EQ(fw_total(groups, 1), 0.0);
}

TEST(AssignAlarms, UnresponsiveNotAssignedUnknownToZero) {
  const std::vector<ForwardingAlarm> fw{fw_alarm(5, {{std::nullopt, 0.4}, {ip("172.16.0.1"), -0.4}})};
  const auto groups = assign_alarms({}, fw, table());
  EXPECT_EQ(groups.size(), 1u);
  EXPECT_DOUBLE_EQ(fw_total(groups, kUnknownAsn), -0.4);
  const std::vector<DelayAlarm> delay{delay_alarm("172.16.0.1", "10.3.0.1", 5, 2.0)};
  const auto g2 = assign_alarms(delay, {}, table());
  EXPECT_DOUBLE_EQ(delay_total(g2, kUnknownAsn), 2.0);
  EXPECT_DOUBLE_EQ(delay_total(g2, 3), 2.0);
}

TEST(AssignAlarms, ContributionsCountDistinctAses) {
  std::mt19937_64 rng(51);
  const std::vector<std::string> addrs{"10.1.0.1", "10.1.0.2", "10.2.0.1", "10.3.0.1", "172.16.0.1"};
  const auto t = table();
  std::vector<DelayAlarm> alarms;
  double expect = 0;
  for (int i = 0; i < 500; ++i) {
    const auto& a = addrs[rng() % addrs.size()];
    const auto& b = addrs[rng() % addrs.size()];
    const double d = (static_cast<double>(rng() % 2000) - 1000.0) / 10.0;
    alarms.push_back(delay_alarm(a.c_str(), b.c_str(), 1, d));
    const Asn x = t.lookup(ip(a.c_str())).value_or(0), y = t.lookup(ip(b.c_str())).value_or(0);
    expect += std::fabs(d) * (x == y ? 1 : 2);
  }
  double total = 0;
  for (const auto& [asn, evs] : assign_alarms(alarms, {}, t)) total += delay_total({{asn, evs}}, asn);
  EXPECT_NEAR(total, expect, 1e-6);
}

TEST(Magnitude, ConstantSeriesIsZero) {
  const std::vector<double> x(50, 3.5);
  const auto m = magnitude(x, 168);
  EXPECT_FALSE(m[0]);
  for (std::size_t t = 1; t < x.size(); ++t) EXPECT_EQ(*m[t], 0.0);
}

TEST(Magnitude, SpikeOverQuietWindow) {
  std::vector<double> x(168, 0.0);
  x.back() = 10;
  EXPECT_DOUBLE_EQ(*magnitude(x, 168).back(), 10.0);
  EXPECT_DOUBLE_EQ(*magnitude_of(x, 10.0), 10.0);
}

TEST(Magnitude, UndefinedBelowTwoValues) {
  EXPECT_FALSE(magnitude_of(std::vector<double>{5.0}, 5.0));
  EXPECT_FALSE(magnitude_of(std::vector<double>{}, 0.0));
  const std::vector<double> x{1, 2, 3};
  EXPECT_FALSE(magnitude(x, 1)[2]);
}

TEST(Magnitude, MatchesDefinition) {
  std::mt19937_64 rng(53);
  std::lognormal_distribution<double> g(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(300);
    for (auto& v : x) v = rng() % 4 ? 0.0 : g(rng);
    const std::size_t w = 2 + rng() % 200;
    const auto m = magnitude(x, w);
    for (std::size_t t = 0; t < x.size(); ++t) {
      const auto e = magnitude_oracle(x, t, w);
      ASSERT_EQ(m[t].has_value(), e.has_value());
      if (e) { ASSERT_NEAR(*m[t], *e, 1e-12); }
    }
  }
}

TEST(Magnitude, ShiftInvariant) {
  std::mt19937_64 rng(57);
  std::vector<double> x(400), y(400);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = static_cast<double>(rng() % 50);
    y[i] = x[i] + 1024.0;
  }
  const auto mx = magnitude(x, 168), my = magnitude(y, 168);
  for (std::size_t t = 1; t < x.size(); ++t) EXPECT_EQ(*mx[t], *my[t]);
}

TEST(FindEvents, ContiguousAndPeak) {
  std::vector<std::optional<double>> m{std::nullopt, 0.0, 6.0, 9.0, -7.0, 1.0, 5.0, 5.5};
  const auto ev = find_events(m, 5.0);
  ASSERT_EQ(ev.size(), 2u);
  EXPECT_EQ(ev[0].first, 2u);
  EXPECT_EQ(ev[0].last, 4u);
  EXPECT_EQ(ev[0].peak, 3u);
  EXPECT_EQ(ev[0].peak_magnitude, 9.0);
  EXPECT_EQ(ev[1].first, 7u);
  EXPECT_EQ(ev[1].last, 7u);
  const auto peak = find_events(m, 5.0, EventRange::PeakOnly);
  EXPECT_EQ(peak[0].first, 3u);
  EXPECT_EQ(peak[0].last, 3u);
}

TEST(TfIdf, Examples) {
  EXPECT_DOUBLE_EQ(tfidf_score(1, 40, 40), std::log(2.0));
  EXPECT_DOUBLE_EQ(tfidf_score(5, 100, 1), 5 * std::log(101.0));
  EXPECT_EQ(tfidf_score(0, 100, 3), 0.0);
}

TEST(TfIdf, EventDocumentRanking) {
  const Prefix everywhere = aggregation_prefix(ip("10.1.0.1"));
  const Prefix rare = aggregation_prefix(ip("10.2.0.1"));
  const Prefix elsewhere = aggregation_prefix(ip("10.3.0.1"));
  std::vector<TermCounts> docs(100);
  for (auto& d : docs) d[everywhere] = 1;
  docs[42][rare] = 5;
  docs[7][elsewhere] = 2;
  const std::vector<std::size_t> event{42};
  const auto ranked = tfidf_characterize(docs, event);
  ASSERT_EQ(ranked.size(), 2u);
  EXPECT_EQ(ranked[0].prefix, rare);
  EXPECT_DOUBLE_EQ(ranked[0].score, 5 * std::log(101.0));
  EXPECT_EQ(ranked[1].prefix, everywhere);
  EXPECT_DOUBLE_EQ(ranked[1].score, std::log(2.0));
}

TEST(TfIdf, TiesInPrefixOrder) {
  std::vector<TermCounts> docs(3);
  const Prefix hi = aggregation_prefix(ip("10.9.0.1")), lo = aggregation_prefix(ip("10.1.0.1"));
  docs[0][hi] = 2;
  docs[0][lo] = 2;
  const auto ranked = tfidf_characterize(docs, std::vector<std::size_t>{0});
  ASSERT_EQ(ranked.size(), 2u);
  EXPECT_EQ(ranked[0].prefix, lo);
  EXPECT_EQ(ranked[1].prefix, hi);
}

TEST(TfIdf, NonNegativeAndDecreasingInDocumentFrequency) {
  for (std::size_t f = 1; f < 20; ++f) {
    for (std::size_t n = 1; n < 100; ++n) {
      EXPECT_GT(tfidf_score(f, 100, n), tfidf_score(f, 100, n + 1));
      EXPECT_GE(tfidf_score(f, 100, n + 1), 0.0);
    }
  }
}

TEST(TfIdf, Ipv6GroupsBySixtyFour) {
  EXPECT_EQ(aggregation_prefix(ip("2001:db8:1:2:3::1")).to_string(), "2001:db8:1:2::/64");
  EXPECT_EQ(aggregation_prefix(ip("192.0.2.77")).to_string(), "192.0.2.0/24");
}

TEST(Components, Examples) {
  const IpAddress a = ip("10.0.0.1"), b = ip("10.0.0.2"), c = ip("10.0.0.3"), d = ip("10.0.0.4"), e = ip("10.0.0.5");
  const std::vector<LinkKey> links{{a, b}, {c, b}, {d, e}};
  const auto comps = connected_alarms(links);
  ASSERT_EQ(comps.size(), 2u);
  EXPECT_EQ(comps[0].nodes, (std::vector<IpAddress>{a, b, c}));
  EXPECT_EQ(comps[0].edges.size(), 2u);
  EXPECT_EQ(comps[1].nodes, (std::vector<IpAddress>{d, e}));
  EXPECT_TRUE(connected_alarms({}).empty());
  const std::vector<LinkKey> star{{a, e}, {b, e}, {e, c}, {d, e}};
  const auto one = connected_alarms(star);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].nodes.size(), 5u);
}

TEST(Components, PartitionAlarmedAddresses) {
  std::mt19937_64 rng(59);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<LinkKey> links;
    std::set<IpAddress> all;
    const int n = 1 + static_cast<int>(rng() % 40);
    for (int i = 0; i < n; ++i) {
      const auto x = IpAddress::v4(0x0a000000u + static_cast<std::uint32_t>(rng() % 30));
      const auto y = IpAddress::v4(0x0a000000u + static_cast<std::uint32_t>(rng() % 30));
      if (x == y) continue;
      links.push_back({x, y});
      all.insert(x);
      all.insert(y);
    }
    const auto comps = connected_alarms(links);
    std::set<IpAddress> seen;
    std::size_t edges = 0;
    for (const auto& c : comps) {
      const std::set<IpAddress> members(c.nodes.begin(), c.nodes.end());
      for (const auto& node : c.nodes) EXPECT_TRUE(seen.insert(node).second);
      for (const auto& l : c.edges) {
        EXPECT_TRUE(members.contains(l.near));
        EXPECT_TRUE(members.contains(l.far));
      }
      edges += c.edges.size();
    }
    EXPECT_EQ(seen, all);
    EXPECT_EQ(edges, std::set<LinkKey>(links.begin(), links.end()).size());
  }
}

TEST(CharacterizeEvents, BurstIsReported) {
  std::vector<Evidence> ev;
  for (BinIndex b = 0; b < 100; ++b) {
    if (b % 10 == 0) ev.push_back({b, AlarmKind::Delay, 1.0, {ip("10.1.0.1"), ip("10.1.0.2")}, LinkKey{ip("10.1.0.1"), ip("10.1.0.2")}});
  }
  for (int i = 0; i < 3; ++i) {
    ev.push_back({60, AlarmKind::Delay, 20.0, {ip("10.1.5.1"), ip("10.1.6.1")}, LinkKey{ip("10.1.5.1"), ip("10.1.6.1")}});
  }
  const auto reports = characterize_events(1, ev, 0, 99, AggregateConfig{});
  ASSERT_EQ(reports.size(), 1u);
  const auto& r = reports[0];
  EXPECT_EQ(r.kind, AlarmKind::Delay);
  EXPECT_EQ(r.first_bin, 60);
  EXPECT_EQ(r.last_bin, 60);
  EXPECT_DOUBLE_EQ(r.peak_magnitude, 61.0);
  ASSERT_EQ(r.prefixes.size(), 3u);
  EXPECT_DOUBLE_EQ(r.prefixes[0].score, 3 * std::log(101.0));
  EXPECT_DOUBLE_EQ(r.prefixes[1].score, 3 * std::log(101.0));
  EXPECT_EQ(r.prefixes[2].prefix.to_string(), "10.1.0.0/24");
  // The burst link and the recurring link share no address.
  ASSERT_EQ(r.components.size(), 2u);
  EXPECT_EQ(r.components[0].edges.size(), 1u);
  EXPECT_EQ(r.components[1].edges.size(), 1u);
}

TEST(StreamingAggregator, MatchesBatchMagnitudes) {
  std::mt19937_64 rng(61);
  const auto t = table();
  const std::vector<std::string> addrs{"10.1.0.1", "10.2.0.1", "10.3.0.1", "172.16.0.1"};
  const BinIndex bins = 400;
  std::vector<std::vector<DelayAlarm>> delay(bins);
  std::vector<std::vector<ForwardingAlarm>> fw(bins);
  for (BinIndex b = 0; b < bins; ++b) {
    if (rng() % 5 == 0) {
      const auto& x = addrs[rng() % addrs.size()];
      const auto& y = addrs[rng() % addrs.size()];
      if (x != y) delay[b].push_back(delay_alarm(x.c_str(), y.c_str(), b, static_cast<double>(rng() % 100) / 7.0));
    }
    if (b == 250) {
      for (int i = 0; i < 6; ++i) delay[b].push_back(delay_alarm("10.2.0.1", "10.2.0.9", b, 80.0));
    }
    if (rng() % 7 == 0) {
      fw[b].push_back(fw_alarm(b, {{ip(addrs[rng() % addrs.size()].c_str()), -0.4}, {std::nullopt, 0.4}}));
    }
  }
  AggregateConfig cfg;
  cfg.window = 48;
  StreamingAggregator agg(cfg);
  std::map<Asn, std::map<BinIndex, StreamingAggregator::SeriesPoint>> stream;
  std::vector<EventReport> events;
  for (BinIndex b = 0; b < bins; ++b) {
    auto res = agg.process_bin(b, assign_alarms(delay[b], fw[b], t));
    for (const auto& p : res.series) stream[p.asn][p.bin] = p;
    events.insert(events.end(), res.events.begin(), res.events.end());
  }
  for (auto& e : agg.flush()) events.push_back(e);

  std::vector<DelayAlarm> all_delay;
  std::vector<ForwardingAlarm> all_fw;
  for (BinIndex b = 0; b < bins; ++b) {
    all_delay.insert(all_delay.end(), delay[b].begin(), delay[b].end());
    all_fw.insert(all_fw.end(), fw[b].begin(), fw[b].end());
  }
  const auto groups = assign_alarms(all_delay, all_fw, t);
  std::size_t compared = 0;
  for (const auto& [asn, ev] : groups) {
    const auto series = build_series(asn, ev, 0, bins - 1);
    const auto dm = magnitude(series.delay, cfg.window);
    const auto fm = magnitude(series.forwarding, cfg.window);
    for (const auto& [bin, p] : stream[asn]) {
      const auto i = static_cast<std::size_t>(bin);
      ASSERT_EQ(p.delay_magnitude.has_value(), dm[i].has_value());
      if (dm[i]) {
        EXPECT_NEAR(*p.delay_magnitude, *dm[i], 1e-9);
        EXPECT_NEAR(*p.forwarding_magnitude, *fm[i], 1e-9);
      }
      EXPECT_NEAR(p.delay, series.delay[i], 1e-9);
      ++compared;
    }
    for (const auto& span : find_events(dm, cfg.event_threshold)) {
      const bool found = std::any_of(events.begin(), events.end(), [&](const EventReport& e) {
        return e.asn == asn && e.kind == AlarmKind::Delay && e.first_bin == static_cast<BinIndex>(span.first) &&
               e.last_bin == static_cast<BinIndex>(span.last) && e.peak_bin == static_cast<BinIndex>(span.peak);
      });
      EXPECT_TRUE(found) << "AS " << asn << " event at " << span.first;
    }
  }
  EXPECT_GT(compared, 500u);
}
