#pragma once

// Median characterization of differential RTTs with order-statistic
// confidence intervals, smoothed normal references, and delay-change alarms.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "linkshift/diffrtt.hpp"
#include "linkshift/ingest.hpp"

namespace linkshift {

struct WilsonRanks {
  double w_low = 0.0;
  double w_high = 0.0;
  std::size_t low = 1;   // 1-based rank into the sorted samples
  std::size_t high = 1;
};

// Wilson score interval for p = 0.5, turned into order-statistic ranks by
// rounding outwards (floor for the lower rank, ceil for the upper one).
inline WilsonRanks wilson_ranks(std::size_t n, double z = 1.96) {
  if (n == 0) throw std::invalid_argument("wilson_ranks: no samples");
  const double nn = static_cast<double>(n);
  const double p = 0.5;
  const double z2 = z * z;
  const double scale = 1.0 / (1.0 + z2 / nn);
  const double centre = p + z2 / (2.0 * nn);
  const double spread = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  WilsonRanks r;
  r.w_low = scale * (centre - spread);
  r.w_high = scale * (centre + spread);
  // The nudge keeps exact products such as 100 * 0.4 from rounding the wrong way.
  constexpr double nudge = 1e-9;
  const double lo = std::floor(nn * r.w_low + nudge);
  const double hi = std::ceil(nn * r.w_high - nudge);
  r.low = static_cast<std::size_t>(std::max(1.0, lo));
  r.high = static_cast<std::size_t>(std::min(nn, std::max(1.0, hi)));
  if (r.low > r.high) r.low = r.high;
  return r;
}

struct MedianEstimate {
  double median = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n_samples = 0;
  std::size_t n_probes = 0;
  std::size_t n_asns = 0;

  friend bool operator==(const MedianEstimate&, const MedianEstimate&) = default;
};

inline MedianEstimate characterize_sorted(std::span<const double> sorted, double z = 1.96) {
  if (sorted.empty()) throw std::invalid_argument("characterize: no samples");
  const std::size_t n = sorted.size();
  MedianEstimate est;
  est.n_samples = n;
  est.median = (n % 2 == 1) ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  const auto ranks = wilson_ranks(n, z);
  // The interval always brackets the median, which matters for z near 0
  // with an even sample count.
  est.ci_low = std::min(sorted[ranks.low - 1], est.median);
  est.ci_high = std::max(sorted[ranks.high - 1], est.median);
  return est;
}

inline MedianEstimate characterize(std::vector<double> samples, double z = 1.96) {
  std::sort(samples.begin(), samples.end());
  return characterize_sorted(samples, z);
}

inline MedianEstimate characterize(const LinkObservations& obs, double z = 1.96) {
  auto est = characterize(obs.deltas(), z);
  est.n_probes = obs.probe_count();
  est.n_asns = obs.probes_by_as().size();
  return est;
}

struct DelayReference {
  struct Pending {
    double median, low, high;
    friend bool operator==(const Pending&, const Pending&) = default;
  };
  static constexpr std::size_t kWarmupBins = 3;

  double median = 0.0;
  double low = 0.0;
  double high = 0.0;
  std::size_t bins_observed = 0;
  std::vector<Pending> warmup;

  bool ready() const { return bins_observed >= kWarmupBins; }
  friend bool operator==(const DelayReference&, const DelayReference&) = default;
};

namespace detail {
inline double median3(double a, double b, double c) {
  return std::max(std::min(a, b), std::min(std::max(a, b), c));
}
}  // namespace detail

// Exponential smoothing of the median and both bounds. The first three bins
// seed the reference with their componentwise median.
inline DelayReference update_reference(DelayReference ref, const MedianEstimate& obs,
                                       double alpha) {
  if (!ref.ready()) {
    ref.warmup.push_back({obs.median, obs.ci_low, obs.ci_high});
    ++ref.bins_observed;
    if (ref.ready()) {
      const auto& w = ref.warmup;
      ref.median = detail::median3(w[0].median, w[1].median, w[2].median);
      ref.low = detail::median3(w[0].low, w[1].low, w[2].low);
      ref.high = detail::median3(w[0].high, w[1].high, w[2].high);
      ref.warmup.clear();
    }
    return ref;
  }
  ref.median = alpha * obs.median + (1.0 - alpha) * ref.median;
  ref.low = alpha * obs.ci_low + (1.0 - alpha) * ref.low;
  ref.high = alpha * obs.ci_high + (1.0 - alpha) * ref.high;
  ++ref.bins_observed;
  return ref;
}

enum class Direction { Increase, Decrease };

inline const char* to_string(Direction d) { return d == Direction::Increase ? "increase" : "decrease"; }

struct DelayAlarm {
  LinkKey link;
  BinIndex bin = 0;
  double deviation = 0.0;  // > 0 for increases, < 0 for decreases
  Direction direction = Direction::Increase;
  MedianEstimate observed;
  DelayReference reference;
  bool degenerate = false;  // reference half-width hit the epsilon floor
  bool low_n = false;       // observed interval collapsed to one sample
};

struct DelayDetectConfig {
  double z = 1.96;
  double alpha = 0.01;
  double min_diff_ms = 1.0;
  std::size_t min_samples = 9;
};

inline constexpr double kDeviationFloorMs = 1e-6;

// Compares the observed interval against the reference; an alarm needs
// disjoint intervals and a median shift of at least min_diff_ms.
inline std::optional<DelayAlarm> detect(const LinkKey& link, BinIndex bin, const MedianEstimate& obs,
                                        const DelayReference& ref, double min_diff_ms) {
  if (!ref.ready()) return std::nullopt;
  if (obs.ci_low <= ref.high && ref.low <= obs.ci_high) return std::nullopt;
  if (std::fabs(obs.median - ref.median) < min_diff_ms) return std::nullopt;

  DelayAlarm alarm;
  alarm.link = link;
  alarm.bin = bin;
  alarm.observed = obs;
  alarm.reference = ref;
  alarm.low_n = obs.ci_low == obs.ci_high;
  double gap, width;
  if (ref.high < obs.ci_low) {
    alarm.direction = Direction::Increase;
    gap = obs.ci_low - ref.high;
    width = ref.high - ref.median;
  } else {
    alarm.direction = Direction::Decrease;
    gap = ref.low - obs.ci_high;
    width = ref.median - ref.low;
  }
  if (width < kDeviationFloorMs) {
    width = kDeviationFloorMs;
    alarm.degenerate = true;
  }
  const double magnitude = gap / width;
  alarm.deviation = alarm.direction == Direction::Increase ? magnitude : -magnitude;
  return alarm;
}

// Smallest bin width (hours) that still yields nine packets per link when n
// probes each run r traceroutes per hour.
inline double min_usable_bin_hours(double rate_per_hour, double probes) {
  constexpr double kPacketsPerLink = 9.0;
  return kPacketsPerLink / (3.0 * rate_per_hour * probes);
}

// Shortest event (hours) that can affect half of a bin's packets.
inline double min_detectable_event(double rate_per_hour, double probes, double bin_hours) {
  if (!(rate_per_hour > 0.0)) throw std::invalid_argument("probing rate must be positive");
  if (!(probes >= 1.0)) throw std::invalid_argument("at least one probe is required");
  const double t_min = min_usable_bin_hours(rate_per_hour, probes);
  if (bin_hours < t_min * (1.0 - 1e-12)) {
    std::ostringstream msg;
    msg << "bin of " << bin_hours << " h is shorter than the minimum usable bin T_min = 9/(3*"
        << rate_per_hour << "*" << probes << ") = " << t_min << " h";
    throw std::invalid_argument(msg.str());
  }
  return 1.0 / (3.0 * rate_per_hour * probes) + bin_hours / 2.0;
}

}  // namespace linkshift
