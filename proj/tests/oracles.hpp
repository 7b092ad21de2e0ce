#pragma once

// Reference computations used to check the library. Each one is written
// from the defining formula, without calling into the code under test.

#include <algorithm>
#include <boost/multiprecision/cpp_dec_float.hpp>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <utility>
#include <vector>

namespace oracle {

using big = boost::multiprecision::cpp_dec_float_50;

// Wilson score bounds at p = 0.5 in 50-digit arithmetic.
inline std::pair<big, big> wilson(unsigned n, const big& z) {
  const big nn = n;
  const big p = big(1) / 2;
  const big z2 = z * z;
  const big a = big(1) / (big(1) + z2 / nn);
  const big c = p + z2 / (big(2) * nn);
  const big s = z * boost::multiprecision::sqrt(p * (big(1) - p) / nn + z2 / (big(4) * nn * nn));
  return {a * (c - s), a * (c + s)};
}

// Normalized Shannon entropy in 50-digit arithmetic.
inline double entropy(const std::vector<unsigned>& counts) {
  big total = 0;
  unsigned n = 0;
  for (unsigned c : counts) {
    if (c > 0) {
      total += c;
      ++n;
    }
  }
  if (n < 2) return 0.0;
  big h = 0;
  for (unsigned c : counts) {
    if (c == 0) continue;
    const big p = big(c) / total;
    h -= p * boost::multiprecision::log(p);
  }
  return static_cast<double>(h / boost::multiprecision::log(big(n)));
}

// Pearson coefficient, two-pass in long double.
inline long double pearson(const std::vector<long double>& x, const std::vector<long double>& y) {
  const std::size_t n = x.size();
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  long double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// r_i = -rho (p_i - q_i) / sum |p_j - q_j|
inline std::vector<long double> responsibility(const std::vector<long double>& p, const std::vector<long double>& q) {
  const long double rho = pearson(p, q);
  long double total = 0;
  for (std::size_t i = 0; i < p.size(); ++i) total += std::fabs(p[i] - q[i]);
  std::vector<long double> r;
  for (std::size_t i = 0; i < p.size(); ++i) r.push_back(-rho * (p[i] - q[i]) / total);
  return r;
}

// Probe removal replay: most represented AS first (lowest ASN on ties), a
// probe drawn uniformly from its ascending id list by rejection sampling on
// a 64-bit Mersenne Twister.
inline std::vector<std::uint64_t> replay_removals(std::map<std::uint32_t, std::vector<std::uint64_t>> groups,
                                                  std::size_t min_as, double threshold, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto draw = [&rng](std::uint64_t n) {
    const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t limit = max - max % n;
    while (true) {
      const std::uint64_t r = rng();
      if (r < limit) return r % n;
    }
  };
  auto h = [&groups] {
    std::vector<unsigned> counts;
    for (const auto& [asn, probes] : groups) counts.push_back(static_cast<unsigned>(probes.size()));
    return entropy(counts);
  };
  for (auto& [asn, probes] : groups) std::sort(probes.begin(), probes.end());
  std::vector<std::uint64_t> removed;
  if (groups.size() < min_as) return removed;
  while (h() <= threshold && groups.size() >= min_as) {
    std::uint32_t pick_as = 0;
    std::size_t best = 0;
    for (const auto& [asn, probes] : groups) {
      if (probes.size() > best) {
        best = probes.size();
        pick_as = asn;
      }
    }
    auto& probes = groups[pick_as];
    const auto i = draw(probes.size());
    removed.push_back(probes[i]);
    probes.erase(probes.begin() + static_cast<std::ptrdiff_t>(i));
    if (probes.empty()) groups.erase(pick_as);
  }
  return removed;
}

inline double sorted_median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

// D'Agostino-Pearson K^2 omnibus normality test. Returns the p-value
// (chi-squared with two degrees of freedom).
inline double normality_p_value(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  double mean = 0;
  for (double v : x) mean += v;
  mean /= n;
  double m2 = 0, m3 = 0, m4 = 0;
  for (double v : x) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;

  // Skewness (D'Agostino 1970).
  const double b1 = m3 / std::pow(m2, 1.5);
  const double y = b1 * std::sqrt((n + 1) * (n + 3) / (6 * (n - 2)));
  const double beta2 = 3 * (n * n + 27 * n - 70) * (n + 1) * (n + 3) / ((n - 2) * (n + 5) * (n + 7) * (n + 9));
  const double w2 = -1 + std::sqrt(2 * (beta2 - 1));
  const double delta = 1 / std::sqrt(0.5 * std::log(w2));
  const double alpha = std::sqrt(2 / (w2 - 1));
  const double ya = y / alpha;
  const double z1 = delta * std::log(ya + std::sqrt(ya * ya + 1));

  // Kurtosis (Anscombe and Glynn 1983).
  const double b2 = m4 / (m2 * m2);
  const double e = 3 * (n - 1) / (n + 1);
  const double var = 24 * n * (n - 2) * (n - 3) / ((n + 1) * (n + 1) * (n + 3) * (n + 5));
  const double xk = (b2 - e) / std::sqrt(var);
  const double sqrt_beta1 =
      6 * (n * n - 5 * n + 2) / ((n + 7) * (n + 9)) * std::sqrt(6 * (n + 3) * (n + 5) / (n * (n - 2) * (n - 3)));
  const double a = 6 + 8 / sqrt_beta1 * (2 / sqrt_beta1 + std::sqrt(1 + 4 / (sqrt_beta1 * sqrt_beta1)));
  const double term1 = 1 - 2 / (9 * a);
  const double denom = 1 + xk * std::sqrt(2 / (a - 4));
  const double term2 = std::copysign(std::cbrt((1 - 2 / a) / std::fabs(denom)), denom);
  const double z2 = (term1 - term2) / std::sqrt(2 / (9 * a));

  return std::exp(-(z1 * z1 + z2 * z2) / 2);
}

}  // namespace oracle
