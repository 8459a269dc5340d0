#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "caos/client.hpp"

// Probabilities and Monte Carlo models for how fast obfuscation rounds
// overwrite the store and mix the buffer.

namespace caos::sim {

using Rational = boost::multiprecision::cpp_rational;

/// Probability that after r uniform single-position overwrites of an
/// N-position store at least one position was never overwritten, by
/// inclusion-exclusion in exact arithmetic.
inline Rational p_survive_exact(std::uint64_t N, std::uint64_t r) {
  if (N == 0) throw ConfigError("p_survive: N must be at least 1");
  using boost::multiprecision::cpp_int;
  Rational sum = 0;
  cpp_int binom = 1;
  const cpp_int denom = boost::multiprecision::pow(cpp_int(N), static_cast<unsigned>(r));
  for (std::uint64_t i = 1; i <= N; ++i) {
    binom = binom * (N - i + 1) / i;
    cpp_int num = boost::multiprecision::pow(cpp_int(N - i), static_cast<unsigned>(r));
    if (r == 0) num = 1;
    Rational term(binom * num, denom);
    if (i % 2) sum += term;
    else sum -= term;
  }
  return sum;
}

/// Same quantity in floating point from the distribution of the number of
/// distinct positions hit, which only ever adds non-negative terms.
inline double p_survive_dp(std::uint64_t N, std::uint64_t r) {
  if (N == 0) throw ConfigError("p_survive: N must be at least 1");
  std::vector<long double> dist(N + 1, 0.0L), next(N + 1);
  dist[0] = 1.0L;
  const long double n = static_cast<long double>(N);
  for (std::uint64_t t = 0; t < r; ++t) {
    std::fill(next.begin(), next.end(), 0.0L);
    const std::uint64_t kmax = std::min<std::uint64_t>(t, N);
    for (std::uint64_t k = 0; k <= kmax; ++k) {
      if (dist[k] == 0) continue;
      next[k] += dist[k] * (static_cast<long double>(k) / n);
      if (k < N) next[k + 1] += dist[k] * (static_cast<long double>(N - k) / n);
    }
    dist.swap(next);
  }
  long double survive = 0;
  for (std::uint64_t k = 0; k < N; ++k) survive += dist[k];
  return static_cast<double>(survive);
}

/// Exact rational evaluation up to N = 64, the distinct-count recursion above.
inline double p_survive(std::uint64_t N, std::uint64_t r) {
  if (N <= 64) return p_survive_exact(N, r).convert_to<double>();
  return p_survive_dp(N, r);
}

/// N * H_N, the expected number of uniform draws until all N positions are hit.
inline double coupon_collector_mean(std::uint64_t N) {
  long double h = 0;
  for (std::uint64_t i = N; i >= 1; --i) h += 1.0L / static_cast<long double>(i);
  return static_cast<double>(static_cast<long double>(N) * h);
}

struct SampleStats {
  std::vector<std::uint64_t> samples;
  double mean = 0, variance = 0;

  /// Standard error of the mean.
  double sem() const { return samples.empty() ? 0 : std::sqrt(variance / samples.size()); }

  /// Fraction of samples strictly above x.
  double fraction_above(std::uint64_t x) const {
    std::size_t k = 0;
    for (auto v : samples) k += v > x;
    return samples.empty() ? 0 : static_cast<double>(k) / samples.size();
  }
};

inline SampleStats summarize(std::vector<std::uint64_t> samples) {
  SampleStats s;
  s.samples = std::move(samples);
  if (s.samples.empty()) return s;
  long double sum = 0, sq = 0;
  for (auto v : s.samples) sum += v;
  const long double mean = sum / s.samples.size();
  for (auto v : s.samples) sq += (v - mean) * (v - mean);
  s.mean = static_cast<double>(mean);
  s.variance = s.samples.size() > 1 ? static_cast<double>(sq / (s.samples.size() - 1)) : 0;
  return s;
}

/// Rounds until every one of N positions has been overwritten, one uniform
/// position per round. A trial surviving r rounds is one whose count exceeds r.
template <class Rng>
SampleStats simulate_overwrite_rounds(std::uint64_t N, std::size_t trials, Rng& rng) {
  if (N == 0) throw ConfigError("N must be at least 1");
  std::vector<std::uint64_t> out;
  out.reserve(trials);
  std::vector<std::uint32_t> seen(N, 0);
  for (std::size_t t = 0; t < trials; ++t) {
    const std::uint32_t mark = static_cast<std::uint32_t>(t + 1);
    std::uint64_t hit = 0, rounds = 0;
    while (hit < N) {
      ++rounds;
      auto p = caos::detail::uniform_below(N, rng);
      if (seen[p] != mark) {
        seen[p] = mark;
        ++hit;
      }
    }
    out.push_back(rounds);
  }
  return summarize(std::move(out));
}

/// 1 + (n-s) ln(n-s) + s: the buffer-mixing round bound.
inline double mixing_round_bound(std::uint64_t n, std::uint64_t s) {
  const double m = static_cast<double>(n - s);
  return 1 + (m > 0 ? m * std::log(m) : 0) + static_cast<double>(s);
}

/// ceil(2 + s + (n-s) ln(n-s) + N ln N): buffer mixing plus overwriting the
/// whole store.
inline std::uint64_t oc_round_bound(std::uint64_t n, std::uint64_t s, std::uint64_t N) {
  const double m = static_cast<double>(n - s);
  return static_cast<std::uint64_t>(std::ceil(2 + static_cast<double>(s) +
                                              (m > 0 ? m * std::log(m) : 0) +
                                              static_cast<double>(N) * std::log(static_cast<double>(N))));
}

struct ObsShuffleReport {
  std::uint64_t n = 0, s = 0, rounds = 0, trials = 0;
  /// out_counts[j][c]: trials in which card c left the buffer at round j.
  std::vector<std::vector<std::uint64_t>> out_counts;
  /// Rounds until the card starting at the bottom of the deck has risen to
  /// the top of the buffer and been moved out again, in the simplified shuffle
  /// that always moves top cards.
  SampleStats tracked;

  /// Empirical out distribution pooled over rounds [from, to).
  std::vector<double> out_distribution(std::uint64_t from, std::uint64_t to) const {
    std::vector<double> d(n, 0);
    double total = 0;
    for (std::uint64_t j = from; j < to && j < rounds; ++j)
      for (std::uint64_t c = 0; c < n; ++c) {
        d[c] += static_cast<double>(out_counts[j][c]);
        total += static_cast<double>(out_counts[j][c]);
      }
    if (total > 0)
      for (auto& x : d) x /= total;
    return d;
  }

  /// Total-variation distance between the pooled windows [a, b) and [b, c).
  double tv(std::uint64_t a, std::uint64_t b, std::uint64_t c) const {
    auto p = out_distribution(a, b), q = out_distribution(b, c);
    double sum = 0;
    for (std::uint64_t i = 0; i < n; ++i) sum += std::abs(p[i] - q[i]);
    return sum / 2;
  }
};

/// Buffer shuffle with n cards, the buffer U holding the first s. Each round
/// moves a uniform card of U into V, then a uniform card of V (which now
/// includes the card just moved) into the vacated buffer slot. The card moved
/// out of U is the round's output.
///
/// The tracked-card statistic runs the top-card variant: the top card of U
/// goes to a uniform gap among the n-s+1 gaps of V, then the top card of V
/// goes to the bottom of U.
template <class Rng>
ObsShuffleReport simulate_obs_shuffle(std::uint64_t n, std::uint64_t s, std::uint64_t rounds,
                                      std::size_t trials, Rng& rng) {
  if (s < 1 || s >= n) throw ConfigError("shuffle needs 1 <= s < n");
  ObsShuffleReport rep;
  rep.n = n;
  rep.s = s;
  rep.rounds = rounds;
  rep.trials = trials;
  rep.out_counts.assign(rounds, std::vector<std::uint64_t>(n, 0));
  using caos::detail::uniform_below;

  std::vector<std::uint64_t> U(s), V(n - s);
  for (std::size_t t = 0; t < trials; ++t) {
    std::iota(U.begin(), U.end(), 0);
    std::iota(V.begin(), V.end(), s);
    for (std::uint64_t j = 0; j < rounds; ++j) {
      const std::size_t u = uniform_below(s, rng);
      const std::uint64_t out = U[u];
      ++rep.out_counts[j][out];
      V.push_back(out);  // V is a multiset here: order inside V never matters
      const std::size_t v = uniform_below(V.size(), rng);
      U[u] = V[v];
      V[v] = V.back();
      V.pop_back();
    }
  }

  std::vector<std::uint64_t> samples;
  samples.reserve(trials);
  const std::uint64_t m = n - s;
  for (std::size_t t = 0; t < trials; ++t) {
    // below: V cards under the tracked one; once it enters U, its depth from the top
    std::uint64_t below = 0, rounds_taken = 0;
    bool in_u = false;
    std::uint64_t depth = 0;
    for (;;) {
      ++rounds_taken;
      if (in_u) {
        if (depth == 0) break;  // it is the top card and leaves U this round
        --depth;
        continue;
      }
      // the moved card lands in one of m+1 gaps; gaps 0..below lie under the tracked card
      const std::uint64_t gap = uniform_below(m + 1, rng);
      if (gap <= below) ++below;
      // the top card of V moves to the bottom of U
      if (below == m) {
        in_u = true;
        depth = s - 1;
      }
    }
    samples.push_back(rounds_taken);
  }
  rep.tracked = summarize(std::move(samples));
  return rep;
}

}  // namespace caos::sim
