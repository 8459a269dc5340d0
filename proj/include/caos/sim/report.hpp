#pragma once

#include <json.hpp>

#include "caos/sim/fuzz.hpp"
#include "caos/sim/game.hpp"
#include "caos/sim/stats.hpp"

// JSON records for the lab runner. Every record carries schema_version and
// a kind field; one record per line.

namespace caos::sim {

inline constexpr int kReportSchemaVersion = 1;

inline nlohmann::json record(const std::string& kind, std::uint64_t seed, nlohmann::json body) {
  nlohmann::json j = {{"schema_version", kReportSchemaVersion}, {"kind", kind}, {"seed", seed}};
  j.update(body);
  return j;
}

inline nlohmann::json to_json(const GameResult& g) {
  nlohmann::json adv = nlohmann::json::array();
  for (const auto& a : g.adversaries)
    adv.push_back({{"name", a.name},
                   {"p_guess1_b0", a.p1_b0},
                   {"p_guess1_b1", a.p1_b1},
                   {"advantage", a.advantage},
                   {"ci95", {a.ci_low, a.ci_high}}});
  return {{"n", g.cfg.n},
          {"N", g.cfg.N},
          {"s", g.cfg.s},
          {"r", g.cfg.r},
          {"q", g.cfg.q},
          {"trials", g.cfg.trials},
          {"redundancy", g.cfg.redundancy},
          {"failed_challenges", g.failed_challenges},
          {"adversaries", adv}};
}

inline nlohmann::json to_json(const ObsShuffleReport& r, std::uint64_t window) {
  nlohmann::json tv = nlohmann::json::array();
  for (std::uint64_t a = 0; a + 2 * window <= r.rounds; a += window)
    tv.push_back({{"from", a}, {"tv", r.tv(a, a + window, a + 2 * window)}});
  return {{"n", r.n},
          {"s", r.s},
          {"rounds", r.rounds},
          {"trials", r.trials},
          {"tracked_mean", r.tracked.mean},
          {"tracked_sd", std::sqrt(r.tracked.variance)},
          {"tracked_sem", r.tracked.sem()},
          {"mixing_round_bound", mixing_round_bound(r.n, r.s)},
          {"window", window},
          {"tv_successive_windows", tv}};
}

}  // namespace caos::sim
