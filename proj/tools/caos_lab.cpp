#include <fstream>
#include <iostream>
#include <random>

#include "caos/sim/report.hpp"
#include "common.hpp"

using namespace caos;
using namespace caos::sim;

namespace {

/// Writes records to the --json file (if any) and to stdout.
class Sink {
 public:
  explicit Sink(const std::string& path) {
    if (!path.empty()) {
      file_.open(path, std::ios::app);
      if (!file_) throw ConfigError("cannot open " + path + " for writing");
    }
  }
  void operator()(const nlohmann::json& j) {
    const std::string line = j.dump();
    if (file_.is_open()) file_ << line << "\n";
    std::cout << line << "\n";
  }

 private:
  std::ofstream file_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation lab: invariant fuzzing, the access-pattern game, buffer mixing and "
               "overwrite statistics.",
               "caos-lab"};
  app.require_subcommand(1);
  std::uint64_t seed = 1;
  std::string json_path;
  app.add_option("--seed", seed, "random seed")->capture_default_str();
  app.add_option("--json", json_path, "append line-delimited JSON records to this file");

  auto* fuzz = app.add_subcommand("fuzz", "interleaved multi-client run with invariant checks");
  FuzzConfig fcfg;
  std::uint64_t fuzz_seeds = 1;
  fuzz->add_option("--steps", fcfg.steps)->capture_default_str();
  fuzz->add_option("--seeds", fuzz_seeds, "consecutive seeds starting at --seed")->capture_default_str();
  fuzz->add_option("--blocks", fcfg.world.n)->capture_default_str();
  fuzz->add_option("--positions", fcfg.world.positions)->capture_default_str();
  fuzz->add_option("--redundancy", fcfg.world.redundancy)->capture_default_str();
  fuzz->add_option("--buffer", fcfg.world.buffer)->capture_default_str();
  fuzz->add_option("--write-share", fcfg.write_share)->capture_default_str();

  auto* game = app.add_subcommand("game", "distinguishing experiment against the access pattern");
  GameConfig gcfg;
  std::optional<std::uint64_t> game_rounds;
  game->add_option("--blocks", gcfg.n)->capture_default_str();
  game->add_option("--positions", gcfg.N)->capture_default_str();
  game->add_option("--buffer", gcfg.s)->capture_default_str();
  game->add_option("--rounds", game_rounds, "obfuscation rounds per query; default: the round bound");
  game->add_option("--queries", gcfg.q)->capture_default_str();
  game->add_option("--trials", gcfg.trials, "experiments per value of b")->capture_default_str();

  auto* mixing = app.add_subcommand("mixing", "buffer shuffle: tracked-card rounds and TV distance");
  std::uint64_t mix_n = 100, mix_s = 10, mix_trials = 2000;
  std::optional<std::uint64_t> mix_rounds, mix_window;
  mixing->add_option("--blocks", mix_n)->capture_default_str();
  mixing->add_option("--buffer", mix_s)->capture_default_str();
  mixing->add_option("--trials", mix_trials)->capture_default_str();
  mixing->add_option("--rounds", mix_rounds, "rounds per trial; default: 4x the mixing bound");
  mixing->add_option("--window", mix_window, "TV window length; default: rounds / 8");

  auto* survive = app.add_subcommand("survive", "probability a position escapes r overwrites");
  std::uint64_t surv_N = 50, surv_trials = 10000;
  std::vector<std::uint64_t> surv_r = {50, 150, 400};
  survive->add_option("--positions", surv_N)->capture_default_str();
  survive->add_option("--rounds", surv_r, "round counts to evaluate")->capture_default_str();
  survive->add_option("--trials", surv_trials, "Monte Carlo trials")->capture_default_str();

  return tools::run(app, argc, argv, [&]() -> int {
    Sink out(json_path);

    if (*fuzz) {
      bool ok = true;
      for (std::uint64_t k = 0; k < fuzz_seeds; ++k) {
        FuzzReport r = run_interleaved_fuzz(fcfg, seed + k);
        out(record("fuzz", seed + k, to_json(r)));
        if (!r.ok()) {
          ok = false;
          std::cerr << "caos-lab: seed " << seed + k << " step " << r.violation_step << ": "
                    << r.first_violation << "\n";
        }
      }
      return ok ? tools::kOk : 1;
    }

    if (*game) {
      gcfg.r = game_rounds.value_or(oc_round_bound(gcfg.n, gcfg.s, gcfg.N));
      GameResult g = run_game(gcfg, builtin_adversaries(), seed);
      out(record("game", seed, to_json(g)));
      return tools::kOk;
    }

    if (*mixing) {
      if (mix_s < 1 || mix_s >= mix_n) throw ConfigError("buffer must satisfy 1 <= buffer < blocks");
      const auto rounds = mix_rounds.value_or(
          static_cast<std::uint64_t>(4 * std::ceil(mixing_round_bound(mix_n, mix_s))));
      const auto window = std::max<std::uint64_t>(1, mix_window.value_or(rounds / 8));
      std::mt19937_64 rng(seed);
      auto r = simulate_obs_shuffle(mix_n, mix_s, rounds, mix_trials, rng);
      out(record("mixing", seed, to_json(r, window)));
      return tools::kOk;
    }

    std::mt19937_64 rng(seed);
    SampleStats mc = simulate_overwrite_rounds(surv_N, surv_trials, rng);
    nlohmann::json points = nlohmann::json::array();
    for (auto r : surv_r) {
      const double p = p_survive(surv_N, r);
      points.push_back({{"r", r},
                        {"p_survive", p},
                        {"empirical", mc.fraction_above(r)},
                        {"sigma", std::sqrt(p * (1 - p) / static_cast<double>(surv_trials))}});
    }
    out(record("survive", seed,
               {{"N", surv_N},
                {"trials", surv_trials},
                {"mean_rounds", mc.mean},
                {"coupon_collector_mean", coupon_collector_mean(surv_N)},
                {"stated_bound_1_plus_NlnN",
                 1 + static_cast<double>(surv_N) * std::log(static_cast<double>(surv_N))},
                {"points", points}}));
    return tools::kOk;
  });
}
