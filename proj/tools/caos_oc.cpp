#include <atomic>
#include <chrono>
#include <csignal>
#include <iostream>
#include <random>
#include <thread>

#include "caos/codec.hpp"
#include "caos/map_file.hpp"
#include "caos/net.hpp"
#include "caos/obfuscation.hpp"
#include "common.hpp"

using namespace caos;

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_stop(int) { g_stop = true; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Obfuscation client: rewrites random store positions from a local buffer.",
               "caos-oc"};
  std::optional<std::string> config_path, map_path, key_path, server;
  std::size_t buffer = 0;
  std::uint64_t rounds = 0;
  double rate = 0;
  std::optional<std::uint16_t> client_id;
  app.add_option("-c,--config", config_path, "key=value deployment file for map, key and server");
  app.add_option("--map", map_path, "client map file");
  app.add_option("--key", key_path, "store key file");
  app.add_option("--server", server, "server address host:port");
  app.add_option("--buffer", buffer, "buffer size s")->required();
  app.add_option("--rounds", rounds, "rounds to run; 0 runs until SIGINT or SIGTERM");
  app.add_option("--rate", rate, "rounds per second; 0 runs unthrottled")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--client-id", client_id, "this client's index; defaults to the one in the map");

  return tools::run(app, argc, argv, [&]() -> int {
    if (config_path) {
      ConfigValues v = read_config_file(*config_path);
      if (!map_path && v.count("map")) map_path = v["map"];
      if (!key_path && v.count("key")) key_path = v["key"];
      if (!server && v.count("server")) server = v["server"];
      if (!client_id && v.count("client_id"))
        client_id = detail::parse_uint<std::uint16_t>("client_id", v["client_id"]);
    }
    if (!map_path) throw ConfigError("missing required field: map");
    if (!key_path) throw ConfigError("missing required field: key");
    if (!server) throw ConfigError("missing required field: server");

    ClientMap map = load_map(*map_path);
    const std::uint16_t id = client_id.value_or(map.client_id());
    if (id >= map.client_count())
      throw ConfigError("client_id (" + std::to_string(id) + ") must be below client_count (" +
                        std::to_string(map.client_count()) + ")");
    map.set_identity(id, Role::kObfuscation);

    const StoreKey key = load_key(*key_path);
    TcpTransport transport(*server);
    SealedSession session(transport, key);
    std::random_device rd;
    std::mt19937_64 rng((static_cast<std::uint64_t>(rd()) << 32) | rd());

    std::signal(SIGINT, on_stop);
    std::signal(SIGTERM, on_stop);

    ClientState cs{std::move(map), Clock(), session.block_size(), {}};
    OcState oc = init_oc(std::move(cs), buffer, session, rng);
    std::cerr << "caos-oc: buffer filled with " << oc.buffer.size() << " blocks\n";

    const auto period = rate > 0 ? std::chrono::duration<double>(1.0 / rate)
                                 : std::chrono::duration<double>(0);
    auto next = std::chrono::steady_clock::now();
    std::uint64_t done = 0, retried = 0, evicted = 0;
    while (!g_stop && (rounds == 0 || done < rounds)) {
      OcOutcome out = access_oc(oc, session, rng);
      ++done;
      retried += out.retried;
      evicted += out.attempt.out1.has_value() + out.attempt.out2.has_value();
      if (done % 64 == 0) save_map(*map_path, oc.client.map);
      if (rate > 0) {
        next += std::chrono::duration_cast<std::chrono::steady_clock::duration>(period);
        std::this_thread::sleep_until(next);
      }
    }
    save_map(*map_path, oc.client.map);
    std::cerr << "caos-oc: " << done << " rounds, " << retried << " retries, " << evicted
              << " buffered blocks written out\n";
    return tools::kOk;
  });
}
