#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <random>

#include "caos/bench.hpp"
#include "caos/client.hpp"
#include "caos/codec.hpp"
#include "caos/map_file.hpp"
#include "caos/net.hpp"
#include "common.hpp"

using namespace caos;

namespace {

ClientState open_client(const DeploymentConfig& cfg) {
  ClientState cs{load_map(cfg.map), Clock(), cfg.block_size, {}};
  if (cs.map.client_count() != cfg.client_count || cs.map.positions() != cfg.positions ||
      cs.map.n() != cfg.blocks)
    throw ConfigError("map file " + cfg.map.string() + " does not match the config (blocks, " +
                      "positions or client_count differ)");
  cs.map.set_identity(cfg.client_id, cfg.role);
  return cs;
}

BlockId parse_block(const DeploymentConfig& cfg, std::uint64_t id) {
  if (id >= cfg.blocks)
    throw LookupError("block id " + std::to_string(id) + " is not below blocks=" +
                      std::to_string(cfg.blocks));
  return block_id(id);
}

Bytes padded(Bytes payload, const DeploymentConfig& cfg, const std::string& what) {
  if (payload.size() > cfg.block_size)
    throw ConfigError(what + " has " + std::to_string(payload.size()) +
                      " bytes, more than block_size=" + std::to_string(cfg.block_size));
  payload.resize(cfg.block_size, 0);
  return payload;
}

std::vector<Bytes> read_db(const std::filesystem::path& dir, const DeploymentConfig& cfg) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.size() != cfg.blocks)
    throw ConfigError("blocks=" + std::to_string(cfg.blocks) + " but " + dir.string() + " holds " +
                      std::to_string(files.size()) + " files");
  std::vector<Bytes> db;
  for (const auto& f : files) db.push_back(padded(read_file(f), cfg, f.string()));
  return db;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Read-write and read-only client for a CAOS store.", "caos-client"};
  app.require_subcommand(1);
  tools::ConfigFlags cfg_flags;
  cfg_flags.add_to(app);

  auto* init = app.add_subcommand("init", "create the key if missing, upload the initial layout, write the map");
  int fill = 0;
  std::string db_dir;
  auto* fill_opt =
      init->add_option("--fill", fill, "byte value of every initial payload")->check(CLI::Range(0, 255));
  init->add_option("--db", db_dir, "directory with one payload file per block, in name order")
      ->check(CLI::ExistingDirectory)
      ->excludes(fill_opt);

  auto* get = app.add_subcommand("get", "read one block");
  std::uint64_t get_id = 0;
  std::string out_path;
  get->add_option("id", get_id, "block id")->required();
  get->add_option("-o,--out", out_path, "write the payload here instead of stdout");

  auto* put = app.add_subcommand("put", "write one block");
  std::uint64_t put_id = 0;
  std::string value, in_path;
  put->add_option("id", put_id, "block id")->required();
  auto* vopt = put->add_option("--value", value, "payload text, zero-padded to block_size");
  auto* fopt = put->add_option("--in,--file", in_path, "payload file, zero-padded to block_size");
  vopt->excludes(fopt);

  auto* bench = app.add_subcommand("bench", "random gets and puts with traffic accounting");
  BenchOptions bopt;
  std::string bench_json;
  bench->add_option("--ops", bopt.ops, "accesses to run");
  bench->add_option("--parallel", bopt.parallel, "concurrent sessions");
  bench->add_option("--write-share", bopt.write_share, "share of puts")->check(CLI::Range(0.0, 1.0));
  bench->add_option("--seed", bopt.seed, "random seed");
  bench->add_option("--json", bench_json, "write the report as JSON to this file");

  return tools::run(app, argc, argv, [&]() -> int {
    const DeploymentConfig cfg = cfg_flags.load();

    if (*init) {
      if (cfg.role != Role::kReadWrite) throw ConfigError("role: only the rw client initializes");
      StoreKey key;
      if (std::filesystem::exists(cfg.key)) {
        key = load_key(cfg.key);
      } else {
        key = keygen();
        save_key(cfg.key, key);
      }
      TcpTransport t(cfg.server);
      SealedSession s(t, key);
      if (s.block_size() != cfg.block_size)
        throw ConfigError("block_size=" + std::to_string(cfg.block_size) +
                          " but the server stores blocks of " + std::to_string(s.block_size()));
      std::vector<Bytes> db = db_dir.empty() ? std::vector<Bytes>(cfg.blocks, Bytes(cfg.block_size,
                                                   static_cast<std::uint8_t>(fill)))
                                             : read_db(db_dir, cfg);
      std::random_device rd;
      std::mt19937_64 rng((static_cast<std::uint64_t>(rd()) << 32) | rd());
      Clock clock;
      ClientMap map = init_store(db, cfg.positions, cfg.redundancy, cfg.client_count,
                                 cfg.block_size, clock, rng, s);
      map.set_identity(cfg.client_id, cfg.role);
      save_map(cfg.map, map);
      std::cerr << "initialized " << cfg.blocks << " blocks over " << cfg.positions
                << " positions; map written to " << cfg.map.string() << "\n";
      return tools::kOk;
    }

    const StoreKey key = load_key(cfg.key);
    ClientState cs = open_client(cfg);
    std::random_device rd;
    std::mt19937_64 rng((static_cast<std::uint64_t>(rd()) << 32) | rd());

    if (*bench) {
      auto make = [&]() -> std::unique_ptr<StoreSession> {
        struct Owned : SealedSession {
          Owned(std::unique_ptr<TcpTransport> t, const StoreKey& k)
              : SealedSession(*t, k), transport(std::move(t)) {}
          std::unique_ptr<TcpTransport> transport;
        };
        auto t = std::make_unique<TcpTransport>(cfg.server);
        return std::make_unique<Owned>(std::move(t), key);
      };
      BenchReport r = cmd_bench(cs, make, bopt);
      save_map(cfg.map, cs.map);
      nlohmann::json j = {{"ops", r.ops},
                          {"parallel", r.parallel},
                          {"completed", r.completed},
                          {"failed", r.failed},
                          {"attempts", r.attempts},
                          {"retried", r.retried},
                          {"locked", r.locked},
                          {"stale", r.stale},
                          {"ct_size", r.ct_size},
                          {"ciphertexts_down", r.ciphertexts_down},
                          {"ciphertexts_up", r.ciphertexts_up},
                          {"ciphertext_bytes_down", r.ciphertexts_down * r.ct_size},
                          {"ciphertext_bytes_up", r.ciphertexts_up * r.ct_size},
                          {"bytes_down", r.bytes_down},
                          {"bytes_up", r.bytes_up},
                          {"seconds", r.seconds},
                          {"accesses_per_s", r.accesses_per_s()},
                          {"blocks_per_s", r.blocks_per_s()},
                          {"constant_bandwidth", r.constant_bandwidth()}};
      if (!bench_json.empty()) std::ofstream(bench_json) << j.dump(2) << "\n";
      std::cout << j.dump() << "\n";
      if (!r.constant_bandwidth())
        throw ProtocolError("an access moved other than two ciphertexts each way");
      return tools::kOk;
    }

    TcpTransport t(cfg.server);
    SealedSession s(t, key);
    if (*get) {
      auto out = access_rw(parse_block(cfg, get_id), Op::kRead, std::nullopt, s, cs, rng);
      save_map(cfg.map, cs.map);
      if (out_path.empty()) {
        std::cout.write(reinterpret_cast<const char*>(out.result->data()),
                        static_cast<std::streamsize>(out.result->size()));
      } else {
        write_file_atomic(out_path, *out.result);
      }
      return tools::kOk;
    }

    if (value.empty() && in_path.empty()) throw ConfigError("put needs --value or --in");
    Bytes payload;
    if (!in_path.empty()) payload = read_file(in_path);
    else payload.assign(value.begin(), value.end());
    access_rw(parse_block(cfg, put_id), Op::kWrite, padded(std::move(payload), cfg, "payload"), s,
              cs, rng);
    save_map(cfg.map, cs.map);
    return tools::kOk;
  });
}
