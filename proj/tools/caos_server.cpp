#include <filesystem>
#include <iostream>

#include "caos/codec.hpp"
#include "caos/net.hpp"
#include "caos/store_file.hpp"
#include "common.hpp"

using namespace caos;

int main(int argc, char** argv) {
  CLI::App app{"Serves a position-addressed store of sealed slots over TCP.", "caos-server"};
  tools::ConfigFlags cfg_flags;
  cfg_flags.add_to(app);
  std::string access_log;
  app.add_option("--access-log", access_log, "append every granted READ and WRITE to this file");
  bool check = false;
  app.add_flag("--check", check, "validate the configuration and the store file, then exit");

  return tools::run(app, argc, argv, [&] {
    const DeploymentConfig cfg = cfg_flags.load();
    const auto slot = static_cast<std::uint32_t>(sealed_size(cfg.block_size));
    FileSlots slots = std::filesystem::exists(cfg.store)
                          ? FileSlots(cfg.store)
                          : FileSlots::create(cfg.store, cfg.positions, slot);
    if (slots.positions() != cfg.positions || slots.slot_size() != slot)
      throw ConfigError("store file " + cfg.store.string() + " has " +
                        std::to_string(slots.positions()) + " positions of " +
                        std::to_string(slots.slot_size()) + " bytes; config asks for positions=" +
                        std::to_string(cfg.positions) + ", block_size=" +
                        std::to_string(cfg.block_size));
    if (slots.recovered()) std::cerr << "caos-server: replayed a pending journal record\n";
    if (check) {
      std::cout << cfg.store.string() << ": " << slots.positions() << " positions, "
                << (slots.initialized() ? "initialized" : "not initialized") << "\n";
      return tools::kOk;
    }

    AccessLogSink sink;
    std::optional<AccessLogFile> log_file;
    if (!access_log.empty()) {
      log_file.emplace(access_log);
      sink = [&log_file](const AccessRecord& r) { (*log_file)(r); };
    }
    StoreService<FileSlots> svc(slots, cfg.lock_timeout_ms, sink);

    sigset_t stop = tools::block_stop_signals();
    TcpServer<FileSlots> server(svc, cfg.server);
    server.start();
    std::cerr << "caos-server: listening on port " << server.port() << " ("
              << slots.positions() << " positions, "
              << (slots.initialized() ? "initialized" : "waiting for BULK_INIT") << ")\n";
    int sig = 0;
    sigwait(&stop, &sig);
    server.stop();
    std::cerr << "caos-server: stopped after " << svc.stats().reads << " reads, "
              << svc.stats().writes << " writes\n";
    return tools::kOk;
  });
}
