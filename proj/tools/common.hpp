#pragma once

#include <CLI11.hpp>
#include <csignal>
#include <iostream>
#include <optional>
#include <string>

#include "caos/config.hpp"
#include "caos/errors.hpp"

// Pieces shared by the command-line tools: config flags and exit codes.

namespace caos::tools {

enum ExitCode : int { kOk = 0, kConfig = 2, kProtocol = 3, kIntegrity = 4 };

/// --config plus one flag per config field; given flags override the file.
struct ConfigFlags {
  std::optional<std::string> path;
  ConfigValues values;

  void add_to(CLI::App& app) {
    app.add_option("-c,--config", path, "key=value deployment file");
    auto flag = [&](const char* field, const char* name, const char* help) {
      app.add_option_function<std::string>(
          name, [this, field](const std::string& v) { values[field] = v; }, help);
    };
    flag("server", "--server", "server address host:port");
    flag("store", "--store", "server slot file");
    flag("positions", "--positions", "store positions N");
    flag("blocks", "--blocks", "number of blocks n");
    flag("block_size", "--block-size", "payload bytes per block");
    flag("redundancy", "--redundancy", "initial copies per block C");
    flag("client_count", "--client-count", "clients sharing the store");
    flag("lock_timeout_ms", "--lock-timeout-ms", "server lock timeout in milliseconds");
    flag("key", "--key", "store key file");
    flag("map", "--map", "client map file");
    flag("role", "--role", "client role: rw, ro or oc");
    flag("client_id", "--client-id", "this client's index below client_count");
  }

  DeploymentConfig load() const {
    return load_config(path ? std::optional<std::filesystem::path>(*path) : std::nullopt, values);
  }
};

inline int exit_code(const std::exception& e) {
  if (dynamic_cast<const IntegrityError*>(&e)) return kIntegrity;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const CapacityError*>(&e) ||
      dynamic_cast<const std::filesystem::filesystem_error*>(&e))
    return kConfig;
  if (dynamic_cast<const Error*>(&e)) return kProtocol;
  return 1;
}

/// Parses arguments and runs `body`, mapping errors to exit codes.
template <class Body>
int run(CLI::App& app, int argc, char** argv, Body&& body) {
  app.set_version_flag("--version", std::string(CAOS_VERSION));
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }
  try {
    return body();
  } catch (const std::exception& e) {
    std::cerr << app.get_name() << ": " << e.what() << "\n";
    return exit_code(e);
  }
}

/// Blocks SIGINT and SIGTERM in this thread and every thread started after.
inline sigset_t block_stop_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  return set;
}

}  // namespace caos::tools
