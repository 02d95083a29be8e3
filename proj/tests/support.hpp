#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "dmaudit/mockserver.hpp"
#include "dmaudit/reference.hpp"

namespace testing {

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, std::string_view bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::filesystem::path data_path(const std::string& name) { return std::filesystem::path(DMAUDIT_DATA_DIR) / name; }

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  static std::mt19937_64 rng(std::random_device{}());
  auto dir = std::filesystem::temp_directory_path() / ("dmaudit-" + name + "-" + std::to_string(rng() % 1000000000));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Reference scenario served on loopback, plus client options that route
// every reference host to it.
struct Mock {
  dmaudit::mock::MockServer server;
  dmaudit::http::ClientOptions client;

  explicit Mock(dmaudit::mock::ScenarioConfig config = dmaudit::reference::scenario()) : server(std::move(config)) {
    client.endpoints = server.endpoints(dmaudit::reference::hosts());
    client.allow_external = false;
    client.timeout = std::chrono::milliseconds{5000};
  }
};

}  // namespace testing
