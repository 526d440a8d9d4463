// Fixture-driven chat-completions server for offline runs.
#include <atomic>
#include <chrono>
#include <csignal>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "its/error.hpp"
#include "its/mock_server.hpp"
#include "its/util.hpp"

namespace {
std::atomic<bool> g_stop{false};
void on_signal(int) { g_stop = true; }
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic mock chat-completions server"};
  std::string fixture_path;
  int port = 0;
  std::string port_file;
  app.add_option("--fixture", fixture_path, "Fixture JSON file")->required();
  app.add_option("--port", port, "Port to bind on 127.0.0.1 (0 picks a free port)");
  app.add_option("--port-file", port_file, "Write the bound port to this file");
  CLI11_PARSE(app, argc, argv);

  try {
    const auto fixture =
        its::mock::Fixture::from_json(nlohmann::json::parse(its::read_file(fixture_path)));
    its::mock::MockModelServer server(fixture, port);
    if (!port_file.empty()) its::write_file_atomic(port_file, std::to_string(server.port()) + "\n");
    std::cout << "listening on " << server.base_url() << std::endl;

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    server.stop();
    std::cout << "served " << server.request_count() << " requests" << std::endl;
  } catch (const std::exception& e) {
    std::cerr << "its-mock-server: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
