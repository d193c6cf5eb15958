#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "server.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Interactive preview service"};
  topopt::preview::ServerOptions options;
  options.static_dir = TOPOPT_PREVIEW_STATIC_DIR;
  std::string static_dir = options.static_dir.string();
  app.add_option("--port", options.port, "Listen port (0 = any free port)")->capture_default_str();
  app.add_option("--address", options.address, "Listen address")->capture_default_str();
  app.add_option("--static-dir", static_dir, "Directory served at /")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  options.static_dir = static_dir;

  // Handle termination signals synchronously on this thread; workers inherit the mask.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  topopt::preview::Server server(options);
  try {
    server.start();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cout << "listening on http://" << options.address << ":" << server.port() << "/"
            << std::endl;
  int sig = 0;
  sigwait(&signals, &sig);
  server.stop();
  return 0;
}
