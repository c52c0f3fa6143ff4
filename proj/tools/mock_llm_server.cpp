#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "latte/mock_server.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Local hidden-states endpoint returning deterministic stub states"};
  latte::MockHiddenStatesServer::Options options;
  int port = 8089;
  std::string host = "127.0.0.1";
  app.add_option("--host", host, "bind address");
  app.add_option("--port", port, "listen port");
  app.add_option("--dim", options.dim, "hidden-state width");
  app.add_option("--seed", options.seed, "stub seed");
  app.add_option("--model-id", options.model_id, "model id reported in responses");
  app.add_option("--fail-first", options.fail_first, "answer the first N requests with HTTP 503");
  CLI11_PARSE(app, argc, argv);
  try {
    latte::MockHiddenStatesServer server(options);
    std::cout << "serving on http://" << host << ":" << port << "/v1/hidden_states" << std::endl;
    server.listen(host, port);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
