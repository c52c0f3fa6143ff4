#include "latte/mock_server.hpp"

#include <json.hpp>

#include "latte/error.hpp"
#include "latte/knowledge.hpp"

// After Eigen: the resolver headers pulled in by httplib define a `res` macro.
#include <httplib.h>

namespace latte {

struct MockHiddenStatesServer::Impl {
  httplib::Server server;
};

MockHiddenStatesServer::MockHiddenStatesServer(Options options)
    : options_(std::move(options)), impl_(std::make_unique<Impl>()) {
  impl_->server.Post("/v1/hidden_states", [this](const httplib::Request& req, httplib::Response& res) {
    const long n = ++requests_;
    if (n <= options_.fail_first) {
      res.status = 503;
      res.set_content(R"({"error":"warming up"})", "application/json");
      return;
    }
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
      const auto prompt = body.at("prompt").get<std::string>();
      const int layer = body.contains("layer") ? parse_layer(body["layer"]) : kDefaultLayer;
      auto response = hidden_states_response(stub_hidden_states(prompt, options_.dim, layer, options_.seed));
      response["model_id"] = options_.model_id;
      response["layer"] = layer;
      res.set_content(response.dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
    }
  });
  impl_->server.Get("/v1/stats", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(nlohmann::json{{"requests", requests_.load()}}.dump(), "application/json");
  });
}

MockHiddenStatesServer::~MockHiddenStatesServer() { stop(); }

int MockHiddenStatesServer::start(int port) {
  port_ = port == 0 ? impl_->server.bind_to_any_port("127.0.0.1") : port;
  if (port != 0 && !impl_->server.bind_to_port("127.0.0.1", port)) port_ = -1;
  if (port_ <= 0) throw IoError("mock hidden-states server could not bind a port");
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void MockHiddenStatesServer::listen(const std::string& host, int port) {
  port_ = port;
  if (!impl_->server.listen(host, port)) throw IoError("mock hidden-states server could not listen on port " + std::to_string(port));
}

void MockHiddenStatesServer::stop() {
  impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

std::string MockHiddenStatesServer::url() const { return "http://127.0.0.1:" + std::to_string(port_); }

}  // namespace latte
