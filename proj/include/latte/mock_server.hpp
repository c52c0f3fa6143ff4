#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <thread>

namespace latte {

/// Local stand-in for a hidden-states endpoint. Answers POST
/// /v1/hidden_states with deterministic stub states of width `dim`.
class MockHiddenStatesServer {
 public:
  struct Options {
    int dim = 64;
    std::uint64_t seed = 0;
    std::string model_id = "mock-llm";
    /// The first `fail_first` requests get HTTP 503.
    int fail_first = 0;
  };

  explicit MockHiddenStatesServer(Options options);
  ~MockHiddenStatesServer();
  MockHiddenStatesServer(const MockHiddenStatesServer&) = delete;
  MockHiddenStatesServer& operator=(const MockHiddenStatesServer&) = delete;

  /// Binds 127.0.0.1 (port 0 picks a free port) and serves on a background thread.
  int start(int port = 0);
  /// Serves on the calling thread until stop().
  void listen(const std::string& host, int port);
  void stop();

  std::string url() const;
  int port() const { return port_; }
  long requests() const { return requests_.load(); }

 private:
  struct Impl;
  Options options_;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<long> requests_{0};
};

}  // namespace latte
