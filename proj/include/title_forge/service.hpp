#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "title_forge/error.hpp"
#include "title_forge/language.hpp"
#include "title_forge/model.hpp"
#include "title_forge/tokenizer.hpp"

namespace title_forge {

struct GenerateRequest {
  Language language = Language::Java;
  std::string description;
  std::string code;
  std::size_t beam_width = 5;
  std::size_t num_titles = 3;
};

struct GeneratedTitle {
  std::string text;
  double normalized_score = 0.0;
};

struct GenerateResponse {
  std::vector<GeneratedTitle> titles;  // best first
  std::string model_id;
  double elapsed_ms = 0.0;
};

struct HealthStatus {
  std::string model_id;
  double uptime_seconds = 0.0;
  bool ready = false;
};

/// A rejected request; fields() maps each offending field to its problem.
class RequestError : public Error {
 public:
  RequestError(std::string summary, std::map<std::string, std::string> fields);
  const std::string& summary() const noexcept { return summary_; }
  const std::map<std::string, std::string>& fields() const noexcept { return fields_; }

 private:
  std::string summary_;
  std::map<std::string, std::string> fields_;
};

struct RequestLimits {
  std::size_t default_beam_width = 5;
  std::size_t default_num_titles = 3;
  std::size_t max_beam_width = 64;
  /// Joint cap on description + code bytes.
  std::size_t max_input_bytes = 64 * 1024;
};

/// Parses and validates a JSON GenerateRequest. Throws RequestError.
GenerateRequest parse_generate_request(std::string_view body, const RequestLimits& limits = {});

std::string to_json(const GenerateResponse& response);
std::string to_json(const HealthStatus& health);

struct HttpReply {
  int status = 200;
  std::string body;  // JSON
};

/// Title generation behind a two-endpoint HTTP API. The model is loaded
/// once, shared read-only, and only served after warm_up(); a semaphore caps
/// concurrent decodes while the HTTP pool stays larger so health checks are
/// never queued behind generation.
class TitleService {
 public:
  struct Options {
    RequestLimits limits;
    /// 0 means one per hardware thread.
    std::size_t max_concurrent_decodes = 0;
    /// HTTP worker threads; 0 means max_concurrent_decodes + 4.
    std::size_t http_threads = 0;
  };

  explicit TitleService(Options options);
  ~TitleService();
  TitleService(const TitleService&) = delete;
  TitleService& operator=(const TitleService&) = delete;

  /// Installs the model; the service stays not-ready until warm_up().
  void load(Transformer model, Vocabulary vocab, std::string model_id);
  /// Runs one decode to touch every weight, then flips ready.
  void warm_up();
  bool ready() const noexcept;

  HealthStatus health() const;
  /// Throws Error(InvalidArgument) when not ready.
  GenerateResponse generate(const GenerateRequest& request) const;

  /// Transport-free request handling (status codes as served over HTTP).
  HttpReply handle_generate(std::string_view body) const;
  HttpReply handle_health() const;

  /// Binds and serves on a background thread; port 0 picks a free port.
  /// Returns the bound port. Throws Error(Io) if binding fails.
  int start(const std::string& host, int port);
  /// Binds and serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Splits "host:port"; a bare port binds 127.0.0.1. Throws Error(InvalidArgument).
std::pair<std::string, int> parse_bind_address(std::string_view text);

}  // namespace title_forge
