#include "title_forge/service.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <mutex>
#include <semaphore>
#include <thread>

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "title_forge/decoding.hpp"

namespace title_forge {

using nlohmann::json;

RequestError::RequestError(std::string summary, std::map<std::string, std::string> fields)
    : Error(Errc::InvalidArgument, summary), summary_(std::move(summary)), fields_(std::move(fields)) {}

namespace {

// Reads an optional positive integer field; records a field error on misuse.
std::size_t positive_field(const json& body, const char* name, std::size_t fallback, std::size_t upper,
                           std::map<std::string, std::string>& errors) {
  auto it = body.find(name);
  if (it == body.end() || it->is_null()) return fallback;
  if (!it->is_number_integer()) {
    errors[name] = "must be an integer";
    return fallback;
  }
  const auto v = it->get<std::int64_t>();
  if (v < 1 || static_cast<std::uint64_t>(v) > upper) {
    errors[name] = "must be between 1 and " + std::to_string(upper);
    return fallback;
  }
  return static_cast<std::size_t>(v);
}

std::string text_field(const json& body, const char* name, std::map<std::string, std::string>& errors) {
  auto it = body.find(name);
  if (it == body.end() || it->is_null()) return {};
  if (!it->is_string()) {
    errors[name] = "must be a string";
    return {};
  }
  return it->get<std::string>();
}

bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::string error_body(const std::string& message, const std::map<std::string, std::string>& fields = {}) {
  json j;
  j["error"] = message;
  j["fields"] = json::object();
  for (const auto& [k, v] : fields) j["fields"][k] = v;
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

}  // namespace

GenerateRequest parse_generate_request(std::string_view text, const RequestLimits& limits) {
  json body = json::parse(text, nullptr, false);
  if (body.is_discarded() || !body.is_object()) throw RequestError("body must be a JSON object", {});

  std::map<std::string, std::string> errors;
  GenerateRequest req;
  auto lang_it = body.find("language");
  if (lang_it == body.end() || !lang_it->is_string()) {
    errors["language"] = "required; one of java, csharp, python, javascript";
  } else if (auto lang = parse_language(lang_it->get<std::string>())) {
    req.language = *lang;
  } else {
    errors["language"] = "unknown language '" + lang_it->get<std::string>() + "'";
  }
  req.description = text_field(body, "description", errors);
  req.code = text_field(body, "code", errors);
  req.beam_width = positive_field(body, "beam_width", limits.default_beam_width, limits.max_beam_width, errors);
  req.num_titles = positive_field(body, "num_titles", std::min(limits.default_num_titles, req.beam_width),
                                  limits.max_beam_width, errors);

  if (!errors.count("num_titles") && !errors.count("beam_width") && req.num_titles > req.beam_width)
    errors["num_titles"] = "must not exceed beam_width";
  if (req.description.size() + req.code.size() > limits.max_input_bytes) {
    const auto msg = "description and code together exceed " + std::to_string(limits.max_input_bytes) + " bytes";
    errors["description"] = msg;
    errors["code"] = msg;
  }
  if (!errors.empty()) throw RequestError("invalid request", std::move(errors));
  if (blank(req.description) && blank(req.code))
    throw RequestError("empty input", {{"description", "empty input"}, {"code", "empty input"}});
  return req;
}

std::string to_json(const GenerateResponse& response) {
  nlohmann::ordered_json j;
  j["titles"] = nlohmann::ordered_json::array();
  for (const auto& t : response.titles) {
    nlohmann::ordered_json item;
    item["text"] = t.text;
    item["normalized_score"] = t.normalized_score;
    j["titles"].push_back(item);
  }
  j["model_id"] = response.model_id;
  j["elapsed_ms"] = response.elapsed_ms;
  // Byte-level decoding can stop inside a multi-byte character; such bytes
  // become U+FFFD rather than failing the whole response.
  return j.dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace);
}

std::string to_json(const HealthStatus& health) {
  nlohmann::ordered_json j;
  j["model_id"] = health.model_id;
  j["uptime"] = health.uptime_seconds;
  j["ready"] = health.ready;
  return j.dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace);
}

struct TitleService::Impl {
  struct Loaded {
    Transformer model;
    Vocabulary vocab;
    std::string model_id;
  };

  Options options;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();
  mutable std::mutex mutex;  // guards `loaded`
  std::shared_ptr<const Loaded> loaded;
  std::atomic<bool> ready{false};
  mutable std::counting_semaphore<4096> decode_slots;
  httplib::Server server;
  std::thread thread;

  explicit Impl(Options opts)
      : options(opts), decode_slots(static_cast<std::ptrdiff_t>(opts.max_concurrent_decodes)) {}

  std::shared_ptr<const Loaded> current() const {
    std::lock_guard lock(mutex);
    return loaded;
  }
};

TitleService::TitleService(Options options) {
  if (options.max_concurrent_decodes == 0)
    options.max_concurrent_decodes = std::max(1u, std::thread::hardware_concurrency());
  options.max_concurrent_decodes = std::min<std::size_t>(options.max_concurrent_decodes, 4096);
  if (options.http_threads == 0) options.http_threads = options.max_concurrent_decodes + 4;
  impl_ = std::make_unique<Impl>(options);

  auto& svr = impl_->server;
  const auto threads = options.http_threads;
  svr.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  svr.set_payload_max_length(4 * options.limits.max_input_bytes + 4096);
  svr.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Headers", "Content-Type"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  svr.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) {
    auto reply = handle_health();
    res.status = reply.status;
    res.set_content(reply.body, "application/json; charset=utf-8");
  });
  svr.Post("/api/generate", [this](const httplib::Request& req, httplib::Response& res) {
    auto reply = handle_generate(req.body);
    res.status = reply.status;
    res.set_content(reply.body, "application/json; charset=utf-8");
  });
  svr.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
}

TitleService::~TitleService() { stop(); }

void TitleService::load(Transformer model, Vocabulary vocab, std::string model_id) {
  if (vocab.size() != model.config().vocab_size)
    throw Error(Errc::BadConfig, "vocabulary has " + std::to_string(vocab.size()) + " pieces but the model expects " +
                                     std::to_string(model.config().vocab_size));
  auto loaded = std::make_shared<const Impl::Loaded>(Impl::Loaded{std::move(model), std::move(vocab), std::move(model_id)});
  std::lock_guard lock(impl_->mutex);
  impl_->loaded = std::move(loaded);
  impl_->ready = false;
}

void TitleService::warm_up() {
  auto loaded = impl_->current();
  if (!loaded) throw Error(Errc::InvalidArgument, "no model loaded");
  auto input = build_model_input(loaded->vocab, Language::Java, "warm up", "int x = 0;",
                                 loaded->model.config().max_encoder_len);
  greedy_decode(loaded->model, input, 2);
  impl_->ready = true;
  spdlog::info("model {} ready", loaded->model_id);
}

bool TitleService::ready() const noexcept { return impl_->ready.load(); }

HealthStatus TitleService::health() const {
  HealthStatus h;
  if (auto loaded = impl_->current()) h.model_id = loaded->model_id;
  h.uptime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - impl_->started).count();
  h.ready = ready();
  return h;
}

GenerateResponse TitleService::generate(const GenerateRequest& request) const {
  auto loaded = impl_->current();
  if (!loaded || !ready()) throw Error(Errc::InvalidArgument, "model not ready");
  const auto begin = std::chrono::steady_clock::now();
  const auto& cfg = loaded->model.config();
  auto input = build_model_input(loaded->vocab, request.language, request.description, request.code,
                                 cfg.max_encoder_len);
  std::vector<Hypothesis> hyps;
  {
    impl_->decode_slots.acquire();
    struct Release {
      std::counting_semaphore<4096>& s;
      ~Release() { s.release(); }
    } release{impl_->decode_slots};
    hyps = beam_search(loaded->model, input, BeamConfig{request.beam_width, cfg.max_decoder_len, 1.0});
  }
  GenerateResponse response;
  response.model_id = loaded->model_id;
  for (std::size_t i = 0; i < hyps.size() && i < request.num_titles; ++i)
    response.titles.push_back({hypothesis_text(loaded->vocab, hyps[i]), hyps[i].normalized(1.0)});
  response.elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - begin).count();
  return response;
}

HttpReply TitleService::handle_generate(std::string_view body) const {
  if (!ready()) return {503, error_body("model not ready")};
  try {
    auto request = parse_generate_request(body, impl_->options.limits);
    return {200, to_json(generate(request))};
  } catch (const RequestError& e) {
    return {400, error_body(e.summary(), e.fields())};
  } catch (const Error& e) {
    if (e.code() == Errc::EmptyInput) return {400, error_body("empty input")};
    spdlog::error("generate failed: {}", e.what());
    return {500, error_body(e.what())};
  }
}

HttpReply TitleService::handle_health() const { return {200, to_json(health())}; }

int TitleService::start(const std::string& host, int port) {
  auto& svr = impl_->server;
  int bound = port;
  if (port == 0) {
    bound = svr.bind_to_any_port(host);
    if (bound < 0) throw Error(Errc::Io, "cannot bind " + host);
  } else if (!svr.bind_to_port(host, port)) {
    throw Error(Errc::Io, "cannot bind " + host + ":" + std::to_string(port));
  }
  impl_->thread = std::thread([&svr] { svr.listen_after_bind(); });
  svr.wait_until_ready();
  spdlog::info("listening on {}:{}", host, bound);
  return bound;
}

void TitleService::run(const std::string& host, int port) {
  auto& svr = impl_->server;
  if (!svr.bind_to_port(host, port)) throw Error(Errc::Io, "cannot bind " + host + ":" + std::to_string(port));
  spdlog::info("listening on {}:{}", host, port);
  svr.listen_after_bind();
}

void TitleService::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::pair<std::string, int> parse_bind_address(std::string_view text) {
  std::string host = "127.0.0.1";
  std::string_view port_text = text;
  if (auto colon = text.rfind(':'); colon != std::string_view::npos) {
    host = std::string(text.substr(0, colon));
    port_text = text.substr(colon + 1);
    if (host.empty()) host = "0.0.0.0";
  }
  int port = -1;
  auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || port < 0 || port > 65535)
    throw Error(Errc::InvalidArgument, "bad bind address '" + std::string(text) + "'");
  return {host, port};
}

}  // namespace title_forge
