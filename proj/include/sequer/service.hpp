#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

// Eigen must be parsed before httplib: <resolv.h> defines a macro named
// _res, which Eigen uses as a parameter name.
#include "sequer/beam.hpp"
#include "sequer/bpe.hpp"
#include "sequer/checkpoint.hpp"
#include "sequer/error.hpp"
#include "sequer/similarity.hpp"

#include <httplib.h>
#include <json.hpp>

namespace sequer {

inline constexpr std::size_t kMaxQueryChars = 512;
inline constexpr std::size_t kMaxK = 50;
inline constexpr const char* kConfigEnv = "SEQUER_CONFIG";

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string checkpoint;
  std::string bpe;
  std::size_t default_k = kDefaultBeam;
  double default_alpha = kDefaultAlpha;
  std::vector<std::string> allowed_origins;
  bool allow_any_origin = false;
  int request_timeout_ms = 10'000;
  std::size_t workers = std::max(1u, std::thread::hardware_concurrency());

  void validate() const {
    if (default_k < 1) throw Error(Errc::InvalidArgument, "default k must be >= 1");
    if (workers < 1) throw Error(Errc::InvalidArgument, "workers must be >= 1");
    if (port < 0 || port > 65535) throw Error(Errc::InvalidArgument, "port out of range");
  }
};

/// Fields missing from the JSON keep their current values.
inline void merge_service_config(ServiceConfig& c, const nlohmann::json& j) {
  try {
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.checkpoint = j.value("checkpoint", c.checkpoint);
    c.bpe = j.value("bpe", c.bpe);
    c.default_k = j.value("default_k", c.default_k);
    c.default_alpha = j.value("default_alpha", c.default_alpha);
    c.allowed_origins = j.value("allowed_origins", c.allowed_origins);
    c.allow_any_origin = j.value("allow_any_origin", c.allow_any_origin);
    c.request_timeout_ms = j.value("request_timeout_ms", c.request_timeout_ms);
    c.workers = j.value("workers", c.workers);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("bad service config: ") + e.what());
  }
}

/// Defaults, then the file named by SEQUER_CONFIG when set.
inline ServiceConfig service_config_from_env() {
  ServiceConfig c;
  if (const char* path = std::getenv(kConfigEnv); path && *path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::Io, std::string("cannot read ") + path);
    try {
      merge_service_config(c, nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(Errc::InvalidArgument, std::string("bad service config: ") + e.what());
    }
  }
  return c;
}

struct HttpReply {
  int status = 200;
  nlohmann::json body;
};

inline std::string content_version(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  char buf[4096];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h = (h ^ static_cast<unsigned char>(buf[i])) * 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

/// Request handling without the transport. The model is shared read-only;
/// a semaphore caps concurrent beam searches.
class SuggestService {
 public:
  SuggestService(std::shared_ptr<const Transducer<float>> model, std::shared_ptr<const BpeModel> bpe,
                 ServiceConfig cfg, std::string model_version)
      : model_(std::move(model)),
        bpe_(std::move(bpe)),
        cfg_(std::move(cfg)),
        version_(std::move(model_version)),
        slots_(static_cast<std::ptrdiff_t>(std::min<std::size_t>(cfg_.workers, kMaxWorkers))) {
    cfg_.validate();
    ready_ = model_ && bpe_;
  }

  /// Loads checkpoint and tokenizer named in the config; fails fast.
  static std::unique_ptr<SuggestService> load(const ServiceConfig& cfg) {
    cfg.validate();
    auto model = std::make_shared<const Transducer<float>>(load_checkpoint<float>(std::filesystem::path(cfg.checkpoint)));
    auto bpe = std::make_shared<const BpeModel>(BpeModel::load(std::filesystem::path(cfg.bpe)));
    if (bpe->vocab_size() != model->config().vocab_size) {
      throw Error(Errc::CorruptCheckpoint, "checkpoint vocabulary does not match the tokenizer");
    }
    return std::make_unique<SuggestService>(std::move(model), std::move(bpe), cfg, content_version(cfg.checkpoint));
  }

  [[nodiscard]] const ServiceConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] const std::string& model_version() const noexcept { return version_; }

  /// While not ready every /suggest call answers 503.
  void set_ready(bool ready) { ready_ = ready && model_ && bpe_; }
  [[nodiscard]] bool ready() const { return ready_; }

  [[nodiscard]] HttpReply health() const {
    return {200, {{"status", ready_ ? "ok" : "loading"}, {"model_version", version_}}};
  }

  [[nodiscard]] HttpReply handle_suggest(std::string_view body) {
    const auto t0 = std::chrono::steady_clock::now();
    nlohmann::json req;
    try {
      req = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error&) {
      return error(400, "bad_json");
    }
    if (!req.is_object() || !req.contains("query") || !req["query"].is_string()) return error(400, "bad_json");
    const std::string query = req["query"].get<std::string>();
    std::size_t k = cfg_.default_k;
    double alpha = cfg_.default_alpha;
    if (req.contains("k")) {
      if (!req["k"].is_number_integer()) return error(400, "bad_json");
      const auto raw = req["k"].get<std::int64_t>();
      k = static_cast<std::size_t>(std::clamp<std::int64_t>(raw, 1, static_cast<std::int64_t>(kMaxK)));
    }
    if (req.contains("alpha")) {
      if (!req["alpha"].is_number() || !std::isfinite(req["alpha"].get<double>())) return error(400, "bad_json");
      alpha = req["alpha"].get<double>();
    }
    if (normalize_ws(query).empty()) return error(400, "empty_query");
    if (utf8_decode(query).size() > kMaxQueryChars) return error(413, "query_too_long");
    if (!ready_) return error(503, "model_unavailable");

    std::vector<Suggestion> out;
    {
      slots_.acquire();
      struct Release {
        std::counting_semaphore<kMaxWorkers>& s;
        ~Release() { s.release(); }
      } release{slots_};
      out = suggest(*model_, *bpe_, query, k, alpha);
    }
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& s : out) cands.push_back({{"text", s.text}, {"score", s.score}});
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return {200, {{"query", query}, {"candidates", cands}, {"latency_ms", ms}}};
  }

  /// Value for Access-Control-Allow-Origin, empty when the origin is not allowed.
  [[nodiscard]] std::string allowed_origin(const std::string& origin) const {
    if (cfg_.allow_any_origin) return "*";
    if (origin.empty()) return {};
    for (const auto& o : cfg_.allowed_origins) {
      if (o == origin) return origin;
    }
    return {};
  }

 private:
  static constexpr std::ptrdiff_t kMaxWorkers = 1024;

  static HttpReply error(int status, const char* code) { return {status, {{"error", code}}}; }

  std::shared_ptr<const Transducer<float>> model_;
  std::shared_ptr<const BpeModel> bpe_;
  ServiceConfig cfg_;
  std::string version_;
  std::atomic<bool> ready_{false};
  std::counting_semaphore<kMaxWorkers> slots_;
};

/// HTTP/1.1 front end: GET /health, POST /suggest, CORS preflight.
class HttpFrontend {
 public:
  explicit HttpFrontend(SuggestService& service) : service_(service) {
    const auto& cfg = service_.config();
    const time_t sec = cfg.request_timeout_ms / 1000;
    const time_t usec = (cfg.request_timeout_ms % 1000) * 1000;
    server_.set_read_timeout(sec, usec);
    server_.set_write_timeout(sec, usec);
    // httplib defaults to SO_REUSEPORT, which lets a second process share
    // the port silently. A taken port must fail the bind instead.
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    server_.Get("/health", [this](const httplib::Request& req, httplib::Response& res) {
      reply(req, res, service_.health());
    });
    server_.Post("/suggest", [this](const httplib::Request& req, httplib::Response& res) {
      HttpReply r;
      try {
        r = service_.handle_suggest(req.body);
      } catch (const Error& e) {
        r = {500, {{"error", "internal"}, {"detail", e.what()}}};
      }
      reply(req, res, r);
    });
    server_.Options("/suggest", [this](const httplib::Request& req, httplib::Response& res) {
      add_cors(req, res);
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
  }

  /// Binds to the configured address; port 0 picks a free one. Returns the
  /// bound port.
  int bind() {
    const auto& cfg = service_.config();
    int port = cfg.port;
    if (port == 0) {
      port = server_.bind_to_any_port(cfg.host);
      if (port < 0) port = 0;
    } else if (!server_.bind_to_port(cfg.host, port)) {
      port = 0;
    }
    if (port <= 0) {
      throw Error(Errc::BindFailure, "cannot bind " + cfg.host + ":" + std::to_string(cfg.port));
    }
    return port;
  }

  /// Serves until stop(); call after bind().
  void run() { server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() const { server_.wait_until_ready(); }

 private:
  void add_cors(const httplib::Request& req, httplib::Response& res) const {
    const auto origin = service_.allowed_origin(req.get_header_value("Origin"));
    if (origin.empty()) return;
    res.set_header("Access-Control-Allow-Origin", origin);
    if (origin != "*") res.set_header("Vary", "Origin");
  }

  void reply(const httplib::Request& req, httplib::Response& res, const HttpReply& r) const {
    add_cors(req, res);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  }

  SuggestService& service_;
  httplib::Server server_;
};

}  // namespace sequer
