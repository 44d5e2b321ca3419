#pragma once

// External scoring backends over HTTP/JSON.
//
//   GET  /v1/health -> {"ok": true, "max_in_flight": int}
//   POST /v1/score  <- {"context": [{"feature": str, "value": str}], "target": str, "candidates": [str]}
//                   -> {"logits": [float]}
//
// Values always travel as strings; the engine owns parsing.

#include <chrono>
#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "sage/backend.hpp"

namespace sage {

struct ScoreRequest {
  std::vector<std::pair<std::string, std::string>> context;
  std::string target;
  std::vector<std::string> candidates;

  nlohmann::json to_json() const {
    nlohmann::json ctx = nlohmann::json::array();
    for (const auto& [f, v] : context) ctx.push_back({{"feature", f}, {"value", v}});
    return {{"context", ctx}, {"target", target}, {"candidates", candidates}};
  }

  /// Throws MalformedResponse on any contract violation.
  static ScoreRequest from_json(const nlohmann::json& j) {
    try {
      ScoreRequest r;
      for (const auto& c : j.at("context")) {
        r.context.emplace_back(c.at("feature").get<std::string>(), c.at("value").get<std::string>());
      }
      r.target = j.at("target").get<std::string>();
      r.candidates = j.at("candidates").get<std::vector<std::string>>();
      if (r.candidates.empty()) throw Error(ErrorKind::malformed_response, "empty candidate list");
      return r;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::malformed_response, e.what());
    }
  }
};

/// Validates a /v1/score response body against the request it answers.
inline std::vector<double> parse_score_response(const std::string& body, std::size_t expected) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::malformed_response, std::string("response is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("logits") || !j["logits"].is_array()) {
    throw Error(ErrorKind::malformed_response, "response lacks a logits array");
  }
  const auto& arr = j["logits"];
  if (arr.size() != expected) {
    throw Error(ErrorKind::malformed_response, "expected " + std::to_string(expected) + " logits, got " +
                                                   std::to_string(arr.size()));
  }
  std::vector<double> logits;
  logits.reserve(arr.size());
  for (const auto& x : arr) {
    if (!x.is_number()) throw Error(ErrorKind::malformed_response, "non-numeric logit");
    const double v = x.get<double>();
    if (!std::isfinite(v)) throw Error(ErrorKind::malformed_response, "non-finite logit");
    logits.push_back(v);
  }
  return logits;
}

/// Client for an external scoring server. Candidates sent are always the
/// layout's legal set for the target.
class HttpBackend final : public Backend {
 public:
  struct Options {
    std::chrono::milliseconds timeout{10000};
    int busy_retries = 20;
    std::chrono::milliseconds busy_backoff{20};
  };

  HttpBackend(std::string url, BinLayout layout) : HttpBackend(std::move(url), std::move(layout), Options{}) {}

  HttpBackend(std::string url, BinLayout layout, Options options)
      : url_(std::move(url)), layout_(std::move(layout)), options_(options) {
    auto client = make_client();
    auto res = client->Get("/v1/health");
    if (!res) throw Error(ErrorKind::backend_unavailable, url_ + ": " + httplib::to_string(res.error()));
    if (res->status != 200) {
      throw Error(ErrorKind::backend_unavailable, url_ + ": health returned HTTP " + std::to_string(res->status));
    }
    try {
      const auto j = nlohmann::json::parse(res->body);
      if (!j.at("ok").get<bool>()) throw Error(ErrorKind::backend_unavailable, url_ + ": health not ok");
      max_in_flight_ = j.value("max_in_flight", 0);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::malformed_response, url_ + ": health: " + e.what());
    }
    if (max_in_flight_ < 0) throw Error(ErrorKind::malformed_response, url_ + ": negative max_in_flight");
  }

  /// 0 means the server declared no limit.
  int max_in_flight() const noexcept { return max_in_flight_; }

  CandidateDistribution score(std::span<const ContextPair> context, const std::string& target) const override {
    const std::size_t t = layout_.schema().index_of(target);
    ScoreRequest req;
    for (const auto& c : context) req.context.emplace_back(c.feature, format_value(c.value));
    req.target = target;
    CandidateDistribution out;
    out.target = target;
    out.candidates = legal_candidates(layout_, t);
    for (const auto& c : out.candidates) req.candidates.push_back(format_value(c));
    const std::string body = req.to_json().dump();

    Slot slot(*this);
    auto client = make_client();
    for (int attempt = 0;; ++attempt) {
      auto res = client->Post("/v1/score", body, "application/json");
      if (!res) throw Error(ErrorKind::backend_unavailable, url_ + ": " + httplib::to_string(res.error()));
      if (res->status == 503 && attempt < options_.busy_retries) {
        std::this_thread::sleep_for(options_.busy_backoff);
        continue;
      }
      if (res->status == 503) throw Error(ErrorKind::backend_unavailable, url_ + ": server busy");
      if (res->status != 200) {
        throw Error(ErrorKind::malformed_response, url_ + ": HTTP " + std::to_string(res->status));
      }
      out.logits = parse_score_response(res->body, out.candidates.size());
      return out;
    }
  }

  std::string name() const override { return "http:" + url_; }

 private:
  // Holds one of max_in_flight request slots for its lifetime.
  class Slot {
   public:
    explicit Slot(const HttpBackend& b) : b_(b) {
      if (b_.max_in_flight_ == 0) return;
      std::unique_lock lock(b_.mutex_);
      b_.cv_.wait(lock, [&] { return b_.in_flight_ < b_.max_in_flight_; });
      ++b_.in_flight_;
    }
    ~Slot() {
      if (b_.max_in_flight_ == 0) return;
      {
        std::lock_guard lock(b_.mutex_);
        --b_.in_flight_;
      }
      b_.cv_.notify_one();
    }
    Slot(const Slot&) = delete;
    Slot& operator=(const Slot&) = delete;

   private:
    const HttpBackend& b_;
  };

  std::unique_ptr<httplib::Client> make_client() const {
    auto client = std::make_unique<httplib::Client>(url_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
    client->set_connection_timeout(secs.count(), usecs.count());
    client->set_read_timeout(secs.count(), usecs.count());
    return client;
  }

  std::string url_;
  BinLayout layout_;
  Options options_;
  int max_in_flight_ = 0;
  mutable std::mutex mutex_;
  mutable std::condition_variable cv_;
  mutable int in_flight_ = 0;
};

/// Wires a scoring function into an httplib server speaking the protocol
/// above. Over-capacity requests get 503, malformed ones 400.
class ScoreServer {
 public:
  using Handler = std::function<std::vector<double>(const ScoreRequest&)>;

  ScoreServer(Handler handler, int max_in_flight = 0)
      : handler_(std::move(handler)), max_in_flight_(max_in_flight) {
    server_.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(nlohmann::json{{"ok", true}, {"max_in_flight", max_in_flight_}}.dump(), "application/json");
    });
    server_.Post("/v1/score", [this](const httplib::Request& req, httplib::Response& res) {
      {
        std::lock_guard lock(mutex_);
        if (max_in_flight_ > 0 && in_flight_ >= max_in_flight_) {
          res.status = 503;
          res.set_content(R"({"error":"busy"})", "application/json");
          return;
        }
        ++in_flight_;
        peak_ = std::max(peak_, in_flight_);
      }
      try {
        const auto request = ScoreRequest::from_json(nlohmann::json::parse(req.body));
        const auto logits = handler_(request);
        res.set_content(nlohmann::json{{"logits", logits}}.dump(), "application/json");
      } catch (const std::exception& e) {
        res.status = 400;
        res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
      }
      std::lock_guard lock(mutex_);
      --in_flight_;
    });
  }

  ~ScoreServer() { stop(); }

  /// Binds to an ephemeral port on localhost and serves on a background thread.
  int start() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    if (port_ < 0) throw Error(ErrorKind::io, "cannot bind scoring server");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int peak_in_flight() const {
    std::lock_guard lock(mutex_);
    return peak_;
  }

 private:
  Handler handler_;
  int max_in_flight_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
  mutable std::mutex mutex_;
  int in_flight_ = 0;
  int peak_ = 0;
};

}  // namespace sage
