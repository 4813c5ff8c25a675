#pragma once

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "bnb/error.hpp"
#include "bnb/sha256.hpp"

namespace bnb {

enum class ChatRole { System, User, Assistant };

inline std::string_view chat_role_key(ChatRole r) {
  switch (r) {
    case ChatRole::System: return "system";
    case ChatRole::User: return "user";
    case ChatRole::Assistant: return "assistant";
  }
  return "?";
}

struct ChatMessage {
  ChatRole role = ChatRole::User;
  std::string name;  // optional speaker tag; empty means none
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatRequest {
  std::string model;
  double temperature = 1.0;
  std::vector<ChatMessage> messages;

  void validate() const {
    if (messages.empty() || messages.front().role != ChatRole::System) {
      throw Error("chat request: first message must be the system message");
    }
    if (temperature < 0) throw Error("chat request: temperature must be >= 0");
  }

  // Wire body for an OpenAI-compatible /chat/completions endpoint.
  nlohmann::json to_json() const {
    nlohmann::json j{{"model", model}, {"temperature", temperature}, {"messages", nlohmann::json::array()}};
    for (const auto& m : messages) {
      nlohmann::json msg{{"role", std::string(chat_role_key(m.role))}, {"content", m.content}};
      if (!m.name.empty()) msg["name"] = m.name;
      j["messages"].push_back(std::move(msg));
    }
    return j;
  }

  friend bool operator==(const ChatRequest&, const ChatRequest&) = default;
};

// SHA-256 over the compact dump of to_json(); object keys are sorted, so this is canonical.
inline std::string request_fingerprint(const ChatRequest& r) { return sha256_hex(r.to_json().dump()); }

// Restricts a speaker label to the characters chat endpoints accept in "name".
inline std::string sanitize_name(std::string_view s) {
  std::string out;
  for (char c : s) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
    out.push_back(ok ? c : '_');
  }
  return out.substr(0, 64);
}

class CredentialMissing : public Error {
 public:
  using Error::Error;
};

// Network hiccup, 429 or 5xx: worth retrying.
class TransientError : public Error {
 public:
  using Error::Error;
};

class RetryBudgetExhausted : public Error {
 public:
  using Error::Error;
};

// Replay diverged from the recording. Always a test bug; never converted into a game outcome.
class CassetteError : public Error {
 public:
  CassetteError(const std::string& what, std::string field = {}) : Error(what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class CassetteMode { Record, Replay, Passthrough };

inline std::string_view cassette_mode_key(CassetteMode m) {
  switch (m) {
    case CassetteMode::Record: return "record";
    case CassetteMode::Replay: return "replay";
    case CassetteMode::Passthrough: return "passthrough";
  }
  return "?";
}

struct GatewayConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-4o";
  double temperature = 1.0;
  int max_retries = 3;
  int backoff_ms = 500;
  double max_requests_per_second = 0;  // 0 = unlimited
  std::string api_key_env = "OPENAI_API_KEY";
  int context_messages = 40;  // trailing non-system messages kept per request
  int timeout_seconds = 120;
  CassetteMode mode = CassetteMode::Passthrough;
  std::string cassette;  // file (play) or directory (batch)

  // Never reads a credential from the document.
  static GatewayConfig from_json(const nlohmann::json& j) {
    static const std::set<std::string> known = {"endpoint",   "model",           "temperature", "max_retries",
                                                "backoff_ms", "max_requests_per_second",        "api_key_env",
                                                "context_messages", "timeout_seconds", "mode", "cassette"};
    for (const auto& [k, _] : j.items()) {
      if (!known.count(k)) throw Error("llm config: unknown field '" + k + "'");
    }
    GatewayConfig c;
    c.endpoint = j.value("endpoint", c.endpoint);
    c.model = j.value("model", c.model);
    c.temperature = j.value("temperature", c.temperature);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.backoff_ms = j.value("backoff_ms", c.backoff_ms);
    c.max_requests_per_second = j.value("max_requests_per_second", c.max_requests_per_second);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.context_messages = j.value("context_messages", c.context_messages);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    const auto mode = j.value("mode", std::string("passthrough"));
    if (mode == "record") {
      c.mode = CassetteMode::Record;
    } else if (mode == "replay") {
      c.mode = CassetteMode::Replay;
    } else if (mode == "passthrough") {
      c.mode = CassetteMode::Passthrough;
    } else {
      throw Error("llm config: unknown mode '" + mode + "'");
    }
    c.cassette = j.value("cassette", std::string{});
    if (c.mode != CassetteMode::Passthrough && c.cassette.empty()) throw Error("llm config: cassette path required");
    if (c.temperature < 0 || c.max_retries < 0 || c.context_messages < 1) throw Error("llm config: value out of range");
    return c;
  }
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::string send(const ChatRequest& request) = 0;
};

// POSTs to an OpenAI-compatible endpoint. The API key comes from the environment only.
class HttpTransport : public Transport {
 public:
  explicit HttpTransport(const GatewayConfig& config) : timeout_seconds_(config.timeout_seconds) {
    const char* key = std::getenv(config.api_key_env.c_str());
    if (!key || !*key) throw CredentialMissing("environment variable " + config.api_key_env + " is not set");
    api_key_ = key;
    const auto scheme_end = config.endpoint.find("://");
    if (scheme_end == std::string::npos) throw Error("llm endpoint must be an absolute http(s) URL");
    const auto path_start = config.endpoint.find('/', scheme_end + 3);
    base_ = config.endpoint.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : config.endpoint.substr(path_start);
  }

  std::string send(const ChatRequest& request) override {
    httplib::Client client(base_);
    client.set_connection_timeout(timeout_seconds_);
    client.set_read_timeout(timeout_seconds_);
    client.set_bearer_token_auth(api_key_);
    auto res = client.Post(path_, request.to_json().dump(), "application/json");
    if (!res) throw TransientError("llm transport: " + httplib::to_string(res.error()));
    if (res->status == 429 || res->status >= 500) {
      throw TransientError("llm transport: HTTP " + std::to_string(res->status));
    }
    if (res->status != 200) throw Error("llm transport: HTTP " + std::to_string(res->status) + ": " + res->body);
    try {
      const auto body = nlohmann::json::parse(res->body);
      return body.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string("llm transport: malformed response: ") + e.what());
    }
  }

 private:
  std::string base_;
  std::string path_;
  std::string api_key_;
  int timeout_seconds_;
};

// Spaces requests at least 1/rate seconds apart; shareable across gateways for one endpoint.
class RateLimiter {
 public:
  explicit RateLimiter(double per_second) : per_second_(per_second) {}

  void acquire() {
    if (per_second_ <= 0) return;
    using clock = std::chrono::steady_clock;
    const auto interval = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(1.0 / per_second_));
    clock::time_point slot;
    {
      std::lock_guard lock(mu_);
      slot = std::max(clock::now(), next_);
      next_ = slot + interval;
    }
    std::this_thread::sleep_until(slot);
  }

 private:
  double per_second_;
  std::mutex mu_;
  std::chrono::steady_clock::time_point next_{};
};

struct CassetteRecord {
  std::string fingerprint;
  nlohmann::json request;
  std::string response;
};

// Ordered request/response recordings (format tag bnb-cassette/1).
class Cassette {
 public:
  Cassette(CassetteMode mode, std::filesystem::path path) : mode_(mode), path_(std::move(path)) {
    if (mode_ == CassetteMode::Replay) load();
  }

  CassetteMode mode() const { return mode_; }
  const std::vector<CassetteRecord>& records() const { return records_; }
  std::size_t remaining() const { return records_.size() - next_; }

  // Replay: returns the next recorded response after checking the fingerprint.
  std::string replay(const ChatRequest& request) {
    std::lock_guard lock(mu_);
    if (next_ >= records_.size()) {
      throw CassetteError("cassette " + path_.string() + ": no recorded response left for request #" +
                          std::to_string(next_ + 1));
    }
    const auto& rec = records_[next_];
    const auto fp = request_fingerprint(request);
    if (fp != rec.fingerprint) {
      const auto field = diverging_field(rec.request, request.to_json());
      throw CassetteError("cassette " + path_.string() + ": request #" + std::to_string(next_ + 1) +
                              " does not match the recording (field " + field + ")",
                          field);
    }
    ++next_;
    return rec.response;
  }

  // Record: appends and rewrites the file so an interrupted run keeps what it has.
  void record(const ChatRequest& request, const std::string& response) {
    std::lock_guard lock(mu_);
    records_.push_back({request_fingerprint(request), request.to_json(), response});
    save();
  }

  // Name of the first field where two wire requests differ, e.g. "messages[3].content".
  static std::string diverging_field(const nlohmann::json& recorded, const nlohmann::json& actual) {
    for (const char* key : {"model", "temperature"}) {
      if (recorded.value(key, nlohmann::json()) != actual.value(key, nlohmann::json())) return key;
    }
    const auto& a = recorded.at("messages");
    const auto& b = actual.at("messages");
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
      for (const char* key : {"role", "name", "content"}) {
        if (a[i].value(key, nlohmann::json()) != b[i].value(key, nlohmann::json())) {
          return "messages[" + std::to_string(i) + "]." + key;
        }
      }
    }
    if (a.size() != b.size()) return "messages.length";
    return "fingerprint";
  }

 private:
  void load() {
    std::ifstream in(path_);
    if (!in) throw CassetteError("cannot open cassette " + path_.string());
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw CassetteError("cassette " + path_.string() + ": " + e.what());
    }
    if (doc.value("format", "") != "bnb-cassette/1") throw CassetteError("cassette " + path_.string() + ": bad format tag");
    for (const auto& r : doc.at("records")) {
      records_.push_back({r.at("fingerprint").get<std::string>(), r.at("request"), r.at("response").get<std::string>()});
    }
  }

  void save() const {
    nlohmann::json doc{{"format", "bnb-cassette/1"}, {"records", nlohmann::json::array()}};
    for (const auto& r : records_) {
      doc["records"].push_back({{"fingerprint", r.fingerprint}, {"request", r.request}, {"response", r.response}});
    }
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    const auto tmp = path_.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << doc.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path_);
  }

  CassetteMode mode_;
  std::filesystem::path path_;
  std::vector<CassetteRecord> records_;
  std::size_t next_ = 0;
  std::mutex mu_;
};

// The only component that talks to a chat-completion service.
class LlmGateway {
 public:
  // `live` overrides the HTTP transport (used by tests); it is never touched in Replay mode.
  explicit LlmGateway(GatewayConfig config, std::unique_ptr<Transport> live = nullptr,
                      std::shared_ptr<RateLimiter> limiter = nullptr)
      : config_(std::move(config)), live_(std::move(live)), limiter_(std::move(limiter)) {
    if (!limiter_) limiter_ = std::make_shared<RateLimiter>(config_.max_requests_per_second);
    if (config_.mode != CassetteMode::Passthrough) {
      cassette_ = std::make_unique<Cassette>(config_.mode, config_.cassette);
    }
    if (config_.mode != CassetteMode::Replay && !live_) live_ = std::make_unique<HttpTransport>(config_);
  }

  const GatewayConfig& config() const { return config_; }
  const Cassette* cassette() const { return cassette_.get(); }

  // System message plus the trailing context window, with the configured model and temperature.
  ChatRequest make_request(std::string system, const std::vector<ChatMessage>& conversation) const {
    ChatRequest r{config_.model, config_.temperature, {}};
    r.messages.push_back({ChatRole::System, {}, std::move(system)});
    const auto keep = std::min(conversation.size(), static_cast<std::size_t>(config_.context_messages));
    r.messages.insert(r.messages.end(), conversation.end() - static_cast<std::ptrdiff_t>(keep), conversation.end());
    return r;
  }

  std::string complete(const ChatRequest& request) {
    request.validate();
    if (config_.mode == CassetteMode::Replay) return cassette_->replay(request);
    auto response = send_with_retry(request);
    if (config_.mode == CassetteMode::Record) cassette_->record(request, response);
    return response;
  }

 private:
  std::string send_with_retry(const ChatRequest& request) {
    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(config_.backoff_ms << (attempt - 1)));
      limiter_->acquire();
      try {
        return live_->send(request);
      } catch (const TransientError& e) {
        last_error = e.what();
      }
    }
    throw RetryBudgetExhausted("llm request failed after " + std::to_string(config_.max_retries + 1) +
                               " attempt(s): " + last_error);
  }

  GatewayConfig config_;
  std::unique_ptr<Transport> live_;
  std::shared_ptr<RateLimiter> limiter_;
  std::unique_ptr<Cassette> cassette_;
};

}  // namespace bnb
