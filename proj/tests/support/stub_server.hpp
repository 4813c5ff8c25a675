#pragma once

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <functional>
#include <mutex>
#include <string>
#include <thread>

namespace bnb::testing {

struct StubReply {
  int status = 200;
  std::string content;
};

// Local OpenAI-shaped chat endpoint. The handler gets the request body and a 1-based request count.
class StubServer {
 public:
  using Handler = std::function<StubReply(const nlohmann::json&, int)>;

  explicit StubServer(Handler handler) : handler_(std::move(handler)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      int n = 0;
      StubReply reply;
      {
        std::lock_guard lock(mu_);
        n = ++requests_;
        last_auth_ = req.get_header_value("Authorization");
        reply = handler_(nlohmann::json::parse(req.body), n);
      }
      res.status = reply.status;
      if (reply.status == 200) {
        nlohmann::json body{{"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", reply.content}}}}}}};
        res.set_content(body.dump(), "application/json");
      } else {
        res.set_content(reply.content, "text/plain");
      }
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }
  int requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }
  std::string last_authorization() const {
    std::lock_guard lock(mu_);
    return last_auth_;
  }

 private:
  Handler handler_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  mutable std::mutex mu_;
  int requests_ = 0;
  std::string last_auth_;
};

}  // namespace bnb::testing

namespace bnb::testing {

// Plausible replies for a whole game: the captain acknowledges, deciders pick the first
// available procedure from the latest status post, everyone else agrees.
inline StubReply playing_reply(const nlohmann::json& request, int) {
  const auto& msgs = request.at("messages");
  const auto system = msgs.front().at("content").get<std::string>();
  if (system.find("You are the Incident Captain") != std::string::npos) return {200, "Understood. Carry on, Defenders."};
  const auto cue = msgs.back().at("content").get<std::string>();
  const bool may_decide = cue.find("designated decider this turn") != std::string::npos ||
                          cue.find("Any Defender may settle") != std::string::npos;
  if (!may_decide) return {200, "I agree with the plan."};
  const std::string key = "Available procedures: ";
  for (auto it = msgs.rbegin(); it != msgs.rend(); ++it) {
    const auto content = it->at("content").get<std::string>();
    const auto pos = content.find(key);
    if (pos == std::string::npos) continue;
    const auto start = pos + key.size();
    const auto end = content.find(" [", start);
    return {200, "Let's do it.\nCHOOSE: " + content.substr(start, end - start)};
  }
  return {200, "I am not sure."};
}

}  // namespace bnb::testing
