#pragma once

// Client side of the inference sidecar contract (HTTP/JSON, versioned /v1):
//
//   POST /v1/generate    {prompt, n_beams, max_new_tokens}          -> [{text, logprob}]
//   POST /v1/score       {condition_text, scored_text, src_lang, tgt_lang}
//                                                                   -> {token_logprobs}
//   POST /v1/score_batch {requests: [<score request>...]}           -> {results: [{token_logprobs}]}
//   POST /v1/embed       {text, lang}                               -> {vector}
//   GET  /v1/health                                                 -> {capabilities, dims, model_ids}
//
// src_lang is the language of condition_text, tgt_lang that of scored_text.

#include <chrono>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "tproj/error.hpp"
#include "tproj/generation.hpp"
#include "tproj/scoring.hpp"

namespace tproj::http {

struct ClientOptions {
  int retries = 2;
  std::chrono::milliseconds backoff{200};
  std::chrono::seconds connect_timeout{5};
  std::chrono::seconds read_timeout{300};
};

// "http://host:port" with an optional path prefix.
class Endpoint {
 public:
  explicit Endpoint(const std::string& url, ClientOptions opts = {}) : opts_(opts) {
    const std::string scheme = "http://";
    if (url.rfind(scheme, 0) != 0) throw ConfigError("endpoint must start with http://: " + url);
    auto slash = url.find('/', scheme.size());
    host_ = slash == std::string::npos ? url : url.substr(0, slash);
    if (slash != std::string::npos) prefix_ = url.substr(slash);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    if (host_.size() == scheme.size()) throw ConfigError("endpoint has no host: " + url);
  }

  std::string url() const { return host_ + prefix_; }

  nlohmann::json get(const std::string& path) const {
    return call(path, [&](httplib::Client& c, const std::string& p) { return c.Get(p); });
  }

  nlohmann::json post(const std::string& path, const nlohmann::json& body) const {
    std::string payload = body.dump();
    return call(path, [&](httplib::Client& c, const std::string& p) {
      return c.Post(p, payload, "application/json");
    });
  }

 private:
  template <typename Fn>
  nlohmann::json call(const std::string& path, Fn&& fn) const {
    std::string last;
    for (int attempt = 0; attempt <= opts_.retries; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(opts_.backoff * (1 << (attempt - 1)));
      httplib::Client client(host_);
      client.set_connection_timeout(opts_.connect_timeout);
      client.set_read_timeout(opts_.read_timeout);
      auto res = fn(client, prefix_ + path);
      if (!res) {
        last = url() + path + ": " + httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 500) {
        last = url() + path + ": HTTP " + std::to_string(res->status) + " " + res->body;
        continue;
      }
      if (res->status >= 400)
        throw BackendError(url() + path + ": HTTP " + std::to_string(res->status) + " " + res->body);
      try {
        return nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::exception& e) {
        throw BackendError(url() + path + ": invalid JSON response: " + e.what());
      }
    }
    throw TransportError(last);
  }

  ClientOptions opts_;
  std::string host_;
  std::string prefix_;
};

inline nlohmann::json score_request_json(const ScoreRequest& r) {
  return {{"condition_text", r.condition_text},
          {"scored_text", r.scored_text},
          {"src_lang", r.condition_lang},
          {"tgt_lang", r.scored_lang}};
}

inline std::vector<double> parse_logprobs(const nlohmann::json& j) {
  try {
    return j.at("token_logprobs").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(std::string("score response: ") + e.what());
  }
}

class HttpGenerator : public Generator {
 public:
  explicit HttpGenerator(Endpoint ep) : ep_(std::move(ep)) {}

  std::vector<Beam> generate(const GenerateRequest& req) override {
    auto j = ep_.post("/v1/generate", {{"prompt", req.prompt},
                                       {"n_beams", req.n_beams},
                                       {"max_new_tokens", req.max_new_tokens}});
    std::vector<Beam> out;
    try {
      for (const auto& b : j) out.push_back({b.at("text").get<std::string>(), b.at("logprob").get<double>()});
    } catch (const nlohmann::json::exception& e) {
      throw BackendError(std::string("generate response: ") + e.what());
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const Beam& a, const Beam& b) { return a.logprob > b.logprob; });
    return out;
  }

  std::string identity() const override { return "http:" + ep_.url(); }

 private:
  Endpoint ep_;
};

class HttpScorer : public ScorerBackend {
 public:
  explicit HttpScorer(Endpoint ep) : ep_(std::move(ep)) {}

  Capabilities capabilities() const override {
    std::call_once(health_once_, [&] {
      health_ = ep_.get("/v1/health");
    });
    Capabilities c;
    const auto& caps = health_.value("capabilities", nlohmann::json::array());
    for (const auto& k : caps) {
      if (k == "score") c.conditional_logprobs = true;
      if (k == "embed") c.embeddings = true;
    }
    return c;
  }

  std::string identity() const override { return "http:" + ep_.url(); }

  std::vector<double> token_logprobs(const ScoreRequest& req) override {
    return parse_logprobs(ep_.post("/v1/score", score_request_json(req)));
  }

  std::vector<std::vector<double>> token_logprobs_batch(const std::vector<ScoreRequest>& reqs) override {
    if (reqs.size() == 1) return {token_logprobs(reqs.front())};
    nlohmann::json body = {{"requests", nlohmann::json::array()}};
    for (const auto& r : reqs) body["requests"].push_back(score_request_json(r));
    auto j = ep_.post("/v1/score_batch", body);
    std::vector<std::vector<double>> out;
    try {
      for (const auto& item : j.at("results")) out.push_back(parse_logprobs(item));
    } catch (const nlohmann::json::exception& e) {
      throw BackendError(std::string("score_batch response: ") + e.what());
    }
    if (out.size() != reqs.size()) throw BackendError("score_batch: result count mismatch");
    return out;
  }

  std::vector<double> embed(const std::string& text, const std::string& lang) override {
    auto j = ep_.post("/v1/embed", {{"text", text}, {"lang", lang}});
    try {
      return j.at("vector").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw BackendError(std::string("embed response: ") + e.what());
    }
  }

 private:
  Endpoint ep_;
  mutable std::once_flag health_once_;
  mutable nlohmann::json health_;
};

// GET /v1/health.
inline nlohmann::json health(const Endpoint& ep) { return ep.get("/v1/health"); }

}  // namespace tproj::http
