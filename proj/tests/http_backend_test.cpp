#include <atomic>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "tproj/backends/http.hpp"

using namespace tproj;
using nlohmann::json;

namespace {

// In-process stand-in for the model server.
class Stub {
 public:
  Stub() {
    srv_.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(json{{"capabilities", {"generate", "score"}}, {"dims", 0}, {"model_ids", {"stub"}}}.dump(),
                      "application/json");
    });
    srv_.Post("/v1/generate", [this](const httplib::Request& req, httplib::Response& res) {
      auto j = json::parse(req.body);
      last_generate = j;
      res.set_content(json::array({{{"text", "low"}, {"logprob", -3.0}}, {{"text", "high"}, {"logprob", -0.5}}}).dump(),
                      "application/json");
    });
    srv_.Post("/v1/score", [this](const httplib::Request& req, httplib::Response& res) {
      ++single;
      res.set_content(json{{"token_logprobs", logprobs(json::parse(req.body))}}.dump(), "application/json");
    });
    srv_.Post("/v1/score_batch", [this](const httplib::Request& req, httplib::Response& res) {
      ++batched;
      json out = {{"results", json::array()}};
      json body = json::parse(req.body);
      for (const auto& r : body.at("requests")) {
        json item;
        item["token_logprobs"] = logprobs(r);
        out["results"].push_back(item);
      }
      res.set_content(out.dump(), "application/json");
    });
    srv_.Post("/v1/embed", [](const httplib::Request&, httplib::Response& res) {
      res.status = 400;
      res.set_content("embeddings not supported", "text/plain");
    });
    srv_.Post("/v1/flaky", [this](const httplib::Request&, httplib::Response& res) {
      if (++flaky_calls < 3) {
        res.status = 503;
        return;
      }
      res.set_content("{\"ok\": true}", "application/json");
    });
    port_ = srv_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { srv_.listen_after_bind(); });
    srv_.wait_until_ready();
  }
  ~Stub() {
    srv_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  // One logprob per scored token; encodes the language fields for checking.
  static std::vector<double> logprobs(const json& r) {
    std::vector<double> out;
    auto toks = split_ws(r.at("scored_text").get<std::string>());
    double v = r.at("src_lang") == "en" && r.at("tgt_lang") == "de" ? -1.0 : -2.0;
    for (std::size_t i = 0; i < toks.size(); ++i) out.push_back(v);
    return out;
  }

  json last_generate;
  std::atomic<int> single{0}, batched{0}, flaky_calls{0};

 private:
  httplib::Server srv_;
  int port_ = 0;
  std::thread thread_;
};

http::ClientOptions fast() {
  http::ClientOptions o;
  o.backoff = std::chrono::milliseconds(1);
  o.connect_timeout = std::chrono::seconds(1);
  o.read_timeout = std::chrono::seconds(5);
  return o;
}

}  // namespace

TEST(Endpoint, RejectsBadUrls) {
  EXPECT_THROW(http::Endpoint("https://x"), ConfigError);
  EXPECT_THROW(http::Endpoint("http://"), ConfigError);
  EXPECT_EQ(http::Endpoint("http://h:1/api/").url(), "http://h:1/api");
}

TEST(HttpBackend, GenerateSortsByLogprob) {
  Stub stub;
  http::HttpGenerator gen(http::Endpoint(stub.url(), fast()));
  auto beams = gen.generate({"p <Person>None</Person>", 7, 16});
  ASSERT_EQ(beams.size(), 2u);
  EXPECT_EQ(beams[0].text, "high");
  EXPECT_EQ(stub.last_generate["n_beams"], 7);
  EXPECT_EQ(stub.last_generate["max_new_tokens"], 16);
}

TEST(HttpBackend, ScoreAndBatch) {
  Stub stub;
  http::HttpScorer s(http::Endpoint(stub.url(), fast()));
  EXPECT_TRUE(s.capabilities().conditional_logprobs);
  EXPECT_FALSE(s.capabilities().embeddings);
  auto lp = s.token_logprobs({"a b", "en", "x y z", "de"});
  EXPECT_EQ(lp, (std::vector<double>{-1.0, -1.0, -1.0}));
  auto many = s.token_logprobs_batch({{"a", "en", "x", "de"}, {"a", "de", "x y", "en"}});
  ASSERT_EQ(many.size(), 2u);
  EXPECT_EQ(many[1], (std::vector<double>{-2.0, -2.0}));
  EXPECT_EQ(stub.batched.load(), 1);
  EXPECT_EQ(stub.single.load(), 1);
}

TEST(HttpBackend, ScoreTableOverHttp) {
  Stub stub;
  http::HttpScorer s(http::Endpoint(stub.url(), fast()));
  SelfProbCache cache;
  auto t = score_table({"New York", "Paris"}, {"Nueva York"}, s, &cache, {{"en", "de"}, 2, ScoreMode::Translation});
  ASSERT_TRUE(t.at(0, 0).valid);
  EXPECT_GT(stub.batched.load(), 0);
}

TEST(HttpBackend, ClientErrorIsNotRetried) {
  Stub stub;
  http::HttpScorer s(http::Endpoint(stub.url(), fast()));
  EXPECT_THROW(s.embed("x", "en"), BackendError);
}

TEST(HttpBackend, ServerErrorsAreRetried) {
  Stub stub;
  auto o = fast();
  o.retries = 1;
  http::Endpoint ep(stub.url(), o);
  EXPECT_THROW(ep.post("/v1/flaky", json::object()), TransportError);
  EXPECT_EQ(stub.flaky_calls.load(), 2);
  EXPECT_EQ(ep.post("/v1/flaky", json::object())["ok"], true);
}

TEST(HttpBackend, UnreachableIsTransportError) {
  auto o = fast();
  o.retries = 0;
  http::Endpoint ep("http://127.0.0.1:1", o);
  EXPECT_THROW(http::health(ep), TransportError);
}
