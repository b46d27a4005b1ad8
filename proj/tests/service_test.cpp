#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <thread>

#include "sequer/service.hpp"

using namespace sequer;
namespace fs = std::filesystem;

namespace {

BpeModel service_bpe() {
  return train_bpe({"how to read file in java", "java read file", "do while loop in java", "python list sort"}, 80);
}

ModelConfig service_model_config(std::size_t vocab) {
  ModelConfig c;
  c.num_layers = 1;
  c.num_heads = 2;
  c.d_model = 16;
  c.ffn_size = 32;
  c.vocab_size = vocab;
  c.max_len = 12;
  c.dropout = 0.0;
  return c;
}

std::unique_ptr<SuggestService> make_service(ServiceConfig cfg = {}) {
  auto bpe = std::make_shared<const BpeModel>(service_bpe());
  auto model = std::make_shared<const Transducer<float>>(service_model_config(bpe->vocab_size()), 11);
  return std::make_unique<SuggestService>(model, bpe, cfg, "test");
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("sequer-service-" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct RunningServer {
  HttpFrontend front;
  int port;
  std::thread thread;

  explicit RunningServer(SuggestService& s) : front(s), port(front.bind()), thread([this] { front.run(); }) {
    front.wait_until_ready();
  }
  ~RunningServer() {
    front.stop();
    thread.join();
  }
};

}  // namespace

TEST(HandleSuggest, ContractAndDeterminism) {
  auto svc = make_service();
  const auto r = svc->handle_suggest(R"({"query":"do and while in java","k":10})");
  ASSERT_EQ(r.status, 200);
  const auto& c = r.body["candidates"];
  EXPECT_LE(c.size(), 10u);
  for (std::size_t i = 1; i < c.size(); ++i) EXPECT_GE(c[i - 1]["score"].get<double>(), c[i]["score"].get<double>());
  EXPECT_EQ(r.body["query"], "do and while in java");
  EXPECT_TRUE(r.body["latency_ms"].is_number());
  const auto again = svc->handle_suggest(R"({"query":"do and while in java","k":10})");
  EXPECT_EQ(again.body["candidates"].dump(), c.dump());
  const auto three = svc->handle_suggest(R"({"query":"read file","k":3})");
  EXPECT_LE(three.body["candidates"].size(), 3u);
}

TEST(HandleSuggest, Validation) {
  auto svc = make_service();
  auto code = [&](const std::string& body) { return svc->handle_suggest(body); };
  EXPECT_EQ(code(R"({"query":""})").status, 400);
  EXPECT_EQ(code(R"({"query":""})").body["error"], "empty_query");
  EXPECT_EQ(code(R"({"query":"   "})").body["error"], "empty_query");
  EXPECT_EQ(code("{not json").body["error"], "bad_json");
  EXPECT_EQ(code("[1,2]").body["error"], "bad_json");
  EXPECT_EQ(code(R"({"query":5})").body["error"], "bad_json");
  EXPECT_EQ(code(R"({"query":"x","k":"3"})").body["error"], "bad_json");
  EXPECT_EQ(code(R"({"query":"x","alpha":"a"})").body["error"], "bad_json");
  const std::string ok(512, 'a'), too_long(513, 'a');
  EXPECT_EQ(code(nlohmann::json{{"query", ok}}.dump()).status, 200);
  EXPECT_EQ(code(nlohmann::json{{"query", too_long}}.dump()).status, 413);
  // 512 two-byte characters are still within the limit.
  std::string wide;
  for (int i = 0; i < 512; ++i) wide += "é";
  EXPECT_EQ(code(nlohmann::json{{"query", wide}}.dump()).status, 200);
}

TEST(HandleSuggest, KIsClamped) {
  auto svc = make_service();
  EXPECT_LE(svc->handle_suggest(R"({"query":"java read","k":0})").body["candidates"].size(), 1u);
  EXPECT_LE(svc->handle_suggest(R"({"query":"java read","k":-4})").body["candidates"].size(), 1u);
  const auto big = svc->handle_suggest(R"({"query":"java read","k":1000})");
  EXPECT_EQ(big.status, 200);
  EXPECT_LE(big.body["candidates"].size(), 50u);
}

TEST(HandleSuggest, UnavailableWhileNotReady) {
  auto svc = make_service();
  svc->set_ready(false);
  EXPECT_EQ(svc->handle_suggest(R"({"query":"java"})").status, 503);
  EXPECT_EQ(svc->handle_suggest(R"({"query":""})").status, 400);
  EXPECT_EQ(svc->health().body["status"], "loading");
  svc->set_ready(true);
  EXPECT_EQ(svc->handle_suggest(R"({"query":"java"})").status, 200);
}

TEST(ServiceConfig, EnvironmentFileAndValidation) {
  TempDir dir;
  const auto file = dir.path / "svc.json";
  std::ofstream(file) << R"({"port": 9123, "default_k": 4, "allowed_origins": ["https://stackoverflow.com"]})";
  ::setenv(kConfigEnv, file.c_str(), 1);
  const auto c = service_config_from_env();
  ::unsetenv(kConfigEnv);
  EXPECT_EQ(c.port, 9123);
  EXPECT_EQ(c.default_k, 4u);
  EXPECT_EQ(c.default_alpha, 0.6);
  ASSERT_EQ(c.allowed_origins.size(), 1u);
  ServiceConfig bad;
  bad.default_k = 0;
  EXPECT_THROW(bad.validate(), Error);
  std::ofstream(file) << R"({"port": "x"})";
  ::setenv(kConfigEnv, file.c_str(), 1);
  EXPECT_THROW(service_config_from_env(), Error);
  ::unsetenv(kConfigEnv);
}

TEST(ServiceLoad, FromFilesAndFailFast) {
  TempDir dir;
  const auto bpe = service_bpe();
  Transducer<float> model(service_model_config(bpe.vocab_size()), 2);
  save_checkpoint(dir.path / "m.ckpt", model);
  bpe.save(dir.path / "m.bpe");
  ServiceConfig cfg;
  cfg.checkpoint = (dir.path / "m.ckpt").string();
  cfg.bpe = (dir.path / "m.bpe").string();
  auto svc = SuggestService::load(cfg);
  EXPECT_EQ(svc->model_version().size(), 16u);
  EXPECT_EQ(svc->handle_suggest(R"({"query":"java"})").status, 200);

  std::ofstream(dir.path / "bad.ckpt") << "garbage";
  cfg.checkpoint = (dir.path / "bad.ckpt").string();
  try {
    (void)SuggestService::load(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::CorruptCheckpoint);
  }
}

TEST(Http, HealthSuggestAndErrors) {
  ServiceConfig cfg;
  cfg.port = 0;
  cfg.allowed_origins = {"https://stackoverflow.com"};
  auto svc = make_service(cfg);
  RunningServer srv(*svc);
  httplib::Client cli("127.0.0.1", srv.port);

  auto health = cli.Get("/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  const auto h = nlohmann::json::parse(health->body);
  EXPECT_EQ(h["status"], "ok");
  EXPECT_EQ(h["model_version"], "test");

  auto empty = cli.Post("/suggest", R"({"query":""})", "application/json");
  ASSERT_TRUE(empty);
  EXPECT_EQ(empty->status, 400);
  EXPECT_EQ(nlohmann::json::parse(empty->body)["error"], "empty_query");

  httplib::Headers origin{{"Origin", "https://stackoverflow.com"}};
  auto ok = cli.Post("/suggest", origin, R"({"query":"do and while in java","k":10})", "application/json");
  ASSERT_TRUE(ok);
  EXPECT_EQ(ok->status, 200);
  EXPECT_EQ(ok->get_header_value("Access-Control-Allow-Origin"), "https://stackoverflow.com");

  httplib::Headers other{{"Origin", "https://evil.example"}};
  auto denied = cli.Post("/suggest", other, R"({"query":"java"})", "application/json");
  ASSERT_TRUE(denied);
  EXPECT_FALSE(denied->has_header("Access-Control-Allow-Origin"));

  auto pre = cli.Options("/suggest", origin);
  ASSERT_TRUE(pre);
  EXPECT_EQ(pre->status, 204);
  EXPECT_EQ(pre->get_header_value("Access-Control-Allow-Methods"), "GET, POST, OPTIONS");
}

TEST(Http, ConcurrentIdenticalRequestsAgree) {
  ServiceConfig cfg;
  cfg.port = 0;
  cfg.workers = 4;
  auto svc = make_service(cfg);
  RunningServer srv(*svc);
  std::vector<std::future<std::string>> futures;
  for (int i = 0; i < 16; ++i) {
    futures.push_back(std::async(std::launch::async, [&] {
      httplib::Client cli("127.0.0.1", srv.port);
      auto r = cli.Post("/suggest", R"({"query":"how to read file in java","k":10})", "application/json");
      if (!r || r->status != 200) return std::string("failed");
      return nlohmann::json::parse(r->body)["candidates"].dump();
    }));
  }
  std::vector<std::string> bodies;
  for (auto& f : futures) bodies.push_back(f.get());
  for (const auto& b : bodies) {
    EXPECT_NE(b, "failed");
    EXPECT_EQ(b, bodies.front());
  }
}

TEST(Http, BindFailure) {
  ServiceConfig cfg;
  cfg.port = 0;
  auto svc = make_service(cfg);
  RunningServer srv(*svc);
  ServiceConfig taken;
  taken.port = srv.port;
  auto svc2 = make_service(taken);
  HttpFrontend second(*svc2);
  try {
    (void)second.bind();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::BindFailure);
  }
}
