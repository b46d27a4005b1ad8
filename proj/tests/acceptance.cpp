// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <future>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "beam_oracle.hpp"
#include "edit_oracle.hpp"
#include "gradcheck.hpp"
#include "overfit.hpp"
#include "sequer/bm25.hpp"
#include "sequer/miner.hpp"
#include "sequer/service.hpp"
#include "sequer/session.hpp"
#include "sequer/synthetic.hpp"

using namespace sequer;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (ok) return;
    pass = false;
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::size_t lcs_table(const std::u32string& a, const std::u32string& b) {
  std::vector<std::vector<std::size_t>> t(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      t[i][j] = a[i - 1] == b[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
    }
  }
  return t[a.size()][b.size()];
}

Outcome lcs_similarity_check() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  const std::u32string alphabet = U"abcdé中 ";
  std::size_t bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::u32string a, b;
    for (auto n = uniform_index(rng, 41); n > 0; --n) a.push_back(alphabet[uniform_index(rng, alphabet.size())]);
    for (auto n = uniform_index(rng, 41); n > 0; --n) b.push_back(alphabet[uniform_index(rng, alphabet.size())]);
    std::string ua, ub;
    for (char32_t c : a) utf8_append(ua, c);
    for (char32_t c : b) utf8_append(ub, c);
    const double want = a.empty() && b.empty()
                            ? 1.0
                            : 2.0 * static_cast<double>(lcs_table(a, b)) / static_cast<double>(a.size() + b.size());
    if (lcs_similarity(ua, ub) != want) ++bad;
  }
  const double ex = lcs_similarity("do and while in java", "do and while loop in java");
  const double secs = seconds_since(t0);
  o.require(bad == 0, std::to_string(bad) + " of 1000 disagree with the table DP");
  o.require(std::abs(ex - 40.0 / 45.0) <= 1e-12, "worked example " + fmt("%.15f", ex));
  o.require(secs < 5.0, "took " + fmt("%.2f s", secs));
  o.detail = o.pass ? "1000/1000 exact, 40/45 example, " + fmt("%.2f s", secs) : o.detail;
  return o;
}

Event at(const std::string& id, std::int64_t ms) {
  Event e;
  e.root_event_id = "r";
  e.event_id = id;
  e.user_id = "u";
  e.event_time = Timestamp{Millis{ms}};
  e.event_type = EventType::Home;
  e.url = std::string(kSiteRoot) + "/" + id;
  return e;
}

Outcome sessionization_check() {
  Outcome o;
  o.require(sessionize({at("a", 0), at("b", 360'000)}).size() == 1, "360 s gap split");
  o.require(sessionize({at("a", 0), at("b", 361'000)}).size() == 2, "361 s gap kept");
  std::size_t got = 0, truth = 0, hit = 0;
  for (std::uint64_t seed : {11ULL, 12ULL, 13ULL}) {
    SyntheticSpec spec;
    spec.user_count = 200;
    spec.seed = seed;
    const auto log = generate_synthetic(spec);
    const auto r = run_session_pipeline(log.events);
    std::set<std::vector<std::string>> want;
    for (const auto& s : log.truth.sessions) want.insert(s.event_ids);
    truth += want.size();
    for (const auto& s : r.all_sessions) {
      std::vector<std::string> ids;
      for (const auto& e : s.events) ids.push_back(e.event_id);
      ++got;
      hit += want.count(ids);
    }
  }
  const double precision = got ? static_cast<double>(hit) / static_cast<double>(got) : 0.0;
  const double recall = truth ? static_cast<double>(hit) / static_cast<double>(truth) : 0.0;
  o.require(precision == 1.0 && recall == 1.0, "precision " + fmt("%.4f", precision) + " recall " + fmt("%.4f", recall));
  if (o.pass) o.detail = "360 s joins, 361 s splits, " + std::to_string(truth) + " sessions P=R=1";
  return o;
}

Outcome mining_check() {
  Outcome o;
  std::size_t threads_total = 0, pairs_total = 0, violations = 0, thread_mismatch = 0;
  for (std::uint64_t seed : {21ULL, 22ULL, 23ULL}) {
    SyntheticSpec spec;
    spec.user_count = 200;
    spec.seed = seed;
    spec.reformulation_category_mix = {0.45, 0.35, 0.20, 0.0};
    const auto log = generate_synthetic(spec);
    const auto sessions = run_session_pipeline(log.events).linear_sessions;
    const MinerConfig cfg;
    const auto threads = extract_threads(sessions, cfg);
    std::vector<ReformulationThread> want;
    for (const auto& t : log.truth.threads) want.push_back(t.thread);
    if (threads.size() != want.size()) {
      thread_mismatch += std::max(threads.size(), want.size());
    } else {
      for (std::size_t i = 0; i < want.size(); ++i) {
        const auto& a = threads[i];
        const auto& b = want[i];
        bool same = a.queries == b.queries && a.terminal_post == b.terminal_post && a.session_id == b.session_id &&
                    a.interleaved_posts.size() == b.interleaved_posts.size();
        for (std::size_t k = 0; same && k < a.interleaved_posts.size(); ++k) {
          same = a.interleaved_posts[k].post_id == b.interleaved_posts[k].post_id &&
                 std::abs(a.interleaved_posts[k].dwell_seconds - b.interleaved_posts[k].dwell_seconds) < 1e-9;
        }
        thread_mismatch += !same;
      }
    }
    for (const auto& t : threads) {
      for (std::size_t i = 0; i + 1 < t.queries.size(); ++i) violations += !(lcs_similarity(t.queries[i], t.queries[i + 1]) > 0.7);
      for (const auto& v : t.interleaved_posts) violations += !(v.dwell_seconds <= 30.0);
    }
    const auto pairs = emit_pairs(threads, cfg);
    for (const auto& p : pairs) violations += !(lcs_similarity(p.original, p.reformulated) >= 0.7);
    threads_total += threads.size();
    pairs_total += pairs.size();
  }
  o.require(thread_mismatch == 0, std::to_string(thread_mismatch) + " threads differ from ground truth");
  o.require(violations == 0, std::to_string(violations) + " threshold violations");
  o.require(pairs_total > 0, "no pairs emitted");
  if (o.pass) {
    o.detail = std::to_string(threads_total) + " threads exact, " + std::to_string(pairs_total) + " pairs, 0 violations";
  }
  return o;
}

Outcome split_check() {
  Outcome o;
  std::vector<QueryPair> pairs;
  pairs.reserve(651'036);
  for (std::size_t i = 0; i < 651'036; ++i) pairs.push_back({"q" + std::to_string(i), "r" + std::to_string(i), 1.0, {}});
  const auto a = split(pairs, 42);
  const auto b = split(pairs, 42);
  o.require(a.train.size() == 520'830 && a.validation.size() == 65'103 && a.test.size() == 65'103,
            "sizes " + std::to_string(a.train.size()) + "/" + std::to_string(a.validation.size()) + "/" +
                std::to_string(a.test.size()));
  o.require(a.train == b.train && a.validation == b.validation && a.test == b.test, "not deterministic for a seed");
  if (o.pass) o.detail = "520830 / 65103 / 65103, identical on rerun";
  return o;
}

Outcome bpe_check() {
  Outcome o;
  const auto tiny = train_bpe({"ab ab ac"}, 100);
  // Word-final symbols carry the end-of-word marker, so the pair (a, b)
  // appears as (a, b</w>).
  o.require(!tiny.merges().empty() && tiny.merges()[0] == BpeModel::Merge{"a", "b</w>"}, "first merge is not (a, b)");
  Rng corpus_rng(31);
  std::vector<std::string> corpus;
  for (int i = 0; i < 400; ++i) corpus.push_back(synth::base_query(corpus_rng));
  const auto m = train_bpe(corpus, 400);
  o.require(m == train_bpe(corpus, 400), "training not deterministic");
  std::string alphabet;
  for (const auto& q : corpus) {
    for (char c : q) {
      if (c != ' ' && alphabet.find(c) == std::string::npos) alphabet += c;
    }
  }
  Rng rng(32);
  std::size_t bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::string s;
    for (auto n = uniform_index(rng, 40); n > 0; --n) {
      s += uniform_index(rng, 6) == 0 ? ' ' : alphabet[uniform_index(rng, alphabet.size())];
    }
    const auto ids = m.encode(s);
    bad += m.decode(ids) != normalize_ws(s) || ids != m.encode(s);
  }
  o.require(bad == 0, std::to_string(bad) + " of 1000 round trips failed");
  if (o.pass) o.detail = "first merge (a, b</w>), 1000/1000 round trips, deterministic";
  return o;
}

Outcome numerics_check() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  Transducer<double> m(oracle::gradcheck_config(), 17);
  const auto errs = oracle::gradient_check(m, oracle::gradcheck_batch(), 1e-5);
  double worst = 0.0;
  for (const auto& e : errs) {
    worst = std::max(worst, e.relative);
    o.require(e.relative < 1e-4, e.name + " relative error " + fmt("%.2e", e.relative));
  }
  o.require(errs.size() == m.params().size(), "not every block checked");

  Transducer<double> c(oracle::gradcheck_config(), 2);
  const std::vector<std::int32_t> src{kBos, 4, 5, 6, kEos};
  const std::vector<std::int32_t> tgt{kBos, 7, 8, 9, 10};
  const auto base = c.logits(src, tgt);
  bool causal = true;
  for (std::size_t t = 0; t + 1 < tgt.size(); ++t) {
    auto changed = tgt;
    for (std::size_t u = t + 1; u < tgt.size(); ++u) changed[u] = changed[u] == 4 ? 5 : 4;
    const auto other = c.logits(src, changed);
    for (Eigen::Index r = 0; r <= static_cast<Eigen::Index>(t); ++r) causal = causal && base.row(r) == other.row(r);
  }
  o.require(causal, "future tokens change earlier logits");

  Transducer<double> u(oracle::gradcheck_config(), 3);
  u.param("out.w").value.setZero();
  u.param("out.b").value.setZero();
  const double loss = oracle::loss_value(u, oracle::gradcheck_batch());
  const double want = std::log(static_cast<double>(oracle::gradcheck_config().vocab_size));
  o.require(std::abs(loss - want) <= 1e-9, "uniform loss off by " + fmt("%.2e", loss - want));
  const double secs = seconds_since(t0);
  o.require(secs < 60.0, "took " + fmt("%.1f s", secs));
  if (o.pass) {
    o.detail = std::to_string(errs.size()) + " blocks, worst " + fmt("%.2e", worst) + ", causal, ln|D| " +
               fmt("%.1e", std::abs(loss - want)) + ", " + fmt("%.1f s", secs);
  }
  return o;
}

Outcome overfit_check() {
  Outcome o;
  const auto r = oracle::run_overfit(1);
  o.require(r.pairs.size() == 200, "pair count " + std::to_string(r.pairs.size()));
  o.require(r.em1 >= 0.95, "training EM@1 " + fmt("%.3f", r.em1));
  o.require(r.epochs <= 300, "epochs " + std::to_string(r.epochs));
  o.require(r.seconds < 900.0, "took " + fmt("%.0f s", r.seconds));
  if (o.pass) {
    o.detail = "EM@1 " + fmt("%.3f", r.em1) + " after " + std::to_string(r.epochs) + " epochs, " +
               fmt("%.1f s", r.seconds);
  }
  return o;
}

Outcome beam_check() {
  Outcome o;
  std::size_t cases = 0;
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    for (double alpha : {0.0, 0.6, 1.0}) {
      oracle::ToyModel m(5, seed);
      const auto beam = beam_search(m, 125, alpha, 3);
      const auto all = oracle::exhaustive_decode(m, alpha, 3);
      const std::size_t top = std::min<std::size_t>(125, all.size());
      bool same = beam.size() == top;
      for (std::size_t i = 0; same && i < top; ++i) {
        same = beam[i].ids == all[i].ids && std::abs(beam[i].score - all[i].score) <= 1e-9;
      }
      o.require(same, "seed " + std::to_string(seed) + " alpha " + fmt("%.1f", alpha) + " differs from enumeration");
      ++cases;
    }
  }
  std::size_t greedy_bad = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    oracle::ToyModel m(4 + seed % 7, 1000 + seed);
    const auto b = beam_search(m, 1, kDefaultAlpha, 8);
    const auto g = greedy_decode(m, kDefaultAlpha, 8);
    greedy_bad += b.size() != 1 || b[0].ids != g.ids;
  }
  o.require(greedy_bad == 0, std::to_string(greedy_bad) + " of 100 toy models differ from greedy");
  if (o.pass) o.detail = std::to_string(cases) + " exhaustive cases exact, 100/100 greedy";
  return o;
}

Outcome metrics_check() {
  Outcome o;
  const std::vector<std::string> refs{"java read file", "how to sort list python", "do while loop in java"};
  for (const auto& r : refs) o.require(sentence_gleu("x y", r, r).value == 1.0, "GLEU(s, r, r) != 1 for " + r);

  const std::vector<std::string> src{"read file", "sort list"}, ref{"java read file", "sort list python"};
  const auto copy = m2_score(src, src, ref);
  o.require(copy.precision == 1.0 && copy.recall == 0.0 && copy.f1 == 0.0, "hyp=src convention");
  const auto same = m2_score(src, ref, ref);
  o.require(same.precision == 1.0 && same.recall == 1.0 && same.f1 == 1.0, "hyp=ref convention");

  Rng rng(41);
  std::vector<std::vector<std::string>> cands;
  std::vector<std::string> gold;
  for (int i = 0; i < 200; ++i) {
    std::vector<std::string> list;
    for (int k = 0; k < 12; ++k) list.push_back(std::to_string(uniform_index(rng, 15)));
    cands.push_back(list);
    gold.push_back(std::to_string(uniform_index(rng, 15)));
  }
  const auto em = em_at_k(cands, gold, {1, 2, 3, 5, 8, 10, 12});
  double prev = 0.0;
  for (const auto& [k, v] : em) {
    o.require(v >= prev, "EM@" + std::to_string(k) + " decreased");
    prev = v;
  }

  const auto sweep = oracle::sweep_edits(oracle::all_sequences({"a", "b", "c"}, 6));
  o.require(sweep.pairs == 1093u * 1093u && sweep.mismatches == 0,
            std::to_string(sweep.mismatches) + " edit mismatches over " + std::to_string(sweep.pairs) + " pairs");

  std::vector<PostDoc> posts;
  for (int i = 0; i < 8; ++i) {
    std::string title = "java";
    for (int k = 0; k < 8 - i; ++k) title += " java";
    posts.push_back({"d" + std::to_string(i), title, "filler text"});
  }
  const auto idx = build_index(posts);
  const double rr = mrr(idx, {{"java", "d4"}});
  o.require(idx.rank_of("java", "d4", 100) == 5 && rr == 0.2, "rank-5 MRR " + fmt("%.17g", rr));
  if (o.pass) o.detail = "GLEU=1, M2 conventions, EM@k monotone, " + std::to_string(sweep.pairs) + " edit pairs, MRR 0.2";
  return o;
}

Outcome retrieval_check() {
  Outcome o;
  std::string summary;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto fx = generate_retrieval_fixture(seed, 50);
    const auto idx = build_index(fx.posts);
    std::vector<RetrievalQuery> orig, reform;
    for (const auto& c : fx.cases) {
      orig.push_back({c.original, c.target_post});
      reform.push_back({c.reformulated, c.target_post});
    }
    const double a = mrr(idx, orig), b = mrr(idx, reform);
    o.require(idx.size() == 50, "index size " + std::to_string(idx.size()));
    o.require(b > a, "seed " + std::to_string(seed) + ": reformulated " + fmt("%.3f", b) + " <= original " + fmt("%.3f", a));
    if (!summary.empty()) summary += ", ";
    summary += fmt("%.3f", b) + " > " + fmt("%.3f", a);
  }
  if (o.pass) o.detail = "MRR reformulated vs original: " + summary;
  return o;
}

Outcome service_check() {
  Outcome o;
  const auto bpe = std::make_shared<const BpeModel>(
      train_bpe({"how to read file in java", "java read file", "do while loop in java", "python list sort"}, 80));
  ModelConfig mc;
  mc.num_layers = 1;
  mc.num_heads = 2;
  mc.d_model = 16;
  mc.ffn_size = 32;
  mc.vocab_size = bpe->vocab_size();
  mc.max_len = 12;
  mc.dropout = 0.0;
  auto model = std::make_shared<const Transducer<float>>(mc, 5);
  ServiceConfig cfg;
  cfg.port = 0;
  cfg.workers = 4;
  SuggestService svc(model, bpe, cfg, "acceptance");
  HttpFrontend front(svc);
  const int port = front.bind();
  std::thread server([&] { front.run(); });
  front.wait_until_ready();

  httplib::Client cli("127.0.0.1", port);
  auto health = cli.Get("/health");
  o.require(health && health->status == 200, "/health did not answer 200");

  std::vector<std::future<std::string>> futures;
  for (int i = 0; i < 16; ++i) {
    futures.push_back(std::async(std::launch::async, [port] {
      httplib::Client c("127.0.0.1", port);
      auto r = c.Post("/suggest", R"({"query":"how to read file in java","k":10})", "application/json");
      if (!r || r->status != 200) return std::string("failed");
      return nlohmann::json::parse(r->body)["candidates"].dump();
    }));
  }
  std::vector<std::string> bodies;
  for (auto& f : futures) bodies.push_back(f.get());
  bool agree = bodies.front() != "failed";
  for (const auto& b : bodies) agree = agree && b == bodies.front();
  o.require(agree, "concurrent responses differ or failed");

  auto empty = cli.Post("/suggest", R"({"query":""})", "application/json");
  o.require(empty && empty->status == 400, "empty query did not answer 400");
  front.stop();
  server.join();
  if (o.pass) o.detail = "/health 200, 16 concurrent identical, empty query 400";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"lcs-similarity", lcs_similarity_check},
      {"sessionization", sessionization_check},
      {"mining-fidelity", mining_check},
      {"split", split_check},
      {"bpe", bpe_check},
      {"transformer-numerics", numerics_check},
      {"overfit", overfit_check},
      {"beam-oracle", beam_check},
      {"metrics", metrics_check},
      {"retrieval-sanity", retrieval_check},
      {"service", service_check},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %-21s %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
