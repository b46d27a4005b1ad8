// sequer: command-line front end for the reformulation toolkit.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sequer/analytics.hpp"
#include "sequer/beam.hpp"
#include "sequer/bm25.hpp"
#include "sequer/bpe.hpp"
#include "sequer/checkpoint.hpp"
#include "sequer/event_log.hpp"
#include "sequer/metrics.hpp"
#include "sequer/miner.hpp"
#include "sequer/session.hpp"
#include "sequer/synthetic.hpp"
#include "sequer/trainer.hpp"
#include "sequer/service.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace fs = std::filesystem;
using namespace sequer;

namespace {

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path);
  return out;
}

LogFormat format_of(const std::string& name, const std::string& path) {
  if (!name.empty()) {
    if (auto f = parse_log_format(name)) return *f;
    throw Error(Errc::InvalidArgument, "unknown format " + name);
  }
  return fs::path(path).extension() == ".tsv" ? LogFormat::Tsv : LogFormat::Jsonl;
}

std::vector<Event> read_events(const std::string& path, const std::string& format) {
  auto in = open_in(path);
  auto parsed = parse_log(in, format_of(format, path));
  for (const auto& e : parsed.errors) spdlog::warn("{}:{}: {}", path, e.line, e.message);
  spdlog::info("read {} events from {} ({} malformed lines skipped)", parsed.events.size(), path, parsed.errors.size());
  return std::move(parsed.events);
}

std::vector<Session> read_sessions_file(const std::string& path) {
  auto in = open_in(path);
  return read_sessions(in);
}

template <class T>
Transducer<T> load_model(const std::string& path) {
  nlohmann::json meta;
  auto m = load_checkpoint<T>(fs::path(path), &meta);
  spdlog::debug("loaded {} ({} parameter blocks)", path, m.params().size());
  return m;
}

struct DecodeOptions {
  std::string ckpt, bpe;
  std::size_t k = kDefaultBeam;
  double alpha = kDefaultAlpha;
};

void add_decode_options(CLI::App* cmd, DecodeOptions& o) {
  cmd->add_option("--ckpt", o.ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  cmd->add_option("--bpe", o.bpe, "Tokenizer model")->required()->check(CLI::ExistingFile);
  cmd->add_option("--k", o.k, "Beam size")->capture_default_str()->check(CLI::Range(1, 1000));
  cmd->add_option("--alpha", o.alpha, "Length normalization exponent")->capture_default_str();
}

HttpFrontend* g_frontend = nullptr;

void on_signal(int) {
  if (g_frontend) g_frontend->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Query reformulation toolkit: log mining, subword tokenization, seq2seq training, decoding, evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level = "info";
  std::uint64_t seed = 1;
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off")->capture_default_str();
  app.add_option("--seed", seed, "Seed for every random choice")->capture_default_str();

  // generate
  auto* gen = app.add_subcommand("generate", "Write a synthetic event log");
  std::size_t users = 100;
  std::string gen_out, gen_format, gen_posts, gen_qrels;
  gen->add_option("--users", users, "Number of users")->capture_default_str();
  gen->add_option("--out", gen_out, "Event log path")->required();
  gen->add_option("--format", gen_format, "jsonl|tsv (default from extension)");
  gen->add_option("--posts-out", gen_posts, "Also write a 50-post retrieval fixture (JSONL)");
  gen->add_option("--qrels-out", gen_qrels, "Fixture queries: original, reformulated, target post (TSV)");

  // sessions
  auto* ses = app.add_subcommand("sessions", "Clean and sessionize an event log");
  std::string ses_in, ses_out, ses_format;
  PipelineConfig pcfg;
  double gap_secs = 360, bot_secs = 60;
  bool keep_nonlinear = false;
  ses->add_option("--in", ses_in, "Event log")->required()->check(CLI::ExistingFile);
  ses->add_option("--out", ses_out, "Sessions JSONL")->required();
  ses->add_option("--format", ses_format, "jsonl|tsv (default from extension)");
  ses->add_option("--max-gap-secs", gap_secs)->capture_default_str();
  ses->add_option("--bot-window-secs", bot_secs)->capture_default_str();
  ses->add_option("--bot-window-events", pcfg.bot_window_events)->capture_default_str();
  ses->add_flag("--keep-nonlinear", keep_nonlinear, "Skip the linear-navigation filter");

  // mine
  auto* mine = app.add_subcommand("mine", "Extract reformulation pairs from sessions");
  std::string mine_in, mine_out;
  MinerConfig mcfg_mine;
  double dwell_secs = 30;
  mine->add_option("--sessions", mine_in, "Sessions JSONL")->required()->check(CLI::ExistingFile);
  mine->add_option("--pairs-out", mine_out, "Pairs TSV")->required();
  mine->add_option("--pair-sim", mcfg_mine.pair_similarity)->capture_default_str();
  mine->add_option("--adj-sim", mcfg_mine.adjacent_similarity)->capture_default_str();
  mine->add_option("--dwell-secs", dwell_secs)->capture_default_str();

  // split
  auto* spl = app.add_subcommand("split", "Shuffle pairs into train/valid/test");
  std::string spl_in, spl_dir;
  spl->add_option("--pairs", spl_in, "Pairs TSV")->required()->check(CLI::ExistingFile);
  spl->add_option("--out-dir", spl_dir, "Output directory")->required();

  // stats
  auto* sta = app.add_subcommand("stats", "Query analytics report");
  std::string sta_pairs, sta_sessions, sta_out;
  std::size_t top_k = 10, buckets = 10;
  auto* sp = sta->add_option("--pairs", sta_pairs, "Pairs TSV")->check(CLI::ExistingFile);
  auto* ss = sta->add_option("--sessions", sta_sessions, "Sessions JSONL")->check(CLI::ExistingFile);
  sp->excludes(ss);
  sta->add_option("--report-out", sta_out, "Report JSON")->required();
  sta->add_option("--top-k", top_k)->capture_default_str();
  sta->add_option("--buckets", buckets)->capture_default_str();

  // bpe-train
  auto* bpt = app.add_subcommand("bpe-train", "Learn a subword vocabulary");
  std::string bpe_corpus, bpe_out;
  std::size_t bpe_vocab = 10'000;
  bpt->add_option("--corpus", bpe_corpus, "Text file (one line per sentence) or pairs TSV")->required()->check(CLI::ExistingFile);
  bpt->add_option("--vocab", bpe_vocab, "Maximum vocabulary size")->capture_default_str();
  bpt->add_option("--out", bpe_out, "Model file")->required();

  // train
  auto* trn = app.add_subcommand("train", "Train the encoder-decoder");
  std::string trn_dir, trn_bpe, trn_out, precision = "f32";
  ModelConfig mcfg;
  TrainConfig tcfg;
  std::optional<std::size_t> ffn;
  trn->add_option("--pairs-dir", trn_dir, "Directory with train.tsv and valid.tsv")->required()->check(CLI::ExistingDirectory);
  trn->add_option("--bpe", trn_bpe, "Tokenizer model")->required()->check(CLI::ExistingFile);
  trn->add_option("--out", trn_out, "Checkpoint path")->required();
  trn->add_option("--layers", mcfg.num_layers)->capture_default_str();
  trn->add_option("--heads", mcfg.num_heads)->capture_default_str();
  trn->add_option("--dmodel", mcfg.d_model)->capture_default_str();
  trn->add_option("--ffn", ffn, "Feed-forward width (default 4 x dmodel)");
  trn->add_option("--max-len", mcfg.max_len)->capture_default_str();
  trn->add_option("--dropout", mcfg.dropout)->capture_default_str();
  trn->add_option("--epochs", tcfg.epochs)->capture_default_str();
  trn->add_option("--batch-size", tcfg.batch_size)->capture_default_str();
  trn->add_option("--lr", tcfg.learning_rate)->capture_default_str();
  trn->add_option("--precision", precision, "f32|f64")->capture_default_str()->check(CLI::IsMember({"f32", "f64"}));

  // suggest
  auto* sug = app.add_subcommand("suggest", "Print reformulation candidates for a query");
  DecodeOptions sug_opt;
  std::string query;
  add_decode_options(sug, sug_opt);
  sug->add_option("--query", query, "Query text")->required();

  // eval
  auto* evl = app.add_subcommand("eval", "Score a model on held-out pairs");
  DecodeOptions evl_opt;
  std::string evl_pairs, evl_posts, evl_qrels, evl_report;
  add_decode_options(evl, evl_opt);
  evl->add_option("--pairs", evl_pairs, "Test pairs TSV")->required()->check(CLI::ExistingFile);
  auto* po = evl->add_option("--posts", evl_posts, "Posts JSONL for retrieval")->check(CLI::ExistingFile);
  auto* qr = evl->add_option("--qrels", evl_qrels, "TSV: query, reformulation (ignored), target post id")->check(CLI::ExistingFile);
  po->needs(qr);
  qr->needs(po);
  evl->add_option("--report", evl_report, "Report JSON (stdout when omitted)");

  // serve
  auto* srv = app.add_subcommand("serve", "Run the HTTP suggestion service");
  std::string srv_ckpt, srv_bpe, srv_host;
  std::optional<int> srv_port, srv_timeout;
  std::optional<std::size_t> srv_k, srv_workers;
  std::optional<double> srv_alpha;
  std::vector<std::string> origins;
  bool any_origin = false;
  srv->add_option("--ckpt", srv_ckpt, "Model checkpoint");
  srv->add_option("--bpe", srv_bpe, "Tokenizer model");
  srv->add_option("--host", srv_host, "Bind address");
  srv->add_option("--port", srv_port, "Port (0 picks a free one)");
  srv->add_option("--k", srv_k, "Default beam size");
  srv->add_option("--alpha", srv_alpha, "Default length normalization exponent");
  srv->add_option("--allow-origin", origins, "Origin allowed to call the API (repeatable)");
  srv->add_flag("--allow-any-origin", any_origin, "Send Access-Control-Allow-Origin: *");
  srv->add_option("--workers", srv_workers, "Concurrent decodes");
  srv->add_option("--timeout-ms", srv_timeout, "Socket read/write timeout");

  CLI11_PARSE(app, argc, argv);

  const auto level = spdlog::level::from_str(log_level);
  if (level == spdlog::level::off && log_level != "off") {
    std::cerr << "unknown log level " << log_level << "\n";
    return 2;
  }
  spdlog::set_level(level);
  spdlog::set_default_logger(spdlog::stderr_color_mt("sequer"));
  spdlog::set_level(level);

  try {
    if (*gen) {
      SyntheticSpec spec;
      spec.user_count = users;
      spec.seed = seed;
      const auto log = generate_synthetic(spec);
      auto out = open_out(gen_out);
      write_log(out, log.events, format_of(gen_format, gen_out));
      spdlog::info("wrote {} events for {} users to {}", log.events.size(), users, gen_out);
      if (!gen_posts.empty() || !gen_qrels.empty()) {
        const auto fx = generate_retrieval_fixture(seed, 50);
        if (!gen_posts.empty()) {
          auto p = open_out(gen_posts);
          write_posts(p, fx.posts);
        }
        if (!gen_qrels.empty()) {
          auto q = open_out(gen_qrels);
          for (const auto& c : fx.cases) q << c.original << '\t' << c.reformulated << '\t' << c.target_post << '\n';
        }
      }
    } else if (*ses) {
      pcfg.max_gap = Millis(static_cast<std::int64_t>(gap_secs * 1000));
      pcfg.bot_window = Millis(static_cast<std::int64_t>(bot_secs * 1000));
      auto r = run_session_pipeline(read_events(ses_in, ses_format), pcfg);
      const auto& kept = keep_nonlinear ? r.all_sessions : r.linear_sessions;
      auto out = open_out(ses_out);
      write_sessions(out, kept);
      spdlog::info("{} bot users dropped, {} sessions, {} written", r.dropped_users.size(), r.all_sessions.size(),
                   kept.size());
    } else if (*mine) {
      mcfg_mine.max_dwell = Millis(static_cast<std::int64_t>(dwell_secs * 1000));
      const auto threads = extract_threads(read_sessions_file(mine_in), mcfg_mine);
      const auto pairs = emit_pairs(threads, mcfg_mine);
      auto out = open_out(mine_out);
      write_pairs(out, pairs, true);
      spdlog::info("{} threads, {} pairs", threads.size(), pairs.size());
    } else if (*spl) {
      const auto d = split(read_pairs_file(spl_in), seed);
      write_split(d, spl_dir);
      spdlog::info("train {} / valid {} / test {}", d.train.size(), d.validation.size(), d.test.size());
    } else if (*sta) {
      std::vector<std::string> queries;
      std::vector<double> sims;
      if (!sta_pairs.empty()) {
        for (const auto& p : read_pairs_file(sta_pairs)) {
          queries.push_back(p.original);
          queries.push_back(p.reformulated);
          sims.push_back(p.similarity);
        }
      } else if (!sta_sessions.empty()) {
        const auto sessions = read_sessions_file(sta_sessions);
        for (const auto& s : sessions) {
          for (const auto& e : s.events) {
            if (e.event_type == EventType::Search) queries.push_back(e.payload());
          }
        }
        MinerConfig whole;
        whole.adjacent_similarity = -1.0;
        for (const auto& p : reformulation_steps(extract_threads(sessions, whole))) sims.push_back(p.similarity);
      } else {
        throw Error(Errc::InvalidArgument, "stats needs --pairs or --sessions");
      }
      const auto report = build_report(queries, sims, top_k, buckets);
      auto out = open_out(sta_out);
      out << report_to_json(report).dump(2) << '\n';
      spdlog::info("report over {} queries written to {}", queries.size(), sta_out);
    } else if (*bpt) {
      std::vector<std::string> corpus;
      auto in = open_in(bpe_corpus);
      for (std::string line; std::getline(in, line);) {
        // Pairs files contribute both sides; provenance columns are skipped.
        const auto cols = detail::split_tabs(line);
        if (cols.size() >= 2) {
          corpus.emplace_back(cols[0]);
          corpus.emplace_back(cols[1]);
        } else if (!line.empty()) {
          corpus.push_back(line);
        }
      }
      const auto model = train_bpe(corpus, bpe_vocab);
      model.save(fs::path(bpe_out));
      spdlog::info("{} merges, vocabulary {}", model.merges().size(), model.vocab_size());
    } else if (*trn) {
      const auto bpe = BpeModel::load(fs::path(trn_bpe));
      const auto train_pairs = read_pairs_file(fs::path(trn_dir) / "train.tsv");
      std::vector<QueryPair> valid_pairs;
      if (fs::exists(fs::path(trn_dir) / "valid.tsv")) valid_pairs = read_pairs_file(fs::path(trn_dir) / "valid.tsv");
      mcfg.vocab_size = bpe.vocab_size();
      mcfg.ffn_size = ffn.value_or(4 * mcfg.d_model);
      tcfg.seed = seed;
      tcfg.precision = parse_precision(precision);
      const auto train_data = encode_pairs(train_pairs, bpe);
      const auto valid_data = encode_pairs(valid_pairs, bpe);
      spdlog::info("training on {} pairs, validating on {}", train_data.size(), valid_data.size());
      auto run = [&]<class T>(T) {
        auto r = train<T>(train_data, valid_data, mcfg, tcfg, [](const EpochStats& st, const Transducer<T>&) {
          if (st.valid_loss) {
            spdlog::info("epoch {} train {:.4f} valid {:.4f} ({:.1f}s)", st.epoch, st.train_loss, *st.valid_loss,
                         st.seconds);
          } else {
            spdlog::info("epoch {} train {:.4f} ({:.1f}s)", st.epoch, st.train_loss, st.seconds);
          }
          return true;
        });
        nlohmann::json curve = nlohmann::json::array();
        for (const auto& e : r.curve) {
          curve.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss},
                           {"valid_loss", e.valid_loss ? nlohmann::json(*e.valid_loss) : nlohmann::json(nullptr)}});
        }
        save_checkpoint(fs::path(trn_out), r.model,
                        {{"best_epoch", r.best_epoch}, {"seed", seed}, {"learning_rate", tcfg.learning_rate},
                         {"batch_size", tcfg.batch_size}, {"curve", curve}});
        spdlog::info("best epoch {} saved to {}", r.best_epoch, trn_out);
      };
      if (tcfg.precision == Precision::F64) {
        run(double{});
      } else {
        run(float{});
      }
    } else if (*sug) {
      const auto model = load_model<float>(sug_opt.ckpt);
      const auto bpe = BpeModel::load(fs::path(sug_opt.bpe));
      for (const auto& s : suggest(model, bpe, query, sug_opt.k, sug_opt.alpha)) {
        std::printf("%s\t%.6f\n", s.text.c_str(), s.score);
      }
    } else if (*evl) {
      const auto model = load_model<float>(evl_opt.ckpt);
      const auto bpe = BpeModel::load(fs::path(evl_opt.bpe));
      const auto pairs = read_pairs_file(evl_pairs);
      std::vector<std::string> sources, refs;
      std::vector<std::vector<std::string>> cands;
      for (const auto& p : pairs) {
        sources.push_back(p.original);
        refs.push_back(p.reformulated);
        std::vector<std::string> list;
        for (const auto& s : suggest(model, bpe, p.original, evl_opt.k, evl_opt.alpha)) list.push_back(s.text);
        cands.push_back(std::move(list));
      }
      auto report = evaluate_candidates(sources, cands, refs);
      if (!evl_posts.empty()) {
        auto pin = open_in(evl_posts);
        const auto index = build_index(read_posts(pin));
        std::vector<RetrievalQuery> orig, reform;
        auto qin = open_in(evl_qrels);
        for (std::string line; std::getline(qin, line);) {
          const auto cols = detail::split_tabs(line);
          if (cols.size() < 2) continue;
          const std::string q(cols[0]), target(cols.back());
          orig.push_back({q, target});
          const auto top = suggest(model, bpe, q, evl_opt.k, evl_opt.alpha);
          reform.push_back({top.empty() ? q : top.front().text, target});
        }
        report.mrr = mrr(index, reform);
        report.mrr_original = mrr(index, orig);
      }
      const auto text = report_to_json(report).dump(2);
      if (evl_report.empty()) {
        std::cout << text << '\n';
      } else {
        auto out = open_out(evl_report);
        out << text << '\n';
      }
    } else if (*srv) {
      auto cfg = service_config_from_env();
      if (!srv_ckpt.empty()) cfg.checkpoint = srv_ckpt;
      if (!srv_bpe.empty()) cfg.bpe = srv_bpe;
      if (!srv_host.empty()) cfg.host = srv_host;
      if (srv_port) cfg.port = *srv_port;
      if (srv_k) cfg.default_k = *srv_k;
      if (srv_alpha) cfg.default_alpha = *srv_alpha;
      if (!origins.empty()) cfg.allowed_origins = origins;
      if (any_origin) cfg.allow_any_origin = true;
      if (srv_workers) cfg.workers = *srv_workers;
      if (srv_timeout) cfg.request_timeout_ms = *srv_timeout;
      if (cfg.checkpoint.empty() || cfg.bpe.empty()) {
        throw Error(Errc::InvalidArgument, "serve needs a checkpoint and a tokenizer (flags or SEQUER_CONFIG)");
      }
      auto service = SuggestService::load(cfg);
      HttpFrontend front(*service);
      const int port = front.bind();
      g_frontend = &front;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      spdlog::info("model {} listening on http://{}:{}", service->model_version(), cfg.host, port);
      std::fflush(stdout);
      front.run();
      g_frontend = nullptr;
      spdlog::info("stopped");
    }
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
