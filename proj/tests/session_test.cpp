#include <gtest/gtest.h>

#include <set>

#include "sequer/random.hpp"
#include "sequer/session.hpp"
#include "sequer/synthetic.hpp"

namespace sequer {
namespace {

Event ev(std::string id, std::string user, std::int64_t sec, std::string url,
         std::optional<std::string> ref = std::nullopt, EventType type = EventType::Home) {
  Event e;
  e.root_event_id = "r";
  e.event_id = std::move(id);
  e.user_id = std::move(user);
  e.event_time = Timestamp{Millis{sec * 1000}};
  e.event_type = type;
  e.url = std::move(url);
  e.referrer = std::move(ref);
  return e;
}

TEST(GroupAndSort, InterleavedUsersKeepCounts) {
  std::vector<Event> in = {ev("e1", "a", 5, "/1"), ev("e2", "b", 1, "/2"), ev("e3", "a", 2, "/3"),
                           ev("e4", "b", 9, "/4"), ev("e5", "a", 7, "/5")};
  const auto users = group_and_sort(in);
  ASSERT_EQ(users.size(), 2u);
  EXPECT_EQ(users.at("a").size(), 3u);
  EXPECT_EQ(users.at("b").size(), 2u);
  EXPECT_EQ(users.at("a")[0].event_id, "e3");
  EXPECT_EQ(users.at("a")[1].event_id, "e1");
  EXPECT_EQ(users.at("a")[2].event_id, "e5");
}

TEST(GroupAndSort, EqualTimestampsOrderedByEventId) {
  const auto users = group_and_sort({ev("e9", "a", 1, "/x"), ev("e10", "a", 1, "/y"), ev("e2", "a", 1, "/z")});
  const auto& s = users.at("a");
  EXPECT_EQ(s[0].event_id, "e10");
  EXPECT_EQ(s[1].event_id, "e2");
  EXPECT_EQ(s[2].event_id, "e9");
}

TEST(GroupAndSort, ShuffledInputMatchesReferenceSort) {
  Rng rng(3);
  std::vector<Event> events;
  for (int i = 0; i < 500; ++i) {
    events.push_back(ev("e" + std::to_string(i), "u" + std::to_string(uniform_index(rng, 7)),
                        static_cast<std::int64_t>(uniform_index(rng, 50)), "/" + std::to_string(i)));
  }
  auto shuffled = events;
  shuffle(std::span<Event>(shuffled), rng);
  const auto got = group_and_sort(shuffled);

  // Reference: one global comparison sort by (user, time, id), then cut.
  auto ref = events;
  std::sort(ref.begin(), ref.end(), [](const Event& a, const Event& b) {
    return std::tie(a.user_id, a.event_time, a.event_id) < std::tie(b.user_id, b.event_time, b.event_id);
  });
  std::vector<Event> flat;
  for (const auto& [_, s] : got) flat.insert(flat.end(), s.begin(), s.end());
  EXPECT_EQ(flat, ref);
}

TEST(FilterNoise, RefreshRunCollapsesToFirst) {
  std::vector<Event> s;
  for (int i = 0; i < 5; ++i) s.push_back(ev("e" + std::to_string(i), "u", i, "/same"));
  s.push_back(ev("e9", "u", 10, "/other"));
  const auto out = filter_noise(s);
  ASSERT_TRUE(out);
  ASSERT_EQ(out->size(), 2u);
  EXPECT_EQ((*out)[0].event_id, "e0");
  EXPECT_EQ((*out)[1].event_id, "e9");
}

TEST(FilterNoise, NonBotUntouched) {
  std::vector<Event> s;
  for (int i = 0; i < 200; ++i) s.push_back(ev("e" + std::to_string(i), "u", i * 2, "/" + std::to_string(i)));
  const auto out = filter_noise(s);
  ASSERT_TRUE(out);
  EXPECT_EQ(*out, s);
}

TEST(FilterNoise, BotWindowBoundary) {
  PipelineConfig cfg;
  std::vector<Event> s;
  // 120 events spread so the 120th lands exactly 60 s after the first.
  for (int i = 0; i < 120; ++i) {
    Event e = ev("e" + std::to_string(i), "u", 0, "/" + std::to_string(i));
    e.event_time = Timestamp{Millis{i * 60'000 / 119}};
    s.push_back(e);
  }
  s.back().event_time = Timestamp{Millis{60'000}};
  EXPECT_FALSE(looks_like_bot(s, cfg));
  s.back().event_time = Timestamp{Millis{59'999}};
  EXPECT_TRUE(looks_like_bot(s, cfg));
}

TEST(FilterNoise, SyntheticBotsRemoved) {
  SyntheticSpec spec;
  spec.user_count = 40;
  spec.bot_fraction = 0.25;
  spec.seed = 11;
  const auto log = generate_synthetic(spec);
  const auto r = run_session_pipeline(log.events);
  EXPECT_EQ(log.truth.bot_users.size(), 10u);
  EXPECT_EQ(r.dropped_users, log.truth.bot_users);
}

TEST(FilterNoise, NoBotsMeansNoUsersDropped) {
  SyntheticSpec spec;
  spec.user_count = 40;
  spec.bot_fraction = 0.0;
  spec.seed = 12;
  const auto log = generate_synthetic(spec);
  EXPECT_TRUE(log.truth.bot_users.empty());
  EXPECT_TRUE(run_session_pipeline(log.events).dropped_users.empty());
}

TEST(FilterNoise, Idempotent) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Event> s;
    std::int64_t t = 0;
    for (int i = 0; i < 200; ++i) {
      t += static_cast<std::int64_t>(uniform_index(rng, 3));
      s.push_back(ev("e" + std::to_string(i), "u", t, "/" + std::to_string(uniform_index(rng, 3))));
    }
    const auto once = filter_noise(s);
    if (!once) continue;
    EXPECT_EQ(filter_noise(*once), once);
  }
}

TEST(Sessionize, GapBoundaryIsInclusive) {
  const std::vector<Event> s = {ev("e1", "u", 0, "/a"), ev("e2", "u", 359, "/b"), ev("e3", "u", 719, "/c")};
  EXPECT_EQ(sessionize(s).size(), 1u);
  const std::vector<Event> t = {ev("e1", "u", 0, "/a"), ev("e2", "u", 361, "/b")};
  const auto split = sessionize(t);
  ASSERT_EQ(split.size(), 2u);
  EXPECT_EQ(split[0].session_id, "e1");
  EXPECT_EQ(split[1].session_id, "e2");
  const std::vector<Event> exact = {ev("e1", "u", 0, "/a"), ev("e2", "u", 360, "/b")};
  EXPECT_EQ(sessionize(exact).size(), 1u);
}

TEST(Sessionize, PartitionAndGapBoundOnRandomStreams) {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Event> s;
    std::int64_t t = 0;
    const auto n = 1 + uniform_index(rng, 60);
    for (std::uint64_t i = 0; i < n; ++i) {
      t += static_cast<std::int64_t>(uniform_index(rng, 800'000));
      Event e = ev("e" + std::to_string(i), "u", 0, "/" + std::to_string(i));
      e.event_time = Timestamp{Millis{t}};
      s.push_back(e);
    }
    const auto sessions = sessionize(s);
    std::vector<Event> flat;
    for (const auto& ss : sessions) {
      ASSERT_FALSE(ss.events.empty());
      EXPECT_EQ(ss.session_id, ss.events.front().event_id);
      for (std::size_t i = 1; i < ss.events.size(); ++i) {
        EXPECT_LE(ss.events[i].event_time - ss.events[i - 1].event_time, Millis{360'000});
      }
      flat.insert(flat.end(), ss.events.begin(), ss.events.end());
    }
    EXPECT_EQ(flat, s);
    for (std::size_t k = 1; k < sessions.size(); ++k) {
      EXPECT_GT(sessions[k].start() - sessions[k - 1].end(), Millis{360'000});
    }
  }
}

TEST(FilterLinear, ChainKeptBranchDropped) {
  Session chain{"e1", "u", {ev("e1", "u", 0, "/A"), ev("e2", "u", 1, "/B", "/A"), ev("e3", "u", 2, "/C", "/B")}};
  Session branch{"e4", "u", {ev("e4", "u", 0, "/A"), ev("e5", "u", 1, "/B", "/A"), ev("e6", "u", 2, "/C", "/A")}};
  Session missing{"e7", "u", {ev("e7", "u", 0, "/A"), ev("e8", "u", 1, "/B")}};
  Session single{"e9", "u", {ev("e9", "u", 0, "/A", "/elsewhere")}};
  const auto kept = filter_linear({chain, branch, missing, single});
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].session_id, "e1");
  EXPECT_EQ(kept[1].session_id, "e9");
  EXPECT_EQ(filter_linear(kept), kept);
}

TEST(Pipeline, SyntheticSessionBoundariesAndLinearSetMatchTruth) {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    SyntheticSpec spec;
    spec.user_count = 60;
    spec.seed = seed;
    const auto log = generate_synthetic(spec);
    const auto r = run_session_pipeline(log.events);
    ASSERT_EQ(r.all_sessions.size(), log.truth.sessions.size());
    std::set<std::string> truth_linear;
    for (std::size_t i = 0; i < r.all_sessions.size(); ++i) {
      const auto& got = r.all_sessions[i];
      const auto& want = log.truth.sessions[i];
      EXPECT_EQ(got.session_id, want.session_id);
      EXPECT_EQ(got.user_id, want.user_id);
      std::vector<std::string> ids;
      for (const auto& e : got.events) ids.push_back(e.event_id);
      EXPECT_EQ(ids, want.event_ids);
      if (want.linear) truth_linear.insert(want.session_id);
    }
    std::set<std::string> got_linear;
    for (const auto& s : r.linear_sessions) got_linear.insert(s.session_id);
    EXPECT_EQ(got_linear, truth_linear);
  }
}

TEST(Pipeline, GeneratorStraddlesSessionBoundary) {
  SyntheticSpec spec;
  spec.user_count = 200;
  spec.seed = 4;
  spec.bot_fraction = 0.0;
  const auto log = generate_synthetic(spec);
  const auto r = run_session_pipeline(log.events);
  bool saw_360 = false, saw_360001 = false;
  for (std::size_t i = 0; i < r.all_sessions.size(); ++i) {
    const auto& s = r.all_sessions[i];
    for (std::size_t k = 1; k < s.events.size(); ++k) {
      saw_360 |= s.events[k].event_time - s.events[k - 1].event_time == Millis{360'000};
    }
    if (i > 0 && r.all_sessions[i - 1].user_id == s.user_id) {
      saw_360001 |= s.start() - r.all_sessions[i - 1].end() == Millis{360'001};
    }
  }
  EXPECT_TRUE(saw_360);
  EXPECT_TRUE(saw_360001);
}

TEST(SessionJson, RoundTrip) {
  SyntheticSpec spec;
  spec.user_count = 5;
  const auto r = run_session_pipeline(generate_synthetic(spec).events);
  std::stringstream buf;
  write_sessions(buf, r.all_sessions);
  EXPECT_EQ(read_sessions(buf), r.all_sessions);
}

}  // namespace
}  // namespace sequer
