#include <gtest/gtest.h>

#include "sequer/event_log.hpp"
#include "sequer/random.hpp"
#include "sequer/synthetic.hpp"

namespace sequer {
namespace {

Event make_search(std::string id, std::string query, std::int64_t ms) {
  Event e;
  e.root_event_id = "r1";
  e.event_id = std::move(id);
  e.user_id = "u1";
  e.event_time = Timestamp{Millis{ms}};
  e.event_type = EventType::Search;
  e.url = search_url(query);
  e.referrer = std::nullopt;
  return e;
}

TEST(Timestamp, FormatsWithMillisecondsAndZ) {
  const Timestamp t{Millis{1'514'764'800'123}};
  EXPECT_EQ(format_timestamp(t), "2018-01-01T00:00:00.123Z");
  EXPECT_EQ(parse_timestamp("2018-01-01T00:00:00.123Z"), t);
  EXPECT_EQ(parse_timestamp("2018-01-01T00:00:00Z"), Timestamp{Millis{1'514'764'800'000}});
  EXPECT_EQ(parse_timestamp("2018-01-01T00:00:00.1Z"), Timestamp{Millis{1'514'764'800'100}});
}

TEST(Timestamp, RejectsMalformed) {
  EXPECT_FALSE(parse_timestamp("2018-01-01 00:00:00Z"));
  EXPECT_FALSE(parse_timestamp("2018-13-01T00:00:00Z"));
  EXPECT_FALSE(parse_timestamp("2018-01-01T00:00:00"));
  EXPECT_FALSE(parse_timestamp("2018-01-01T00:00:00.1234Z"));
  EXPECT_FALSE(parse_timestamp("yesterday"));
}

TEST(PercentCoding, DecodesSearchUrl) {
  EXPECT_EQ(query_param("https://stackoverflow.com/search?q=java%20read%20file"), "java read file");
  EXPECT_EQ(query_param("https://stackoverflow.com/search?tab=newest&q=c%23+list"), "c# list");
  EXPECT_FALSE(query_param("https://stackoverflow.com/search?q=%2"));
  EXPECT_FALSE(query_param("https://stackoverflow.com/questions"));
}

TEST(PercentCoding, AmpersandRoundTrips) {
  const std::string q = "tom & jerry c++ 100%";
  const auto url = search_url(q);
  EXPECT_EQ(url.find('&'), std::string::npos);
  EXPECT_NE(url.find("%26"), std::string::npos);
  EXPECT_NE(url.find("%2B%2B"), std::string::npos);
  EXPECT_EQ(query_param(url), q);
}

TEST(Payload, DerivedFromUrlAndType) {
  Event e = make_search("e1", "java read file", 0);
  EXPECT_EQ(e.payload(), "java read file");
  e.event_type = EventType::Post;
  e.url = "https://stackoverflow.com/questions/1234/some-title";
  EXPECT_EQ(e.payload(), "1234");
  e.event_type = EventType::Home;
  EXPECT_EQ(e.payload(), "");
}

TEST(ParseLog, ValidSearchLine) {
  const std::string line =
      R"({"root_event_id":"r","event_id":"e1","user_id":"u","event_time":"2018-01-01T00:00:00.000Z",)"
      R"("event_type":"Search","url":"https://stackoverflow.com/search?q=java%20read%20file","referrer":null})";
  const auto r = parse_log_string(line + "\n", LogFormat::Jsonl);
  ASSERT_TRUE(r.errors.empty());
  ASSERT_EQ(r.events.size(), 1u);
  EXPECT_EQ(r.events[0].payload(), "java read file");
  EXPECT_FALSE(r.events[0].referrer.has_value());
}

TEST(ParseLog, UnknownEventTypeReportsLineNumber) {
  const std::string good =
      R"({"root_event_id":"r","event_id":"e1","user_id":"u","event_time":"2018-01-01T00:00:00.000Z",)"
      R"("event_type":"Home","url":"https://stackoverflow.com/","referrer":null})";
  std::string bad = good;
  bad.replace(bad.find("Home"), 4, "Click");
  bad.replace(bad.find("e1"), 2, "e2");
  const auto r = parse_log_string(good + "\n" + bad + "\n", LogFormat::Jsonl);
  EXPECT_EQ(r.events.size(), 1u);
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.errors[0].line, 2u);
  EXPECT_NE(r.errors[0].message.find("Click"), std::string::npos);
}

TEST(ParseLog, MissingFieldsAndBadTimestamps) {
  const std::string text =
      "r\te1\tu\tnot-a-time\tHome\thttps://stackoverflow.com/\t\n"
      "r\te2\tu\t2018-01-01T00:00:00Z\tHome\n"
      "r\te3\tu\t2018-01-01T00:00:00Z\tSearch\thttps://stackoverflow.com/search?q=\t\n"
      "r\te4\tu\t2018-01-01T00:00:00Z\tPost\thttps://stackoverflow.com/questions/\t\n"
      "r\te5\tu\t2018-01-01T00:00:00Z\tHome\thttps://stackoverflow.com/\t\n";
  const auto r = parse_log_string(text, LogFormat::Tsv);
  ASSERT_EQ(r.errors.size(), 4u);
  EXPECT_EQ(r.errors[0].line, 1u);
  EXPECT_EQ(r.errors[1].line, 2u);
  EXPECT_EQ(r.errors[2].line, 3u);
  EXPECT_EQ(r.errors[3].line, 4u);
  ASSERT_EQ(r.events.size(), 1u);
  EXPECT_EQ(r.events[0].event_id, "e5");
}

TEST(ParseLog, StrictModeThrows) {
  try {
    parse_log_string("{not json}\n", LogFormat::Jsonl, true);
    FAIL() << "expected MalformedLine";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MalformedLine);
  }
}

TEST(WriteLog, EmptySequenceIsEmptyOutput) {
  EXPECT_EQ(write_log_string({}, LogFormat::Jsonl), "");
  EXPECT_EQ(write_log_string({}, LogFormat::Tsv), "");
}

TEST(WriteLog, ThreeEventsThreeLinesBothFormats) {
  std::vector<Event> events = {make_search("e1", "a b", 10), make_search("e2", "c# & c++", 20),
                               make_search("e3", "x", 30)};
  events[1].referrer = events[0].url;
  events[2].event_type = EventType::Post;
  events[2].url = post_url("42");
  for (auto fmt : {LogFormat::Jsonl, LogFormat::Tsv}) {
    const auto text = write_log_string(events, fmt);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
    const auto back = parse_log_string(text, fmt, true);
    EXPECT_EQ(back.events, events);
  }
}

TEST(WriteLog, RoundTripOnGeneratedLogs) {
  SyntheticSpec spec;
  spec.user_count = 20;
  spec.seed = 99;
  const auto log = generate_synthetic(spec);
  ASSERT_FALSE(log.events.empty());
  for (auto fmt : {LogFormat::Jsonl, LogFormat::Tsv}) {
    const auto back = parse_log_string(write_log_string(log.events, fmt), fmt, true);
    EXPECT_EQ(back.events, log.events);
  }
}

TEST(WriteLog, RoundTripRandomQueries) {
  Rng rng(7);
  std::vector<Event> events;
  for (int i = 0; i < 300; ++i) {
    std::string q;
    const auto len = 1 + uniform_index(rng, 30);
    for (std::uint64_t k = 0; k < len; ++k) q.push_back(static_cast<char>(0x21 + uniform_index(rng, 0x7E - 0x21 + 1)));
    events.push_back(make_search("e" + std::to_string(i), q, static_cast<std::int64_t>(uniform_index(rng, 1ULL << 42))));
  }
  for (auto fmt : {LogFormat::Jsonl, LogFormat::Tsv}) {
    EXPECT_EQ(parse_log_string(write_log_string(events, fmt), fmt, true).events, events);
  }
}

}  // namespace
}  // namespace sequer
