#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "daisen/jsonl.hpp"
#include "fixtures.hpp"

using namespace daisen;
using fixtures::make;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace

TEST(Jsonl, EncodeUsesFixedKeyOrder) {
  const auto q = fixtures::quartet();
  EXPECT_EQ(jsonl::encode(q[0]),
            R"({"id":"ro","parent_id":null,"kind":"Request Out","what":"Read Memory","where":"CU0","start":0.0,"end":10.0})");
  Task t = q[1];
  t.details = {{"wf", "3"}, {"op", "ADD"}};
  EXPECT_EQ(
      jsonl::encode(t),
      R"({"id":"ri","parent_id":"ro","kind":"Request In","what":"Read Memory","where":"L1_0","start":2.0,"end":8.0,"detail":{"op":"ADD","wf":"3"}})");
}

TEST(Jsonl, EncodeRejectsOpenTask) {
  Task t = make("a", {}, "K", "R", "L", 0, kOpenEnd);
  try {
    jsonl::encode(t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBadParam);
  }
}

TEST(Jsonl, DecodeAcceptsOmittedParent) {
  Task t = jsonl::decode(R"({"id":"k","kind":"Kernel","what":"Run","where":"GPU","start":0,"end":1.5})");
  EXPECT_EQ(t.id, "k");
  EXPECT_FALSE(t.parent_id.has_value());
  EXPECT_EQ(t.category, "Kernel");
  EXPECT_EQ(t.action, "Run");
  EXPECT_EQ(t.location, "GPU");
  EXPECT_EQ(t.end, 1.5);
}

TEST(Jsonl, UnknownKeysWarn) {
  std::vector<std::string> warnings;
  Task t = jsonl::decode(R"({"id":"k","kind":"K","what":"R","where":"G","start":0,"end":1,"color":"red"})",
                         &warnings);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("color"), std::string::npos);
  EXPECT_EQ(t.id, "k");
}

TEST(Jsonl, NonTextDetailKeptAsJsonText) {
  std::vector<std::string> warnings;
  Task t = jsonl::decode(R"({"id":"k","kind":"K","what":"R","where":"G","start":0,"end":1,"detail":{"n":3,"s":"x"}})",
                         &warnings);
  EXPECT_EQ(t.details.at("n"), "3");
  EXPECT_EQ(t.details.at("s"), "x");
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(Jsonl, MalformedInputIsParseError) {
  for (const char* bad : {"{", "[]", R"({"id":"a","start":"0","end":1})", R"({"id":"a","start":0})",
                          R"({"id":5,"start":0,"end":1})", R"({"id":"a","start":0,"end":1,"detail":[1]})"}) {
    try {
      jsonl::decode(bad);
      FAIL() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kParse) << bad;
    }
  }
}

TEST(Jsonl, RoundTripPreservesDoublesExactly) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1e-3);
  for (int i = 0; i < 2000; ++i) {
    double a = u(rng), b = a + u(rng);
    if (i % 7 == 0) b = a;
    Task t = make("id" + std::to_string(i), i % 3 ? std::optional<std::string>("p") : std::nullopt, "Cat \"q\"",
                  "Act\\n", "Loc\té", a, b);
    if (i % 2) t.details["k" + std::to_string(i)] = "v\n";
    EXPECT_EQ(jsonl::decode(jsonl::encode(t)), t);
  }
  const Task tiny = make("x", {}, "K", "R", "L", 1e-10, 0.1 + 0.2);
  EXPECT_EQ(jsonl::decode(jsonl::encode(tiny)), tiny);
}

TEST(Jsonl, ReaderReportsByteRanges) {
  fixtures::TempDir dir;
  const auto path = dir / "t.jsonl";
  const std::string l1 = R"({"id":"a","kind":"K","what":"R","where":"G","start":0,"end":1})";
  const std::string l2 = R"({"id":"b","parent_id":"a","kind":"K","what":"R","where":"G","start":0,"end":1})";
  const std::string text = l1 + "\r\n\n   \n" + l2 + "\n";
  spit(path, text);
  jsonl::Reader reader(path.string());
  Task t;
  std::uint64_t off = 0;
  std::uint32_t len = 0;
  ASSERT_TRUE(reader.next(t, &off, nullptr, &len));
  EXPECT_EQ(t.id, "a");
  EXPECT_EQ(text.substr(off, len), l1);
  ASSERT_TRUE(reader.next(t, &off, nullptr, &len));
  EXPECT_EQ(t.id, "b");
  EXPECT_EQ(text.substr(off, len), l2);
  EXPECT_FALSE(reader.next(t));
}

TEST(Jsonl, ReaderNamesFileAndLineOnError) {
  fixtures::TempDir dir;
  const auto path = dir / "bad.jsonl";
  spit(path, R"({"id":"a","kind":"K","what":"R","where":"G","start":0,"end":1})"
             "\nnot json\n");
  try {
    jsonl::read_file(path.string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
    EXPECT_NE(e.message().find("bad.jsonl:2"), std::string::npos);
  }
}

TEST(Jsonl, MissingFileIsIoError) {
  try {
    jsonl::read_file("/nonexistent/x.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
  }
}

TEST(Jsonl, FileRoundTrip) {
  fixtures::TempDir dir;
  std::mt19937_64 rng(1);
  auto trace = fixtures::random_trace(rng, 300);
  trace[5].details = {{"op", "ADD"}};
  const auto path = (dir / "r.jsonl").string();
  jsonl::write_file(path, trace);
  EXPECT_EQ(jsonl::read_file(path), trace);
  // one line per record, newline terminated
  const std::string text = slurp(path);
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), trace.size());
}
