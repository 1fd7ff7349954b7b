#include <gtest/gtest.h>

#include <fstream>

#include "daisen/config.hpp"
#include "fixtures.hpp"

using namespace daisen;

TEST(Config, SectionsKeysAndValues) {
  auto e = config::parse(R"(
# comment
top = 1_000
name = "a # not a comment"   # trailing
[kernel]
work_groups = 64
flag = true
"quoted.key" = 2.5e-3
)");
  ASSERT_EQ(e.size(), 5u);
  EXPECT_EQ(e[0].key, "top");
  EXPECT_EQ(config::as_number(e[0]), 1000);
  EXPECT_EQ(std::get<std::string>(e[1].value), "a # not a comment");
  EXPECT_EQ(e[2].section, "kernel");
  EXPECT_EQ(e[2].line, 6);
  EXPECT_EQ(std::get<bool>(e[3].value), true);
  EXPECT_EQ(e[4].key, "quoted.key");
  EXPECT_DOUBLE_EQ(config::as_number(e[4]), 2.5e-3);
}

TEST(Config, RegexKeysKeepBackslashes) {
  auto e = config::parse(R"("L1_\\d+:BufferPressure" = 1.0)");
  ASSERT_EQ(e.size(), 1u);
  EXPECT_EQ(e[0].key, "L1_\\d+:BufferPressure");
}

TEST(Config, ErrorsNameTheLine) {
  for (const char* bad : {"a = ", "[oops", "x = \"open", "= 3", "x = 1 2", "x"}) {
    try {
      config::parse(std::string("\n") + bad);
      FAIL() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kConfig) << bad;
      EXPECT_NE(e.message().find("line 2"), std::string::npos) << e.message();
    }
  }
}

TEST(Config, NonNumberWhereNumberExpected) {
  auto e = config::parse("x = \"1\"");
  EXPECT_THROW(config::as_number(e[0]), Error);
}

TEST(Config, MissingFileIsIo) {
  try {
    config::parse_file("/nonexistent.toml");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
  }
}

TEST(Config, ShippedFilesParse) {
  EXPECT_NO_THROW(config::parse_file(std::string(DAISEN_CONFIG_DIR) + "/expectations.toml"));
  EXPECT_NO_THROW(config::parse_file(std::string(DAISEN_CONFIG_DIR) + "/sim.toml"));
}
