// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "support.hpp"
#include "usrn/errors.hpp"
#include "usrn/text_config.hpp"

using namespace usrn;

TEST_CASE("sections, comments and value types") {
  const TextTable t = parse_text_config(R"(
top = 1
[train]
steps = 3_000   # underscores allowed
lr = 5e-3
name = "a \"quoted\" name"
flag = true
list = [1, 2.5,
        3]
nested = [[0, 0.1], [1, 0.9]]
)");
  CHECK(t.at("top").as_integer() == 1);
  CHECK(t.at("train.steps").as_integer() == 3000);
  CHECK(t.at("train.lr").as_number() == 5e-3);
  CHECK(t.at("train.name").as_string() == "a \"quoted\" name");
  CHECK(t.at("train.flag").as_bool());
  CHECK(t.at("train.list").as_number_list() == std::vector<double>{1, 2.5, 3});
  CHECK(t.at("train.nested").as_array().size() == 2);
  CHECK(t.at("train.nested").as_array()[1].as_number_list() == std::vector<double>{1, 0.9});
}

TEST_CASE("malformed documents report the line") {
  try {
    parse_text_config("a = 1\nb = [1, 2\n");
    FAIL("expected a FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_text_config("a = 1\na = 2\n"), FormatError);
  CHECK_THROWS_AS(parse_text_config("just words\n"), FormatError);
  CHECK_THROWS_AS(parse_text_config("x = \"unterminated\n"), FormatError);
  CHECK_THROWS_AS(parse_text_value("1 2"), FormatError);
}

TEST_CASE("integers are numbers but not vice versa") {
  CHECK(parse_text_value("4").as_number() == 4.0);
  CHECK_THROWS_AS(parse_text_value("4.5").as_integer(), ConfigError);
  CHECK_THROWS_AS(parse_text_value("\"x\"").as_number(), ConfigError);
}

TEST_CASE("format and parse round trip") {
  testing::Gen g(9);
  for (int i = 0; i < 200; ++i) {
    const double d = g.real(-1e3, 1e3) * std::pow(10.0, g.integer(-12, 12));
    const TextValue v{TextValue::Storage(d)};
    CHECK(parse_text_value(format_text_value(v)).as_number() == d);
  }
  const TextValue arr = parse_text_value("[\"a\", [1, 2], false]");
  CHECK(format_text_value(parse_text_value(format_text_value(arr))) == format_text_value(arr));
}

TEST_CASE("missing file") {
  CHECK_THROWS_AS(read_text_config("/nonexistent/usrn.toml"), FileNotFound);
}
