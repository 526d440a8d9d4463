#include <cstdlib>
#include <set>

#include "doctest.h"
#include "its/error.hpp"
#include "its/prompt_template.hpp"
#include "its/random.hpp"
#include "its/strategy.hpp"
#include "its/util.hpp"
#include "support.hpp"

using namespace its;

TEST_CASE("sha256 matches published test vectors") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("utf8 validation") {
  CHECK(is_valid_utf8("plain ascii"));
  CHECK(is_valid_utf8("caf\xc3\xa9"));
  CHECK(is_valid_utf8("\xe2\x82\xac"));
  CHECK(is_valid_utf8("\xf0\x9f\x98\x80"));
  CHECK_FALSE(is_valid_utf8("\xc3"));             // truncated
  CHECK_FALSE(is_valid_utf8("\xe2\x82"));         // truncated
  CHECK_FALSE(is_valid_utf8("\xc0\xaf"));         // overlong
  CHECK_FALSE(is_valid_utf8("\xed\xa0\x80"));     // surrogate
  CHECK_FALSE(is_valid_utf8("\xf4\x90\x80\x80"));  // above U+10FFFF
  CHECK_FALSE(is_valid_utf8("\xff"));
}

TEST_CASE("string helpers") {
  CHECK(trim("  a b \n") == "a b");
  CHECK(to_lower_ascii("AbC") == "abc");
  CHECK(collapse_whitespace("  a \t\n b  c ") == "a b c");
  const auto lines = split_lines("a\r\nb\n\nc");
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "a");
  CHECK(lines[2].empty());
  CHECK(lines[3] == "c");
}

TEST_CASE("percent rounding agrees with an independent integer oracle") {
  CHECK(percent_basis_points(23, 30) == 7667);
  CHECK(percent_basis_points(0, 30) == 0);
  CHECK(percent_basis_points(474, 500) == 9480);
  CHECK(format_basis_points(7667) == "76.67");
  CHECK(format_basis_points(0) == "0.00");
  CHECK(format_basis_points(10000) == "100.00");
  CHECK(format_basis_points(705) == "7.05");
  CHECK(format_fraction3(24, 30) == "0.800");
  CHECK(format_fraction3(22, 30) == "0.733");
  CHECK(format_fraction3(471, 500) == "0.942");
  CHECK(percent_basis_points(1, 32) == 313);  // 3.125 rounds half up

  for (std::int64_t den = 1; den <= 600; ++den) {
    for (std::int64_t num = 0; num <= den; ++num) {
      const auto q = num * 10000 / den;
      const auto r = num * 10000 % den;
      const auto expected = q + (2 * r >= den ? 1 : 0);
      REQUIRE(percent_basis_points(num, den) == expected);
    }
  }
}

TEST_CASE("timestamps honor SOURCE_DATE_EPOCH") {
  setenv("SOURCE_DATE_EPOCH", "86400", 1);
  CHECK(utc_timestamp() == "1970-01-02T00:00:00Z");
  unsetenv("SOURCE_DATE_EPOCH");
  CHECK(utc_timestamp().size() == 20);
}

TEST_CASE("atomic write replaces content and leaves no temporary") {
  testing::TempDir dir;
  const auto p = dir / "sub/file.txt";
  write_file_atomic(p, "one");
  write_file_atomic(p, "two");
  CHECK(read_file(p) == "two");
  CHECK_FALSE(std::filesystem::exists(dir / "sub/file.txt.tmp"));
  CHECK_THROWS_AS(read_file(dir / "missing"), Error);
}

TEST_CASE("strategy tags, names and order") {
  CHECK(tag(Strategy::kNone) == "N");
  CHECK(tag(Strategy::kSimilar) == "S");
  CHECK(tag(Strategy::kDissimilar) == "D");
  CHECK(tag(Strategy::kRandom) == "R");
  CHECK(parse_strategy("s") == Strategy::kSimilar);
  CHECK(parse_strategy("persona-random") == Strategy::kRandom);
  CHECK_FALSE(parse_strategy("X").has_value());
  CHECK_THROWS_AS(strategy_from_string("bogus"), Error);
  std::vector<std::string> order;
  for (auto s : kStrategyOrder) order.emplace_back(tag(s));
  CHECK(order == std::vector<std::string>{"N", "R", "S", "D"});
  for (int i = 0; i < 4; ++i) CHECK(order_rank(kStrategyOrder[i]) == i);
}

TEST_CASE("error codes map to exit statuses") {
  CHECK(exit_status(ErrorCode::kUsage) == 1);
  CHECK(exit_status(ErrorCode::kConfig) == 1);
  CHECK(exit_status(ErrorCode::kTransport) == 2);
  CHECK(exit_status(ErrorCode::kParse) == 2);
  CHECK(to_string(ErrorCode::kHttpStatus).size() > 0);
}

TEST_CASE("bounded draws stay in range and are roughly uniform") {
  std::mt19937_64 rng(123);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto v = bounded_draw(rng, 7);
    REQUIRE(v < 7);
    ++counts[v];
  }
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
  CHECK(bounded_draw(rng, 1) == 0);
}

TEST_CASE("keyed seeds are stable and key-sensitive") {
  CHECK(keyed_seed(1, "a") == keyed_seed(1, "a"));
  CHECK(keyed_seed(1, "a") != keyed_seed(2, "a"));
  CHECK(keyed_seed(1, "a") != keyed_seed(1, "b"));
  // "1" + "2a" and "12" + "a" must not collide.
  CHECK(keyed_seed(1, "2a") != keyed_seed(12, "a"));
}

TEST_CASE("template rendering is single pass") {
  CHECK(render_template("You are {persona}.\n\n{query}", {{"persona", "a chef"}, {"query", "1+1?"}}) ==
        "You are a chef.\n\n1+1?");
  // Substituted text is not scanned again.
  CHECK(render_template("{a}", {{"a", "{b}"}, {"b", "x"}}) == "{b}");
  // Unknown placeholders and stray braces survive.
  CHECK(render_template("\\boxed{x} {other}", {{"a", "1"}}) == "\\boxed{x} {other}");
  CHECK(count_placeholder("{q} and {q}", "q") == 2);
  CHECK_THROWS_AS(require_placeholder_once("no slot", "query", "t"), Error);
  CHECK_THROWS_AS(require_placeholder_once("{query}{query}", "query", "t"), Error);
  CHECK_NOTHROW(require_placeholder_once("x {query} y", "query", "t"));
}

TEST_CASE("shipped template files match the built-in defaults") {
  const auto dir = testing::source_dir() / "templates";
  const auto loaded = PromptTemplateSet::load(dir);
  CHECK(loaded == PromptTemplateSet::defaults());
  CHECK(read_file(dir / "concat.txt") == std::string(kDefaultConcatTemplate) + "\n");
  CHECK_NOTHROW(loaded.validate());
  CHECK(loaded.hash() == PromptTemplateSet::defaults().hash());
  auto changed = loaded;
  changed.similar += " ";
  CHECK(changed.hash() != loaded.hash());
}

TEST_CASE("template set validation requires each placeholder") {
  auto t = PromptTemplateSet::defaults();
  t.random_domain = "List some domains.";
  CHECK_THROWS_AS(t.validate(), Error);
  t = PromptTemplateSet::defaults();
  t.similar = "Describe a persona.";
  CHECK_THROWS_AS(t.validate(), Error);
}

TEST_CASE("loading templates from a directory missing a file names the file") {
  testing::TempDir dir;
  write_file_atomic(dir / "similar.txt", "{query}");
  try {
    PromptTemplateSet::load(dir.path());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("dissimilar.txt") != std::string::npos);
  }
}
