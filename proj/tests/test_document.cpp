#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"
#include "origami/document.hpp"

using namespace origami;
using origami::testing::random_document;

TEST_CASE("primitive parsing") {
  CHECK(parse_json("null") == Document(nullptr));
  CHECK(parse_json("true") == Document(true));
  CHECK(parse_json("false") == Document(false));
  CHECK(parse_json("42") == Document(int64_t{42}));
  CHECK(parse_json("-7") == Document(int64_t{-7}));
  CHECK(parse_json("2.5") == Document(2.5));
  CHECK(parse_json("-0.0").as_float() == 0.0);
  CHECK(std::signbit(parse_json("-0.0").as_float()));
  CHECK(parse_json("1e3") == Document(1000.0));
  CHECK(parse_json("\"hi\"") == Document("hi"));
  CHECK(parse_json("  {\"a\": 1}  ").is_object());
}

TEST_CASE("int64 boundaries stay integers, overflow becomes float") {
  CHECK(parse_json("9223372036854775807") == Document(std::numeric_limits<int64_t>::max()));
  CHECK(parse_json("-9223372036854775808") == Document(std::numeric_limits<int64_t>::min()));
  CHECK(parse_json("9223372036854775808").is_float());
  CHECK(parse_json("9223372036854775808").as_float() == 9223372036854775808.0);
}

TEST_CASE("string escapes and unicode") {
  CHECK(parse_json(R"("a\nb")") == Document("a\nb"));
  CHECK(parse_json(R"("A")") == Document("A"));
  CHECK(parse_json(R"("😀")") == Document("\xf0\x9f\x98\x80"));
  CHECK(parse_json(R"("\\\"\/\b\f\t\r")") == Document("\\\"/\b\f\t\r"));
  CHECK_THROWS_AS(parse_json(R"("\ud83d")"), ParseError);    // lone high surrogate
  CHECK_THROWS_AS(parse_json("\"raw\nnewline\""), ParseError);
}

TEST_CASE("parse errors carry position") {
  try {
    parse_json("{\"a\": 1,\n \"a\": 2}");
    FAIL("duplicate key accepted");
  } catch (const ParseError& e) {
    CHECK(e.line == 2);
  }
  CHECK_THROWS_AS(parse_json(""), ParseError);
  CHECK_THROWS_AS(parse_json("{"), ParseError);
  CHECK_THROWS_AS(parse_json("{\"a\": 1} trailing"), ParseError);
  CHECK_THROWS_AS(parse_json("[1, 2,]"), ParseError);
  CHECK_THROWS_AS(parse_json("01"), ParseError);
  CHECK_THROWS_AS(parse_json("+1"), ParseError);
  CHECK_THROWS_AS(parse_json("NaN"), ParseError);
  CHECK_THROWS_AS(parse_json("Infinity"), ParseError);
}

TEST_CASE("serialization golden forms") {
  CHECK(serialize_json(parse_json(R"({"a": 1, "b": [true, null]})")) ==
        R"({"a": 1, "b": [true, null]})");
  CHECK(serialize_json(Document(1.0)) == "1.0");
  CHECK(serialize_json(Document(-0.0)) == "-0.0");
  CHECK(serialize_json(Document(0.1)) == "0.1");
  CHECK(serialize_json(Document("a\x01b")) == R"("ab")");
  CHECK(serialize_json(Document(Document::Array{})) == "[]");
  CHECK(serialize_json(Document(Document::Object{})) == "{}");
}

TEST_CASE("canonical_float is shortest round trip") {
  for (const double v : {0.1, 1.0 / 3.0, 1e-7, 6.02214076e23, 5e-324, 1.7976931348623157e308,
                         -0.0, 2.0, 1234567890.123}) {
    const Document back = parse_json(canonical_float(v));
    REQUIRE(back.is_float());
    const double got = back.as_float();
    CHECK(std::memcmp(&got, &v, sizeof v) == 0);
  }
  CHECK_THROWS_AS(canonical_float(std::numeric_limits<double>::infinity()), std::invalid_argument);
  CHECK_THROWS_AS(canonical_float(std::nan("")), std::invalid_argument);
}

TEST_CASE("equality distinguishes kinds and float bits") {
  CHECK(Document(int64_t{1}) != Document(1.0));
  CHECK(Document(0.0) != Document(-0.0));
  CHECK(Document(nullptr) != Document(false));
  CHECK(parse_json(R"({"a": 1, "b": 2})") != parse_json(R"({"b": 2, "a": 1})"));
}

TEST_CASE("find returns top-level values only") {
  const Document doc = parse_json(R"({"a": 1, "b": {"c": 2}})");
  REQUIRE(doc.find("a"));
  CHECK(*doc.find("a") == Document(int64_t{1}));
  CHECK(doc.find("c") == nullptr);
  CHECK(doc.find("missing") == nullptr);
}

TEST_CASE("random documents round trip through a second JSON implementation") {
  Rng rng(20240817);
  for (int i = 0; i < 300; ++i) {
    const Document doc = random_document(rng, 6, 6);
    const std::string mine = serialize_json(doc);
    const nlohmann::ordered_json theirs = nlohmann::ordered_json::parse(mine);
    CHECK(parse_json(theirs.dump()) == doc);
    CHECK(parse_json(mine) == doc);
  }
}

TEST_CASE("jsonl loading") {
  const std::string path = std::filesystem::temp_directory_path() / "doc_jsonl_test.jsonl";
  {
    std::ofstream out(path, std::ios::binary);
    out << R"({"a": 1})" << "\n\n"           // blank lines skipped
        << R"({"b": 2})" << "\n"
        << "[1, 2]\n"                         // not an object
        << "{broken\n";
  }

  JsonlOptions skip;
  skip.skip_invalid = true;
  const JsonlResult r = load_jsonl(path, skip);
  CHECK(r.docs.size() == 2);
  CHECK(r.line_numbers == std::vector<size_t>{1, 3});
  CHECK(r.warnings.size() == 2);

  CHECK_THROWS_AS(load_jsonl(path, JsonlOptions{}), ParseError);

  JsonlOptions any_top;
  any_top.skip_invalid = true;
  any_top.require_objects = false;
  CHECK(load_jsonl(path, any_top).docs.size() == 3);

  std::filesystem::remove(path);
}

TEST_CASE("jsonl save is byte-stable and reloads") {
  Rng rng(7);
  std::vector<Document> docs;
  for (int i = 0; i < 20; ++i) {
    Document d = random_document(rng, 4, 4);
    if (!d.is_object()) d = parse_json(R"({"wrap": )" + serialize_json(d) + "}");
    docs.push_back(std::move(d));
  }
  const std::string p1 = std::filesystem::temp_directory_path() / "doc_save1.jsonl";
  const std::string p2 = std::filesystem::temp_directory_path() / "doc_save2.jsonl";
  save_jsonl(p1, docs);
  save_jsonl(p2, docs);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  const JsonlResult r = load_jsonl(p1, JsonlOptions{});
  REQUIRE(r.docs.size() == docs.size());
  for (size_t i = 0; i < docs.size(); ++i) CHECK(r.docs[i] == docs[i]);
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}
