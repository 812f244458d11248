#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace origami {

// In-memory JSON value. Object key order is preserved on ingestion so that
// shuffling is always an explicit, seeded transformation.
class Document {
 public:
  using Array = std::vector<Document>;
  using Object = std::vector<std::pair<std::string, Document>>;
  enum class Kind { Null, Bool, Int, Float, Str, Array, Object };

  Document() = default;
  Document(std::nullptr_t) {}
  Document(bool b) : value_(b) {}
  Document(int64_t i) : value_(i) {}
  Document(int i) : value_(static_cast<int64_t>(i)) {}
  Document(double f) : value_(f) {}
  Document(const char* s) : value_(std::string(s)) {}
  Document(std::string s) : value_(std::move(s)) {}
  Document(Array a) : value_(std::move(a)) {}
  Document(Object o) : value_(std::move(o)) {}

  Kind kind() const { return static_cast<Kind>(value_.index()); }
  bool is_null() const { return kind() == Kind::Null; }
  bool is_bool() const { return kind() == Kind::Bool; }
  bool is_int() const { return kind() == Kind::Int; }
  bool is_float() const { return kind() == Kind::Float; }
  bool is_str() const { return kind() == Kind::Str; }
  bool is_array() const { return kind() == Kind::Array; }
  bool is_object() const { return kind() == Kind::Object; }
  bool is_primitive() const { return !is_array() && !is_object(); }

  bool as_bool() const { return std::get<bool>(value_); }
  int64_t as_int() const { return std::get<int64_t>(value_); }
  double as_float() const { return std::get<double>(value_); }
  const std::string& as_str() const { return std::get<std::string>(value_); }
  const Array& as_array() const { return std::get<Array>(value_); }
  Array& as_array() { return std::get<Array>(value_); }
  const Object& as_object() const { return std::get<Object>(value_); }
  Object& as_object() { return std::get<Object>(value_); }

  // Structural equality, including key order. Floats compare by bit pattern,
  // which coincides with equality of their canonical decimal forms.
  bool operator==(const Document& other) const;
  bool operator!=(const Document& other) const { return !(*this == other); }

  // Pointer to the value under `key` at the top level, or nullptr.
  const Document* find(std::string_view key) const;

 private:
  std::variant<std::monostate, bool, int64_t, double, std::string, Array, Object> value_;
};

// Raised on malformed JSON input; `byte_offset` is 0 when the position is not
// attributable (e.g. duplicate keys detected mid-parse).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, size_t byte_offset, size_t line = 0)
      : std::runtime_error(msg), byte_offset(byte_offset), line(line) {}
  size_t byte_offset;
  size_t line;
};

// Parses one RFC 8259 JSON text. Duplicate keys within an object are rejected.
// A non-object top level parses fine; ingestion callers enforce objects.
Document parse_json(std::string_view text);

// Shortest round-trip decimal form; integral values keep a ".0" marker so the
// int/float distinction survives serialization.
std::string canonical_float(double value);

// Deterministic serialization: no insignificant whitespace except one space
// after ':' and ','. Round-trips through parse_json including key order.
std::string serialize_json(const Document& doc);

std::string escape_json_string(std::string_view s);

struct JsonlOptions {
  bool skip_invalid = false;   // false: fail fast on a bad line
  bool require_objects = true; // top-level non-objects are rejected
};

struct JsonlResult {
  std::vector<Document> docs;
  std::vector<size_t> line_numbers;        // 1-based source line per document
  std::vector<std::string> warnings;       // populated in skip mode
};

// One JSON object per line, UTF-8, blank lines ignored.
JsonlResult load_jsonl(const std::string& path, const JsonlOptions& options = {});

void save_jsonl(const std::string& path, const std::vector<Document>& docs);

}  // namespace origami
