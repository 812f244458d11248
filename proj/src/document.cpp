#include "origami/document.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace origami {

bool Document::operator==(const Document& other) const {
  if (kind() != other.kind()) return false;
  switch (kind()) {
    case Kind::Null:
      return true;
    case Kind::Bool:
      return as_bool() == other.as_bool();
    case Kind::Int:
      return as_int() == other.as_int();
    case Kind::Float:
      return std::bit_cast<uint64_t>(as_float()) == std::bit_cast<uint64_t>(other.as_float());
    case Kind::Str:
      return as_str() == other.as_str();
    case Kind::Array: {
      const auto& a = as_array();
      const auto& b = other.as_array();
      if (a.size() != b.size()) return false;
      for (size_t i = 0; i < a.size(); ++i)
        if (!(a[i] == b[i])) return false;
      return true;
    }
    case Kind::Object: {
      const auto& a = as_object();
      const auto& b = other.as_object();
      if (a.size() != b.size()) return false;
      for (size_t i = 0; i < a.size(); ++i)
        if (a[i].first != b[i].first || !(a[i].second == b[i].second)) return false;
      return true;
    }
  }
  return false;
}

const Document* Document::find(std::string_view key) const {
  if (!is_object()) return nullptr;
  for (const auto& [k, v] : as_object())
    if (k == key) return &v;
  return nullptr;
}

namespace {

// SAX handler building a Document tree; rejects duplicate keys and integers
// outside the signed 64-bit range.
class DocumentSax {
 public:
  std::string error;
  size_t error_offset = 0;

  Document take() { return std::move(root_); }

  bool null() { return emplace(Document(nullptr)); }
  bool boolean(bool b) { return emplace(Document(b)); }
  bool number_integer(int64_t i) { return emplace(Document(i)); }
  bool number_unsigned(uint64_t u) {
    if (u > static_cast<uint64_t>(std::numeric_limits<int64_t>::max())) {
      error = "integer out of signed 64-bit range";
      return false;
    }
    return emplace(Document(static_cast<int64_t>(u)));
  }
  bool number_float(double f, const std::string&) {
    if (!std::isfinite(f)) {
      error = "non-finite number";
      return false;
    }
    return emplace(Document(f));
  }
  bool string(std::string& s) { return emplace(Document(s)); }
  bool binary(std::vector<uint8_t>&) {
    error = "binary values are not JSON";
    return false;
  }
  bool start_object(size_t) {
    stack_.push_back(Frame{Document(Document::Object{}), {}});
    return true;
  }
  bool key(std::string& k) {
    auto& obj = stack_.back().value.as_object();
    for (const auto& [existing, _] : obj) {
      if (existing == k) {
        error = "duplicate key \"" + k + "\"";
        return false;
      }
    }
    stack_.back().pending_key = k;
    obj.emplace_back(std::move(k), Document());
    return true;
  }
  bool end_object() { return pop(); }
  bool start_array(size_t) {
    stack_.push_back(Frame{Document(Document::Array{}), {}});
    return true;
  }
  bool end_array() { return pop(); }
  bool parse_error(size_t position, const std::string&, const nlohmann::json::exception& ex) {
    if (error.empty()) error = ex.what();
    error_offset = position;
    return false;
  }

 private:
  struct Frame {
    Document value;
    std::string pending_key;
  };

  bool emplace(Document v) {
    if (stack_.empty()) {
      root_ = std::move(v);
      return true;
    }
    Frame& top = stack_.back();
    if (top.value.is_array()) {
      top.value.as_array().push_back(std::move(v));
    } else {
      top.value.as_object().back().second = std::move(v);
    }
    return true;
  }

  bool pop() {
    Document done = std::move(stack_.back().value);
    stack_.pop_back();
    return emplace(std::move(done));
  }

  Document root_;
  std::vector<Frame> stack_;
};

}  // namespace

Document parse_json(std::string_view text) {
  DocumentSax sax;
  const bool ok = nlohmann::json::sax_parse(text, &sax, nlohmann::json::input_format_t::json);
  if (!ok) {
    if (sax.error.empty()) sax.error = "invalid JSON";
    throw ParseError(sax.error, sax.error_offset);
  }
  return sax.take();
}

std::string canonical_float(double value) {
  if (!std::isfinite(value)) throw std::invalid_argument("non-finite float is not JSON-representable");
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  std::string s(buf, ptr);
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

std::string escape_json_string(std::string_view s) {
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(s.size() + 2);
  for (unsigned char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (c < 0x20) {
          out += "\\u00";
          out += hex[c >> 4];
          out += hex[c & 0xf];
        } else {
          out += static_cast<char>(c);
        }
    }
  }
  return out;
}

namespace {

void write_doc(const Document& doc, std::string& out) {
  switch (doc.kind()) {
    case Document::Kind::Null:
      out += "null";
      break;
    case Document::Kind::Bool:
      out += doc.as_bool() ? "true" : "false";
      break;
    case Document::Kind::Int:
      out += std::to_string(doc.as_int());
      break;
    case Document::Kind::Float:
      out += canonical_float(doc.as_float());
      break;
    case Document::Kind::Str:
      out += '"';
      out += escape_json_string(doc.as_str());
      out += '"';
      break;
    case Document::Kind::Array: {
      out += '[';
      const auto& arr = doc.as_array();
      for (size_t i = 0; i < arr.size(); ++i) {
        if (i) out += ", ";
        write_doc(arr[i], out);
      }
      out += ']';
      break;
    }
    case Document::Kind::Object: {
      out += '{';
      const auto& obj = doc.as_object();
      for (size_t i = 0; i < obj.size(); ++i) {
        if (i) out += ", ";
        out += '"';
        out += escape_json_string(obj[i].first);
        out += "\": ";
        write_doc(obj[i].second, out);
      }
      out += '}';
      break;
    }
  }
}

bool is_blank(const std::string& line) {
  for (char c : line)
    if (c != ' ' && c != '\t' && c != '\r') return false;
  return true;
}

}  // namespace

std::string serialize_json(const Document& doc) {
  std::string out;
  write_doc(doc, out);
  return out;
}

JsonlResult load_jsonl(const std::string& path, const JsonlOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  JsonlResult result;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) continue;
    try {
      Document doc = parse_json(line);
      if (options.require_objects && !doc.is_object())
        throw ParseError("top-level value is not an object", 0, line_no);
      result.docs.push_back(std::move(doc));
      result.line_numbers.push_back(line_no);
    } catch (const ParseError& e) {
      std::string msg = path + ":" + std::to_string(line_no) + ": " + e.what();
      if (!options.skip_invalid) throw ParseError(msg, e.byte_offset, line_no);
      result.warnings.push_back(std::move(msg));
    }
  }
  return result;
}

void save_jsonl(const std::string& path, const std::vector<Document>& docs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path);
  for (const auto& d : docs) out << serialize_json(d) << '\n';
}

}  // namespace origami
