#include "origami/tokenizer.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace origami {

namespace {

constexpr uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr uint64_t kFnvPrime = 1099511628211ULL;

uint64_t fnv1a64(std::string_view s, uint64_t h = kFnvOffset) {
  for (unsigned char c : s) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

void append_utf8(std::string& out, uint32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xc0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3f));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xe0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
    out += static_cast<char>(0x80 | (cp & 0x3f));
  } else {
    out += static_cast<char>(0xf0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3f));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
    out += static_cast<char>(0x80 | (cp & 0x3f));
  }
}

uint32_t parse_hex4(std::string_view s, size_t pos) {
  if (pos + 4 > s.size()) throw std::runtime_error("truncated \\u escape");
  uint32_t v = 0;
  for (size_t i = 0; i < 4; ++i) {
    char c = s[pos + i];
    v <<= 4;
    if (c >= '0' && c <= '9') v |= static_cast<uint32_t>(c - '0');
    else if (c >= 'a' && c <= 'f') v |= static_cast<uint32_t>(c - 'a' + 10);
    else if (c >= 'A' && c <= 'F') v |= static_cast<uint32_t>(c - 'A' + 10);
    else throw std::runtime_error("invalid \\u escape");
  }
  return v;
}

// Inverse of escape_json_string, including surrogate pairs.
std::string unescape_json_string(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c != '\\') {
      out += c;
      continue;
    }
    if (++i >= s.size()) throw std::runtime_error("dangling escape");
    switch (s[i]) {
      case '"': out += '"'; break;
      case '\\': out += '\\'; break;
      case '/': out += '/'; break;
      case 'b': out += '\b'; break;
      case 'f': out += '\f'; break;
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      case 't': out += '\t'; break;
      case 'u': {
        uint32_t cp = parse_hex4(s, i + 1);
        i += 4;
        if (cp >= 0xd800 && cp <= 0xdbff && i + 6 < s.size() && s[i + 1] == '\\' && s[i + 2] == 'u') {
          uint32_t lo = parse_hex4(s, i + 3);
          if (lo >= 0xdc00 && lo <= 0xdfff) {
            cp = 0x10000 + ((cp - 0xd800) << 10) + (lo - 0xdc00);
            i += 6;
          }
        }
        append_utf8(out, cp);
        break;
      }
      default:
        throw std::runtime_error("unknown escape sequence");
    }
  }
  return out;
}

const char* kFixedGrammarNames[Vocabulary::kNumFixedGrammar] = {
    "START", "END", "OBJ_START", "OBJ_END", "OBJ", "UNKNOWN", "PAD"};

}  // namespace

std::string Token::to_string() const {
  switch (kind) {
    case Kind::Start:
    case Kind::End:
    case Kind::ObjStart:
    case Kind::ObjEnd:
    case Kind::Obj:
    case Kind::Unknown:
    case Kind::Pad:
      return std::string("G:") + kFixedGrammarNames[static_cast<int>(kind)];
    case Kind::Array:
      return "G:ARRAY:" + std::to_string(array_length());
    case Kind::Key:
      return "K:" + escape_json_string(key_name());
    case Kind::Value:
      switch (payload.kind()) {
        case Document::Kind::Str: return "V:s:" + escape_json_string(payload.as_str());
        case Document::Kind::Int: return "V:i:" + std::to_string(payload.as_int());
        case Document::Kind::Float: return "V:f:" + canonical_float(payload.as_float());
        case Document::Kind::Bool: return payload.as_bool() ? "V:b:true" : "V:b:false";
        case Document::Kind::Null: return "V:null";
        default: throw std::logic_error("value token holds a container");
      }
  }
  throw std::logic_error("unreachable token kind");
}

size_t TokenHash::operator()(const Token& t) const {
  uint64_t h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&t.kind), 1));
  switch (t.kind) {
    case Token::Kind::Key:
      h = fnv1a64(t.key_name(), h);
      break;
    case Token::Kind::Array: {
      auto v = static_cast<uint64_t>(t.array_length());
      h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&v), sizeof(v)), h);
      break;
    }
    case Token::Kind::Value: {
      auto k = static_cast<uint8_t>(t.payload.kind());
      h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&k), 1), h);
      switch (t.payload.kind()) {
        case Document::Kind::Str:
          h = fnv1a64(t.payload.as_str(), h);
          break;
        case Document::Kind::Int: {
          auto v = static_cast<uint64_t>(t.payload.as_int());
          h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&v), sizeof(v)), h);
          break;
        }
        case Document::Kind::Float: {
          auto v = std::bit_cast<uint64_t>(t.payload.as_float());
          h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&v), sizeof(v)), h);
          break;
        }
        case Document::Kind::Bool: {
          char b = t.payload.as_bool() ? 1 : 0;
          h = fnv1a64(std::string_view(&b, 1), h);
          break;
        }
        default:
          break;
      }
      break;
    }
    default:
      break;
  }
  return static_cast<size_t>(h);
}

Vocabulary::Vocabulary() {
  const Token fixed[] = {Token::start(),   Token::end(), Token::obj_start(), Token::obj_end(),
                         Token::obj(),     Token::unknown(), Token::pad()};
  for (const Token& t : fixed) {
    index_.emplace(t, static_cast<int32_t>(tokens_.size()));
    tokens_.push_back(t);
    freq_.push_back(0);
  }
}

const Token& Vocabulary::token(int32_t id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<size_t>(id)];
}

int32_t Vocabulary::id_of(const Token& t) const {
  auto it = index_.find(t);
  return it == index_.end() ? -1 : it->second;
}

int32_t Vocabulary::add(const Token& t, int64_t count) {
  auto it = index_.find(t);
  if (it != index_.end()) {
    freq_[static_cast<size_t>(it->second)] += count;
    return it->second;
  }
  const auto id = static_cast<int32_t>(tokens_.size());
  index_.emplace(t, id);
  tokens_.push_back(t);
  freq_.push_back(count);
  return id;
}

std::string Vocabulary::to_text() const {
  std::string out;
  for (const Token& t : tokens_) {
    out += t.to_string();
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::from_text(const std::string& text) {
  Vocabulary vocab;
  vocab.tokens_.clear();
  vocab.freq_.clear();
  vocab.index_.clear();
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    Token t;
    if (line.rfind("G:ARRAY:", 0) == 0) {
      t = Token::array(std::stoll(line.substr(8)));
    } else if (line.rfind("G:", 0) == 0) {
      const std::string name = line.substr(2);
      int found = -1;
      for (int i = 0; i < kNumFixedGrammar; ++i)
        if (name == kFixedGrammarNames[i]) found = i;
      if (found < 0) throw std::runtime_error("vocabulary line " + std::to_string(line_no) + ": unknown grammar token " + name);
      t = Token{static_cast<Token::Kind>(found), {}};
    } else if (line.rfind("K:", 0) == 0) {
      t = Token::key(unescape_json_string(line.substr(2)));
    } else if (line.rfind("V:s:", 0) == 0) {
      t = Token::value(Document(unescape_json_string(line.substr(4))));
    } else if (line.rfind("V:i:", 0) == 0) {
      t = Token::value(Document(static_cast<int64_t>(std::stoll(line.substr(4)))));
    } else if (line.rfind("V:f:", 0) == 0) {
      double v = 0;
      const std::string body = line.substr(4);
      auto res = std::from_chars(body.data(), body.data() + body.size(), v);
      if (res.ec != std::errc{} || res.ptr != body.data() + body.size())
        throw std::runtime_error("vocabulary line " + std::to_string(line_no) + ": bad float");
      t = Token::value(Document(v));
    } else if (line == "V:b:true") {
      t = Token::value(Document(true));
    } else if (line == "V:b:false") {
      t = Token::value(Document(false));
    } else if (line == "V:null") {
      t = Token::value(Document(nullptr));
    } else {
      throw std::runtime_error("vocabulary line " + std::to_string(line_no) + ": unparseable entry");
    }
    if (vocab.index_.count(t))
      throw std::runtime_error("vocabulary line " + std::to_string(line_no) + ": duplicate token");
    vocab.index_.emplace(t, static_cast<int32_t>(vocab.tokens_.size()));
    vocab.tokens_.push_back(std::move(t));
    vocab.freq_.push_back(0);
  }
  for (int i = 0; i < kNumFixedGrammar; ++i) {
    if (vocab.size() <= i || !(vocab.tokens_[static_cast<size_t>(i)] == Token{static_cast<Token::Kind>(i), {}}))
      throw std::runtime_error("vocabulary file does not start with the seven fixed grammar tokens");
  }
  return vocab;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path);
  out << to_text();
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

uint64_t vocabulary_checksum(const Vocabulary& vocab) {
  return fnv1a64(vocab.to_text());
}

namespace {

void check_finite(const Document& primitive) {
  if (primitive.is_float() && !std::isfinite(primitive.as_float()))
    throw std::invalid_argument("non-finite float is not JSON-representable");
}

void emit_value(const Document& value, std::vector<Token>& out) {
  switch (value.kind()) {
    case Document::Kind::Object:
      out.push_back(Token::obj_start());
      for (const auto& [k, v] : value.as_object()) {
        out.push_back(Token::key(k));
        emit_value(v, out);
      }
      out.push_back(Token::obj_end());
      break;
    case Document::Kind::Array: {
      const auto& arr = value.as_array();
      out.push_back(Token::array(static_cast<int64_t>(arr.size())));
      for (const auto& el : arr) emit_value(el, out);
      break;
    }
    default:
      check_finite(value);
      out.push_back(Token::value(value));
  }
}

// Recursive-descent consumer; deliberately independent of the automaton so the
// two act as oracles for each other.
class TokenReader {
 public:
  explicit TokenReader(const std::vector<Token>& tokens) : tokens_(tokens) {}

  Document parse_document() {
    expect(Token::Kind::Start, "START");
    Document root{parse_object_body(Token::Kind::End)};
    // only trailing pads may follow
    while (pos_ < tokens_.size()) {
      if (tokens_[pos_].kind != Token::Kind::Pad) fail("trailing token after END");
      ++pos_;
    }
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw TokenSequenceError(msg, pos_); }

  const Token& peek() const {
    if (pos_ >= tokens_.size()) throw TokenSequenceError("unexpected end of sequence", pos_);
    return tokens_[pos_];
  }

  void expect(Token::Kind kind, const char* what) {
    if (peek().kind != kind) fail(std::string("expected ") + what);
    ++pos_;
  }

  Document::Object parse_object_body(Token::Kind closer) {
    Document::Object pairs;
    while (true) {
      const Token& t = peek();
      if (t.kind == closer) {
        ++pos_;
        return pairs;
      }
      if (t.kind != Token::Kind::Key) fail("expected key or object close");
      std::string name = t.key_name();
      ++pos_;
      pairs.emplace_back(std::move(name), parse_value());
    }
  }

  Document parse_value() {
    const Token& t = peek();
    switch (t.kind) {
      case Token::Kind::Value:
        ++pos_;
        return t.payload;
      case Token::Kind::Unknown:
        ++pos_;
        return Document(std::string("[UNKNOWN]"));
      case Token::Kind::ObjStart:
        ++pos_;
        return Document{parse_object_body(Token::Kind::ObjEnd)};
      case Token::Kind::Array: {
        const int64_t n = t.array_length();
        if (n < 0) fail("negative array length");
        ++pos_;
        Document::Array elements;
        elements.reserve(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) elements.push_back(parse_value());
        return Document{std::move(elements)};
      }
      default:
        fail("expected a value");
    }
  }

  const std::vector<Token>& tokens_;
  size_t pos_ = 0;
};

}  // namespace

std::vector<Token> tokenize(const Document& doc) {
  if (!doc.is_object()) throw std::invalid_argument("top-level document must be an object");
  std::vector<Token> out;
  out.push_back(Token::start());
  for (const auto& [k, v] : doc.as_object()) {
    out.push_back(Token::key(k));
    emit_value(v, out);
  }
  out.push_back(Token::end());
  return out;
}

Document detokenize(const std::vector<Token>& tokens) {
  return TokenReader(tokens).parse_document();
}

Vocabulary build_vocabulary(const std::vector<Document>& corpus, std::optional<int32_t> max_size) {
  if (corpus.empty()) throw std::invalid_argument("cannot build a vocabulary from an empty corpus");
  if (max_size && *max_size < Vocabulary::kNumFixedGrammar)
    throw std::invalid_argument("max_size must be at least 7");
  Vocabulary vocab;
  for (const Document& doc : corpus) {
    for (const Token& t : tokenize(doc)) {
      vocab.add(t);
      // Counter symbols live on the stack while an n-element array is
      // consumed; give them rows even when no shorter array occurs.
      if (t.is_array())
        for (int64_t r = t.array_length() - 1; r >= 1; --r) vocab.add(Token::array(r), 0);
    }
  }

  if (!max_size || vocab.size() <= *max_size) return vocab;

  // Retain the most frequent non-grammar-fixed tokens; ties keep the earlier
  // first occurrence (lower id).
  std::vector<int32_t> candidates;
  for (int32_t id = Vocabulary::kNumFixedGrammar; id < vocab.size(); ++id) candidates.push_back(id);
  std::stable_sort(candidates.begin(), candidates.end(), [&](int32_t a, int32_t b) {
    if (vocab.frequency(a) != vocab.frequency(b)) return vocab.frequency(a) > vocab.frequency(b);
    return a < b;
  });
  candidates.resize(static_cast<size_t>(*max_size - Vocabulary::kNumFixedGrammar));
  std::sort(candidates.begin(), candidates.end());

  Vocabulary truncated;
  for (int32_t id : candidates) truncated.add(vocab.token(id), vocab.frequency(id));
  return truncated;
}

std::vector<int32_t> encode(const std::vector<Token>& tokens, const Vocabulary& vocab,
                            size_t pad_to, bool allow_truncate) {
  if (tokens.size() > pad_to && !allow_truncate) throw OverlongSequenceError(tokens.size(), pad_to);
  const size_t count = std::min(tokens.size(), pad_to);
  std::vector<int32_t> ids;
  ids.reserve(pad_to);
  for (size_t i = 0; i < count; ++i) {
    int32_t id = vocab.id_of(tokens[i]);
    ids.push_back(id >= 0 ? id : Vocabulary::kUnknownId);
  }
  ids.resize(pad_to, Vocabulary::kPadId);
  return ids;
}

std::vector<Token> decode(const std::vector<int32_t>& ids, const Vocabulary& vocab) {
  std::vector<Token> tokens;
  tokens.reserve(ids.size());
  for (int32_t id : ids) tokens.push_back(vocab.token(id));
  return tokens;
}

}  // namespace origami
