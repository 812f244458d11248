#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "origami/document.hpp"

namespace origami {

// Atomic symbol of the token language. Keys and primitive values are atomic
// (no sub-word splitting); structure is carried by grammar tokens. Obj never
// appears in tokenized sequences; it exists as a stack / position symbol only.
struct Token {
  enum class Kind : uint8_t {
    Start = 0,
    End = 1,
    ObjStart = 2,
    ObjEnd = 3,
    Obj = 4,
    Unknown = 5,
    Pad = 6,
    Key,
    Value,
    Array,
  };

  Kind kind = Kind::Pad;
  // Key -> Str key name; Value -> primitive document; Array -> Int length.
  Document payload;

  static Token start() { return {Kind::Start, {}}; }
  static Token end() { return {Kind::End, {}}; }
  static Token obj_start() { return {Kind::ObjStart, {}}; }
  static Token obj_end() { return {Kind::ObjEnd, {}}; }
  static Token obj() { return {Kind::Obj, {}}; }
  static Token unknown() { return {Kind::Unknown, {}}; }
  static Token pad() { return {Kind::Pad, {}}; }
  static Token key(std::string name) { return {Kind::Key, Document(std::move(name))}; }
  static Token value(Document primitive) { return {Kind::Value, std::move(primitive)}; }
  static Token array(int64_t length) { return {Kind::Array, Document(length)}; }

  bool is_fixed_grammar() const { return kind <= Kind::Pad; }
  bool is_key() const { return kind == Kind::Key; }
  bool is_value() const { return kind == Kind::Value; }
  bool is_array() const { return kind == Kind::Array; }

  const std::string& key_name() const { return payload.as_str(); }
  int64_t array_length() const { return payload.as_int(); }

  bool operator==(const Token& other) const {
    return kind == other.kind && payload == other.payload;
  }

  // Diagnostic / vocabulary-file form, e.g. `K:genres`, `V:i:42`, `G:ARRAY:3`.
  std::string to_string() const;
};

struct TokenHash {
  size_t operator()(const Token& t) const;
};

// Raised by detokenize / accepts-style consumers; position is the index of the
// first offending token (== sequence length for truncation).
class TokenSequenceError : public std::runtime_error {
 public:
  TokenSequenceError(const std::string& msg, size_t position)
      : std::runtime_error(msg + " at position " + std::to_string(position)), position(position) {}
  size_t position;
};

class OverlongSequenceError : public std::runtime_error {
 public:
  explicit OverlongSequenceError(size_t length, size_t limit)
      : std::runtime_error("sequence of length " + std::to_string(length) +
                           " exceeds limit " + std::to_string(limit)),
        length(length),
        limit(limit) {}
  size_t length;
  size_t limit;
};

// Bijection between retained tokens and contiguous ids. The seven fixed
// grammar tokens always occupy ids 0-6 (START END OBJ_START OBJ_END OBJ
// UNKNOWN PAD). Array tokens are assigned on first encounter like keys and
// values, and participate in frequency truncation; only the seven fixed
// tokens are unconditionally retained.
class Vocabulary {
 public:
  static constexpr int32_t kStartId = 0;
  static constexpr int32_t kEndId = 1;
  static constexpr int32_t kObjStartId = 2;
  static constexpr int32_t kObjEndId = 3;
  static constexpr int32_t kObjId = 4;
  static constexpr int32_t kUnknownId = 5;
  static constexpr int32_t kPadId = 6;
  static constexpr int32_t kNumFixedGrammar = 7;

  Vocabulary();

  int32_t size() const { return static_cast<int32_t>(tokens_.size()); }
  const Token& token(int32_t id) const;
  // -1 when the token is not in the vocabulary.
  int32_t id_of(const Token& t) const;
  int64_t frequency(int32_t id) const { return freq_[static_cast<size_t>(id)]; }

  // Registers a token (frequency increment optional); returns its id.
  int32_t add(const Token& t, int64_t count = 1);

  // Serialized one-token-per-line form; line index == id. Bit-exact.
  std::string to_text() const;
  static Vocabulary from_text(const std::string& text);
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<Token> tokens_;
  std::vector<int64_t> freq_;
  std::unordered_map<Token, int32_t, TokenHash> index_;
};

// FNV-1a over the serialized vocabulary text; recorded in checkpoints.
uint64_t vocabulary_checksum(const Vocabulary& vocab);

// Depth-first emission: Start, then per pair key + value tokens, then End.
// Nested objects emit ObjStart..ObjEnd, an n-element array emits Array(n)
// followed by the element tokens. Throws on a non-object top level.
std::vector<Token> tokenize(const Document& doc);

// Inverse of tokenize; trailing pads allowed. Unknown deserializes to the
// string "[UNKNOWN]". Throws TokenSequenceError on the first offending token.
Document detokenize(const std::vector<Token>& tokens);

// Vocabulary over all tokens emitted by the corpus, most-frequent retained
// under max_size (fixed grammar always kept, ties broken by earlier first
// occurrence). Each Array(n) seen in the corpus also registers the counter
// symbols Array(n-1)..Array(1) at zero frequency: they appear on the
// automaton stack while an n-element array is consumed and need embedding
// rows of their own. Truncation may drop them again; a dropped stack symbol
// falls back to the Unknown embedding.
Vocabulary build_vocabulary(const std::vector<Document>& corpus,
                            std::optional<int32_t> max_size = std::nullopt);

// Token ids right-padded with PAD to exactly pad_to. Out-of-vocabulary keys,
// values and array tokens map to UNKNOWN. Overlong input raises unless
// allow_truncate.
std::vector<int32_t> encode(const std::vector<Token>& tokens, const Vocabulary& vocab,
                            size_t pad_to, bool allow_truncate = false);

std::vector<Token> decode(const std::vector<int32_t>& ids, const Vocabulary& vocab);

}  // namespace origami
