#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "origami/tokenizer.hpp"

namespace origami {

// Symbol living on the automaton stack. Every symbol corresponds to a
// vocabulary token (Obj, a key, or an array counter) so it can share that
// token's embedding row.
struct StackSymbol {
  enum class Kind : uint8_t { Obj, Key, Arr };

  Kind kind = Kind::Obj;
  std::string key;        // Kind::Key
  int64_t remaining = 0;  // Kind::Arr

  static StackSymbol obj() { return {}; }
  static StackSymbol key_sym(std::string name) {
    return {Kind::Key, std::move(name), 0};
  }
  static StackSymbol arr(int64_t remaining) { return {Kind::Arr, {}, remaining}; }

  bool operator==(const StackSymbol& o) const {
    return kind == o.kind && key == o.key && remaining == o.remaining;
  }

  std::string to_string() const;
};

// Vocabulary id carrying the symbol's embedding row; Unknown when the
// corresponding token fell out of the vocabulary.
int32_t symbol_to_id(const StackSymbol& s, const Vocabulary& vocab);

class InvalidTransitionError : public std::runtime_error {
 public:
  InvalidTransitionError(const std::string& msg, size_t position)
      : std::runtime_error(msg + " at position " + std::to_string(position)),
        position_(position) {}
  size_t position() const { return position_; }

 private:
  size_t position_;
};

struct DecodeOptions {
  // Masks keys already emitted at the open object level. Generation wants
  // this on; acceptance checking must leave it off (duplicate keys are
  // grammatical, just undesirable).
  bool no_duplicate_keys = true;
};

// Groups automaton states whose admissible-token sets coincide; training
// batches store one class per position instead of a full vocabulary mask.
enum class MaskClass : uint8_t {
  Begin = 0,        // {Start}
  ExpectValue,      // values, arrays, ObjStart, Unknown
  ExpectKeyRoot,    // keys, End
  ExpectKeyNested,  // keys, ObjEnd
  AcceptedPad,      // {Pad}
};
inline constexpr int kNumMaskClasses = 5;

// Admissible-token mask per MaskClass, indexed [class][vocab id].
std::array<std::vector<uint8_t>, kNumMaskClasses> class_masks(const Vocabulary& vocab);

// Deterministic pushdown recognizer for tokenized documents. A step runs in
// three phases: push (Start/ObjStart push Obj, a key pushes Key, an n>=1
// array pushes Arr(n)), record (the stack snapshot defining the position
// encoding), pop (a completed value unwinds the stack: Key pops and the
// object continues; Arr(r) pops and re-pushes Arr(r-1) while r>1; Obj stops
// the unwind). Cheap to copy; one instance per decoding stream.
class Automaton {
 public:
  enum class Control : uint8_t { Begin, ExpectKeyOrClose, ExpectValue, Accepted };

  Control control() const { return control_; }
  const std::vector<StackSymbol>& stack() const { return stack_; }
  // Open-object nesting depth (Obj symbols on the stack).
  int depth() const { return obj_depth_; }
  bool accepted() const { return control_ == Control::Accepted; }
  bool failed() const { return failed_; }
  // Tokens consumed so far; doubles as the position in error messages.
  size_t consumed() const { return consumed_; }

  // Stack snapshot recorded by the most recent step (post-push, pre-pop).
  const std::vector<StackSymbol>& recorded() const { return recorded_; }

  // Whether the token is admissible right now; pure.
  bool admits(const Token& t, const DecodeOptions& opts = {}) const;

  // One transition. Returns false and poisons the automaton when the token
  // is not admissible (duplicate keys are admitted; see DecodeOptions).
  bool try_step(const Token& t);
  // try_step, throwing InvalidTransitionError instead of returning false.
  void step(const Token& t);

  // Mask over vocabulary ids: mask[i] != 0 iff stepping vocab.token(i)
  // succeeds (minus duplicate keys when the option is on).
  std::vector<uint8_t> valid_next(const Vocabulary& vocab, const DecodeOptions& opts = {}) const;

  MaskClass mask_class() const;

  static const char* control_name(Control c);

 private:
  Control control_ = Control::Begin;
  std::vector<StackSymbol> stack_;
  std::vector<StackSymbol> recorded_;
  std::vector<std::vector<std::string>> keys_in_scope_;
  int obj_depth_ = 0;
  size_t consumed_ = 0;
  bool failed_ = false;
};

// Folds step over the whole sequence; true iff it ends Accepted (trailing
// pads are admissible in Accepted). Never throws.
bool accepts(const std::vector<Token>& tokens);

// Recorded stack per position; pads record empty stacks. Throws
// InvalidTransitionError on the first inadmissible token.
std::vector<std::vector<StackSymbol>> stack_trace(const std::vector<Token>& tokens);

}  // namespace origami
