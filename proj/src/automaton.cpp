#include "origami/automaton.hpp"

#include <algorithm>

namespace origami {

std::string StackSymbol::to_string() const {
  switch (kind) {
    case Kind::Obj: return "Obj";
    case Kind::Key: return "Key(" + key + ")";
    case Kind::Arr: return "Arr(" + std::to_string(remaining) + ")";
  }
  return "?";
}

int32_t symbol_to_id(const StackSymbol& s, const Vocabulary& vocab) {
  int32_t id = -1;
  switch (s.kind) {
    case StackSymbol::Kind::Obj: return Vocabulary::kObjId;
    case StackSymbol::Kind::Key: id = vocab.id_of(Token::key(s.key)); break;
    case StackSymbol::Kind::Arr: id = vocab.id_of(Token::array(s.remaining)); break;
  }
  return id >= 0 ? id : Vocabulary::kUnknownId;
}

const char* Automaton::control_name(Control c) {
  switch (c) {
    case Control::Begin: return "Begin";
    case Control::ExpectKeyOrClose: return "ExpectKeyOrClose";
    case Control::ExpectValue: return "ExpectValue";
    case Control::Accepted: return "Accepted";
  }
  return "?";
}

bool Automaton::admits(const Token& t, const DecodeOptions& opts) const {
  if (failed_) return false;
  switch (control_) {
    case Control::Begin:
      return t.kind == Token::Kind::Start;
    case Control::ExpectValue:
      return t.kind == Token::Kind::Value || t.kind == Token::Kind::Unknown ||
             t.kind == Token::Kind::ObjStart ||
             (t.kind == Token::Kind::Array && t.array_length() >= 0);
    case Control::ExpectKeyOrClose:
      if (t.kind == Token::Kind::Key) {
        if (opts.no_duplicate_keys && !keys_in_scope_.empty()) {
          const auto& scope = keys_in_scope_.back();
          if (std::find(scope.begin(), scope.end(), t.key_name()) != scope.end()) return false;
        }
        return true;
      }
      return obj_depth_ == 1 ? t.kind == Token::Kind::End : t.kind == Token::Kind::ObjEnd;
    case Control::Accepted:
      return t.kind == Token::Kind::Pad;
  }
  return false;
}

bool Automaton::try_step(const Token& t) {
  if (!admits(t, DecodeOptions{.no_duplicate_keys = false})) {
    failed_ = true;
    return false;
  }

  // Push phase.
  switch (t.kind) {
    case Token::Kind::Start:
    case Token::Kind::ObjStart:
      stack_.push_back(StackSymbol::obj());
      keys_in_scope_.emplace_back();
      ++obj_depth_;
      break;
    case Token::Kind::Key:
      stack_.push_back(StackSymbol::key_sym(t.key_name()));
      keys_in_scope_.back().push_back(t.key_name());
      break;
    case Token::Kind::Array:
      if (t.array_length() >= 1) stack_.push_back(StackSymbol::arr(t.array_length()));
      break;
    default:
      break;
  }

  // Record phase: this snapshot is the position encoding input.
  recorded_ = stack_;

  // Pop phase.
  bool completed_value = false;
  switch (t.kind) {
    case Token::Kind::Value:
    case Token::Kind::Unknown:
      completed_value = true;
      break;
    case Token::Kind::Array:
      completed_value = t.array_length() == 0;
      break;
    case Token::Kind::ObjEnd:
    case Token::Kind::End:
      stack_.pop_back();
      keys_in_scope_.pop_back();
      --obj_depth_;
      completed_value = t.kind == Token::Kind::ObjEnd;
      break;
    default:
      break;
  }
  if (completed_value) {
    // Unwind: a key pops with its object continuing; an array slot counts
    // down, finishing the array when the count hits one.
    while (!stack_.empty()) {
      StackSymbol& top = stack_.back();
      if (top.kind == StackSymbol::Kind::Obj) break;
      if (top.kind == StackSymbol::Kind::Key) {
        stack_.pop_back();
        break;
      }
      const int64_t r = top.remaining;
      stack_.pop_back();
      if (r > 1) {
        stack_.push_back(StackSymbol::arr(r - 1));
        break;
      }
    }
  }

  if (stack_.empty()) {
    control_ = Control::Accepted;
  } else if (stack_.back().kind == StackSymbol::Kind::Obj) {
    control_ = Control::ExpectKeyOrClose;
  } else {
    control_ = Control::ExpectValue;
  }
  ++consumed_;
  return true;
}

void Automaton::step(const Token& t) {
  const size_t pos = consumed_;
  const Control before = control_;
  if (!try_step(t))
    throw InvalidTransitionError(
        std::string("cannot consume ") + t.to_string() + " in state " + control_name(before), pos);
}

std::vector<uint8_t> Automaton::valid_next(const Vocabulary& vocab, const DecodeOptions& opts) const {
  std::vector<uint8_t> mask(static_cast<size_t>(vocab.size()), 0);
  if (failed_) return mask;
  for (int32_t id = 0; id < vocab.size(); ++id)
    mask[static_cast<size_t>(id)] = admits(vocab.token(id), opts) ? 1 : 0;
  return mask;
}

MaskClass Automaton::mask_class() const {
  switch (control_) {
    case Control::Begin: return MaskClass::Begin;
    case Control::ExpectValue: return MaskClass::ExpectValue;
    case Control::ExpectKeyOrClose:
      return obj_depth_ == 1 ? MaskClass::ExpectKeyRoot : MaskClass::ExpectKeyNested;
    case Control::Accepted: return MaskClass::AcceptedPad;
  }
  return MaskClass::Begin;
}

std::array<std::vector<uint8_t>, kNumMaskClasses> class_masks(const Vocabulary& vocab) {
  std::array<std::vector<uint8_t>, kNumMaskClasses> masks;
  for (auto& m : masks) m.assign(static_cast<size_t>(vocab.size()), 0);
  for (int32_t id = 0; id < vocab.size(); ++id) {
    const Token& t = vocab.token(id);
    const auto i = static_cast<size_t>(id);
    switch (t.kind) {
      case Token::Kind::Start:
        masks[static_cast<int>(MaskClass::Begin)][i] = 1;
        break;
      case Token::Kind::Value:
      case Token::Kind::Unknown:
      case Token::Kind::ObjStart:
      case Token::Kind::Array:
        masks[static_cast<int>(MaskClass::ExpectValue)][i] = 1;
        break;
      case Token::Kind::Key:
        masks[static_cast<int>(MaskClass::ExpectKeyRoot)][i] = 1;
        masks[static_cast<int>(MaskClass::ExpectKeyNested)][i] = 1;
        break;
      case Token::Kind::End:
        masks[static_cast<int>(MaskClass::ExpectKeyRoot)][i] = 1;
        break;
      case Token::Kind::ObjEnd:
        masks[static_cast<int>(MaskClass::ExpectKeyNested)][i] = 1;
        break;
      case Token::Kind::Pad:
        masks[static_cast<int>(MaskClass::AcceptedPad)][i] = 1;
        break;
      case Token::Kind::Obj:
        break;
    }
  }
  return masks;
}

bool accepts(const std::vector<Token>& tokens) {
  Automaton a;
  for (const Token& t : tokens)
    if (!a.try_step(t)) return false;
  return a.accepted();
}

std::vector<std::vector<StackSymbol>> stack_trace(const std::vector<Token>& tokens) {
  Automaton a;
  std::vector<std::vector<StackSymbol>> trace;
  trace.reserve(tokens.size());
  for (const Token& t : tokens) {
    a.step(t);
    trace.push_back(a.recorded());
  }
  return trace;
}

}  // namespace origami
