#include "origami/encoding.hpp"

#include <stdexcept>
#include <string>

namespace origami {

const char* pe_kind_name(PositionEncodingKind k) {
  switch (k) {
    case PositionEncodingKind::KVPE: return "kvpe";
    case PositionEncodingKind::AbsoluteLearned: return "absolute";
    case PositionEncodingKind::Sinusoidal: return "sinusoidal";
    case PositionEncodingKind::NoneKind: return "none";
  }
  return "?";
}

PositionEncodingKind pe_kind_from_name(std::string_view name) {
  if (name == "kvpe") return PositionEncodingKind::KVPE;
  if (name == "absolute") return PositionEncodingKind::AbsoluteLearned;
  if (name == "sinusoidal") return PositionEncodingKind::Sinusoidal;
  if (name == "none") return PositionEncodingKind::NoneKind;
  throw std::invalid_argument("unknown position encoding: " + std::string(name));
}

}  // namespace origami
