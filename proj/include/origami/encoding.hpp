#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string_view>
#include <vector>

#include "origami/automaton.hpp"

namespace origami {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class PositionEncodingKind { KVPE, AbsoluteLearned, Sinusoidal, NoneKind };

const char* pe_kind_name(PositionEncodingKind k);
PositionEncodingKind pe_kind_from_name(std::string_view name);

// Position encoding of token i = sum of the embedding rows of the stack
// symbols recorded while consuming it. Shares the token embedding table; an
// empty stack (pads) gives a zero vector, a symbol missing from the
// vocabulary contributes the Unknown row.
template <typename Scalar>
RowMatrix<Scalar> kvpe(const std::vector<std::vector<StackSymbol>>& trace,
                       const RowMatrix<Scalar>& embedding, const Vocabulary& vocab) {
  RowMatrix<Scalar> out = RowMatrix<Scalar>::Zero(static_cast<Eigen::Index>(trace.size()),
                                                  embedding.cols());
  for (size_t i = 0; i < trace.size(); ++i)
    for (const StackSymbol& s : trace[i])
      out.row(static_cast<Eigen::Index>(i)) += embedding.row(symbol_to_id(s, vocab));
  return out;
}

// Fixed sin/cos table, base 10000, 0-based positions: even columns carry
// sin(i / 10000^(2k/d)), odd columns the matching cos.
template <typename Scalar>
RowMatrix<Scalar> sinusoidal_pe(Eigen::Index length, Eigen::Index dim) {
  RowMatrix<Scalar> out(length, dim);
  for (Eigen::Index i = 0; i < length; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) {
      const double k = static_cast<double>(2 * (j / 2));
      const double angle = static_cast<double>(i) * std::pow(10000.0, -k / static_cast<double>(dim));
      out(i, j) = static_cast<Scalar>(j % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return out;
}

}  // namespace origami
