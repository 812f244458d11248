#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "origami/document.hpp"
#include "origami/rng.hpp"
#include "origami/tokenizer.hpp"

namespace origami::testing {

inline const std::vector<std::string>& key_pool() {
  static const std::vector<std::string> pool = {
      "id",     "name",   "tags",  "meta",      "door",    "x",       "y",
      "deep key", "",     "type",  "Zürich",    "🔑",      "a\nb",    "score",
      "items",  "flag"};
  return pool;
}

inline const std::vector<std::string>& string_pool() {
  static const std::vector<std::string> pool = {
      "",          "a",        "word",        "two words", "Zürich",
      "🗝 cache",  "line\nbreak", "tab\tsep", "quote\"inside", "back\\slash",
      "ctl\x01byte", "ends with space "};
  return pool;
}

inline Document random_primitive(Rng& rng) {
  switch (rng.uniform_int(0, 4)) {
    case 0:
      return Document(nullptr);
    case 1:
      return Document(rng.uniform_int(0, 1) == 1);
    case 2:
      if (rng.uniform_int(0, 7) == 0)
        return Document(rng.uniform_int(0, 1) == 1 ? std::numeric_limits<int64_t>::max()
                                                   : std::numeric_limits<int64_t>::min());
      return Document(rng.uniform_int(-1000000, 1000000));
    case 3:
      switch (rng.uniform_int(0, 4)) {
        case 0:
          return Document(0.25 * static_cast<double>(rng.uniform_int(-8, 8)));
        case 1:
          return Document(static_cast<double>(rng.uniform_int(1, 999)) * 1e-3);
        case 2:
          return Document(std::ldexp(static_cast<double>(rng.uniform_int(1, 1 << 30)),
                                     static_cast<int>(rng.uniform_int(-60, 60))));
        case 3:
          return Document(-0.0);
        default:
          return Document(6.02214076e23);
      }
    default:
      return Document(string_pool()[static_cast<size_t>(
          rng.uniform_int(0, static_cast<int64_t>(string_pool().size()) - 1))]);
  }
}

// Bounded random document; roughly 60% primitives at each interior node so
// sizes stay small while deep paths still occur.
inline Document random_document(Rng& rng, int max_depth, int max_fanout) {
  if (max_depth <= 0 || rng.uniform_int(0, 9) < 6) return random_primitive(rng);
  if (rng.uniform_int(0, 1) == 0) {
    Document::Array arr;
    const int64_t n = rng.uniform_int(0, max_fanout);
    arr.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) arr.push_back(random_document(rng, max_depth - 1, max_fanout));
    return Document(std::move(arr));
  }
  std::vector<std::string> keys = key_pool();
  rng.shuffle(keys);
  const int64_t n =
      rng.uniform_int(0, std::min<int64_t>(max_fanout, static_cast<int64_t>(keys.size())));
  Document::Object obj;
  obj.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    obj.emplace_back(keys[static_cast<size_t>(i)], random_document(rng, max_depth - 1, max_fanout));
  return Document(std::move(obj));
}

// Random token drawn from grammar tokens, pool keys/values, small array
// counters, and tokens of the sequence itself.
inline Token random_token(Rng& rng, const std::vector<Token>& sequence) {
  switch (rng.uniform_int(0, 5)) {
    case 0: {
      const Token grammar[] = {Token::start(),   Token::end(), Token::obj_start(),
                               Token::obj_end(), Token::obj(), Token::unknown(),
                               Token::pad()};
      return grammar[rng.uniform_int(0, 6)];
    }
    case 1:
      return Token::key(key_pool()[static_cast<size_t>(
          rng.uniform_int(0, static_cast<int64_t>(key_pool().size()) - 1))]);
    case 2:
      return Token::value(random_primitive(rng));
    case 3:
      return Token::array(rng.uniform_int(0, 9));
    default:
      return sequence[static_cast<size_t>(
          rng.uniform_int(0, static_cast<int64_t>(sequence.size()) - 1))];
  }
}

// Recursive sibling permutation: shuffles object key order and nothing else.
// Array element order is structural and preserved.
inline Document permute_siblings(const Document& doc, Rng& rng) {
  if (doc.is_object()) {
    std::vector<size_t> order(doc.as_object().size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    Document::Object out;
    out.reserve(order.size());
    for (const size_t i : order) {
      const auto& [k, v] = doc.as_object()[i];
      out.emplace_back(k, permute_siblings(v, rng));
    }
    return Document(std::move(out));
  }
  if (doc.is_array()) {
    Document::Array out;
    out.reserve(doc.as_array().size());
    for (const Document& d : doc.as_array()) out.push_back(permute_siblings(d, rng));
    return Document(std::move(out));
  }
  return doc;
}

}  // namespace origami::testing
