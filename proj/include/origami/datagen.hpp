#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "origami/document.hpp"

namespace origami {

// Synthetic lookup task: two top-level clues (`door`, `key_color`) name the
// corridor object and the key within it that hold the `treasure` label.
struct DungeonsConfig {
  int min_doors = 4;
  int max_doors = 8;
  int keys_per_door = 3;
  bool include_monsters = true;
  bool shuffle_doors = true;
  bool shuffle_keys = true;
  int n_instances = 10000;
  uint64_t seed = 0;

  void validate() const;
};

// "hard" shuffles the corridor; "easy" keeps door i at index i-1. Everything
// else is identical. Instance count and seed keep their defaults.
DungeonsConfig dungeons_preset(const std::string& name);

extern const std::vector<std::string> kTreasureLabels;
extern const std::vector<std::string> kMonsterNames;
extern const std::vector<std::string> kKeyColors;

std::vector<Document> generate_dungeons(const DungeonsConfig& config);

// Config echo plus the label/monster lists, written as a sidecar next to
// generated JSONL files.
Document dungeons_metadata(const DungeonsConfig& config);

enum class ColumnType { Int, Float, Bool, Str };

// RFC 4180 CSV with a header row to one flat object per row. Column types come
// from hints or from two-pass inference over the whole file (a column is Int
// only if every non-empty cell parses as an integer, and so on down Float,
// Bool, Str). Empty cells omit the key.
std::vector<Document> csv_to_documents(const std::string& csv_path,
                                       const std::map<std::string, ColumnType>& type_hints = {});

}  // namespace origami
