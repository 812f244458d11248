#include "origami/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "origami/rng.hpp"

namespace origami {

const std::vector<std::string> kTreasureLabels = {"gold", "silver", "gems", "potion", "curse"};
const std::vector<std::string> kMonsterNames = {"goblin", "orc", "dragon", "slime", "skeleton"};
const std::vector<std::string> kKeyColors = {"red",    "green", "blue",
                                             "yellow", "purple", "orange"};

void DungeonsConfig::validate() const {
  if (min_doors < 1 || min_doors > max_doors)
    throw std::invalid_argument("door range must satisfy 1 <= min <= max");
  if (keys_per_door < 1 || keys_per_door > static_cast<int>(kKeyColors.size()))
    throw std::invalid_argument("keys_per_door outside the color palette");
  if (n_instances < 1) throw std::invalid_argument("n_instances must be positive");
}

DungeonsConfig dungeons_preset(const std::string& name) {
  DungeonsConfig cfg;
  if (name == "hard") return cfg;
  if (name == "easy") {
    cfg.shuffle_doors = false;
    return cfg;
  }
  throw std::invalid_argument("unknown dungeons preset: " + name);
}

std::vector<Document> generate_dungeons(const DungeonsConfig& config) {
  config.validate();
  std::vector<Document> out;
  out.reserve(static_cast<size_t>(config.n_instances));
  for (int inst = 0; inst < config.n_instances; ++inst) {
    Rng rng(mix_seed(config.seed, static_cast<uint64_t>(inst)));
    const int doors = static_cast<int>(rng.uniform_int(config.min_doors, config.max_doors));
    const int door_clue = static_cast<int>(rng.uniform_int(1, doors));
    const std::string& color_clue =
        kKeyColors[static_cast<size_t>(rng.uniform_int(0, config.keys_per_door - 1))];

    std::string treasure;
    std::vector<Document> corridor;
    corridor.reserve(static_cast<size_t>(doors));
    for (int door_no = 1; door_no <= doors; ++door_no) {
      Document::Object room;
      for (int k = 0; k < config.keys_per_door; ++k) {
        const std::string& label =
            kTreasureLabels[static_cast<size_t>(rng.uniform_int(0, 4))];
        if (door_no == door_clue && kKeyColors[static_cast<size_t>(k)] == color_clue)
          treasure = label;
        room.emplace_back(kKeyColors[static_cast<size_t>(k)] + "_key", Document(label));
      }
      room.emplace_back("door_no", Document(static_cast<int64_t>(door_no)));
      if (config.include_monsters) {
        Document::Array monsters;
        const int count = static_cast<int>(rng.uniform_int(0, 2));
        for (int m = 0; m < count; ++m)
          monsters.emplace_back(kMonsterNames[static_cast<size_t>(rng.uniform_int(0, 4))]);
        room.emplace_back("monsters", Document(std::move(monsters)));
      }
      if (config.shuffle_keys) rng.shuffle(room);
      corridor.emplace_back(Document(std::move(room)));
    }
    if (config.shuffle_doors) rng.shuffle(corridor);

    Document::Object top;
    top.emplace_back("door", Document(static_cast<int64_t>(door_clue)));
    top.emplace_back("key_color", Document(color_clue));
    top.emplace_back("corridor", Document(std::move(corridor)));
    top.emplace_back("treasure", Document(treasure));
    out.emplace_back(Document(std::move(top)));
  }
  return out;
}

Document dungeons_metadata(const DungeonsConfig& config) {
  Document::Object meta;
  meta.emplace_back("min_doors", Document(static_cast<int64_t>(config.min_doors)));
  meta.emplace_back("max_doors", Document(static_cast<int64_t>(config.max_doors)));
  meta.emplace_back("keys_per_door", Document(static_cast<int64_t>(config.keys_per_door)));
  meta.emplace_back("include_monsters", Document(config.include_monsters));
  meta.emplace_back("shuffle_doors", Document(config.shuffle_doors));
  meta.emplace_back("shuffle_keys", Document(config.shuffle_keys));
  meta.emplace_back("n_instances", Document(static_cast<int64_t>(config.n_instances)));
  meta.emplace_back("seed", Document(static_cast<int64_t>(config.seed)));
  Document::Array treasures;
  for (const auto& t : kTreasureLabels) treasures.emplace_back(t);
  meta.emplace_back("treasure_labels", Document(std::move(treasures)));
  Document::Array monsters;
  for (const auto& m : kMonsterNames) monsters.emplace_back(m);
  meta.emplace_back("monster_names", Document(std::move(monsters)));
  Document::Array colors;
  for (int k = 0; k < config.keys_per_door; ++k)
    colors.emplace_back(kKeyColors[static_cast<size_t>(k)]);
  meta.emplace_back("key_colors", Document(std::move(colors)));
  return Document(std::move(meta));
}

namespace {

// RFC 4180: quoted fields may contain commas, newlines, and "" escapes.
std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  size_t i = 0;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
  };
  while (i < text.size()) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          i += 2;
          continue;
        }
        quoted = false;
        ++i;
        continue;
      }
      field += c;
      ++i;
      continue;
    }
    if (c == '"' && !field_started && field.empty()) {
      quoted = true;
      field_started = true;
      ++i;
      continue;
    }
    if (c == ',') {
      end_field();
      ++i;
      continue;
    }
    if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      end_row();
      i += 2;
      continue;
    }
    if (c == '\n' || c == '\r') {
      end_row();
      ++i;
      continue;
    }
    field += c;
    field_started = true;
    ++i;
  }
  if (quoted) throw std::runtime_error("unterminated quoted CSV field");
  if (field_started || !field.empty() || !row.empty()) end_row();
  return rows;
}

bool parse_int_cell(const std::string& s, int64_t& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

bool parse_float_cell(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last && std::isfinite(out);
}

bool parse_bool_cell(const std::string& s, bool& out) {
  if (s == "true") {
    out = true;
    return true;
  }
  if (s == "false") {
    out = false;
    return true;
  }
  return false;
}

}  // namespace

std::vector<Document> csv_to_documents(const std::string& csv_path,
                                       const std::map<std::string, ColumnType>& type_hints) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + csv_path);
  std::stringstream buf;
  buf << in.rdbuf();
  const auto rows = parse_csv(buf.str());
  if (rows.empty()) throw std::runtime_error("CSV has no header row");
  const std::vector<std::string>& header = rows.front();
  for (const auto& [col, _] : type_hints)
    if (std::find(header.begin(), header.end(), col) == header.end())
      throw std::runtime_error("type hint for unknown column: " + col);

  // First pass: per-column inference over non-empty cells.
  std::vector<ColumnType> types(header.size(), ColumnType::Int);
  std::vector<bool> any_value(header.size(), false);
  for (size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != header.size())
      throw std::runtime_error("ragged CSV row " + std::to_string(r + 1) + ": expected " +
                               std::to_string(header.size()) + " fields, found " +
                               std::to_string(rows[r].size()));
    for (size_t c = 0; c < header.size(); ++c) {
      const std::string& cell = rows[r][c];
      if (cell.empty()) continue;
      any_value[c] = true;
      int64_t iv;
      double fv;
      bool bv;
      if (types[c] == ColumnType::Int && !parse_int_cell(cell, iv)) types[c] = ColumnType::Float;
      if (types[c] == ColumnType::Float && !parse_float_cell(cell, fv)) types[c] = ColumnType::Bool;
      if (types[c] == ColumnType::Bool && !parse_bool_cell(cell, bv)) types[c] = ColumnType::Str;
    }
  }
  for (size_t c = 0; c < header.size(); ++c) {
    if (!any_value[c]) types[c] = ColumnType::Str;
    auto hint = type_hints.find(header[c]);
    if (hint != type_hints.end()) types[c] = hint->second;
  }

  std::vector<Document> out;
  out.reserve(rows.size() - 1);
  for (size_t r = 1; r < rows.size(); ++r) {
    Document::Object obj;
    for (size_t c = 0; c < header.size(); ++c) {
      const std::string& cell = rows[r][c];
      if (cell.empty()) continue;
      switch (types[c]) {
        case ColumnType::Int: {
          int64_t v;
          if (!parse_int_cell(cell, v))
            throw std::runtime_error("cell '" + cell + "' in column " + header[c] +
                                     " is not an integer");
          obj.emplace_back(header[c], Document(v));
          break;
        }
        case ColumnType::Float: {
          double v;
          if (!parse_float_cell(cell, v))
            throw std::runtime_error("cell '" + cell + "' in column " + header[c] +
                                     " is not a number");
          obj.emplace_back(header[c], Document(v));
          break;
        }
        case ColumnType::Bool: {
          bool v;
          if (!parse_bool_cell(cell, v))
            throw std::runtime_error("cell '" + cell + "' in column " + header[c] +
                                     " is not a boolean");
          obj.emplace_back(header[c], Document(v));
          break;
        }
        case ColumnType::Str:
          obj.emplace_back(header[c], Document(cell));
          break;
      }
    }
    out.emplace_back(Document(std::move(obj)));
  }
  return out;
}

}  // namespace origami
