// ctcpoly/unitset.hpp
//
// Copyright 2026  The ctcpoly Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Acoustic modeling units. An inventory is the ordered global symbol set
// shared by every language of a system: blank at id 0, the word-boundary
// marker at id 1, then graphemes or phones in code-point order.

#ifndef CTCPOLY_UNITSET_HPP_
#define CTCPOLY_UNITSET_HPP_

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctcpoly/common.hpp"

namespace ctcpoly {

enum class UnitKind { kBlank, kGrapheme, kPhone, kWordBoundary };
enum class UnitMode { kGrapheme, kPhone };

inline constexpr int kBlankId = 0;
inline constexpr int kWordBoundaryId = 1;
inline constexpr std::string_view kBlankSymbol = "<blank>";
inline constexpr std::string_view kWordBoundarySymbol = "<wb>";

inline std::string_view to_string(UnitKind kind) {
  switch (kind) {
    case UnitKind::kBlank: return "blank";
    case UnitKind::kGrapheme: return "grapheme";
    case UnitKind::kPhone: return "phone";
    case UnitKind::kWordBoundary: return "word-boundary";
  }
  return "?";
}

inline std::string_view to_string(UnitMode mode) {
  return mode == UnitMode::kGrapheme ? "grapheme" : "phone";
}

inline UnitMode parse_unit_mode(std::string_view s) {
  if (s == "grapheme") return UnitMode::kGrapheme;
  if (s == "phone") return UnitMode::kPhone;
  throw Error("unknown unit mode '" + std::string(s) + "'");
}

inline UnitKind parse_unit_kind(std::string_view s) {
  for (auto k : {UnitKind::kBlank, UnitKind::kGrapheme, UnitKind::kPhone,
                 UnitKind::kWordBoundary}) {
    if (to_string(k) == s) return k;
  }
  throw Error("unknown unit kind '" + std::string(s) + "'");
}

struct Unit {
  int id = 0;
  std::string symbol;
  UnitKind kind = UnitKind::kBlank;
  std::set<std::string> languages;

  bool operator==(const Unit&) const = default;
};

// ---------------------------------------------------------------------------
// Text normalization: NFC, lowercase, code-point iteration.

namespace text {

/// NFC-normalizes and lowercases a UTF-8 string.
inline std::string normalize(std::string_view utf8) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error("ICU NFC normalizer unavailable");
  icu::UnicodeString us = icu::UnicodeString::fromUTF8(
      icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
  us = nfc->normalize(us, status);
  if (U_FAILURE(status)) throw Error("NFC normalization failed");
  us.toLower(icu::Locale::getRoot());
  // Lowercasing can denormalize a handful of characters; normalize again.
  us = nfc->normalize(us, status);
  std::string out;
  us.toUTF8String(out);
  return out;
}

inline std::u32string to_u32(std::string_view utf8) {
  icu::UnicodeString us = icu::UnicodeString::fromUTF8(
      icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
  std::u32string out;
  for (int32_t i = 0; i < us.length(); i = us.moveIndex32(i, 1)) {
    out.push_back(static_cast<char32_t>(us.char32At(i)));
  }
  return out;
}

inline std::string to_utf8(char32_t cp) {
  icu::UnicodeString us(static_cast<UChar32>(cp));
  std::string out;
  us.toUTF8String(out);
  return out;
}

inline bool is_space(char32_t cp) {
  return u_isUWhiteSpace(static_cast<UChar32>(cp));
}

/// Number of code points.
inline std::size_t length(std::string_view utf8) { return to_u32(utf8).size(); }

/// Splits at runs of Unicode whitespace.
inline std::vector<std::string> split_words(std::string_view utf8) {
  std::vector<std::string> words;
  std::string cur;
  for (char32_t cp : to_u32(utf8)) {
    if (is_space(cp)) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += to_utf8(cp);
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

inline std::string normalize_whitespace(std::string_view utf8) {
  std::string out;
  for (const auto& w : split_words(utf8)) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

}  // namespace text

// ---------------------------------------------------------------------------

class UnitInventory {
 public:
  UnitInventory() = default;

  /// Canonical construction: reserved units first, then symbols sorted by
  /// code point (byte order of UTF-8 is code-point order).
  static UnitInventory from_symbols(
      UnitMode mode, const std::map<std::string, std::set<std::string>>& symbols,
      const std::set<std::string>& reserved_languages = {}) {
    UnitInventory inv;
    inv.mode_ = mode;
    inv.units_.push_back({kBlankId, std::string(kBlankSymbol), UnitKind::kBlank,
                          reserved_languages});
    inv.units_.push_back({kWordBoundaryId, std::string(kWordBoundarySymbol),
                          UnitKind::kWordBoundary, reserved_languages});
    const UnitKind kind =
        mode == UnitMode::kGrapheme ? UnitKind::kGrapheme : UnitKind::kPhone;
    for (const auto& [sym, langs] : symbols) {
      if (sym.empty()) throw Error("empty unit symbol");
      if (sym == kBlankSymbol || sym == kWordBoundarySymbol) continue;
      inv.units_.push_back(
          {static_cast<int>(inv.units_.size()), sym, kind, langs});
    }
    inv.reindex();
    return inv;
  }

  UnitMode mode() const { return mode_; }
  int size() const { return static_cast<int>(units_.size()); }
  const std::vector<Unit>& units() const { return units_; }

  const Unit& unit(int id) const {
    if (id < 0 || id >= size()) {
      throw Error("unit id " + std::to_string(id) + " out of range [0," +
                  std::to_string(size()) + ")");
    }
    return units_[static_cast<std::size_t>(id)];
  }
  const std::string& symbol(int id) const { return unit(id).symbol; }

  std::optional<int> find(std::string_view symbol) const {
    auto it = index_.find(std::string(symbol));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  int id(std::string_view symbol) const {
    auto found = find(symbol);
    if (!found) throw Error("unknown unit symbol '" + std::string(symbol) + "'");
    return *found;
  }

  bool contains(std::string_view symbol) const { return find(symbol).has_value(); }

  std::set<std::string> languages() const {
    std::set<std::string> out;
    for (const auto& u : units_) out.insert(u.languages.begin(), u.languages.end());
    return out;
  }

  /// Hash over the ordered symbol list; identifies the id space.
  std::uint64_t hash() const {
    std::uint64_t h = fnv1a(to_string(mode_));
    for (const auto& u : units_) h = fnv1a(u.symbol + '\n', h);
    return h;
  }

  bool operator==(const UnitInventory& other) const {
    return mode_ == other.mode_ && units_ == other.units_;
  }

  void save(std::ostream& os) const {
    for (const auto& u : units_) {
      os << u.id << '\t' << u.symbol << '\t' << to_string(u.kind) << '\t';
      bool first = true;
      for (const auto& l : u.languages) {
        if (!first) os << ',';
        os << l;
        first = false;
      }
      os << '\n';
    }
  }

  void save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw Error("cannot write inventory file " + path);
    save(os);
  }

  static UnitInventory load(std::istream& is, std::string_view name = "inventory") {
    UnitInventory inv;
    inv.mode_ = UnitMode::kGrapheme;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty()) continue;
      std::vector<std::string> fields;
      std::stringstream ss(line);
      std::string f;
      while (std::getline(ss, f, '\t')) fields.push_back(f);
      if (fields.size() == 3) fields.emplace_back();
      if (fields.size() != 4) {
        throw Error(std::string(name) + ":" + std::to_string(lineno) +
                    ": expected 4 tab-separated fields");
      }
      Unit u;
      try {
        u.id = std::stoi(fields[0]);
      } catch (const std::exception&) {
        throw Error(std::string(name) + ":" + std::to_string(lineno) +
                    ": bad unit id '" + fields[0] + "'");
      }
      u.symbol = fields[1];
      u.kind = parse_unit_kind(fields[2]);
      std::stringstream ls(fields[3]);
      while (std::getline(ls, f, ',')) {
        if (!f.empty()) u.languages.insert(f);
      }
      if (u.kind == UnitKind::kPhone) inv.mode_ = UnitMode::kPhone;
      inv.units_.push_back(std::move(u));
    }
    inv.reindex();
    return inv;
  }

  static UnitInventory load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot read inventory file " + path);
    return load(is, path);
  }

 private:
  void reindex() {
    index_.clear();
    int n_blank = 0;
    int n_wb = 0;
    for (std::size_t i = 0; i < units_.size(); ++i) {
      const Unit& u = units_[i];
      if (u.id != static_cast<int>(i)) {
        throw Error("unit ids must be contiguous; found id " + std::to_string(u.id) +
                    " at position " + std::to_string(i));
      }
      if (u.symbol.empty()) throw Error("empty unit symbol");
      if (!index_.emplace(u.symbol, u.id).second) {
        throw Error("duplicate unit symbol '" + u.symbol + "'");
      }
      n_blank += u.kind == UnitKind::kBlank;
      n_wb += u.kind == UnitKind::kWordBoundary;
    }
    if (n_blank != 1 || units_.empty() || units_[0].kind != UnitKind::kBlank) {
      throw Error("inventory must contain exactly one blank at id 0");
    }
    if (n_wb != 1) throw Error("inventory must contain exactly one word-boundary unit");
  }

  UnitMode mode_ = UnitMode::kGrapheme;
  std::vector<Unit> units_;
  std::unordered_map<std::string, int> index_;
};

// ---------------------------------------------------------------------------

/// Pronunciation dictionary: normalized word -> phone symbols.
class Lexicon {
 public:
  Lexicon() = default;

  void add(std::string_view word, std::vector<std::string> phones) {
    if (phones.empty()) {
      throw Error("empty pronunciation for word '" + std::string(word) + "'");
    }
    for (const auto& p : phones) {
      if (p.empty()) throw Error("empty phone in pronunciation of '" + std::string(word) + "'");
    }
    entries_[text::normalize(word)] = std::move(phones);
  }

  const std::vector<std::string>* find(std::string_view word) const {
    auto it = entries_.find(std::string(word));
    return it == entries_.end() ? nullptr : &it->second;
  }

  const std::map<std::string, std::vector<std::string>>& entries() const {
    return entries_;
  }
  std::size_t size() const { return entries_.size(); }

  /// Throws unless every phone resolves in `inventory`.
  void validate(const UnitInventory& inventory) const {
    for (const auto& [word, phones] : entries_) {
      for (const auto& p : phones) {
        auto id = inventory.find(p);
        if (!id || inventory.unit(*id).kind != UnitKind::kPhone) {
          throw Error("lexicon entry '" + word + "' uses phone '" + p +
                      "' missing from the inventory");
        }
      }
    }
  }

  void save(std::ostream& os) const {
    for (const auto& [word, phones] : entries_) {
      os << word << '\t';
      for (std::size_t i = 0; i < phones.size(); ++i) {
        if (i) os << ' ';
        os << phones[i];
      }
      os << '\n';
    }
  }

  void save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw Error("cannot write lexicon file " + path);
    save(os);
  }

  static Lexicon load(std::istream& is, std::string_view name = "lexicon") {
    Lexicon lex;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto tab = line.find('\t');
      if (tab == std::string::npos) {
        throw Error(std::string(name) + ":" + std::to_string(lineno) +
                    ": expected '<word>\\t<phones>'");
      }
      std::vector<std::string> phones;
      std::stringstream ss(line.substr(tab + 1));
      std::string p;
      while (ss >> p) phones.push_back(p);
      lex.add(line.substr(0, tab), std::move(phones));
    }
    return lex;
  }

  static Lexicon load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot read lexicon file " + path);
    return load(is, path);
  }

 private:
  std::map<std::string, std::vector<std::string>> entries_;
};

// ---------------------------------------------------------------------------
// Operations.

/// Blank, word boundary and every distinct non-whitespace character of the
/// normalized transcripts.
inline UnitInventory build_grapheme_inventory(const std::vector<std::string>& transcripts,
                                              const std::string& language = {}) {
  std::map<std::string, std::set<std::string>> symbols;
  for (const auto& t : transcripts) {
    for (char32_t cp : text::to_u32(text::normalize(t))) {
      if (text::is_space(cp)) continue;
      auto& langs = symbols[text::to_utf8(cp)];
      if (!language.empty()) langs.insert(language);
    }
  }
  if (symbols.empty()) throw Error("empty transcript set");
  std::set<std::string> reserved;
  if (!language.empty()) reserved.insert(language);
  return UnitInventory::from_symbols(UnitMode::kGrapheme, symbols, reserved);
}

/// Phone inventory covering every phone used by `lexicon`.
inline UnitInventory build_phone_inventory(const Lexicon& lexicon,
                                           const std::string& language = {}) {
  std::map<std::string, std::set<std::string>> symbols;
  for (const auto& [word, phones] : lexicon.entries()) {
    for (const auto& p : phones) {
      auto& langs = symbols[p];
      if (!language.empty()) langs.insert(language);
    }
  }
  if (symbols.empty()) throw Error("empty lexicon");
  std::set<std::string> reserved;
  if (!language.empty()) reserved.insert(language);
  return UnitInventory::from_symbols(UnitMode::kPhone, symbols, reserved);
}

/// Union of the parts in canonical order; origin languages are unioned.
inline UnitInventory merge_inventories(const std::vector<UnitInventory>& parts) {
  if (parts.empty()) throw Error("merge_inventories: empty list");
  const UnitMode mode = parts.front().mode();
  std::map<std::string, std::set<std::string>> symbols;
  std::set<std::string> reserved;
  for (const auto& part : parts) {
    if (part.mode() != mode) {
      throw Error("merge_inventories: mixed unit modes (grapheme and phone)");
    }
    for (const auto& u : part.units()) {
      if (u.kind == UnitKind::kBlank || u.kind == UnitKind::kWordBoundary) {
        reserved.insert(u.languages.begin(), u.languages.end());
        continue;
      }
      symbols[u.symbol].insert(u.languages.begin(), u.languages.end());
    }
  }
  return UnitInventory::from_symbols(mode, symbols, reserved);
}

/// Transcript -> unit ids. Words are joined by the word-boundary id; the
/// boundary is never emitted at utterance edges. Phone mode requires a lexicon.
inline std::vector<int> tokenize(std::string_view transcript, const UnitInventory& inventory,
                                 const Lexicon* lexicon = nullptr) {
  const std::string norm = text::normalize(transcript);
  const std::vector<std::string> words = text::split_words(norm);
  if (words.empty()) throw Error("empty transcript");
  std::vector<int> ids;
  if (inventory.mode() == UnitMode::kGrapheme) {
    const std::u32string cps = text::to_u32(norm);
    bool pending_boundary = false;
    for (std::size_t pos = 0; pos < cps.size(); ++pos) {
      if (text::is_space(cps[pos])) {
        pending_boundary = !ids.empty();
        continue;
      }
      if (pending_boundary) {
        ids.push_back(kWordBoundaryId);
        pending_boundary = false;
      }
      const std::string sym = text::to_utf8(cps[pos]);
      auto id = inventory.find(sym);
      if (!id || *id == kBlankId || *id == kWordBoundaryId) {
        throw Error("unknown character '" + sym + "' at position " + std::to_string(pos));
      }
      ids.push_back(*id);
    }
    return ids;
  }
  if (lexicon == nullptr) throw Error("phone-mode tokenization requires a lexicon");
  for (std::size_t w = 0; w < words.size(); ++w) {
    const auto* phones = lexicon->find(words[w]);
    if (phones == nullptr) {
      throw Error("unknown word '" + words[w] + "' at position " + std::to_string(w));
    }
    if (w > 0) ids.push_back(kWordBoundaryId);
    for (const auto& p : *phones) {
      auto id = inventory.find(p);
      if (!id || *id == kBlankId || *id == kWordBoundaryId) {
        throw Error("phone '" + p + "' of word '" + words[w] + "' at position " +
                    std::to_string(w) + " is not in the inventory");
      }
      ids.push_back(*id);
    }
  }
  return ids;
}

/// Unit ids -> display string. Grapheme mode concatenates characters with a
/// space per word boundary. Phone mode space-joins phones and writes the
/// boundary symbol between words so that the output stays scoreable.
inline std::string detokenize(std::span<const int> ids, const UnitInventory& inventory) {
  std::string out;
  const bool phone = inventory.mode() == UnitMode::kPhone;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const Unit& u = inventory.unit(ids[i]);
    if (u.kind == UnitKind::kBlank) {
      throw Error("blank id at position " + std::to_string(i) + " cannot be detokenized");
    }
    if (u.kind == UnitKind::kWordBoundary) {
      out += phone ? (out.empty() ? u.symbol : " " + u.symbol) : " ";
      continue;
    }
    if (phone && !out.empty()) out += ' ';
    out += u.symbol;
  }
  return out;
}

}  // namespace ctcpoly

#endif  // CTCPOLY_UNITSET_HPP_
