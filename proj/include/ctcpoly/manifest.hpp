// ctcpoly/manifest.hpp
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

// JSON-lines utterance manifests and the ingestion filters applied to them.
// One object per line:
//   {"utterance_id": "...", "source": "...", "transcript": "...",
//    "language": "...", "duration": 1.23}

#ifndef CTCPOLY_MANIFEST_HPP_
#define CTCPOLY_MANIFEST_HPP_

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ctcpoly/common.hpp"
#include "ctcpoly/unitset.hpp"
#include "json.hpp"

namespace ctcpoly {

struct ManifestEntry {
  std::string utterance_id;
  std::string source;  // audio or feature file, relative to the manifest
  std::string transcript;
  std::string language;
  double duration = 0.0;  // seconds

  bool operator==(const ManifestEntry&) const = default;
};

inline nlohmann::json to_json(const ManifestEntry& e) {
  return nlohmann::json{{"utterance_id", e.utterance_id}, {"source", e.source},
                        {"transcript", e.transcript},     {"language", e.language},
                        {"duration", e.duration}};
}

inline ManifestEntry parse_manifest_line(const std::string& line, std::size_t lineno) {
  const std::string where = "manifest line " + std::to_string(lineno) + ": ";
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(where + "malformed JSON (" + e.what() + ")");
  }
  if (!j.is_object()) throw Error(where + "expected a JSON object");
  ManifestEntry e;
  auto str = [&](const char* key, std::string& out) {
    if (!j.contains(key) || !j[key].is_string()) throw Error(where + "missing string field '" + key + "'");
    out = j[key].get<std::string>();
  };
  str("utterance_id", e.utterance_id);
  str("source", e.source);
  str("transcript", e.transcript);
  str("language", e.language);
  if (!j.contains("duration") || !j["duration"].is_number()) {
    throw Error(where + "missing numeric field 'duration'");
  }
  e.duration = j["duration"].get<double>();
  if (e.utterance_id.empty()) throw Error(where + "empty utterance_id");
  if (!(e.duration >= 0.0)) throw Error(where + "negative duration");
  return e;
}

inline std::vector<ManifestEntry> read_manifest(std::istream& is) {
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_manifest_line(line, lineno));
  }
  return out;
}

inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read manifest " + path);
  return read_manifest(is);
}

inline void write_manifest(const std::vector<ManifestEntry>& entries, std::ostream& os) {
  for (const auto& e : entries) os << to_json(e).dump() << '\n';
}

inline void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write manifest " + path);
  write_manifest(entries, os);
}

/// Ingestion rules. Defaults keep utterances of at least one second with
/// transcripts of at most 639 symbols and drop noise-only utterances.
struct IngestFilters {
  double min_duration = 1.0;
  std::size_t max_symbols = 639;
  std::vector<std::string> noise_markers{"<noise>"};
};

struct IngestCounters {
  std::size_t read = 0;
  std::size_t kept = 0;
  std::size_t too_short = 0;
  std::size_t too_long = 0;
  std::size_t noise_only = 0;

  std::size_t dropped() const { return too_short + too_long + noise_only; }
};

/// Transcript made only of noise markers (or nothing at all).
inline bool is_noise_only(const std::string& transcript, const IngestFilters& f) {
  for (const auto& w : text::split_words(transcript)) {
    if (std::find(f.noise_markers.begin(), f.noise_markers.end(), w) == f.noise_markers.end()) {
      return false;
    }
  }
  return true;
}

/// Filters `entries` and sorts the survivors by utterance id. The first
/// failing rule (duration, length, noise) is the one counted.
inline std::vector<ManifestEntry> ingest(std::vector<ManifestEntry> entries, const IngestFilters& f,
                                         IngestCounters* counters = nullptr) {
  IngestCounters c;
  std::vector<ManifestEntry> kept;
  for (auto& e : entries) {
    ++c.read;
    if (e.duration < f.min_duration) {
      ++c.too_short;
    } else if (text::length(text::normalize(e.transcript)) > f.max_symbols) {
      ++c.too_long;
    } else if (is_noise_only(e.transcript, f)) {
      ++c.noise_only;
    } else {
      kept.push_back(std::move(e));
    }
  }
  std::stable_sort(kept.begin(), kept.end(), [](const ManifestEntry& a, const ManifestEntry& b) {
    return a.utterance_id < b.utterance_id;
  });
  for (std::size_t i = 1; i < kept.size(); ++i) {
    if (kept[i].utterance_id == kept[i - 1].utterance_id) {
      throw Error("manifest: duplicate utterance_id '" + kept[i].utterance_id + "'");
    }
  }
  c.kept = kept.size();
  if (counters) *counters = c;
  return kept;
}

inline std::vector<ManifestEntry> ingest(const std::string& path, const IngestFilters& f,
                                         IngestCounters* counters = nullptr) {
  return ingest(read_manifest(path), f, counters);
}

/// Resolves an entry's source against the manifest's directory.
inline std::string resolve_source(const std::string& manifest_path, const ManifestEntry& e) {
  const std::filesystem::path src(e.source);
  if (src.is_absolute()) return src.string();
  return (std::filesystem::path(manifest_path).parent_path() / src).string();
}

}  // namespace ctcpoly

#endif  // CTCPOLY_MANIFEST_HPP_
