// Copyright (c) 2026 The singvc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "singvc/corpus.h"

#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "json.hpp"

namespace singvc {

namespace fs = std::filesystem;
using nlohmann::json;

PhonemeInventory::PhonemeInventory()
    : symbols_{"a", "e", "i", "o", "u", "p", "t", "k", "s", "f"},
      vowel_{true, true, true, true, true, false, false, false, false, false} {}

int PhonemeInventory::Id(const std::string& symbol) const {
  for (size_t i = 0; i < symbols_.size(); ++i) {
    if (symbols_[i] == symbol) return static_cast<int>(i);
  }
  return -1;
}

const std::string& PhonemeInventory::Symbol(int id) const {
  return symbols_.at(id);
}

bool PhonemeInventory::IsVowel(int id) const { return vowel_.at(id); }

std::string KindName(UtteranceKind kind) {
  return kind == UtteranceKind::kSpeech ? "speech" : "singing";
}

UtteranceKind ParseKind(const std::string& name) {
  if (name == "speech") return UtteranceKind::kSpeech;
  if (name == "singing") return UtteranceKind::kSinging;
  throw ValidationError("unknown utterance kind '" + name +
                        "' (expected speech or singing)");
}

int Utterance::NumFrames() const {
  return std::accumulate(durations.begin(), durations.end(), 0);
}

std::vector<int> Utterance::PhonemeIds(
    const PhonemeInventory& inventory) const {
  std::vector<int> ids;
  ids.reserve(phonemes.size());
  for (const Phoneme& p : phonemes) {
    const int id = inventory.Id(p.symbol);
    if (id < 0) throw ValidationError("unknown phoneme '" + p.symbol + "'");
    ids.push_back(id);
  }
  return ids;
}

std::vector<bool> Utterance::VowelFrames() const {
  std::vector<bool> out;
  out.reserve(NumFrames());
  for (size_t i = 0; i < phonemes.size(); ++i) {
    out.insert(out.end(), durations[i], phonemes[i].is_vowel);
  }
  return out;
}

int SpeakerRegistry::Register(const std::string& name) {
  auto it = index_.find(name);
  if (it != index_.end()) return it->second;
  const int id = static_cast<int>(names_.size());
  names_.push_back(name);
  index_[name] = id;
  return id;
}

int SpeakerRegistry::Index(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    std::string known;
    for (const auto& n : names_) known += (known.empty() ? "" : ", ") + n;
    throw ValidationError("unknown speaker '" + name + "' (known: " + known +
                          ")");
  }
  return it->second;
}

bool SpeakerRegistry::Contains(const std::string& name) const {
  return index_.count(name) > 0;
}

std::string Corpus::AudioPath(const Utterance& u) const {
  fs::path p(u.audio_path);
  if (p.is_absolute() || root.empty()) return p.string();
  return (fs::path(root) / p).string();
}

Utterance ParseManifestLine(const std::string& line, int line_number,
                            const PhonemeInventory& inventory) {
  const std::string where = "manifest line " + std::to_string(line_number);
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw ValidationError(where + ": " + e.what());
  }
  Utterance u;
  try {
    u.id = j.at("utt_id").get<std::string>();
    u.speaker_id = j.at("speaker").get<std::string>();
    u.kind = ParseKind(j.at("kind").get<std::string>());
    u.audio_path = j.at("audio").get<std::string>();
    bool any_f0 = false;
    for (const json& ph : j.at("phones")) {
      const std::string sym = ph.at("sym").get<std::string>();
      const int id = inventory.Id(sym);
      if (id < 0) {
        throw ValidationError("unknown phoneme symbol '" + sym + "'");
      }
      const bool vowel = ph.at("vowel").get<bool>();
      if (vowel != inventory.IsVowel(id)) {
        throw ValidationError("vowel flag of '" + sym +
                              "' disagrees with the inventory");
      }
      const int dur = ph.at("dur_frames").get<int>();
      if (dur < 1) {
        throw ValidationError("duration of '" + sym + "' must be >= 1, got " +
                              std::to_string(dur));
      }
      u.phonemes.push_back({sym, vowel});
      u.durations.push_back(dur);
      if (ph.contains("f0")) any_f0 = true;
      u.truth_f0.push_back(ph.value("f0", 0.0));
    }
    if (!any_f0) u.truth_f0.clear();
  } catch (const json::exception& e) {
    throw ValidationError(where + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(where + ": " + e.what());
  }
  if (u.id.empty()) throw ValidationError(where + ": empty utt_id");
  return u;
}

std::string FormatManifestLine(const Utterance& u) {
  json phones = json::array();
  for (size_t i = 0; i < u.phonemes.size(); ++i) {
    json ph = {{"sym", u.phonemes[i].symbol},
               {"vowel", u.phonemes[i].is_vowel},
               {"dur_frames", u.durations[i]}};
    if (!u.truth_f0.empty()) ph["f0"] = u.truth_f0[i];
    phones.push_back(std::move(ph));
  }
  json j = {{"utt_id", u.id},
            {"speaker", u.speaker_id},
            {"kind", KindName(u.kind)},
            {"audio", u.audio_path},
            {"phones", std::move(phones)}};
  return j.dump();
}

Corpus LoadManifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  Corpus corpus;
  corpus.root = fs::path(path).parent_path().string();
  std::set<std::string> seen;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Utterance u = ParseManifestLine(line, line_number, corpus.inventory);
    if (!seen.insert(u.id).second) {
      throw ValidationError("manifest line " + std::to_string(line_number) +
                            ": duplicate utterance id '" + u.id + "'");
    }
    corpus.speakers.Register(u.speaker_id);
    corpus.utterances.push_back(std::move(u));
  }
  return corpus;
}

void SaveManifest(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest " + path);
  for (const Utterance& u : corpus.utterances) {
    out << FormatManifestLine(u) << '\n';
  }
  if (!out) throw IoError("failed writing manifest " + path);
}

namespace {

template <typename V>
void FitLength(V* values, long length) {
  if (values->empty()) {
    values->assign(length, 0.0);
    return;
  }
  values->resize(length, values->back());
}

}  // namespace

CheckedUtterance ValidateUtterance(Utterance utterance,
                                   FeatureRecord features) {
  if (utterance.phonemes.size() != utterance.durations.size() ||
      utterance.phonemes.empty()) {
    throw ValidationError("utterance '" + utterance.id +
                          "' needs one duration per phoneme");
  }
  for (int d : utterance.durations) {
    if (d < 1) {
      throw ValidationError("utterance '" + utterance.id +
                            "' has a duration below 1");
    }
  }
  const long t = features.NumFrames();
  if (static_cast<long>(features.f0.values.size()) != t ||
      static_cast<long>(features.rmse.values.size()) != t) {
    throw ValidationError("utterance '" + utterance.id +
                          "' has tracks of different lengths");
  }
  const long sum = utterance.NumFrames();
  const long diff = t - sum;
  if (std::abs(diff) > kAlignmentTolerance) {
    throw AlignmentError("utterance '" + utterance.id + "': durations sum to " +
                         std::to_string(sum) + " frames but features have " +
                         std::to_string(t));
  }
  int& last = utterance.durations.back();
  if (last + diff >= 1) {
    last += static_cast<int>(diff);
  } else {
    // The last phone cannot shrink enough; stretch the tracks instead.
    const long target = sum;
    Matrix& mel = features.mel.frames;
    Matrix grown(target, mel.cols());
    const long keep = std::min(target, t);
    grown.topRows(keep) = mel.topRows(keep);
    for (long i = keep; i < target; ++i) grown.row(i) = mel.row(keep - 1);
    mel = std::move(grown);
    FitLength(&features.f0.values, target);
    FitLength(&features.rmse.values, target);
  }
  features.positions = PositionCodes(utterance.durations);
  features.utterance_id = utterance.id;
  return {std::move(utterance), std::move(features)};
}

}  // namespace singvc
