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

// Cache layout per utterance:
//   <id>.mel.f32 <id>.f0.f32 <id>.rmse.f32 <id>.pos.f32   little-endian float
//   <id>.meta.json                                          shapes + versions
// The sidecar is written last and acts as the commit marker.

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "singvc/corpus.h"
#include "singvc/wav.h"

namespace singvc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double RoundToFloat(double v) { return static_cast<double>(static_cast<float>(v)); }

void RoundRecord(FeatureRecord* r) {
  Matrix& m = r->mel.frames;
  for (long i = 0; i < m.size(); ++i) m.data()[i] = RoundToFloat(m.data()[i]);
  for (double& v : r->f0.values) v = RoundToFloat(v);
  for (double& v : r->rmse.values) v = RoundToFloat(v);
  for (double& v : r->positions.values) v = RoundToFloat(v);
}

std::string OptionsDigest(const FeatureOptions& o) {
  std::ostringstream out;
  out.precision(17);
  out << o.frame.Hash() << "|" << o.f0.fmin << "," << o.f0.fmax << ","
      << o.f0.voicing_threshold << "," << o.f0.octave_tolerance << ","
      << o.f0.median_filter;
  return out.str();
}

void WriteAtomic(const fs::path& path, const std::string& bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

std::string EncodeF32(const double* data, long n) {
  static_assert(sizeof(float) == 4);
  std::string bytes(static_cast<size_t>(n) * 4, '\0');
  for (long i = 0; i < n; ++i) {
    const float f = static_cast<float>(data[i]);
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int b = 0; b < 4; ++b) {
      bytes[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
  }
  return bytes;
}

// Returns false when the file is missing or has the wrong size.
bool DecodeF32(const fs::path& path, long n, double* out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (static_cast<long>(bytes.size()) != n * 4) return false;
  for (long i = 0; i < n; ++i) {
    uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<uint32_t>(static_cast<unsigned char>(bytes[i * 4 + b]))
              << (8 * b);
    }
    float f;
    std::memcpy(&f, &bits, 4);
    out[i] = f;
  }
  return true;
}

fs::path TrackPath(const fs::path& dir, const std::string& id,
                   const std::string& track) {
  return dir / (id + "." + track + ".f32");
}

bool TryLoad(const fs::path& dir, const Utterance& u,
             const FeatureOptions& options, FeatureRecord* record) {
  std::ifstream in(dir / (u.id + ".meta.json"));
  if (!in) return false;
  json meta;
  try {
    meta = json::parse(in);
    if (meta.at("version").get<int>() != kFeatureCacheVersion) return false;
    if (meta.at("config").get<std::string>() != OptionsDigest(options)) {
      return false;
    }
    if (meta.at("durations").get<std::vector<int>>() != u.durations) {
      return false;
    }
    const long t = meta.at("frames").get<long>();
    const long bins = meta.at("mel_bins").get<long>();
    if (t < 1 || bins != options.frame.mel_bins) return false;
    record->mel.config = options.frame;
    record->mel.frames.resize(t, bins);
    record->f0.values.resize(t);
    record->rmse.values.resize(t);
    record->positions.values.resize(t);
    return DecodeF32(TrackPath(dir, u.id, "mel"), t * bins,
                     record->mel.frames.data()) &&
           DecodeF32(TrackPath(dir, u.id, "f0"), t, record->f0.values.data()) &&
           DecodeF32(TrackPath(dir, u.id, "rmse"), t,
                     record->rmse.values.data()) &&
           DecodeF32(TrackPath(dir, u.id, "pos"), t,
                     record->positions.values.data());
  } catch (const json::exception&) {
    return false;
  }
}

void Store(const fs::path& dir, const Utterance& u,
           const FeatureOptions& options, const FeatureRecord& r) {
  const long t = r.NumFrames();
  // Drop a stale sidecar first so a crash mid-write never leaves a valid
  // marker next to half-written tracks.
  std::error_code ec;
  fs::remove(dir / (u.id + ".meta.json"), ec);
  WriteAtomic(TrackPath(dir, u.id, "mel"),
              EncodeF32(r.mel.frames.data(), r.mel.frames.size()));
  WriteAtomic(TrackPath(dir, u.id, "f0"), EncodeF32(r.f0.values.data(), t));
  WriteAtomic(TrackPath(dir, u.id, "rmse"),
              EncodeF32(r.rmse.values.data(), t));
  WriteAtomic(TrackPath(dir, u.id, "pos"),
              EncodeF32(r.positions.values.data(), t));
  json meta = {{"version", kFeatureCacheVersion},
               {"config", OptionsDigest(options)},
               {"frame_hash", options.frame.Hash()},
               {"frames", t},
               {"mel_bins", r.mel.frames.cols()},
               {"durations", u.durations},
               {"tracks", {"mel", "f0", "rmse", "pos"}}};
  WriteAtomic(dir / (u.id + ".meta.json"), meta.dump(2));
}

}  // namespace

FeatureRecord ExtractFeatures(const Utterance& utterance, const AudioClip& clip,
                              const FeatureOptions& options) {
  FeatureRecord r;
  r.utterance_id = utterance.id;
  r.mel = ComputeMelSpectrogram(clip, options.frame);
  r.f0 = EstimateF0(clip, options.frame, options.f0);
  r.rmse = ComputeRmse(clip, options.frame);
  return r;
}

std::vector<Example> FeaturizeCorpus(const Corpus& corpus,
                                     const FeatureOptions& options,
                                     FeaturizeStats* stats) {
  options.frame.Validate();
  options.f0.Validate(options.frame.sample_rate);
  const bool cached = !options.cache_dir.empty();
  const fs::path dir(options.cache_dir);
  if (cached) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create cache dir " + dir.string());
  }
  FeaturizeStats local;
  std::vector<Example> out;
  out.reserve(corpus.utterances.size());
  for (const Utterance& u : corpus.utterances) {
    Example ex;
    ex.speaker = corpus.speakers.Index(u.speaker_id);
    FeatureRecord record;
    if (cached && TryLoad(dir, u, options, &record)) {
      // Stored tracks are already reconciled against these durations; the
      // reconciled durations are re-derived from the stored frame count.
      record.utterance_id = u.id;
      CheckedUtterance checked = ValidateUtterance(u, record);
      checked.features.positions = record.positions;
      ex.utterance = std::move(checked.utterance);
      ex.features = std::move(checked.features);
      ++local.loaded;
    } else {
      const AudioClip clip =
          ReadWav(corpus.AudioPath(u), options.frame.sample_rate);
      CheckedUtterance checked =
          ValidateUtterance(u, ExtractFeatures(u, clip, options));
      RoundRecord(&checked.features);
      if (cached) Store(dir, u, options, checked.features);
      ex.utterance = std::move(checked.utterance);
      ex.features = std::move(checked.features);
      ++local.extracted;
    }
    out.push_back(std::move(ex));
  }
  if (stats != nullptr) {
    stats->extracted += local.extracted;
    stats->loaded += local.loaded;
  }
  return out;
}

FeatureRecord LoadCachedFeatures(const std::string& meta_path) {
  const fs::path meta_file(meta_path);
  std::ifstream in(meta_file);
  if (!in) throw IoError("cannot read " + meta_path);
  const std::string name = meta_file.filename().string();
  const std::string suffix = ".meta.json";
  if (name.size() <= suffix.size() || !name.ends_with(suffix)) {
    throw IoError(meta_path + " is not a feature sidecar");
  }
  FeatureRecord record;
  record.utterance_id = name.substr(0, name.size() - suffix.size());
  const fs::path dir = meta_file.parent_path();
  try {
    const json meta = json::parse(in);
    if (meta.at("version").get<int>() != kFeatureCacheVersion) {
      throw IoError(meta_path + ": unsupported cache version");
    }
    const long t = meta.at("frames").get<long>();
    const long bins = meta.at("mel_bins").get<long>();
    if (t < 1 || bins < 1) throw IoError(meta_path + ": empty record");
    record.mel.frames.resize(t, bins);
    record.mel.config.mel_bins = static_cast<int>(bins);
    record.f0.values.resize(t);
    record.rmse.values.resize(t);
    record.positions.values.resize(t);
    const std::string& id = record.utterance_id;
    if (!DecodeF32(TrackPath(dir, id, "mel"), t * bins,
                   record.mel.frames.data()) ||
        !DecodeF32(TrackPath(dir, id, "f0"), t, record.f0.values.data()) ||
        !DecodeF32(TrackPath(dir, id, "rmse"), t, record.rmse.values.data()) ||
        !DecodeF32(TrackPath(dir, id, "pos"), t,
                   record.positions.values.data())) {
      throw IoError(meta_path + ": missing or truncated track file");
    }
  } catch (const json::exception& e) {
    throw IoError("malformed " + meta_path + ": " + e.what());
  }
  return record;
}

}  // namespace singvc
