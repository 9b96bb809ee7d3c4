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

#include "singvc/checkpoint.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "singvc/serialize.h"

namespace singvc {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'S', 'V', 'C', 'K', 'P', 'T', '\0', '\0'};

uint64_t Fnv1a(const char* data, size_t n) {
  uint64_t h = 1469598103934665603ULL;
  for (size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ULL;
  }
  return h;
}

void PutU64(std::string* out, uint64_t v) {
  for (int b = 0; b < 8; ++b) out->push_back(static_cast<char>(v >> (8 * b)));
}

uint64_t GetU64(const char* p) {
  uint64_t v = 0;
  for (int b = 0; b < 8; ++b) {
    v |= static_cast<uint64_t>(static_cast<unsigned char>(p[b])) << (8 * b);
  }
  return v;
}

void PutDoubles(std::string* out, const double* data, long n) {
  for (long i = 0; i < n; ++i) {
    uint64_t bits;
    std::memcpy(&bits, &data[i], 8);
    PutU64(out, bits);
  }
}

class Reader {
 public:
  Reader(const std::string& bytes, size_t begin, size_t end)
      : bytes_(bytes), pos_(begin), end_(end) {}

  void Doubles(double* out, long n) {
    if (pos_ + static_cast<size_t>(n) * 8 > end_) {
      throw IoError("checkpoint payload is truncated");
    }
    for (long i = 0; i < n; ++i) {
      const uint64_t bits = GetU64(bytes_.data() + pos_);
      std::memcpy(&out[i], &bits, 8);
      pos_ += 8;
    }
  }
  Matrix Read(long rows, long cols) {
    if (rows < 0 || cols < 0) throw IoError("checkpoint has a bad shape");
    Matrix m(rows, cols);
    Doubles(m.data(), m.size());
    return m;
  }
  bool done() const { return pos_ == end_; }

 private:
  const std::string& bytes_;
  size_t pos_, end_;
};

}  // namespace

std::string ModelConfigHash(const ModelConfig& config) {
  const std::string text = ToJson(config).dump();
  std::ostringstream hex;
  hex << std::hex << Fnv1a(text.data(), text.size());
  return hex.str();
}

int Checkpoint::SpeakerIndex(const std::string& name) const {
  for (size_t i = 0; i < speakers.size(); ++i) {
    if (speakers[i] == name) return static_cast<int>(i);
  }
  std::string known;
  for (const auto& s : speakers) known += (known.empty() ? "" : ", ") + s;
  throw ValidationError("unknown speaker '" + name + "' (known: " + known +
                        ")");
}

void SaveCheckpoint(const Checkpoint& ckpt, const std::string& path) {
  json header;
  header["model_config"] = ToJson(ckpt.model_config);
  header["model_config_hash"] = ModelConfigHash(ckpt.model_config);
  header["train_config"] = ToJson(ckpt.train_config);
  header["frame_config"] = ToJson(ckpt.features.frame);
  header["f0_config"] = ToJson(ckpt.features.f0);
  header["speakers"] = ckpt.speakers;
  json profiles = json::object();
  for (const auto& [name, p] : ckpt.f0_profiles) profiles[name] = p.means;
  header["f0_profiles"] = profiles;
  header["normalizer_bins"] = ckpt.normalizer.mean.size();
  json params = json::array();
  for (const ad::Parameter* p : ckpt.params.All()) {
    params.push_back({{"name", p->name},
                      {"rows", p->value.rows()},
                      {"cols", p->value.cols()},
                      {"decay", p->decay},
                      {"trainable", p->trainable}});
  }
  header["params"] = params;
  json buffers = json::array();
  for (const std::string& name : ckpt.params.BufferNames()) {
    const Matrix& b = ckpt.params.Buffer(name);
    buffers.push_back({{"name", name}, {"rows", b.rows()}, {"cols", b.cols()}});
  }
  header["buffers"] = buffers;
  const TrainState& s = ckpt.state;
  const bool has_adam = !s.adam_m.empty();
  if (has_adam && (s.adam_m.size() != ckpt.params.All().size() ||
                   s.adam_v.size() != s.adam_m.size())) {
    throw ValidationError("optimizer state does not match the parameters");
  }
  header["state"] = {{"step", s.step},
                     {"epoch", s.epoch},
                     {"cursor", s.cursor},
                     {"rng_state", s.rng_state},
                     {"best_step", s.best_step},
                     {"has_adam", has_adam}};

  std::string bytes(kMagic, kMagic + 8);
  for (int b = 0; b < 4; ++b) {
    bytes.push_back(static_cast<char>(kCheckpointVersion >> (8 * b)));
  }
  const std::string header_text = header.dump();
  PutU64(&bytes, header_text.size());
  bytes += header_text;
  PutDoubles(&bytes, ckpt.normalizer.mean.data(), ckpt.normalizer.mean.size());
  PutDoubles(&bytes, ckpt.normalizer.stddev.data(),
             ckpt.normalizer.stddev.size());
  PutDoubles(&bytes, &s.best_eval, 1);
  for (const ad::Parameter* p : ckpt.params.All()) {
    PutDoubles(&bytes, p->value.data(), p->value.size());
  }
  for (const std::string& name : ckpt.params.BufferNames()) {
    const Matrix& b = ckpt.params.Buffer(name);
    PutDoubles(&bytes, b.data(), b.size());
  }
  if (has_adam) {
    for (const Matrix& m : s.adam_m) PutDoubles(&bytes, m.data(), m.size());
    for (const Matrix& v : s.adam_v) PutDoubles(&bytes, v.data(), v.size());
  }
  PutU64(&bytes, Fnv1a(bytes.data(), bytes.size()));

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing checkpoint " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + ec.message());
}

Checkpoint LoadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  if (bytes.size() < 28 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw IoError(path + " is not a checkpoint");
  }
  uint32_t version = 0;
  for (int b = 0; b < 4; ++b) {
    version |= static_cast<uint32_t>(static_cast<unsigned char>(bytes[8 + b]))
               << (8 * b);
  }
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint version " + std::to_string(version) +
                  " is not supported (expected " +
                  std::to_string(kCheckpointVersion) + ")");
  }
  const size_t body = bytes.size() - 8;
  if (GetU64(bytes.data() + body) != Fnv1a(bytes.data(), body)) {
    throw IoError("checkpoint " + path + " failed its checksum");
  }
  const uint64_t header_size = GetU64(bytes.data() + 12);
  if (20 + header_size > body) throw IoError("checkpoint header is truncated");

  Checkpoint ckpt;
  try {
    const json header = json::parse(bytes.substr(20, header_size));
    FromJson(header.at("model_config"), "model", &ckpt.model_config);
    if (header.at("model_config_hash").get<std::string>() !=
        ModelConfigHash(ckpt.model_config)) {
      throw IoError("checkpoint model config hash does not match its config");
    }
    FromJson(header.at("train_config"), "train", &ckpt.train_config);
    FromJson(header.at("frame_config"), "frame", &ckpt.features.frame);
    FromJson(header.at("f0_config"), "f0", &ckpt.features.f0);
    ckpt.speakers = header.at("speakers").get<std::vector<std::string>>();
    for (auto it = header.at("f0_profiles").begin();
         it != header.at("f0_profiles").end(); ++it) {
      ckpt.f0_profiles[it.key()].means = it.value().get<std::vector<double>>();
    }
    Reader reader(bytes, 20 + header_size, body);
    const long bins = header.at("normalizer_bins").get<long>();
    ckpt.normalizer.mean = reader.Read(1, bins).row(0);
    ckpt.normalizer.stddev = reader.Read(1, bins).row(0);
    reader.Doubles(&ckpt.state.best_eval, 1);
    for (const json& p : header.at("params")) {
      ad::Parameter& param = ckpt.params.Add(
          p.at("name").get<std::string>(),
          reader.Read(p.at("rows").get<long>(), p.at("cols").get<long>()),
          p.at("decay").get<bool>());
      param.trainable = p.at("trainable").get<bool>();
    }
    for (const json& b : header.at("buffers")) {
      ckpt.params.AddBuffer(
          b.at("name").get<std::string>(),
          reader.Read(b.at("rows").get<long>(), b.at("cols").get<long>()));
    }
    const json& state = header.at("state");
    ckpt.state.step = state.at("step").get<long>();
    ckpt.state.epoch = state.at("epoch").get<long>();
    ckpt.state.cursor = state.at("cursor").get<long>();
    ckpt.state.rng_state = state.at("rng_state").get<std::string>();
    ckpt.state.best_step = state.at("best_step").get<long>();
    if (state.at("has_adam").get<bool>()) {
      for (auto* moments : {&ckpt.state.adam_m, &ckpt.state.adam_v}) {
        for (const ad::Parameter* p : ckpt.params.All()) {
          moments->push_back(reader.Read(p->value.rows(), p->value.cols()));
        }
      }
    }
    if (!reader.done()) throw IoError("checkpoint has trailing payload");
  } catch (const json::exception& e) {
    throw IoError("checkpoint header is malformed: " + std::string(e.what()));
  } catch (const ConfigError& e) {
    throw IoError("checkpoint header is malformed: " + std::string(e.what()));
  }
  return ckpt;
}

Checkpoint LoadCheckpoint(const std::string& path,
                          const ModelConfig& expected) {
  Checkpoint ckpt = LoadCheckpoint(path);
  if (ModelConfigHash(ckpt.model_config) != ModelConfigHash(expected)) {
    throw ConfigError("checkpoint model config hash " +
                      ModelConfigHash(ckpt.model_config) +
                      " does not match the requested config " +
                      ModelConfigHash(expected));
  }
  return ckpt;
}

Model ModelFromCheckpoint(const Checkpoint& ckpt) {
  Model model(ckpt.model_config, 0);
  auto params = model.params().All();
  if (params.size() != ckpt.params.All().size()) {
    throw ValidationError("checkpoint parameter count does not match config");
  }
  for (ad::Parameter* p : params) {
    if (!ckpt.params.Contains(p->name)) {
      throw ValidationError("checkpoint lacks parameter " + p->name);
    }
    const ad::Parameter& src = ckpt.params.Get(p->name);
    if (src.value.rows() != p->value.rows() ||
        src.value.cols() != p->value.cols()) {
      throw ValidationError("checkpoint parameter " + p->name +
                            " has the wrong shape");
    }
    p->value = src.value;
    p->trainable = src.trainable;
  }
  for (const std::string& name : model.params().BufferNames()) {
    model.params().Buffer(name) = ckpt.params.Buffer(name);
  }
  return model;
}

}  // namespace singvc
