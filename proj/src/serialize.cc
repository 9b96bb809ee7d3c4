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

#include "singvc/serialize.h"

#include <set>

namespace singvc {

using nlohmann::json;

namespace {

template <typename F>
void Fields(FrameConfig& c, F&& f) {
  f("sample_rate", c.sample_rate);
  f("hop", c.hop);
  f("window", c.window);
  f("fft_size", c.fft_size);
  f("mel_bins", c.mel_bins);
  f("fmin", c.fmin);
  f("fmax", c.fmax);
  f("log_floor", c.log_floor);
}

template <typename F>
void Fields(F0Config& c, F&& f) {
  f("fmin", c.fmin);
  f("fmax", c.fmax);
  f("voicing_threshold", c.voicing_threshold);
  f("octave_tolerance", c.octave_tolerance);
  f("median_filter", c.median_filter);
}

template <typename F>
void Fields(ModelConfig& c, F&& f) {
  f("num_phonemes", c.num_phonemes);
  f("num_speakers", c.num_speakers);
  f("phoneme_embed_dim", c.phoneme_embed_dim);
  f("speaker_embed_dim", c.speaker_embed_dim);
  f("encoder_out_dim", c.encoder_out_dim);
  f("fused_dim", c.fused_dim);
  f("decoder_rnn_dims", c.decoder_rnn_dims);
  f("attention_dim", c.attention_dim);
  f("reduction_factor", c.reduction_factor);
  f("attention_window", c.attention_window);
  f("prenet_dims", c.prenet_dims);
  f("prenet_dropout", c.prenet_dropout);
  f("l2_coefficient", c.l2_coefficient);
  f("mel_bins", c.mel_bins);
  f("cbhg_bank_size", c.cbhg_bank_size);
  f("cbhg_channels", c.cbhg_channels);
  f("cbhg_highway_layers", c.cbhg_highway_layers);
}

template <typename F>
void Fields(TrainConfig& c, F&& f) {
  f("base_lr", c.base_lr);
  f("warmup_steps", c.warmup_steps);
  f("total_steps", c.total_steps);
  f("batch_size", c.batch_size);
  f("seed", c.seed);
  f("adam_beta1", c.adam_beta1);
  f("adam_beta2", c.adam_beta2);
  f("adam_epsilon", c.adam_epsilon);
  f("grad_clip_norm", c.grad_clip_norm);
  f("speech_weight", c.kind_weights.speech);
  f("singing_weight", c.kind_weights.singing);
  f("eval_every", c.eval_every);
  f("checkpoint_every", c.checkpoint_every);
}

template <typename T>
json Write(const T& c) {
  json j = json::object();
  T copy = c;
  Fields(copy, [&](const char* key, auto& value) { j[key] = value; });
  return j;
}

template <typename T>
void Read(const json& j, const std::string& where, T* c) {
  if (!j.is_object()) throw ConfigError(where + " config must be an object");
  std::set<std::string> known;
  Fields(*c, [&](const char* key, auto&) { known.insert(key); });
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) {
      throw ConfigError("unknown " + where + " config key '" + it.key() + "'");
    }
  }
  Fields(*c, [&](const char* key, auto& value) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(value);
    } catch (const json::exception& e) {
      throw ConfigError("bad value for " + where + " config key '" + key +
                        "': " + e.what());
    }
  });
}

}  // namespace

json ToJson(const FrameConfig& c) { return Write(c); }
json ToJson(const F0Config& c) { return Write(c); }
json ToJson(const ModelConfig& c) { return Write(c); }
json ToJson(const TrainConfig& c) { return Write(c); }

void FromJson(const json& j, const std::string& where, FrameConfig* c) {
  Read(j, where, c);
}
void FromJson(const json& j, const std::string& where, F0Config* c) {
  Read(j, where, c);
}
void FromJson(const json& j, const std::string& where, ModelConfig* c) {
  Read(j, where, c);
}
void FromJson(const json& j, const std::string& where, TrainConfig* c) {
  Read(j, where, c);
}

}  // namespace singvc
