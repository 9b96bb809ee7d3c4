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

// Duration-informed acoustic model for joint speech/singing training.
//
//   phonemes -> embedding -> CBHG                       h (N x enc)
//   tanh(fc([h | speaker]))                             fused (N x F)
//   replicate row i durations[i] times                  e (T x F)
//   [e | f0 code (2) | rmse | position]                 e' (T x F+4)
//   prenet + windowed attention + GRU stack, r frames/step -> y' (T x mel)
//   y' + fc(CBHG(y'))                                   y_hat
//
// Sequences of a batch are packed row-wise (see autodiff.h). Every stage
// below works on the packed form; single-sequence calls are batches of one.

#ifndef SINGVC_MODEL_H_
#define SINGVC_MODEL_H_

#include <string>
#include <vector>

#include "singvc/corpus.h"
#include "singvc/layers.h"

namespace singvc {

struct ModelConfig {
  int num_phonemes = 10;
  int num_speakers = 1;
  int phoneme_embed_dim = 256;
  int speaker_embed_dim = 256;
  int encoder_out_dim = 256;  // two GRU directions of half this width
  int fused_dim = 256;
  std::vector<int> decoder_rnn_dims = {256, 256};
  int attention_dim = 256;
  int reduction_factor = 2;
  int attention_window = 10;
  std::vector<int> prenet_dims = {256, 128};
  double prenet_dropout = 0.5;
  double l2_coefficient = 1e-6;
  int mel_bins = 80;
  // Shared by the encoder and post-net CBHG stacks.
  int cbhg_bank_size = 8;
  int cbhg_channels = 128;
  int cbhg_highway_layers = 4;

  // Throws ConfigError naming the offending field.
  void Validate() const;
  int DecoderInputDim() const { return fused_dim + 4; }

  // Reduced widths for single-core desk runs; same topology.
  static ModelConfig Desk();

  bool operator==(const ModelConfig&) const = default;
};

// Per-bin standardization of log-mel targets.
struct MelNormalizer {
  RowVector mean;
  RowVector stddev;

  static MelNormalizer Fit(const std::vector<const Matrix*>& mels);
  static MelNormalizer Identity(int bins);
  Matrix Normalize(const Matrix& mel) const;
  Matrix Denormalize(const Matrix& mel) const;
  // Normalized value of a silent (floored) frame.
  RowVector FloorRow(double log_floor) const;
};

// Lower bound on a bin's standard deviation; silent bins are constant.
constexpr double kMinMelStddev = 1e-2;

// One utterance ready for the network. `target` may be empty at inference.
struct ModelInput {
  std::vector<int> phonemes;
  std::vector<int> durations;
  int speaker = 0;
  Matrix f0_code;  // T x 2
  Vector rmse;     // T
  Vector position; // T
  Matrix target;   // T x mel, normalized

  long NumFrames() const { return f0_code.rows(); }
};

// Builds the network input for an example; `f0_override` replaces the
// example's F0 track when non-null (conversion).
ModelInput MakeModelInput(const Example& example, const PhonemeInventory& inv,
                          const MelNormalizer& normalizer,
                          const F0Track* f0_override = nullptr);

// Frame-level tensors padded to a common length with an explicit mask.
// Padded rows hold the normalized log floor for targets and zeros for
// conditioning; they never reach the network.
struct Batch {
  std::vector<std::vector<int>> phonemes;
  std::vector<std::vector<int>> durations;
  std::vector<int> speakers;
  std::vector<Matrix> conditioning;  // T_max x 4: f0 code, rmse, position
  std::vector<Matrix> targets;       // T_max x mel (empty at inference)
  std::vector<long> lengths;

  size_t size() const { return lengths.size(); }
  long MaxLength() const;
  // B x T_max, 1 for valid frames.
  Matrix Mask() const;
};

// Pads targets with `target_pad` (the normalized log floor) up to `pad_to`
// frames, or to the longest item when `pad_to` is 0.
Batch MakeBatch(const std::vector<ModelInput>& items,
                const RowVector& target_pad, long pad_to = 0);

// Replicates row i of `states` durations[i] times.
Matrix StateExpand(const Matrix& states, const std::vector<int>& durations);

struct LossBreakdown {
  ad::Var total;
  double total_value = 0.0;
  double l1_post = 0.0;
  double l1_pre = 0.0;
  double l2 = 0.0;  // already multiplied by the coefficient
};

struct ForwardResult {
  ad::Var pre;   // packed y'
  ad::Var post;  // packed y_hat
  std::vector<ad::Segment> segments;

  Matrix PreMel(size_t item) const;
  Matrix PostMel(size_t item) const;
};

// Attention windows of every decoder step, indexed [step][item].
using AttentionTrace = std::vector<std::vector<ad::AttentionWindow>>;

class Model {
 public:
  explicit Model(const ModelConfig& config, uint64_t seed = 1);
  Model(const Model& other) = default;
  Model& operator=(const Model& other) = default;

  const ModelConfig& config() const { return config_; }
  ad::ParameterSet& params() { return params_; }
  const ad::ParameterSet& params() const { return params_; }

  // Stages. `pass.params` must point at params() or a set with equal layout.

  // Packed sum(N) x encoder_out_dim.
  ad::Var Encode(const nn::Pass& pass,
                 const std::vector<std::vector<int>>& phonemes) const;
  // Rows of the speaker table, one per row of the packed phone sequence.
  ad::Var SpeakerRows(const nn::Pass& pass,
                      const std::vector<int>& speakers,
                      const std::vector<long>& rows_per_item) const;
  // tanh(fc([h | m])) row by row; `speaker_rows` matches `h` in row count.
  ad::Var FuseSpeaker(const nn::Pass& pass, ad::Var h,
                      ad::Var speaker_rows) const;
  static ad::Var StateExpand(ad::Var fused,
                             const std::vector<std::vector<int>>& durations);
  static ad::Var AssembleDecoderInput(ad::Var expanded, ad::Var f0_code,
                                      ad::Var rmse, ad::Var position);
  // Windowed attention for one query row over a single sequence.
  ad::Var LocalAttention(const nn::Pass& pass, ad::Var query, ad::Var states,
                         long t,
                         ad::AttentionWindow* weights = nullptr) const;
  // Packed e' with per-item lengths. `targets` (normalized, one per item)
  // switches on teacher forcing. Returns y' per item.
  std::vector<ad::Var> Decode(const nn::Pass& pass, ad::Var decoder_input,
                              const std::vector<long>& lengths,
                              const std::vector<const Matrix*>* targets,
                              AttentionTrace* trace = nullptr) const;
  ad::Var Postnet(const nn::Pass& pass, ad::Var pre,
                  const std::vector<ad::Segment>& segments) const;
  LossBreakdown ComputeLoss(const nn::Pass& pass, ad::Var pre, ad::Var post,
                            const Matrix& target) const;

  // Full composition. Only valid (unmasked) rows are processed.
  ForwardResult Forward(const nn::Pass& pass, const Batch& batch,
                        bool teacher_forcing,
                        AttentionTrace* trace = nullptr) const;
  // Packed valid target rows of a batch.
  static Matrix PackedTargets(const Batch& batch);

 private:
  ModelConfig config_;
  ad::ParameterSet params_;
  nn::Cbhg encoder_cbhg_;
  nn::Dense fuse_;
  std::vector<nn::Dense> prenet_;
  nn::Dense attention_query_, attention_key_;
  std::vector<nn::Gru> decoder_rnns_;
  nn::Dense frame_proj_;
  nn::Cbhg post_cbhg_;
  nn::Dense post_proj_;
};

}  // namespace singvc

#endif  // SINGVC_MODEL_H_
