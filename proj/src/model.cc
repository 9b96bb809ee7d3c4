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

#include "singvc/model.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace singvc {

using ad::Segment;
using ad::Tape;
using ad::Var;

namespace {

void RequirePositive(int value, const char* field) {
  if (value < 1) {
    throw ConfigError(std::string("model config: ") + field +
                      " must be positive");
  }
}

Matrix NormalMatrix(long rows, long cols, double scale, Rng* rng) {
  Matrix m(rows, cols);
  for (long i = 0; i < m.size(); ++i) m.data()[i] = scale * rng->Normal();
  return m;
}

}  // namespace

void ModelConfig::Validate() const {
  RequirePositive(num_phonemes, "num_phonemes");
  RequirePositive(num_speakers, "num_speakers");
  RequirePositive(phoneme_embed_dim, "phoneme_embed_dim");
  RequirePositive(speaker_embed_dim, "speaker_embed_dim");
  RequirePositive(encoder_out_dim, "encoder_out_dim");
  RequirePositive(fused_dim, "fused_dim");
  RequirePositive(attention_dim, "attention_dim");
  RequirePositive(reduction_factor, "reduction_factor");
  RequirePositive(mel_bins, "mel_bins");
  RequirePositive(cbhg_bank_size, "cbhg_bank_size");
  RequirePositive(cbhg_channels, "cbhg_channels");
  if (attention_window < 0) {
    throw ConfigError("model config: attention_window must be >= 0");
  }
  if (cbhg_highway_layers < 0) {
    throw ConfigError("model config: cbhg_highway_layers must be >= 0");
  }
  if (encoder_out_dim % 2 != 0) {
    throw ConfigError("model config: encoder_out_dim must be even");
  }
  if (decoder_rnn_dims.empty() || prenet_dims.empty()) {
    throw ConfigError(
        "model config: decoder_rnn_dims and prenet_dims need >= 1 entry");
  }
  for (int d : decoder_rnn_dims) RequirePositive(d, "decoder_rnn_dims");
  for (int d : prenet_dims) RequirePositive(d, "prenet_dims");
  if (!(prenet_dropout >= 0.0 && prenet_dropout < 1.0)) {
    throw ConfigError("model config: prenet_dropout must be in [0, 1)");
  }
  if (!(l2_coefficient >= 0.0)) {
    throw ConfigError("model config: l2_coefficient must be >= 0");
  }
}

ModelConfig ModelConfig::Desk() {
  ModelConfig c;
  c.phoneme_embed_dim = 64;
  c.speaker_embed_dim = 64;
  c.encoder_out_dim = 64;
  c.fused_dim = 64;
  c.decoder_rnn_dims = {128, 128};
  c.attention_dim = 64;
  c.prenet_dims = {64, 32};
  c.cbhg_bank_size = 8;
  c.cbhg_channels = 32;
  c.cbhg_highway_layers = 4;
  return c;
}

MelNormalizer MelNormalizer::Fit(const std::vector<const Matrix*>& mels) {
  if (mels.empty()) throw ValidationError("cannot fit normalizer on no data");
  const long bins = mels[0]->cols();
  RowVector sum = RowVector::Zero(bins), sq = RowVector::Zero(bins);
  long n = 0;
  for (const Matrix* m : mels) {
    if (m->cols() != bins) throw ValidationError("mel width mismatch");
    sum += m->colwise().sum();
    sq += m->array().square().matrix().colwise().sum();
    n += m->rows();
  }
  MelNormalizer out;
  out.mean = sum / n;
  const RowVector var =
      (sq / n - out.mean.cwiseProduct(out.mean)).cwiseMax(0.0);
  out.stddev = var.cwiseSqrt().cwiseMax(kMinMelStddev);
  return out;
}

MelNormalizer MelNormalizer::Identity(int bins) {
  return {RowVector::Zero(bins), RowVector::Ones(bins)};
}

Matrix MelNormalizer::Normalize(const Matrix& mel) const {
  if (mel.cols() != mean.size()) throw ValidationError("mel width mismatch");
  return ((mel.rowwise() - mean).array().rowwise() / stddev.array()).matrix();
}

Matrix MelNormalizer::Denormalize(const Matrix& mel) const {
  if (mel.cols() != mean.size()) throw ValidationError("mel width mismatch");
  return ((mel.array().rowwise() * stddev.array()).matrix().rowwise() + mean);
}

RowVector MelNormalizer::FloorRow(double log_floor) const {
  return Normalize(Matrix::Constant(1, mean.size(), std::log(log_floor)))
      .row(0);
}

ModelInput MakeModelInput(const Example& example, const PhonemeInventory& inv,
                          const MelNormalizer& normalizer,
                          const F0Track* f0_override) {
  const FeatureRecord& f = example.features;
  const long t = f.NumFrames();
  const F0Track& f0 = f0_override != nullptr ? *f0_override : f.f0;
  if (static_cast<long>(f0.values.size()) != t ||
      static_cast<long>(f.rmse.values.size()) != t ||
      static_cast<long>(f.positions.values.size()) != t ||
      example.utterance.NumFrames() != t) {
    throw ValidationError("utterance '" + example.utterance.id +
                          "': tracks and durations disagree on length");
  }
  ModelInput in;
  in.phonemes = example.utterance.PhonemeIds(inv);
  in.durations = example.utterance.durations;
  in.speaker = example.speaker;
  in.f0_code = F0Conditioning(f0);
  in.rmse = Eigen::Map<const Vector>(f.rmse.values.data(), t);
  in.position = Eigen::Map<const Vector>(f.positions.values.data(), t);
  if (f.mel.frames.size() > 0) in.target = normalizer.Normalize(f.mel.frames);
  return in;
}

long Batch::MaxLength() const {
  return lengths.empty() ? 0 : *std::max_element(lengths.begin(), lengths.end());
}

Matrix Batch::Mask() const {
  const long tmax = conditioning.empty() ? 0 : conditioning[0].rows();
  Matrix mask = Matrix::Zero(static_cast<long>(size()), tmax);
  for (size_t b = 0; b < size(); ++b) mask.row(b).head(lengths[b]).setOnes();
  return mask;
}

Batch MakeBatch(const std::vector<ModelInput>& items,
                const RowVector& target_pad, long pad_to) {
  long tmax = 0;
  for (const ModelInput& in : items) tmax = std::max(tmax, in.NumFrames());
  if (pad_to != 0) {
    if (pad_to < tmax) throw ValidationError("pad_to shorter than an item");
    tmax = pad_to;
  }
  Batch batch;
  for (const ModelInput& in : items) {
    const long t = in.NumFrames();
    if (in.rmse.size() != t || in.position.size() != t ||
        (in.target.size() > 0 && in.target.rows() != t)) {
      throw ValidationError("model input tracks disagree on length");
    }
    batch.phonemes.push_back(in.phonemes);
    batch.durations.push_back(in.durations);
    batch.speakers.push_back(in.speaker);
    Matrix cond = Matrix::Zero(tmax, 4);
    cond.block(0, 0, t, 2) = in.f0_code;
    cond.block(0, 2, t, 1) = in.rmse;
    cond.block(0, 3, t, 1) = in.position;
    batch.conditioning.push_back(std::move(cond));
    if (in.target.size() > 0) {
      Matrix target(tmax, in.target.cols());
      target.topRows(t) = in.target;
      for (long i = t; i < tmax; ++i) target.row(i) = target_pad;
      batch.targets.push_back(std::move(target));
    }
    batch.lengths.push_back(t);
  }
  if (!batch.targets.empty() && batch.targets.size() != items.size()) {
    throw ValidationError("either every batch item has a target or none");
  }
  return batch;
}

Matrix StateExpand(const Matrix& states, const std::vector<int>& durations) {
  if (static_cast<long>(durations.size()) != states.rows()) {
    throw ValidationError("state_expand: one duration per state required");
  }
  long total = 0;
  for (int d : durations) {
    if (d < 1) throw ValidationError("state_expand: durations must be >= 1");
    total += d;
  }
  Matrix out(total, states.cols());
  long row = 0;
  for (long i = 0; i < states.rows(); ++i) {
    for (int k = 0; k < durations[i]; ++k) out.row(row++) = states.row(i);
  }
  return out;
}

Matrix ForwardResult::PreMel(size_t item) const {
  const Segment& s = segments.at(item);
  return pre.value().middleRows(s.begin, s.length);
}

Matrix ForwardResult::PostMel(size_t item) const {
  const Segment& s = segments.at(item);
  return post.value().middleRows(s.begin, s.length);
}

Model::Model(const ModelConfig& config, uint64_t seed) : config_(config) {
  config_.Validate();
  Rng rng(seed);
  const ModelConfig& c = config_;
  params_.Add("encoder/embedding",
              NormalMatrix(c.num_phonemes, c.phoneme_embed_dim, 0.3, &rng),
              false);
  nn::CbhgConfig enc;
  enc.input_dim = c.phoneme_embed_dim;
  enc.bank_size = c.cbhg_bank_size;
  enc.channels = c.cbhg_channels;
  enc.projection_dim = c.cbhg_channels;
  enc.highway_layers = c.cbhg_highway_layers;
  enc.highway_dim = c.cbhg_channels;
  enc.gru_dim = c.encoder_out_dim / 2;
  encoder_cbhg_ = nn::Cbhg(&params_, "encoder/cbhg", enc, &rng);

  Matrix speakers(c.num_speakers, c.speaker_embed_dim);
  for (long i = 0; i < speakers.size(); ++i) {
    speakers.data()[i] = rng.Uniform(-0.1, 0.1);
  }
  params_.Add("speaker/embedding", std::move(speakers), false);
  fuse_ = nn::Dense(&params_, "fusion", c.encoder_out_dim + c.speaker_embed_dim,
                    c.fused_dim, &rng);

  long in = c.mel_bins;
  for (size_t i = 0; i < c.prenet_dims.size(); ++i) {
    prenet_.emplace_back(&params_, "decoder/prenet" + std::to_string(i), in,
                         c.prenet_dims[i], &rng);
    in = c.prenet_dims[i];
  }
  const long top = c.decoder_rnn_dims.back();
  attention_query_ =
      nn::Dense(&params_, "decoder/attention/query", top, c.attention_dim, &rng);
  attention_key_ = nn::Dense(&params_, "decoder/attention/key",
                             c.DecoderInputDim(), c.attention_dim, &rng, false);
  params_.Add("decoder/attention/v",
              nn::GlorotUniform(1, c.attention_dim, &rng), true);
  params_.Add("decoder/attention/offset_bias",
              Matrix::Zero(1, 2 * c.attention_window + 1), false);
  in = c.prenet_dims.back() + c.DecoderInputDim();
  for (size_t i = 0; i < c.decoder_rnn_dims.size(); ++i) {
    decoder_rnns_.emplace_back(&params_, "decoder/gru" + std::to_string(i), in,
                               c.decoder_rnn_dims[i], &rng);
    in = c.decoder_rnn_dims[i];
  }
  frame_proj_ = nn::Dense(&params_, "decoder/frame_proj",
                          top + c.DecoderInputDim(),
                          static_cast<long>(c.reduction_factor) * c.mel_bins,
                          &rng);

  nn::CbhgConfig post = enc;
  post.input_dim = c.mel_bins;
  post.gru_dim = c.cbhg_channels;
  post_cbhg_ = nn::Cbhg(&params_, "postnet/cbhg", post, &rng);
  post_proj_ = nn::Dense(&params_, "postnet/residual", post.OutputDim(),
                         c.mel_bins, &rng);
}

Var Model::Encode(const nn::Pass& pass,
                  const std::vector<std::vector<int>>& phonemes) const {
  std::vector<long> ids, lengths;
  for (const auto& seq : phonemes) {
    if (seq.empty()) throw ValidationError("encode: empty phoneme sequence");
    for (int id : seq) {
      if (id < 0 || id >= config_.num_phonemes) {
        throw ValidationError("encode: phoneme id " + std::to_string(id) +
                              " outside inventory of " +
                              std::to_string(config_.num_phonemes));
      }
      ids.push_back(id);
    }
    lengths.push_back(static_cast<long>(seq.size()));
  }
  Var embedded = ad::GatherRows(pass.P("encoder/embedding"), ids);
  return encoder_cbhg_(pass, embedded, nn::PackSegments(lengths));
}

Var Model::SpeakerRows(const nn::Pass& pass, const std::vector<int>& speakers,
                       const std::vector<long>& rows_per_item) const {
  if (speakers.size() != rows_per_item.size()) {
    throw ValidationError("speaker_rows: one speaker per item required");
  }
  std::vector<long> index;
  for (size_t b = 0; b < speakers.size(); ++b) {
    if (speakers[b] < 0 || speakers[b] >= config_.num_speakers) {
      throw ValidationError("speaker index " + std::to_string(speakers[b]) +
                            " outside table of " +
                            std::to_string(config_.num_speakers));
    }
    index.insert(index.end(), rows_per_item[b], speakers[b]);
  }
  return ad::GatherRows(pass.P("speaker/embedding"), index);
}

Var Model::FuseSpeaker(const nn::Pass& pass, Var h, Var speaker_rows) const {
  if (h.cols() != config_.encoder_out_dim ||
      speaker_rows.cols() != config_.speaker_embed_dim ||
      h.rows() != speaker_rows.rows()) {
    throw ValidationError("fuse_speaker: dimension mismatch");
  }
  return ad::Tanh(fuse_(pass, ad::ConcatCols({h, speaker_rows})));
}

Var Model::StateExpand(Var fused,
                       const std::vector<std::vector<int>>& durations) {
  std::vector<long> index;
  long row = 0;
  for (const auto& seq : durations) {
    for (int d : seq) {
      if (d < 1) throw ValidationError("state_expand: durations must be >= 1");
      index.insert(index.end(), d, row);
      ++row;
    }
  }
  if (row != fused.rows()) {
    throw ValidationError("state_expand: one duration per state required");
  }
  return ad::GatherRows(fused, index);
}

Var Model::AssembleDecoderInput(Var expanded, Var f0_code, Var rmse,
                                Var position) {
  const long t = expanded.rows();
  if (f0_code.rows() != t || rmse.rows() != t || position.rows() != t ||
      f0_code.cols() != 2 || rmse.cols() != 1 || position.cols() != 1) {
    throw ValidationError("assemble_decoder_input: frame count mismatch");
  }
  return ad::ConcatCols({expanded, f0_code, rmse, position});
}

Var Model::LocalAttention(const nn::Pass& pass, Var query, Var states, long t,
                          ad::AttentionWindow* weights) const {
  std::vector<ad::AttentionWindow> windows;
  Var ctx = ad::LocalAttentionStep(
      attention_query_(pass, query), attention_key_(pass, states), states,
      pass.P("decoder/attention/v"), pass.P("decoder/attention/offset_bias"),
      {{0, states.rows()}}, t, config_.attention_window,
      weights != nullptr ? &windows : nullptr);
  if (weights != nullptr) *weights = windows[0];
  return ctx;
}

std::vector<Var> Model::Decode(const nn::Pass& pass, Var decoder_input,
                               const std::vector<long>& lengths,
                               const std::vector<const Matrix*>* targets,
                               AttentionTrace* trace) const {
  const ModelConfig& c = config_;
  const int r = c.reduction_factor;
  const long mel = c.mel_bins;
  const size_t batch = lengths.size();
  if (decoder_input.cols() != c.DecoderInputDim()) {
    throw ValidationError("decode: decoder input width mismatch");
  }
  if (targets != nullptr && targets->size() != batch) {
    throw ValidationError("decode: one target per item required");
  }
  const std::vector<Segment> segments = nn::PackSegments(lengths);
  if (segments.empty() ||
      segments.back().begin + segments.back().length != decoder_input.rows()) {
    throw ValidationError("decode: lengths do not cover the input");
  }
  std::vector<long> steps(batch);
  for (size_t b = 0; b < batch; ++b) {
    if (lengths[b] < 1) throw ValidationError("decode: empty sequence");
    if (targets != nullptr && ((*targets)[b]->rows() < lengths[b] ||
                               (*targets)[b]->cols() != mel)) {
      throw ValidationError("decode: target shape mismatch");
    }
    steps[b] = (lengths[b] + r - 1) / r;
  }
  // Longest first, so the sequences still running at any step are a prefix.
  std::vector<size_t> order(batch);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return steps[a] > steps[b]; });
  std::vector<Segment> sorted_segments;
  for (size_t b : order) sorted_segments.push_back(segments[b]);

  Tape& tape = *pass.tape;
  Var keys = attention_key_(pass, decoder_input);
  Var v = pass.P("decoder/attention/v");
  Var offset_bias = pass.P("decoder/attention/offset_bias");
  std::vector<Var> states;
  for (int d : c.decoder_rnn_dims) {
    states.push_back(tape.Constant(Matrix::Zero(static_cast<long>(batch), d)));
  }
  const long total_steps = steps[order[0]];
  if (trace != nullptr) trace->assign(total_steps, {});
  std::vector<Var> outputs;
  Var prev;
  long active = static_cast<long>(batch);
  for (long k = 0; k < total_steps; ++k) {
    while (active > 0 && steps[order[active - 1]] <= k) --active;
    if (states[0].rows() != active) {
      for (Var& s : states) s = ad::SliceRows(s, 0, active);
      prev = ad::SliceRows(prev, 0, active);
    }
    Var frame;
    if (k == 0) {
      frame = tape.Constant(Matrix::Zero(active, mel));
    } else if (targets != nullptr) {
      Matrix teacher(active, mel);
      for (long i = 0; i < active; ++i) {
        teacher.row(i) = (*targets)[order[i]]->row(r * k - 1);
      }
      frame = tape.Constant(std::move(teacher));
    } else {
      frame = ad::SliceCols(prev, (r - 1) * mel, mel);
    }
    Var x = frame;
    for (const nn::Dense& layer : prenet_) {
      x = ad::Relu(layer(pass, x));
      if (pass.training && c.prenet_dropout > 0.0) {
        const double keep = 1.0 - c.prenet_dropout;
        Matrix mask(x.rows(), x.cols());
        for (long i = 0; i < mask.size(); ++i) {
          mask.data()[i] = pass.rng->Uniform() < keep ? 1.0 / keep : 0.0;
        }
        x = ad::MaskMul(x, mask);
      }
    }
    std::vector<ad::AttentionWindow> windows;
    const std::vector<Segment> live(sorted_segments.begin(),
                                    sorted_segments.begin() + active);
    Var ctx = ad::LocalAttentionStep(attention_query_(pass, states.back()),
                                     keys, decoder_input, v, offset_bias,
                                     live, r * k,
                                     c.attention_window,
                                     trace != nullptr ? &windows : nullptr);
    if (trace != nullptr) {
      (*trace)[k].assign(batch, {});
      for (long i = 0; i < active; ++i) {
        (*trace)[k][order[i]] = std::move(windows[i]);
      }
    }
    x = ad::ConcatCols({x, ctx});
    for (size_t l = 0; l < decoder_rnns_.size(); ++l) {
      states[l] = decoder_rnns_[l].Step(
          pass, decoder_rnns_[l].InputProjection(pass, x), states[l]);
      x = states[l];
    }
    prev = frame_proj_(pass, ad::ConcatCols({x, ctx}));
    outputs.push_back(prev);
  }
  std::vector<Var> result(batch);
  for (size_t i = 0; i < batch; ++i) {
    const size_t b = order[i];
    result[b] = ad::CollectSteps(
        std::vector<Var>(outputs.begin(), outputs.begin() + steps[b]),
        static_cast<long>(i), r, lengths[b]);
  }
  return result;
}

Var Model::Postnet(const nn::Pass& pass, Var pre,
                   const std::vector<Segment>& segments) const {
  if (pre.cols() != config_.mel_bins) {
    throw ValidationError("postnet: input width mismatch");
  }
  return ad::Add(pre, post_proj_(pass, post_cbhg_(pass, pre, segments)));
}

LossBreakdown Model::ComputeLoss(const nn::Pass& pass, Var pre, Var post,
                                 const Matrix& target) const {
  if (pre.rows() != target.rows() || pre.cols() != target.cols() ||
      post.rows() != target.rows() || post.cols() != target.cols()) {
    throw ValidationError("compute_loss: shape mismatch");
  }
  LossBreakdown out;
  Var l1_post = ad::L1Mean(post, target);
  Var l1_pre = ad::L1Mean(pre, target);
  out.total = ad::Add(l1_post, l1_pre);
  out.l1_post = l1_post.value()(0, 0);
  out.l1_pre = l1_pre.value()(0, 0);
  if (config_.l2_coefficient > 0.0) {
    std::vector<Var> squares;
    for (ad::Parameter* p : pass.params->All()) {
      if (p->decay) squares.push_back(ad::SumSquares(pass.tape->Param(*p)));
    }
    Var sum = squares[0];
    for (size_t i = 1; i < squares.size(); ++i) sum = ad::Add(sum, squares[i]);
    Var l2 = ad::Scale(sum, config_.l2_coefficient);
    out.l2 = l2.value()(0, 0);
    out.total = ad::Add(out.total, l2);
  }
  out.total_value = out.total.value()(0, 0);
  return out;
}

ForwardResult Model::Forward(const nn::Pass& pass, const Batch& batch,
                             bool teacher_forcing,
                             AttentionTrace* trace) const {
  if (batch.size() == 0) throw ValidationError("forward: empty batch");
  if (teacher_forcing && batch.targets.size() != batch.size()) {
    throw ValidationError("forward: teacher forcing needs targets");
  }
  Tape& tape = *pass.tape;
  std::vector<long> phones, lengths = batch.lengths;
  for (const auto& p : batch.phonemes) phones.push_back(static_cast<long>(p.size()));
  for (size_t b = 0; b < batch.size(); ++b) {
    if (std::accumulate(batch.durations[b].begin(), batch.durations[b].end(),
                        0L) != lengths[b]) {
      throw ValidationError("forward: durations do not sum to the length");
    }
  }
  Var h = Encode(pass, batch.phonemes);
  Var fused = FuseSpeaker(pass, h, SpeakerRows(pass, batch.speakers, phones));
  Var expanded = StateExpand(fused, batch.durations);

  long total = 0;
  for (long t : lengths) total += t;
  Matrix cond(total, 4);
  std::vector<Matrix> valid_targets;
  long row = 0;
  for (size_t b = 0; b < batch.size(); ++b) {
    cond.middleRows(row, lengths[b]) = batch.conditioning[b].topRows(lengths[b]);
    row += lengths[b];
    if (teacher_forcing) {
      valid_targets.push_back(batch.targets[b].topRows(lengths[b]));
    }
  }
  Var decoder_input = AssembleDecoderInput(
      expanded, tape.Constant(cond.leftCols(2)), tape.Constant(cond.col(2)),
      tape.Constant(cond.col(3)));
  std::vector<const Matrix*> target_ptrs;
  for (const Matrix& m : valid_targets) target_ptrs.push_back(&m);
  std::vector<Var> pres =
      Decode(pass, decoder_input, lengths,
             teacher_forcing ? &target_ptrs : nullptr, trace);
  ForwardResult out;
  out.segments = nn::PackSegments(lengths);
  out.pre = pres.size() == 1 ? pres[0] : ad::ConcatRows(pres);
  out.post = Postnet(pass, out.pre, out.segments);
  return out;
}

Matrix Model::PackedTargets(const Batch& batch) {
  if (batch.targets.size() != batch.size()) {
    throw ValidationError("batch has no targets");
  }
  long total = 0;
  for (long t : batch.lengths) total += t;
  Matrix out(total, batch.targets.empty() ? 0 : batch.targets[0].cols());
  long row = 0;
  for (size_t b = 0; b < batch.size(); ++b) {
    out.middleRows(row, batch.lengths[b]) =
        batch.targets[b].topRows(batch.lengths[b]);
    row += batch.lengths[b];
  }
  return out;
}

}  // namespace singvc
