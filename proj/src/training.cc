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

#include "singvc/training.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "singvc/checkpoint.h"

namespace singvc {

using nlohmann::json;

namespace {

// Batches are cut from pools of this many batches after sorting by length.
constexpr size_t kPoolBatches = 4;

uint64_t EpochSeed(uint64_t seed, long epoch) {
  // splitmix64 finalizer over (seed, epoch).
  uint64_t z = seed * 0x9E3779B97F4A7C15ULL + static_cast<uint64_t>(epoch) +
               0xD1B54A32D192ED03ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

template <typename T>
void Shuffle(std::vector<T>* v, Rng* rng) {
  for (size_t i = v->size(); i > 1; --i) {
    std::swap((*v)[i - 1], (*v)[rng->Below(i)]);
  }
}

ModelConfig WithSpeakers(ModelConfig config, size_t speakers) {
  config.num_speakers = static_cast<int>(speakers);
  return config;
}

std::string Join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) out += (out.empty() ? "" : ", ") + p;
  return out;
}

}  // namespace

void TrainConfig::Validate() const {
  if (!(base_lr > 0.0)) throw ConfigError("train.base_lr must be positive");
  if (total_steps < 1) throw ConfigError("train.total_steps must be >= 1");
  if (warmup_steps < 0 || warmup_steps > total_steps) {
    throw ConfigError("train.warmup_steps must lie in [0, total_steps]");
  }
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) {
    throw ConfigError("train.adam_beta1 must lie in [0, 1)");
  }
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("train.adam_beta2 must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) {
    throw ConfigError("train.adam_epsilon must be positive");
  }
  if (!(grad_clip_norm >= 0.0)) {
    throw ConfigError("train.grad_clip_norm must be non-negative");
  }
  if (!(kind_weights.speech >= 0.0) || !(kind_weights.singing >= 0.0) ||
      kind_weights.speech + kind_weights.singing <= 0.0) {
    throw ConfigError(
        "train.speech_weight and train.singing_weight must be non-negative "
        "and not both zero");
  }
  if (eval_every < 0) throw ConfigError("train.eval_every must be >= 0");
  if (checkpoint_every < 0) {
    throw ConfigError("train.checkpoint_every must be >= 0");
  }
}

double LrSchedule(long step, const TrainConfig& config) {
  if (step < 1) throw ValidationError("lr schedule: step must be >= 1");
  if (config.warmup_steps <= 0) return config.base_lr;
  return config.base_lr *
         std::min(static_cast<double>(step) / config.warmup_steps, 1.0);
}

double ClipGradNorm(ad::ParameterSet* params, double max_norm) {
  double sq = 0.0;
  for (const ad::Parameter* p : std::as_const(*params).All()) {
    if (p->trainable && p->grad.size() > 0) sq += p->grad.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (ad::Parameter* p : params->All()) {
      if (p->trainable && p->grad.size() > 0) p->grad *= scale;
    }
  }
  return norm;
}

void AdamUpdate(ad::ParameterSet* params, TrainState* state, double lr,
                const TrainConfig& config) {
  auto all = params->All();
  if (state->adam_m.empty()) {
    for (const ad::Parameter* p : all) {
      state->adam_m.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      state->adam_v.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (state->adam_m.size() != all.size()) {
    throw ValidationError("optimizer state does not match the parameters");
  }
  // `state->step` is the number of completed updates before this one.
  const double t = static_cast<double>(state->step + 1);
  const double c1 = 1.0 - std::pow(config.adam_beta1, t);
  const double c2 = 1.0 - std::pow(config.adam_beta2, t);
  for (size_t i = 0; i < all.size(); ++i) {
    ad::Parameter& p = *all[i];
    if (!p.trainable) continue;
    Matrix& m = state->adam_m[i];
    Matrix& v = state->adam_v[i];
    if (p.grad.size() > 0) {
      m = config.adam_beta1 * m + (1.0 - config.adam_beta1) * p.grad;
      v = config.adam_beta2 * v +
          (1.0 - config.adam_beta2) * p.grad.cwiseAbs2();
    } else {
      m *= config.adam_beta1;
      v *= config.adam_beta2;
    }
    p.value.array() -= lr * (m.array() / c1) /
                       ((v.array() / c2).sqrt() + config.adam_epsilon);
  }
}

std::string StepMetrics::ToJsonLine() const {
  return json{{"step", step},       {"lr", lr},         {"loss", loss},
              {"l1_post", l1_post}, {"l1_pre", l1_pre}, {"l2", l2},
              {"grad_norm", grad_norm}}
      .dump();
}

std::string EvalMetrics::ToJson() const {
  return json{{"mel_l1", mel_l1},
              {"frames", frames},
              {"per_kind", per_kind},
              {"per_speaker", per_speaker},
              {"per_utterance", per_utterance}}
      .dump(2);
}

EvalMetrics Evaluate(const Model& model, const MelNormalizer& normalizer,
                     const std::vector<std::string>& speakers,
                     const std::vector<Example>& examples) {
  if (examples.empty()) throw ValidationError("evaluation set is empty");
  const PhonemeInventory inventory;
  // Inference passes only read the parameters.
  auto* params = const_cast<ad::ParameterSet*>(&model.params());
  struct Sum {
    double abs = 0.0;
    long frames = 0;
  };
  std::map<std::string, Sum> kinds, per_speaker;
  Sum total;
  EvalMetrics out;
  for (const Example& ex : examples) {
    const auto it =
        std::find(speakers.begin(), speakers.end(), ex.utterance.speaker_id);
    if (it == speakers.end()) {
      throw ValidationError("utterance '" + ex.utterance.id +
                            "': speaker '" + ex.utterance.speaker_id +
                            "' is not in the checkpoint (known: " +
                            Join(speakers) + ")");
    }
    ModelInput in = MakeModelInput(ex, inventory, normalizer);
    in.speaker = static_cast<int>(it - speakers.begin());
    // A batch of one has no padding rows.
    const Batch batch = MakeBatch({in}, RowVector::Zero(normalizer.mean.size()));
    ad::Tape tape(false);
    const nn::Pass pass{&tape, params, false, nullptr};
    const ForwardResult result = model.Forward(pass, batch, true);
    const Matrix pred = normalizer.Denormalize(result.PostMel(0));
    const double abs = (pred - ex.features.mel.frames).cwiseAbs().sum();
    const long frames = pred.rows();
    out.per_utterance[ex.utterance.id] = abs / pred.size();
    for (Sum* s : {&total, &kinds[KindName(ex.utterance.kind)],
                   &per_speaker[ex.utterance.speaker_id]}) {
      s->abs += abs;
      s->frames += frames;
    }
  }
  const double bins = static_cast<double>(normalizer.mean.size());
  out.frames = total.frames;
  out.mel_l1 = total.abs / (total.frames * bins);
  for (const auto& [k, s] : kinds) out.per_kind[k] = s.abs / (s.frames * bins);
  for (const auto& [k, s] : per_speaker) {
    out.per_speaker[k] = s.abs / (s.frames * bins);
  }
  return out;
}

EvalMetrics Evaluate(const Checkpoint& checkpoint,
                     const std::vector<Example>& examples) {
  const Model model = ModelFromCheckpoint(checkpoint);
  return Evaluate(model, checkpoint.normalizer, checkpoint.speakers, examples);
}

std::map<std::string, SpeakerF0Profile> BuildF0Profiles(
    const std::vector<Example>& examples) {
  std::map<std::string, SpeakerF0Profile> out;
  for (const Example& ex : examples) {
    try {
      const double mean = VowelMeanF0(ex.utterance, ex.features.f0);
      out[ex.utterance.speaker_id].means.push_back(mean);
    } catch (const ValidationError&) {
      // No voiced vowel frame: the utterance says nothing about pitch range.
    }
  }
  return out;
}

void RequireJointCoverage(const std::vector<Example>& examples) {
  bool speech = false, singing = false;
  for (const Example& ex : examples) {
    (ex.utterance.kind == UtteranceKind::kSpeech ? speech : singing) = true;
  }
  if (!speech || !singing) {
    throw ValidationError(
        std::string("joint training needs both speech and singing data; "
                    "the corpus has no ") +
        (speech ? "singing" : "speech") + " utterances");
  }
}

Trainer::Trainer(std::vector<Example> train_set,
                 std::vector<std::string> speakers, ModelConfig model_config,
                 TrainConfig train_config, FeatureOptions features)
    : train_set_(std::move(train_set)),
      speakers_(std::move(speakers)),
      config_(train_config),
      features_(std::move(features)),
      model_(WithSpeakers(model_config, speakers_.size()), train_config.seed),
      rng_(EpochSeed(train_config.seed, -1)) {
  config_.Validate();
  if (train_set_.empty()) throw ValidationError("training set is empty");
  std::vector<const Matrix*> mels;
  for (const Example& ex : train_set_) mels.push_back(&ex.features.mel.frames);
  normalizer_ = MelNormalizer::Fit(mels);
  Prepare();
}

Trainer::Trainer(std::vector<Example> train_set, const Checkpoint& checkpoint)
    : train_set_(std::move(train_set)),
      speakers_(checkpoint.speakers),
      config_(checkpoint.train_config),
      features_(checkpoint.features),
      normalizer_(checkpoint.normalizer),
      model_(ModelFromCheckpoint(checkpoint)),
      state_(checkpoint.state) {
  config_.Validate();
  if (train_set_.empty()) throw ValidationError("training set is empty");
  if (!state_.rng_state.empty()) rng_.Deserialize(state_.rng_state);
  Prepare();
}

void Trainer::Prepare() {
  const PhonemeInventory inventory;
  if (normalizer_.mean.size() != model_.config().mel_bins) {
    throw ConfigError("model.mel_bins does not match the feature width");
  }
  for (Example& ex : train_set_) {
    const auto it =
        std::find(speakers_.begin(), speakers_.end(), ex.utterance.speaker_id);
    if (it == speakers_.end()) {
      throw ValidationError("utterance '" + ex.utterance.id + "': speaker '" +
                            ex.utterance.speaker_id +
                            "' is not registered (known: " + Join(speakers_) +
                            ")");
    }
    ex.speaker = static_cast<int>(it - speakers_.begin());
  }
  profiles_ = BuildF0Profiles(train_set_);
  inputs_.clear();
  for (const Example& ex : train_set_) {
    inputs_.push_back(MakeModelInput(ex, inventory, normalizer_));
  }
  pad_row_ = normalizer_.FloorRow(features_.frame.log_floor);
  if (state_.adam_m.empty()) {
    for (const ad::Parameter* p : std::as_const(model_.params()).All()) {
      state_.adam_m.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      state_.adam_v.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
}

std::vector<std::vector<size_t>> Trainer::EpochBatches(long epoch) const {
  Rng rng(EpochSeed(config_.seed, epoch));
  const size_t n = train_set_.size();
  std::vector<double> weights(n);
  for (size_t i = 0; i < n; ++i) {
    weights[i] = config_.kind_weights.For(train_set_[i].utterance.kind);
  }
  const bool uniform = std::all_of(weights.begin(), weights.end(),
                                   [&](double w) { return w == weights[0]; });
  std::vector<size_t> order(n);
  if (uniform) {
    std::iota(order.begin(), order.end(), 0);
    Shuffle(&order, &rng);
  } else {
    // Draws with replacement proportional to the kind weight.
    std::vector<double> cumulative(n);
    std::partial_sum(weights.begin(), weights.end(), cumulative.begin());
    for (size_t i = 0; i < n; ++i) {
      const double u = rng.Uniform() * cumulative.back();
      order[i] = std::min<size_t>(
          std::upper_bound(cumulative.begin(), cumulative.end(), u) -
              cumulative.begin(),
          n - 1);
    }
  }
  const size_t batch = static_cast<size_t>(config_.batch_size);
  const size_t pool = batch * kPoolBatches;
  std::vector<std::vector<size_t>> batches;
  for (size_t begin = 0; begin < n; begin += pool) {
    std::vector<size_t> chunk(order.begin() + begin,
                              order.begin() + std::min(n, begin + pool));
    std::stable_sort(chunk.begin(), chunk.end(), [&](size_t a, size_t b) {
      return inputs_[a].NumFrames() < inputs_[b].NumFrames();
    });
    for (size_t b = 0; b < chunk.size(); b += batch) {
      batches.emplace_back(chunk.begin() + b,
                           chunk.begin() + std::min(chunk.size(), b + batch));
    }
  }
  Shuffle(&batches, &rng);
  return batches;
}

const std::vector<std::vector<size_t>>& Trainer::CurrentEpoch() {
  if (cached_epoch_ != state_.epoch) {
    cached_batches_ = EpochBatches(state_.epoch);
    cached_epoch_ = state_.epoch;
  }
  return cached_batches_;
}

StepMetrics Trainer::Step() {
  if (state_.cursor >= static_cast<long>(CurrentEpoch().size())) {
    ++state_.epoch;
    state_.cursor = 0;
  }
  const std::vector<size_t>& indices = CurrentEpoch()[state_.cursor];
  std::vector<ModelInput> items;
  for (size_t i : indices) items.push_back(inputs_[i]);
  const Batch batch = MakeBatch(items, pad_row_);

  const long step = state_.step + 1;
  const double lr = LrSchedule(step, config_);
  ad::ParameterSet& params = model_.params();
  params.ZeroGrad();
  ad::Tape tape(true);
  const nn::Pass pass{&tape, &params, true, &rng_};
  const ForwardResult result = model_.Forward(pass, batch, true);
  const LossBreakdown loss = model_.ComputeLoss(
      pass, result.pre, result.post, Model::PackedTargets(batch));
  if (!std::isfinite(loss.total_value)) {
    std::vector<std::string> ids;
    for (size_t i : indices) ids.push_back(train_set_[i].utterance.id);
    throw Error("non-finite loss at step " + std::to_string(step) +
                " (epoch " + std::to_string(state_.epoch) + ", batch " +
                std::to_string(state_.cursor) + ": " + Join(ids) + ")");
  }
  tape.Backward(loss.total);
  StepMetrics m;
  m.grad_norm = ClipGradNorm(&params, config_.grad_clip_norm);
  AdamUpdate(&params, &state_, lr, config_);
  state_.step = step;
  ++state_.cursor;
  m.step = step;
  m.lr = lr;
  m.loss = loss.total_value;
  m.l1_post = loss.l1_post;
  m.l1_pre = loss.l1_pre;
  m.l2 = loss.l2;
  return m;
}

void Trainer::Run(std::ostream* metrics_log, long max_steps,
                  const std::function<void(const StepMetrics&)>& on_step) {
  const long target =
      max_steps > 0 ? state_.step + max_steps : config_.total_steps;
  while (state_.step < target) {
    const StepMetrics m = Step();
    if (metrics_log != nullptr) *metrics_log << m.ToJsonLine() << '\n';
    if (on_step) on_step(m);
    if (config_.eval_every > 0 && !eval_set_.empty() &&
        m.step % config_.eval_every == 0) {
      const EvalMetrics e = EvaluateOn(eval_set_);
      if (e.mel_l1 < state_.best_eval) {
        state_.best_eval = e.mel_l1;
        state_.best_step = m.step;
      }
      if (metrics_log != nullptr) {
        *metrics_log << json{{"step", m.step}, {"eval_mel_l1", e.mel_l1},
                             {"eval_per_kind", e.per_kind}}
                            .dump()
                     << '\n';
      }
    }
    if (config_.checkpoint_every > 0 && !checkpoint_path_.empty() &&
        m.step % config_.checkpoint_every == 0) {
      SaveCheckpoint(MakeCheckpoint(), checkpoint_path_);
    }
    if (metrics_log != nullptr) metrics_log->flush();
  }
}

Checkpoint Trainer::MakeCheckpoint() const {
  Checkpoint c;
  c.model_config = model_.config();
  c.train_config = config_;
  c.features = features_;
  c.features.cache_dir.clear();
  c.speakers = speakers_;
  c.normalizer = normalizer_;
  c.f0_profiles = profiles_;
  c.params = model_.params();
  c.state = state_;
  c.state.rng_state = rng_.Serialize();
  return c;
}

EvalMetrics Trainer::EvaluateOn(const std::vector<Example>& examples) const {
  return Evaluate(model_, normalizer_, speakers_, examples);
}

}  // namespace singvc
