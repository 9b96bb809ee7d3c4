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

#ifndef SINGVC_TRAINING_H_
#define SINGVC_TRAINING_H_

#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "singvc/conversion.h"
#include "singvc/model.h"

namespace singvc {

struct TrainConfig {
  double base_lr = 1e-3;
  int warmup_steps = 500;
  int total_steps = 5000;
  int batch_size = 8;
  uint64_t seed = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double grad_clip_norm = 1.0;
  KindWeights kind_weights;
  // 0 disables the periodic action.
  int eval_every = 0;
  int checkpoint_every = 0;

  void Validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// base_lr * min(step / warmup_steps, 1); step counts from 1.
double LrSchedule(long step, const TrainConfig& config);

// Scales every gradient so the global L2 norm is at most `max_norm`;
// returns the norm before clipping.
double ClipGradNorm(ad::ParameterSet* params, double max_norm);

// Everything beyond the parameters that a resumed run needs.
struct TrainState {
  long step = 0;
  long epoch = 0;
  long cursor = 0;  // next batch inside the current epoch
  std::string rng_state;
  // Adam moments aligned with ParameterSet::All().
  std::vector<Matrix> adam_m;
  std::vector<Matrix> adam_v;
  double best_eval = std::numeric_limits<double>::infinity();
  long best_step = 0;
};

void AdamUpdate(ad::ParameterSet* params, TrainState* state, double lr,
                const TrainConfig& config);

struct StepMetrics {
  long step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double l1_post = 0.0;
  double l1_pre = 0.0;
  double l2 = 0.0;
  double grad_norm = 0.0;

  std::string ToJsonLine() const;
};

struct EvalMetrics {
  // Mean absolute log-mel error of y_hat over all frames and bins.
  double mel_l1 = 0.0;
  long frames = 0;
  std::map<std::string, double> per_kind;
  std::map<std::string, double> per_speaker;
  std::map<std::string, double> per_utterance;

  std::string ToJson() const;
};

struct Checkpoint;

// Teacher-forced evaluation in inference mode. Speakers are mapped through
// `speakers` (the checkpoint registry); unknown speakers and empty sets are
// errors.
EvalMetrics Evaluate(const Model& model, const MelNormalizer& normalizer,
                     const std::vector<std::string>& speakers,
                     const std::vector<Example>& examples);
EvalMetrics Evaluate(const Checkpoint& checkpoint,
                     const std::vector<Example>& examples);

// Vowel-mean F0 profile per speaker name over a set of examples; utterances
// without a voiced vowel frame are skipped.
std::map<std::string, SpeakerF0Profile> BuildF0Profiles(
    const std::vector<Example>& examples);

// Joint training needs at least one speaker with speech and one with singing
// data; throws ValidationError otherwise.
void RequireJointCoverage(const std::vector<Example>& examples);

class Trainer {
 public:
  // `speakers` is the registry the example speaker indices refer to.
  Trainer(std::vector<Example> train_set, std::vector<std::string> speakers,
          ModelConfig model_config, TrainConfig train_config,
          FeatureOptions features);
  // Continues from a checkpoint produced by a Trainer over the same data.
  Trainer(std::vector<Example> train_set, const Checkpoint& checkpoint);

  // One optimizer step. Throws Error naming the batch on a non-finite loss.
  StepMetrics Step();
  // Steps until `config().total_steps` (or `max_steps` more, if positive).
  // Metrics go to `metrics_log` as JSON lines when non-null.
  void Run(std::ostream* metrics_log = nullptr, long max_steps = 0,
           const std::function<void(const StepMetrics&)>& on_step = {});

  Checkpoint MakeCheckpoint() const;
  EvalMetrics EvaluateOn(const std::vector<Example>& examples) const;

  Model& model() { return model_; }
  const Model& model() const { return model_; }
  const MelNormalizer& normalizer() const { return normalizer_; }
  const TrainConfig& config() const { return config_; }
  const TrainState& state() const { return state_; }
  // Batches of the given epoch as indices into the training set.
  std::vector<std::vector<size_t>> EpochBatches(long epoch) const;

  // Optional held-out set for periodic evaluation and a path for periodic
  // checkpoints.
  void SetEvalSet(std::vector<Example> eval_set) {
    eval_set_ = std::move(eval_set);
  }
  void SetCheckpointPath(std::string path) {
    checkpoint_path_ = std::move(path);
  }

 private:
  void Prepare();
  const std::vector<std::vector<size_t>>& CurrentEpoch();

  std::vector<Example> train_set_;
  std::vector<std::string> speakers_;
  TrainConfig config_;
  FeatureOptions features_;
  MelNormalizer normalizer_;
  std::map<std::string, SpeakerF0Profile> profiles_;
  Model model_;
  TrainState state_;
  Rng rng_;
  std::vector<ModelInput> inputs_;
  RowVector pad_row_;
  std::vector<Example> eval_set_;
  std::string checkpoint_path_;
  long cached_epoch_ = -1;
  std::vector<std::vector<size_t>> cached_batches_;
};

}  // namespace singvc

#endif  // SINGVC_TRAINING_H_
