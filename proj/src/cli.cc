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

#include "singvc/cli.h"

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "CLI11.hpp"
#include "singvc/checkpoint.h"
#include "singvc/conversion.h"
#include "singvc/plot.h"
#include "singvc/run_config.h"
#include "singvc/vocoder.h"
#include "singvc/wav.h"

namespace singvc {

namespace fs = std::filesystem;

namespace {

// Bad or missing arguments discovered after parsing.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Applies a flag's value to the config only when it was given.
struct Overrides {
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig*)>>> items;

  template <typename T>
  void Add(CLI::App* app, const std::string& flag, const std::string& help,
           std::function<void(RunConfig*, const T&)> apply) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(flag, *value, help);
    items.push_back({opt, [value, apply](RunConfig* c) { apply(c, *value); }});
  }

  void Apply(RunConfig* c) const {
    for (const auto& [opt, fn] : items) {
      if (opt->count() > 0) fn(c);
    }
  }
};

// State shared by every subcommand: --config, --preset and the overrides.
struct Command {
  CLI::App* app = nullptr;
  std::string config_path;
  std::string preset;
  CLI::Option* preset_opt = nullptr;
  Overrides overrides;

  RunConfig Resolve() const {
    RunConfig c;
    nlohmann::json file = nlohmann::json::object();
    if (!config_path.empty()) file = ReadConfigFile(config_path);
    if (preset_opt != nullptr && preset_opt->count() > 0) {
      // The flag outranks a preset named in the file.
      if (file.is_object()) file.erase("preset");
      c.preset = preset;
      c.model = PresetModel(preset);
    }
    ApplyJson(file, &c);
    overrides.Apply(&c);
    c.Validate();
    return c;
  }
};

Command* NewCommand(CLI::App& root, const std::string& name,
                    const std::string& help,
                    std::vector<std::unique_ptr<Command>>* owned) {
  owned->push_back(std::make_unique<Command>());
  Command* cmd = owned->back().get();
  cmd->app = root.add_subcommand(name, help);
  cmd->app->add_option("--config", cmd->config_path,
                       "JSON run config; flags override its values");
  return cmd;
}

template <typename T>
using Setter = std::function<void(RunConfig*, const T&)>;

void AddPathFlag(Command* cmd, const std::string& flag, const std::string& help,
                 std::string RunPaths::*field) {
  cmd->overrides.Add<std::string>(
      cmd->app, flag, help,
      Setter<std::string>([field](RunConfig* c, const std::string& v) {
        c->paths.*field = v;
      }));
}

void Require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw UsageError(flag + " is required");
}

std::vector<Example> LoadExamples(const std::string& manifest,
                                  const FeatureOptions& features) {
  const Corpus corpus = LoadManifest(manifest);
  return FeaturizeCorpus(corpus, features);
}

// ---------------------------------------------------------------------------
// Subcommands.

int MakeToyCorpus(const RunConfig& c, std::ostream& out) {
  Require(c.paths.out, "--out");
  ToyCorpusSpec spec;
  spec.speakers = DefaultToySpeakers(c.toy.speakers);
  spec.utterances_per_speaker = c.toy.utterances;
  spec.sample_rate = c.frame.sample_rate;
  spec.hop = c.frame.hop;
  spec.seed = c.toy.seed;
  const Corpus corpus = GenerateToyCorpus(spec, c.paths.out);
  WriteRunConfig(c, c.paths.out);
  out << "wrote " << corpus.utterances.size() << " utterances to "
      << c.paths.out << "\n";
  return kExitOk;
}

int Featurize(const RunConfig& c, std::ostream& out) {
  Require(c.paths.manifest, "--manifest");
  Require(c.paths.cache_dir, "--cache-dir");
  const Corpus corpus = LoadManifest(c.paths.manifest);
  FeaturizeStats stats;
  FeaturizeCorpus(corpus, c.Features(), &stats);
  WriteRunConfig(c, c.paths.cache_dir);
  out << nlohmann::json{{"utterances", corpus.utterances.size()},
                        {"extracted", stats.extracted},
                        {"loaded", stats.loaded}}
             .dump()
      << "\n";
  return kExitOk;
}

int Train(const RunConfig& c, std::ostream& out) {
  Require(c.paths.manifest, "--manifest");
  Require(c.paths.out, "--out");
  const Corpus corpus = LoadManifest(c.paths.manifest);
  std::vector<Example> examples = FeaturizeCorpus(corpus, c.Features());
  if (c.joint) RequireJointCoverage(examples);

  const fs::path dir(c.paths.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string());
  WriteRunConfig(c, dir.string());
  const std::string ckpt_path = (dir / "checkpoint.ckpt").string();

  std::unique_ptr<Trainer> trainer;
  long max_steps = 0;
  if (!c.paths.resume.empty()) {
    const Checkpoint resume = LoadCheckpoint(c.paths.resume);
    trainer = std::make_unique<Trainer>(std::move(examples), resume);
    max_steps = c.train.total_steps - trainer->state().step;
    if (max_steps <= 0) {
      throw ValidationError("checkpoint is already at step " +
                            std::to_string(trainer->state().step) +
                            "; raise --total-steps to continue");
    }
  } else {
    trainer = std::make_unique<Trainer>(std::move(examples),
                                        corpus.speakers.names(), c.model,
                                        c.train, c.Features());
  }
  if (!c.paths.eval_manifest.empty()) {
    trainer->SetEvalSet(LoadExamples(c.paths.eval_manifest, c.Features()));
  }
  trainer->SetCheckpointPath(ckpt_path);

  std::ofstream log(dir / "metrics.jsonl", c.paths.resume.empty()
                                               ? std::ios::trunc
                                               : std::ios::app);
  if (!log) throw IoError("cannot write " + (dir / "metrics.jsonl").string());
  StepMetrics last;
  trainer->Run(&log, max_steps, [&](const StepMetrics& m) { last = m; });
  SaveCheckpoint(trainer->MakeCheckpoint(), ckpt_path);
  out << nlohmann::json{{"step", last.step},
                        {"loss", last.loss},
                        {"l1_post", last.l1_post},
                        {"checkpoint", ckpt_path}}
             .dump()
      << "\n";
  return kExitOk;
}

ConversionRequest BuildRequest(const RunConfig& c, const Checkpoint& ckpt) {
  Require(c.paths.annotation, "--annotation");
  Require(c.convert.speaker, "--speaker");
  const Corpus corpus = LoadManifest(c.paths.annotation);
  const Utterance* source = nullptr;
  if (c.convert.utterance.empty()) {
    if (corpus.utterances.size() != 1) {
      throw UsageError("--annotation holds " +
                       std::to_string(corpus.utterances.size()) +
                       " utterances; pick one with --utt");
    }
    source = &corpus.utterances.front();
  } else {
    for (const Utterance& u : corpus.utterances) {
      if (u.id == c.convert.utterance) source = &u;
    }
    if (source == nullptr) {
      throw ValidationError("utterance '" + c.convert.utterance +
                            "' is not in " + c.paths.annotation);
    }
  }
  const std::string wav =
      c.paths.source_wav.empty() ? corpus.AudioPath(*source) : c.paths.source_wav;
  const AudioClip clip = ReadWav(wav, ckpt.features.frame.sample_rate);
  CheckedUtterance checked = ValidateUtterance(
      *source, ExtractFeatures(*source, clip, ckpt.features));

  ConversionRequest r;
  r.utterance = std::move(checked.utterance);
  r.features = std::move(checked.features);
  r.target_speaker = c.convert.speaker;
  r.key_shift = c.convert.key_shift;
  if (c.convert.nu == "auto") {
    r.nu_mode = NuMode::kAuto;
  } else if (c.convert.nu == "none") {
    r.nu_mode = NuMode::kNone;
  } else {
    size_t used = 0;
    try {
      r.nu = std::stod(c.convert.nu, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != c.convert.nu.size()) {
      throw UsageError("--nu must be auto, none or a number, got '" +
                       c.convert.nu + "'");
    }
    r.nu_mode = NuMode::kManual;
  }
  r.Validate();
  return r;
}

int ConvertCommand(const RunConfig& c, std::ostream& out, std::ostream& err) {
  Require(c.paths.checkpoint, "--checkpoint");
  Require(c.paths.out, "--out");
  const Checkpoint ckpt = LoadCheckpoint(c.paths.checkpoint);
  const ConversionRequest request = BuildRequest(c, ckpt);
  const ConversionResult result = Convert(request, ckpt);
  GriffinLimConfig gl;
  gl.iterations = c.convert.griffin_lim_iterations;
  const AudioClip audio = Vocode(result.mel, gl);

  const fs::path wav(c.paths.out);
  const std::string dir = wav.parent_path().string();
  std::error_code ec;
  if (!dir.empty()) fs::create_directories(dir, ec);
  WriteWav(wav.string(), audio);
  const std::string stem = wav.stem().string();
  const fs::path diag = wav.parent_path() / (stem + ".diagnostics.json");
  std::ofstream diag_out(diag);
  diag_out << result.diagnostics.ToJson() << "\n";
  if (!diag_out) throw IoError("cannot write " + diag.string());
  WriteRunConfig(c, dir, stem + ".run_config.json");
  for (const std::string& w : result.diagnostics.warnings) {
    err << "warning: " << w << "\n";
  }
  out << nlohmann::json{{"wav", wav.string()},
                        {"diagnostics", diag.string()},
                        {"nu", result.diagnostics.nu},
                        {"frames", result.diagnostics.frames}}
             .dump()
      << "\n";
  return kExitOk;
}

int EvalCommand(const RunConfig& c, std::ostream& out) {
  Require(c.paths.checkpoint, "--checkpoint");
  Require(c.paths.manifest, "--manifest");
  const Checkpoint ckpt = LoadCheckpoint(c.paths.checkpoint);
  FeatureOptions features = ckpt.features;
  features.cache_dir = c.paths.cache_dir;
  const std::string metrics =
      Evaluate(ckpt, LoadExamples(c.paths.manifest, features)).ToJson();
  out << metrics << "\n";
  if (!c.paths.out.empty()) {
    const fs::path path(c.paths.out);
    const std::string dir = path.parent_path().string();
    std::error_code ec;
    if (!dir.empty()) fs::create_directories(dir, ec);
    std::ofstream file(path);
    file << metrics << "\n";
    if (!file) throw IoError("cannot write " + path.string());
    WriteRunConfig(c, dir, path.stem().string() + ".run_config.json");
  }
  return kExitOk;
}

int PlotCommand(const RunConfig& c, std::ostream& out) {
  Require(c.paths.out, "--out");
  const bool features = !c.paths.features.empty();
  const bool diagnostics = !c.paths.diagnostics.empty();
  if (features == diagnostics) {
    throw UsageError("give exactly one of --features or --diagnostics");
  }
  std::vector<std::string> written;
  if (features) {
    const FeatureRecord record = LoadCachedFeatures(c.paths.features);
    written = PlotFeatureRecord(record, c.paths.out, record.utterance_id);
  } else {
    const std::string stem = fs::path(c.paths.diagnostics).stem().string();
    written = PlotConversionDiagnostics(c.paths.diagnostics, c.paths.out,
                                        fs::path(stem).stem().string());
  }
  WriteRunConfig(c, c.paths.out, "plot.run_config.json");
  for (const std::string& w : written) out << w << "\n";
  return kExitOk;
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err) {
  CLI::App app("Singing voice conversion with shared speaker embeddings",
               "singvc");
  app.require_subcommand(1);
  std::vector<std::unique_ptr<Command>> owned;

  Command* toy = NewCommand(app, "make-toy-corpus",
                            "Synthesize a toy speech and singing corpus", &owned);
  AddPathFlag(toy, "--out", "Output corpus directory", &RunPaths::out);
  toy->overrides.Add<int>(toy->app, "--speakers", "Number of speakers",
                          Setter<int>([](RunConfig* c, const int& v) {
                            c->toy.speakers = v;
                          }));
  toy->overrides.Add<int>(toy->app, "--utts", "Utterances per speaker",
                          Setter<int>([](RunConfig* c, const int& v) {
                            c->toy.utterances = v;
                          }));
  toy->overrides.Add<uint64_t>(
      toy->app, "--seed", "Generator seed",
      Setter<uint64_t>([](RunConfig* c, const uint64_t& v) { c->toy.seed = v; }));

  Command* feat = NewCommand(app, "featurize",
                             "Extract and cache mel, F0 and RMSE features",
                             &owned);
  AddPathFlag(feat, "--manifest", "Corpus manifest (JSON Lines)",
              &RunPaths::manifest);
  AddPathFlag(feat, "--cache-dir", "Feature cache directory",
              &RunPaths::cache_dir);

  Command* train = NewCommand(app, "train", "Train the acoustic model", &owned);
  train->preset_opt =
      train->app->add_option("--preset", train->preset, "default or desk");
  AddPathFlag(train, "--manifest", "Training manifest", &RunPaths::manifest);
  AddPathFlag(train, "--out", "Output directory", &RunPaths::out);
  AddPathFlag(train, "--cache-dir", "Feature cache directory",
              &RunPaths::cache_dir);
  AddPathFlag(train, "--eval-manifest", "Held-out manifest for periodic eval",
              &RunPaths::eval_manifest);
  AddPathFlag(train, "--resume", "Checkpoint to continue from",
              &RunPaths::resume);
  train->overrides.Add<long>(train->app, "--total-steps", "Total steps",
                             Setter<long>([](RunConfig* c, const long& v) {
                               c->train.total_steps = v;
                             }));
  train->overrides.Add<long>(train->app, "--warmup-steps", "Warm-up steps",
                             Setter<long>([](RunConfig* c, const long& v) {
                               c->train.warmup_steps = v;
                             }));
  train->overrides.Add<int>(train->app, "--batch-size", "Batch size",
                            Setter<int>([](RunConfig* c, const int& v) {
                              c->train.batch_size = v;
                            }));
  train->overrides.Add<uint64_t>(
      train->app, "--seed", "Run seed",
      Setter<uint64_t>(
          [](RunConfig* c, const uint64_t& v) { c->train.seed = v; }));
  train->overrides.Add<double>(train->app, "--lr", "Base learning rate",
                               Setter<double>([](RunConfig* c, const double& v) {
                                 c->train.base_lr = v;
                               }));
  train->overrides.Add<long>(train->app, "--eval-every", "Eval interval",
                             Setter<long>([](RunConfig* c, const long& v) {
                               c->train.eval_every = v;
                             }));
  train->overrides.Add<long>(train->app, "--checkpoint-every",
                             "Checkpoint interval",
                             Setter<long>([](RunConfig* c, const long& v) {
                               c->train.checkpoint_every = v;
                             }));
  train->overrides.Add<bool>(
      train->app, "--joint",
      "Require speech and singing data (true or false)",
      Setter<bool>([](RunConfig* c, const bool& v) { c->joint = v; }));

  Command* conv = NewCommand(app, "convert",
                             "Convert a source utterance to a target speaker",
                             &owned);
  AddPathFlag(conv, "--checkpoint", "Trained checkpoint",
              &RunPaths::checkpoint);
  AddPathFlag(conv, "--annotation", "Manifest with the source utterance",
              &RunPaths::annotation);
  AddPathFlag(conv, "--wav", "Source audio (defaults to the manifest path)",
              &RunPaths::source_wav);
  AddPathFlag(conv, "--out", "Output WAV path", &RunPaths::out);
  conv->overrides.Add<std::string>(
      conv->app, "--utt", "Utterance id inside the annotation",
      Setter<std::string>([](RunConfig* c, const std::string& v) {
        c->convert.utterance = v;
      }));
  conv->overrides.Add<std::string>(
      conv->app, "--speaker", "Target speaker",
      Setter<std::string>([](RunConfig* c, const std::string& v) {
        c->convert.speaker = v;
      }));
  conv->overrides.Add<std::string>(
      conv->app, "--nu", "auto, none or a positive pitch ratio",
      Setter<std::string>(
          [](RunConfig* c, const std::string& v) { c->convert.nu = v; }));
  conv->overrides.Add<int>(conv->app, "--key-shift", "Semitone shift",
                           Setter<int>([](RunConfig* c, const int& v) {
                             c->convert.key_shift = v;
                           }));
  conv->overrides.Add<int>(conv->app, "--gl-iterations",
                           "Griffin-Lim iterations",
                           Setter<int>([](RunConfig* c, const int& v) {
                             c->convert.griffin_lim_iterations = v;
                           }));

  Command* eval = NewCommand(app, "eval", "Teacher-forced mel L1 metrics",
                             &owned);
  AddPathFlag(eval, "--checkpoint", "Trained checkpoint",
              &RunPaths::checkpoint);
  AddPathFlag(eval, "--manifest", "Evaluation manifest", &RunPaths::manifest);
  AddPathFlag(eval, "--cache-dir", "Feature cache directory",
              &RunPaths::cache_dir);
  AddPathFlag(eval, "--out", "Also write the metrics to this file",
              &RunPaths::out);

  Command* plot = NewCommand(app, "plot", "Write SVG figures", &owned);
  AddPathFlag(plot, "--features", "Feature cache sidecar (<id>.meta.json)",
              &RunPaths::features);
  AddPathFlag(plot, "--diagnostics", "Conversion diagnostics JSON",
              &RunPaths::diagnostics);
  AddPathFlag(plot, "--out", "Output directory", &RunPaths::out);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    for (const auto& cmd : owned) {
      if (!cmd->app->parsed()) continue;
      const RunConfig c = cmd->Resolve();
      const std::string name = cmd->app->get_name();
      if (name == "make-toy-corpus") return MakeToyCorpus(c, out);
      if (name == "featurize") return Featurize(c, out);
      if (name == "train") return Train(c, out);
      if (name == "convert") return ConvertCommand(c, out, err);
      if (name == "eval") return EvalCommand(c, out);
      if (name == "plot") return PlotCommand(c, out);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  err << "no subcommand given\n";
  return kExitUsage;
}

}  // namespace singvc
