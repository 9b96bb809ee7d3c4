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

#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "singvc/checkpoint.h"
#include "singvc/cli.h"
#include "singvc/plot.h"
#include "singvc/run_config.h"

namespace singvc {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path TempDir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("singvc_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string ReadText(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void WriteText(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result Run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = RunCli(args, out, err);
  return {code, out.str(), err.str()};
}

// Small widths so the CLI round trips stay fast.
const char* kTinyConfig = R"({
  "model": {"phoneme_embed_dim": 8, "speaker_embed_dim": 8,
            "encoder_out_dim": 8, "fused_dim": 8, "attention_dim": 8,
            "decoder_rnn_dims": [12, 12], "prenet_dims": [8, 8],
            "cbhg_bank_size": 3, "cbhg_channels": 8, "cbhg_highway_layers": 1},
  "train": {"warmup_steps": 2, "batch_size": 4}
})";

// Toy corpus plus a 4-step checkpoint shared by the conversion cases.
struct Workspace {
  fs::path root;
  fs::path manifest;
  fs::path checkpoint;
};

const Workspace& Trained() {
  static const Workspace w = [] {
    Workspace w;
    w.root = TempDir("workspace");
    REQUIRE(Run({"make-toy-corpus", "--out", (w.root / "toy").string(),
                 "--speakers", "4", "--utts", "2"})
                .code == kExitOk);
    w.manifest = w.root / "toy" / "manifest.jsonl";
    WriteText(w.root / "tiny.json", kTinyConfig);
    const Result r = Run({"train", "--config", (w.root / "tiny.json").string(),
                          "--manifest", w.manifest.string(), "--out",
                          (w.root / "run").string(), "--total-steps", "4"});
    REQUIRE(r.code == kExitOk);
    w.checkpoint = w.root / "run" / "checkpoint.ckpt";
    return w;
  }();
  return w;
}

TEST_CASE("run config layers: defaults, file, then flags") {
  RunConfig c;
  CHECK(c.model == ModelConfig{});
  ApplyJson(json::parse(R"({"preset": "desk", "model": {"fused_dim": 48},
                            "train": {"total_steps": 77}})"),
            &c);
  CHECK(c.model.decoder_rnn_dims == ModelConfig::Desk().decoder_rnn_dims);
  CHECK(c.model.fused_dim == 48);
  CHECK(c.train.total_steps == 77);
  CHECK(c.train.batch_size == TrainConfig{}.batch_size);

  RunConfig back;
  ApplyJson(ToJson(c), &back);
  CHECK(back == c);
}

TEST_CASE("run config rejects unknown keys by name") {
  RunConfig c;
  const std::pair<const char*, const char*> cases[] = {
      {R"({"modle": {}})", "modle"},
      {R"({"train": {"epochs": 3}})", "epochs"},
      {R"({"paths": {"outdir": "x"}})", "outdir"},
      {R"({"convert": {"pitch": 1}})", "pitch"}};
  for (const auto& [text, key] : cases) {
    try {
      ApplyJson(json::parse(text), &c);
      FAIL("expected a ConfigError for " << text);
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(key) != std::string::npos);
    }
  }
  CHECK_THROWS_AS(ApplyJson(json::parse(R"({"preset": "huge"})"), &c),
                  ConfigError);
  CHECK_THROWS_AS(ApplyJson(json::parse(R"({"train": {"batch_size": "8"}})"),
                            &c),
                  ConfigError);
}

TEST_CASE("run config validation catches inconsistent sections") {
  RunConfig c;
  CHECK_NOTHROW(c.Validate());
  c.model.mel_bins = 40;
  CHECK_THROWS_AS(c.Validate(), ConfigError);
  c = {};
  c.train.warmup_steps = c.train.total_steps + 1;
  CHECK_THROWS_AS(c.Validate(), ConfigError);
}

TEST_CASE("flags outrank the config file") {
  const fs::path dir = TempDir("precedence");
  WriteText(dir / "c.json", R"({"toy": {"speakers": 3, "utterances": 1}})");
  const Result r = Run({"make-toy-corpus", "--config", (dir / "c.json").string(),
                        "--utts", "2", "--out", (dir / "toy").string()});
  REQUIRE(r.code == kExitOk);
  const json written = json::parse(ReadText(dir / "toy" / "run_config.json"));
  CHECK(written["toy"]["speakers"] == 3);
  CHECK(written["toy"]["utterances"] == 2);
  CHECK(LoadManifest((dir / "toy" / "manifest.jsonl").string())
            .utterances.size() == 6u);
}

TEST_CASE("make-toy-corpus is deterministic and needs --out") {
  const fs::path dir = TempDir("toy");
  const std::vector<std::string> base = {"make-toy-corpus", "--speakers", "4",
                                         "--utts", "10", "--seed", "7"};
  CHECK(Run(base).code == kExitUsage);
  auto with_out = [&](const fs::path& out) {
    auto args = base;
    args.push_back("--out");
    args.push_back(out.string());
    return Run(args);
  };
  REQUIRE(with_out(dir / "a").code == kExitOk);
  REQUIRE(with_out(dir / "b").code == kExitOk);
  const Corpus a = LoadManifest((dir / "a" / "manifest.jsonl").string());
  CHECK(a.utterances.size() == 40u);
  for (const Utterance& u : a.utterances) {
    const std::string rel = u.audio_path;
    CHECK(ReadText(dir / "a" / rel) == ReadText(dir / "b" / rel));
  }
  CHECK(ReadText(dir / "a" / "manifest.jsonl") ==
        ReadText(dir / "b" / "manifest.jsonl"));
}

TEST_CASE("parse errors and unknown subcommands are usage errors") {
  CHECK(Run({}).code == kExitUsage);
  CHECK(Run({"dance"}).code == kExitUsage);
  CHECK(Run({"train", "--total-steps", "many"}).code == kExitUsage);
  CHECK(Run({"--help"}).code == kExitOk);
}

TEST_CASE("train writes a loadable checkpoint, metrics and its config") {
  const Workspace& w = Trained();
  const Checkpoint ckpt = LoadCheckpoint(w.checkpoint.string());
  CHECK(ckpt.state.step == 4);
  CHECK(ckpt.speakers.size() == 4u);
  std::ifstream log(w.root / "run" / "metrics.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    const json j = json::parse(line);
    for (const char* key : {"step", "lr", "loss", "l1_post", "l1_pre", "l2"}) {
      CHECK(j.contains(key));
    }
    ++lines;
  }
  CHECK(lines == 4);
  const json cfg = json::parse(ReadText(w.root / "run" / "run_config.json"));
  CHECK(cfg["train"]["total_steps"] == 4);
  CHECK(cfg["model"]["fused_dim"] == 8);
}

TEST_CASE("train is reproducible from its logged config") {
  const Workspace& w = Trained();
  const fs::path dir = TempDir("replay");
  const Result r =
      Run({"train", "--config", (w.root / "run" / "run_config.json").string(),
           "--out", (dir / "run").string()});
  REQUIRE(r.code == kExitOk);
  CHECK(ReadText(dir / "run" / "metrics.jsonl") ==
        ReadText(w.root / "run" / "metrics.jsonl"));
}

TEST_CASE("train names a bad config key and needs both kinds when joint") {
  const Workspace& w = Trained();
  const fs::path dir = TempDir("train_errors");
  WriteText(dir / "bad.json", R"({"train": {"bogus_rate": 1}})");
  Result r = Run({"train", "--config", (dir / "bad.json").string(),
                  "--manifest", w.manifest.string(), "--out",
                  (dir / "x").string()});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("bogus_rate") != std::string::npos);

  // Speech-only corpus: the first two toy speakers.
  Corpus speech = LoadManifest(w.manifest.string());
  std::erase_if(speech.utterances, [](const Utterance& u) {
    return u.speaker_id != "spk0" && u.speaker_id != "spk1";
  });
  std::ofstream m(dir / "speech.jsonl");
  for (const Utterance& u : speech.utterances) {
    Utterance copy = u;
    copy.audio_path = (w.root / "toy" / u.audio_path).string();
    m << FormatManifestLine(copy) << "\n";
  }
  m.close();
  const std::string tiny = (w.root / "tiny.json").string();
  r = Run({"train", "--config", tiny, "--manifest",
           (dir / "speech.jsonl").string(), "--out", (dir / "y").string(),
           "--total-steps", "2"});
  CHECK(r.code == kExitFailure);
  CHECK(r.err.find("singing") != std::string::npos);
  r = Run({"train", "--config", tiny, "--manifest",
           (dir / "speech.jsonl").string(), "--out", (dir / "z").string(),
           "--total-steps", "2", "--joint", "false"});
  CHECK(r.code == kExitOk);
}

TEST_CASE("resume continues to the new total") {
  const Workspace& w = Trained();
  const fs::path dir = TempDir("resume");
  const std::string tiny = (w.root / "tiny.json").string();
  Result r = Run({"train", "--config", tiny, "--manifest", w.manifest.string(),
                  "--out", (dir / "r").string(), "--resume",
                  w.checkpoint.string(), "--total-steps", "6"});
  REQUIRE(r.code == kExitOk);
  CHECK(LoadCheckpoint((dir / "r" / "checkpoint.ckpt").string()).state.step ==
        6);
  r = Run({"train", "--config", tiny, "--manifest", w.manifest.string(),
           "--out", (dir / "s").string(), "--resume", w.checkpoint.string(),
           "--total-steps", "4"});
  CHECK(r.code == kExitFailure);
}

TEST_CASE("convert writes audio, diagnostics and its config") {
  const Workspace& w = Trained();
  const fs::path dir = TempDir("convert");
  const std::vector<std::string> base = {
      "convert",      "--checkpoint", w.checkpoint.string(), "--annotation",
      w.manifest.string(), "--utt",   "spk2_singing_00",     "--gl-iterations",
      "4"};
  auto run = [&](std::vector<std::string> extra) {
    auto args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    return Run(args);
  };
  Result r = run({"--speaker", "spk0", "--out", (dir / "a.wav").string()});
  REQUIRE(r.code == kExitOk);
  CHECK(fs::file_size(dir / "a.wav") > 44);
  const json diag = json::parse(ReadText(dir / "a.diagnostics.json"));
  CHECK(diag["target_speaker"] == "spk0");
  CHECK(diag["nu"].get<double>() > 0.0);
  CHECK(fs::exists(dir / "a.run_config.json"));

  r = run({"--speaker", "nobody", "--out", (dir / "b.wav").string()});
  CHECK(r.code == kExitFailure);
  for (const char* name : {"nobody", "spk0", "spk1", "spk2", "spk3"}) {
    CHECK(r.err.find(name) != std::string::npos);
  }
  r = run({"--speaker", "spk0", "--nu", "0", "--out", (dir / "c.wav").string()});
  CHECK(r.code == kExitFailure);
  CHECK(r.err.find("nu") != std::string::npos);
  r = run({"--speaker", "spk0", "--nu", "twice", "--out",
           (dir / "d.wav").string()});
  CHECK(r.code == kExitUsage);
  CHECK_FALSE(fs::exists(dir / "b.wav"));
}

TEST_CASE("a nu = 2 conversion doubles the plotted contour") {
  const Workspace& w = Trained();
  const fs::path dir = TempDir("nu2");
  const Result r =
      Run({"convert", "--checkpoint", w.checkpoint.string(), "--annotation",
           w.manifest.string(), "--utt", "spk0_speech_00", "--speaker", "spk1",
           "--nu", "2", "--gl-iterations", "2", "--out",
           (dir / "up.wav").string()});
  REQUIRE(r.code == kExitOk);
  const json diag = json::parse(ReadText(dir / "up.diagnostics.json"));
  const auto src = diag["source_f0"].get<std::vector<double>>();
  const auto conv = diag["converted_f0"].get<std::vector<double>>();
  REQUIRE(src.size() == conv.size());
  for (size_t i = 0; i < src.size(); ++i) {
    CHECK(conv[i] == doctest::Approx(2.0 * src[i]));
  }
  const Result p = Run({"plot", "--diagnostics",
                        (dir / "up.diagnostics.json").string(), "--out",
                        (dir / "plots").string()});
  REQUIRE(p.code == kExitOk);
  const std::string svg = ReadText(dir / "plots" / "up_f0_overlay.svg");
  CHECK(svg.find("<svg") == 0);
  CHECK(svg.find("source") != std::string::npos);
  CHECK(svg.find("converted") != std::string::npos);
  CHECK(svg.find("nu 2") != std::string::npos);
}

TEST_CASE("eval is deterministic, has per-speaker metrics, rejects empty sets") {
  const Workspace& w = Trained();
  const std::vector<std::string> args = {"eval", "--checkpoint",
                                         w.checkpoint.string(), "--manifest",
                                         w.manifest.string()};
  const Result a = Run(args);
  const Result b = Run(args);
  REQUIRE(a.code == kExitOk);
  CHECK(a.out == b.out);
  const json j = json::parse(a.out);
  CHECK(j["per_speaker"].size() == 4u);
  CHECK(j["per_kind"].contains("speech"));
  CHECK(j["per_kind"].contains("singing"));

  const fs::path dir = TempDir("eval");
  WriteText(dir / "empty.jsonl", "");
  const Result e = Run({"eval", "--checkpoint", w.checkpoint.string(),
                        "--manifest", (dir / "empty.jsonl").string()});
  CHECK(e.code == kExitFailure);
  CHECK(e.err.find("empty") != std::string::npos);
}

TEST_CASE("featurize fills the cache and plot writes one image per track") {
  const Workspace& w = Trained();
  const fs::path dir = TempDir("plot");
  Result r = Run({"featurize", "--manifest", w.manifest.string(), "--cache-dir",
                  (dir / "cache").string()});
  REQUIRE(r.code == kExitOk);
  CHECK(json::parse(r.out)["extracted"] == 8);
  r = Run({"featurize", "--manifest", w.manifest.string(), "--cache-dir",
           (dir / "cache").string()});
  CHECK(json::parse(r.out)["loaded"] == 8);

  r = Run({"plot", "--features",
           (dir / "cache" / "spk1_speech_00.meta.json").string(), "--out",
           (dir / "plots").string()});
  REQUIRE(r.code == kExitOk);
  for (const char* track : {"mel", "f0", "rmse"}) {
    const fs::path p =
        dir / "plots" / (std::string("spk1_speech_00_") + track + ".svg");
    REQUIRE(fs::exists(p));
    CHECK(ReadText(p).find("</svg>") != std::string::npos);
  }
  CHECK(Run({"plot", "--features", (dir / "missing.meta.json").string(),
             "--out", (dir / "plots").string()})
            .code != kExitOk);
  CHECK(Run({"plot", "--out", (dir / "plots").string()}).code == kExitUsage);
}

TEST_CASE("no subcommand mutates its inputs") {
  const Workspace& w = Trained();
  const std::string manifest = ReadText(w.manifest);
  const std::string ckpt = ReadText(w.checkpoint);
  const fs::path dir = TempDir("inputs");
  Run({"eval", "--checkpoint", w.checkpoint.string(), "--manifest",
       w.manifest.string()});
  Run({"convert", "--checkpoint", w.checkpoint.string(), "--annotation",
       w.manifest.string(), "--utt", "spk3_singing_01", "--speaker", "spk1",
       "--gl-iterations", "2", "--out", (dir / "x.wav").string()});
  CHECK(ReadText(w.manifest) == manifest);
  CHECK(ReadText(w.checkpoint) == ckpt);
}

TEST_CASE("line plots leave gaps at unvoiced frames") {
  const std::string svg =
      LinePlotSvg("t", "Hz", {{"f0", {100, 110, 0, 0, 120, 130}, "#000", 0.0}});
  size_t count = 0;
  for (size_t at = svg.find("<polyline"); at != std::string::npos;
       at = svg.find("<polyline", at + 1)) {
    ++count;
  }
  CHECK(count == 2);
  CHECK_THROWS_AS(LinePlotSvg("t", "Hz", {}), ValidationError);
  CHECK_THROWS_AS(HeatmapSvg("t", Matrix()), ValidationError);
}

}  // namespace
}  // namespace singvc
