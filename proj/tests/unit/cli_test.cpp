// Copyright 2026 The prvq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "cli.hpp"
#include "prvq/error.hpp"

using namespace prvq;
using cli::RunConfig;
using config::Json;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Json tiny_config_json() {
  return Json::parse(R"({
    "features": {"n_mels": 24, "griffin_lim_iterations": 4},
    "model": {"model_dim": 16, "layers": 1, "heads": 2, "codebook_size": 8},
    "train": {"max_steps": 12, "warmup_steps": 4, "batch_size": 4, "eval_every": 6, "checkpoint_every": 6},
    "synth": {"num_utterances": 6, "min_phonemes": 3, "max_phonemes": 6},
    "analysis": {"extraction_fraction": 1.0, "path_points": 3, "corridor_half_width": 10.0}
  })");
}

fs::path make_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("prvq_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const Json& j) {
  const fs::path p = dir / "run.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

std::string config_error(const std::string& text) {
  try {
    cli::run_config_from_json(Json::parse(text), "/base");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(RunConfig, MinimalDefaults) {
  const RunConfig c = cli::run_config_from_json(Json::parse(R"({"features": {"n_mels": 32}})"), "/base/dir");
  EXPECT_EQ(c.model.mel_bands, 32);
  EXPECT_EQ(c.synth.features.n_mels, 32);
  EXPECT_EQ(c.paths.manifest, fs::path("/base/dir/data/manifest.jsonl"));
  EXPECT_EQ(c.paths.reports, fs::path("/base/dir/reports"));
  EXPECT_EQ(c.model.model_dim, 64);
  EXPECT_FALSE(c.analysis.probe_level2_code.has_value());
}

TEST(RunConfig, RoundTrip) {
  Json j = tiny_config_json();
  j["analysis"]["probe_level2_code"] = 3;
  j["analysis"]["embedding"] = "tsne";
  j["train"]["lr_schedule"] = "cosine";
  j["synth"]["f0_ranges"] = Json::parse("[[90, 120], [180, 260], [300, 400]]");
  const RunConfig a = cli::run_config_from_json(j, "/x");
  const Json once = cli::to_json(a);
  const RunConfig b = cli::run_config_from_json(once, "/elsewhere");
  EXPECT_EQ(once, cli::to_json(b));
  EXPECT_EQ(b.analysis.probe_level2_code, 3);
  EXPECT_EQ(b.synth.f0_ranges.size(), 3u);
  EXPECT_EQ(b.train.lr_schedule, train::LrSchedule::kCosine);
}

TEST(RunConfig, ErrorsNameTheKey) {
  EXPECT_NE(config_error(R"({"model": {"model_dim": -1}})").find("model.model_dim"), std::string::npos);
  EXPECT_NE(config_error(R"({"modle": {}})").find("modle"), std::string::npos);
  EXPECT_NE(config_error(R"({"train": {"learning_rate": "fast"}})").find("train.learning_rate"), std::string::npos);
  EXPECT_NE(config_error(R"({"model": {"mel_bands": 40}})").find("features.n_mels"), std::string::npos);
  EXPECT_NE(config_error(R"({"analysis": {"probe_level2_code": "a"}})").find("analysis.probe_level2_code"),
            std::string::npos);
  EXPECT_NE(config_error(R"({"analysis": {"probe_level2_code": 64}})").find("analysis.probe_level2_code"),
            std::string::npos);
  EXPECT_NE(config_error(R"({"analysis": {"extraction_fraction": 0}})").find("analysis.extraction_fraction"),
            std::string::npos);
  EXPECT_NE(config_error(R"({"synth": {"f0_ranges": [[300, 200]]}})").find("synth"), std::string::npos);
}

TEST(ExtractionIndices, SeededSortedSubset) {
  const auto a = cli::extraction_indices(100, 0.1, 7);
  EXPECT_EQ(a.size(), 10u);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_EQ(std::set<std::size_t>(a.begin(), a.end()).size(), a.size());
  EXPECT_EQ(a, cli::extraction_indices(100, 0.1, 7));
  EXPECT_NE(a, cli::extraction_indices(100, 0.1, 8));
  EXPECT_EQ(cli::extraction_indices(5, 1.0, 1).size(), 5u);
  EXPECT_EQ(cli::extraction_indices(5, 0.01, 1).size(), 1u);
  EXPECT_EQ(cli::extraction_indices(7, 0.5, 1).size(), 4u);
  EXPECT_THROW(cli::extraction_indices(0, 0.5, 1), DataError);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"train"}).code, 1);
  const fs::path dir = make_dir("usage");
  const Result r = run({"train", "--config", write_config(dir, Json::parse(R"({"model": {"model_dim": -1}})")).string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("model.model_dim"), std::string::npos);
  EXPECT_EQ(run({"prepare", "--config", (dir / "missing.json").string()}).code, 1);
  fs::remove_all(dir);
}

class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = make_dir("pipeline");
    config_ = write_config(dir_, tiny_config_json()).string();
    ASSERT_EQ(run({"synth-data", "--config", config_}).code, 0);
    ASSERT_EQ(run({"prepare", "--config", config_}).code, 0);
    const Result t = run({"train", "--config", config_});
    ASSERT_EQ(t.code, 0) << t.err;
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static std::vector<Json> manifest() {
    std::vector<Json> rows;
    std::ifstream in(dir_ / "data" / "manifest.jsonl");
    for (std::string line; std::getline(in, line);) rows.push_back(Json::parse(line));
    return rows;
  }

  static inline fs::path dir_;
  static inline std::string config_;
};

TEST_F(Pipeline, TrainWritesArtifacts) {
  EXPECT_TRUE(fs::exists(dir_ / "checkpoints" / "last.ckpt"));
  EXPECT_TRUE(fs::exists(dir_ / "checkpoints" / "best.ckpt"));
  EXPECT_TRUE(fs::exists(dir_ / "reports" / "config.json"));
  std::ifstream log(dir_ / "reports" / "train_log.jsonl");
  std::size_t lines = 0;
  for (std::string l; std::getline(log, l);) ++lines;
  EXPECT_EQ(lines, 12u);
  const Json s = Json::parse(slurp(dir_ / "reports" / "train_summary.json"));
  EXPECT_EQ(s["steps"], 12);
}

TEST_F(Pipeline, AnalyzeUsage) {
  const Result r = run({"analyze", "usage", "--config", config_});
  ASSERT_EQ(r.code, 0) << r.err;
  const Json u = Json::parse(slurp(dir_ / "reports" / "usage.json"));
  ASSERT_EQ(u["levels"].size(), 2u);
  for (const auto& l : u["levels"]) {
    long total = 0;
    for (const auto& n : l["histogram"]) total += n.get<long>();
    EXPECT_GT(total, 0);
    EXPECT_GT(l["usage"].get<double>(), 0.0);
  }
  EXPECT_TRUE(u["psnr"]["full"].is_number());
}

TEST_F(Pipeline, TransferNeedsEqualPhonemeCounts) {
  const auto rows = manifest();
  auto count = [](const Json& r) {
    std::istringstream s(r["phones"].get<std::string>());
    return std::distance(std::istream_iterator<std::string>(s), std::istream_iterator<std::string>());
  };
  const Json* same = nullptr;
  const Json* other = nullptr;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (count(rows[i]) == count(rows[0]) && !same) same = &rows[i];
    if (count(rows[i]) != count(rows[0]) && !other) other = &rows[i];
  }
  const std::string src = rows[0]["id"];
  if (other) {
    const Result r = run({"transfer", "--config", config_, "--source", src, "--target", (*other)["id"]});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("phonemes"), std::string::npos);
  }
  const std::string tgt = same ? (*same)["id"].get<std::string>() : src;
  EXPECT_EQ(run({"transfer", "--config", config_, "--source", src, "--target", tgt}).code, 0);
  EXPECT_EQ(run({"transfer", "--config", config_, "--source", "nope", "--target", tgt}).code, 2);
}

TEST_F(Pipeline, ShuffleCodesIsSeeded) {
  ASSERT_EQ(run({"shuffle-codes", "--config", config_, "--seed", "5"}).code, 0);
  const std::string a = slurp(dir_ / "reports" / "shuffle_codes.json");
  ASSERT_EQ(run({"shuffle-codes", "--config", config_, "--seed", "5"}).code, 0);
  EXPECT_EQ(a, slurp(dir_ / "reports" / "shuffle_codes.json"));
  ASSERT_EQ(run({"shuffle-codes", "--config", config_, "--seed", "6"}).code, 0);
  EXPECT_EQ(Json::parse(a)["mean_psnr_intact"], Json::parse(slurp(dir_ / "reports" / "shuffle_codes.json"))["mean_psnr_intact"]);
}

TEST_F(Pipeline, MissingCheckpointAndSpeaker) {
  const Result r = run({"resynth", "--config", config_, "--checkpoint", (dir_ / "none.ckpt").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("train"), std::string::npos);
  EXPECT_EQ(run({"cross-resynth", "--config", config_, "--target-speaker", "nobody"}).code, 2);
  EXPECT_EQ(run({"cross-resynth", "--config", config_, "--target-speaker", "spk1"}).code, 0);
  EXPECT_EQ(run({"metrics", "--config", config_, "--task", "beauty"}).code, 1);
}

TEST_F(Pipeline, IntelligibilityFromHypotheses) {
  const auto rows = manifest();
  const fs::path hyp = dir_ / "hyp.jsonl";
  {
    std::ofstream out(hyp);
    out << Json{{"id", rows[0]["id"]}, {"text", rows[0]["text"]}}.dump() << "\n";
  }
  const Result r = run({"metrics", "--config", config_, "--task", "intelligibility", "--hypotheses", hyp.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(Json::parse(slurp(dir_ / "reports" / "metrics_intelligibility.json"))["wer"], 0.0);
  std::ofstream(hyp) << "{\"id\": \"ghost\", \"text\": \"a\"}\n";
  EXPECT_EQ(run({"metrics", "--config", config_, "--task", "intelligibility", "--hypotheses", hyp.string()}).code, 2);
}
