#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <sstream>

#include "shallowdiff/errors.hpp"
#include "shallowdiff/io.hpp"
#include "shallowdiff/pipeline.hpp"
#include "support/temp_dir.hpp"

namespace sd = shallowdiff;
namespace fs = std::filesystem;

namespace {

sd::RunConfig tiny_config(const fs::path& root) {
  sd::RunConfig c;
  c.steps = 20;
  c.frames = 8;
  c.bins = 8;
  c.vocab = 4;
  c.pitch_vocab = 4;
  c.harmonics = 1;
  c.channels = 8;
  c.layers = 2;
  c.encoder_channels = 8;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.ffn_hidden = 16;
  c.bp_channels = 4;
  c.bp_layers = 1;
  c.train_items = 6;
  c.valid_items = 3;
  c.warmup_steps = 6;
  c.bp_steps = 4;
  c.main_steps = 5;
  c.batch = 2;
  c.checkpoint_every = 2;
  c.margin_draws = 1;
  c.dataset_dir = root / "data";
  c.checkpoint_dir = root / "ckpt";
  c.output_dir = root / "out";
  return c;
}

struct TinyRun {
  sd::testing::TempDir dir;
  sd::RunConfig config;
  sd::TrainResult trained;

  explicit TinyRun(const std::function<void(sd::RunConfig&)>& tweak = {}) : config(tiny_config(dir.path())) {
    if (tweak) tweak(config);
    std::ostringstream log;
    sd::cmd_gen_data(config, log);
    trained = sd::cmd_train(config, log);
  }
};

TEST(Pipeline, GenDataWritesManifestAndSplits) {
  const sd::testing::TempDir dir;
  const sd::RunConfig c = tiny_config(dir.path());
  std::ostringstream log;
  sd::cmd_gen_data(c, log);
  const sd::Dataset data = sd::load_dataset(c.dataset_dir);
  EXPECT_EQ(data.size(), 9u);
  EXPECT_EQ(data.split(true).size(), 6u);
  EXPECT_EQ(data.split(false).size(), 3u);
  EXPECT_EQ(data.ids.front(), "item_0000");
  EXPECT_EQ(data.targets[0].frames(), 8u);
  EXPECT_THROW(data.index_of("item_9999"), sd::ValidationError);
}

TEST(Pipeline, TrainWritesCheckpointsLogAndBoundary) {
  const TinyRun run;
  const auto& c = run.config;
  for (const char* f : {sd::files::encoder, sd::files::boundary, sd::files::denoiser, sd::files::boundary_k,
                        sd::files::train_log}) {
    EXPECT_TRUE(fs::exists(c.checkpoint_dir / f)) << f;
  }
  EXPECT_EQ(run.trained.warmup_losses.size(), 6u);
  EXPECT_EQ(run.trained.bp_losses.size(), 4u);
  EXPECT_EQ(run.trained.main_losses.size(), 5u);
  ASSERT_TRUE(run.trained.k_classifier.has_value());
  EXPECT_EQ(run.trained.k, *run.trained.k_classifier);
  EXPECT_EQ(sd::load_boundary_k(c), run.trained.k);
  const std::string log = sd::io::read_file(c.checkpoint_dir / sd::files::train_log);
  EXPECT_EQ(log.substr(0, log.find('\n')), "stage,step,loss");
  EXPECT_NE(log.find("main,4,"), std::string::npos);
}

TEST(Pipeline, MissingDatasetIsAValidationError) {
  const sd::testing::TempDir dir;
  std::ostringstream log;
  EXPECT_THROW(sd::cmd_train(tiny_config(dir.path()), log), sd::ValidationError);
}

TEST(Pipeline, InferCallCounts) {
  const TinyRun run;
  std::ostringstream log;
  const auto naive = sd::cmd_infer(run.config, {sd::InferMode::naive, std::nullopt, std::nullopt}, log);
  ASSERT_EQ(naive.size(), 3u);
  for (const auto& m : naive) EXPECT_EQ(m.calls, 20);
  const auto shallow = sd::cmd_infer(run.config, {sd::InferMode::shallow, 3, std::nullopt}, log);
  for (const auto& m : shallow) EXPECT_EQ(m.calls, 3);
  const auto boundary = sd::cmd_infer(run.config, {sd::InferMode::shallow, std::nullopt, std::nullopt}, log);
  for (const auto& m : boundary) EXPECT_EQ(m.calls, run.trained.k);
  const sd::Grid out = sd::io::read_grid(run.config.output_dir / "shallow" / (naive[0].id + ".melg"));
  for (double v : out.values()) EXPECT_TRUE(v >= -1.0 && v <= 1.0);
  EXPECT_THROW(sd::cmd_infer(run.config, {sd::InferMode::shallow, 21, std::nullopt}, log), sd::ValidationError);
}

TEST(Pipeline, InferFromScoreFileChecksFrames) {
  const TinyRun run;
  const fs::path scores = run.dir.path() / "scores.txt";
  sd::io::atomic_write(scores, "1:2:4 3:0:4\n");
  std::ostringstream log;
  EXPECT_EQ(sd::cmd_infer(run.config, {sd::InferMode::shallow, 2, scores}, log).size(), 1u);
  sd::io::atomic_write(scores, "1:2:4 3:0:5\n");
  EXPECT_THROW(sd::cmd_infer(run.config, {sd::InferMode::shallow, 2, scores}, log), sd::ValidationError);
}

TEST(Pipeline, BoundaryReportHasOneRowPerStep) {
  const TinyRun run;
  std::ostringstream log;
  const auto report = sd::cmd_boundary(run.config, sd::ProxySource::blur, log);
  EXPECT_EQ(report.steps.size(), 20u);
  const std::string csv = sd::io::read_file(run.config.output_dir / "boundary_report.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 21);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,bp_real,bp_fake,margin,kl_traj,kl_prior");
  EXPECT_NE(log.str().find("k_kl="), std::string::npos);
}

TEST(Pipeline, ProxyEqualToTargetGivesKlBoundaryOne) {
  const TinyRun run;
  sd::Dataset data = sd::load_dataset(run.config.dataset_dir);
  data.proxies = data.targets;
  sd::write_dataset(run.config.dataset_dir, data);
  std::ostringstream log;
  EXPECT_EQ(sd::cmd_boundary(run.config, sd::ProxySource::blur, log).k_kl, 1);
}

TEST(Pipeline, AnalyzeIsStrictlyDecreasingAndCrossingMatchesSingletonSelection) {
  const sd::testing::TempDir dir;
  const sd::RunConfig c = tiny_config(dir.path());
  std::ostringstream log;
  sd::cmd_gen_data(c, log);
  const auto rows = sd::cmd_analyze(c, "item_0002", sd::ProxySource::blur, log);
  ASSERT_EQ(rows.size(), 20u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LT(rows[i].kl_traj, rows[i - 1].kl_traj);
  const sd::Dataset data = sd::load_dataset(c.dataset_dir);
  const std::size_t i = data.index_of("item_0002");
  const std::vector<sd::GridPair> single{{data.targets[i], data.proxies[i]}};
  const auto sel = sd::select_k_kl(single, c.schedule());
  if (!sel.degenerate) EXPECT_NE(log.str().find("crossing=" + std::to_string(sel.k)), std::string::npos) << log.str();
  EXPECT_TRUE(fs::exists(c.output_dir / "analyze_item_0002.csv"));
  EXPECT_THROW(sd::cmd_analyze(c, "nope", sd::ProxySource::blur, log), sd::ValidationError);
}

TEST(Pipeline, ZeroMainStepsLeavesInitialDenoiser) {
  const TinyRun run([](sd::RunConfig& c) { c.main_steps = 0; });
  EXPECT_TRUE(run.trained.main_losses.empty());
  const sd::Denoiser fresh(run.config.denoiser(), run.config.seed);
  EXPECT_EQ(sd::io::read_file(run.config.checkpoint_dir / sd::files::denoiser),
            sd::io::encode_checkpoint([&] {
              sd::io::NamedArrays named;
              for (const auto& e : fresh.params().entries()) named.emplace_back(e.name, e.var.value());
              return named;
            }()));
}

TEST(Pipeline, FixedAndKlMethodsSetK) {
  const TinyRun fixed([](sd::RunConfig& c) {
    c.method = sd::BoundaryMethod::fixed;
    c.fixed_k = 7;
  });
  EXPECT_EQ(fixed.trained.k, 7);
  EXPECT_FALSE(fixed.trained.k_classifier.has_value());
  const TinyRun kl([](sd::RunConfig& c) { c.method = sd::BoundaryMethod::kl; });
  EXPECT_EQ(kl.trained.k, kl.trained.k_kl);
}

TEST(Pipeline, RepeatedRunsAreBitIdentical) {
  const TinyRun a, b;
  for (const char* f : {sd::files::encoder, sd::files::boundary, sd::files::denoiser}) {
    EXPECT_EQ(sd::io::file_hash(a.config.checkpoint_dir / f), sd::io::file_hash(b.config.checkpoint_dir / f)) << f;
  }
  std::ostringstream log;
  const auto ma = sd::cmd_infer(a.config, {sd::InferMode::shallow, 4, std::nullopt}, log);
  sd::cmd_infer(b.config, {sd::InferMode::shallow, 4, std::nullopt}, log);
  for (const auto& m : ma) {
    EXPECT_EQ(sd::io::file_hash(a.config.output_dir / "shallow" / (m.id + ".melg")),
              sd::io::file_hash(b.config.output_dir / "shallow" / (m.id + ".melg")));
  }
}

// CLI exit codes.

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SHALLOWDIFF_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string tiny_flags(const fs::path& root) {
  std::string flags;
  const std::string text = sd::to_text(tiny_config(root));
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    if (!line.empty()) flags += " --set '" + line + "'";
  }
  return flags;
}

TEST(Cli, ExitCodes) {
  const sd::testing::TempDir dir;
  const std::string flags = tiny_flags(dir.path());
  EXPECT_EQ(run_cli("train" + flags), 1) << "missing dataset";
  EXPECT_EQ(run_cli("gen-data" + flags), 0);
  EXPECT_EQ(run_cli("infer --mode sideways" + flags), 1);
  EXPECT_EQ(run_cli("gen-data --set chanels=8"), 1);
  EXPECT_EQ(run_cli("train" + flags + " --set lr=1e4"), 2);
  EXPECT_EQ(run_cli("train" + flags), 0);
  EXPECT_EQ(run_cli("infer --mode shallow --k 3" + flags), 0);
  EXPECT_EQ(run_cli("infer --mode shallow --k 0" + flags), 1);
  EXPECT_EQ(run_cli("analyze --item item_0001" + flags), 0);
  EXPECT_EQ(run_cli("boundary --source blur" + flags), 0);
}

TEST(Cli, SeedEnvironmentChangesData) {
  const sd::testing::TempDir a, b;
  ASSERT_EQ(run_cli("gen-data" + tiny_flags(a.path())), 0);
  ASSERT_EQ(run_cli("gen-data" + tiny_flags(b.path())), 0);
  EXPECT_EQ(sd::io::read_file(a.path() / "data" / "scores.txt"), sd::io::read_file(b.path() / "data" / "scores.txt"));
  const std::string env = "SHALLOWDIFF_SEED=77 ";
  const int status = std::system((env + SHALLOWDIFF_CLI + " gen-data" + tiny_flags(b.path()) + " > /dev/null 2>&1").c_str());
  ASSERT_TRUE(WIFEXITED(status) && WEXITSTATUS(status) == 0);
  EXPECT_NE(sd::io::read_file(a.path() / "data" / "scores.txt"), sd::io::read_file(b.path() / "data" / "scores.txt"));
}

}  // namespace
