#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "shallowdiff/boundary.hpp"
#include "shallowdiff/config.hpp"
#include "shallowdiff/denoiser.hpp"
#include "shallowdiff/grid.hpp"
#include "shallowdiff/score_encoder.hpp"

namespace shallowdiff {

/// Items on disk: scores.txt (one line per item, manifest order), targets/ID.melg,
/// proxies/ID.melg and manifest.txt with "ID split" lines.
struct Dataset {
  std::vector<std::string> ids;
  std::vector<MusicScore> scores;
  std::vector<Grid> targets;
  std::vector<Grid> proxies;
  std::vector<bool> train;

  std::size_t size() const { return ids.size(); }
  std::vector<std::size_t> split(bool training) const;
  /// Throws ValidationError for an unknown ID.
  std::size_t index_of(const std::string& id) const;
};

void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& dir);

namespace files {
inline constexpr const char* encoder = "encoder_aux.sdck";
inline constexpr const char* boundary = "boundary.sdck";
inline constexpr const char* denoiser = "denoiser.sdck";
inline constexpr const char* boundary_k = "boundary.txt";
inline constexpr const char* train_log = "train_log.csv";
inline constexpr const char* run_config = "run.cfg";
}  // namespace files

Dataset cmd_gen_data(const RunConfig& config, std::ostream& log);

struct TrainResult {
  std::vector<double> warmup_losses;
  std::vector<double> bp_losses;
  std::vector<double> main_losses;
  int k = 0;
  int k_kl = 0;
  std::optional<int> k_classifier;
};

/// Warmup (encoder + auxiliary decoder, L1), boundary predictor, then the
/// denoiser with t ~ Uniform{1..k}, or Uniform{1..T} when train_range=full. Encoder and auxiliary decoder are frozen
/// after warmup. Throws DivergenceError on a non-finite loss; checkpoints
/// already written stay in place.
TrainResult cmd_train(const RunConfig& config, std::ostream& log);

enum class InferMode { naive, shallow };

struct InferOptions {
  InferMode mode = InferMode::shallow;
  std::optional<int> k;                           // defaults to the trained boundary
  std::optional<std::filesystem::path> scores;  // defaults to the validation split
};

struct ItemMetrics {
  std::string id;
  int calls = 0;
  double wall_ms = 0.0;
};

/// Writes output_dir/MODE/ID.melg (clipped to [-1, 1]) and a metrics file.
std::vector<ItemMetrics> cmd_infer(const RunConfig& config, const InferOptions& options, std::ostream& log);

/// Which grid plays M~: the trained auxiliary decoder's output or the blurred proxy.
enum class ProxySource { aux, blur };

/// Report over the training split, written to output_dir/boundary_report.csv.
BoundaryReport cmd_boundary(const RunConfig& config, ProxySource source, std::ostream& log);

struct TrajectoryRow {
  int t = 0;
  double kl_traj = 0.0;
  double kl_prior = 0.0;
};

/// Per-step trajectory KL for one item, written to output_dir/analyze_ID.csv.
std::vector<TrajectoryRow> cmd_analyze(const RunConfig& config, const std::string& item, ProxySource source,
                                       std::ostream& log);

ScoreEncoder load_encoder(const RunConfig& config);
Denoiser load_denoiser(const RunConfig& config);
BoundaryClassifier load_classifier(const RunConfig& config);
/// k recorded by training.
int load_boundary_k(const RunConfig& config);

}  // namespace shallowdiff
