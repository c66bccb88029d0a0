#pragma once

#include "stf/data.hpp"
#include "stf/losses.hpp"
#include "stf/model.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace stf {

struct OptimizerConfig {
  double lr = 0.001;
  int epochs = 30;
  std::int64_t batch_size = 16;
};

/// One run configuration: data paths, window lengths, model, losses,
/// optimizer, and calendar, loadable from a single JSON file. Any field can be
/// overridden with a dotted "section.key=value" string (the CLI's --set).
struct RunConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "runs/run";
  std::string manifest_path;
  std::int64_t input_steps = 12;
  std::int64_t output_steps = 12;
  ModelConfig model;  // nodes/channels/window fields are filled from the data
  LossWeights weights;
  EnvPermutation env_permutation = EnvPermutation::cyclic;
  OptimizerConfig optimizer;
  PatternCalendar calendar;  // holidays merge in from the dataset manifest

  static RunConfig load(const std::string& path, const std::vector<std::string>& overrides = {});
  std::string to_json() const;
};

/// Bias-corrected Adam over the model's parameter list. Moment buffers mirror
/// the parameters by position.
struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<Eigen::ArrayXd> first;
  std::vector<Eigen::ArrayXd> second;

  static AdamState init(const std::vector<std::pair<std::string, Tensor>>& params, double lr);
};

/// One update from the gradients currently on the parameters (a missing
/// gradient counts as zero). Aborts on non-finite gradients, naming the
/// parameter. Clears gradients afterwards.
void adam_step(std::vector<std::pair<std::string, Tensor>>& params, AdamState& state);

/// Everything derived from the manifest for one run: loaded data, training
/// statistics, and the three window sets.
struct PreparedData {
  LoadedDataset data;
  Normalization norm;
  std::shared_ptr<std::vector<double>> normalized;
  SplitBounds bounds;
  WindowSet train;
  WindowSet val;
  WindowSet test;
};

PreparedData prepare_data(const RunConfig& config);

struct EpochLog {
  int epoch = 0;
  LossBreakdown losses;  // means over the epoch's batches
  double val_rmse = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  int best_epoch = -1;
  double best_val_rmse = 0.0;
  std::string checkpoint_path;
  std::string log_path;
};

/// Full training run: seeded shuffling, the four-term objective, Adam, and
/// best-checkpoint selection by validation RMSE. Writes config.json,
/// train_log.csv and best.ckpt under config.output_dir.
TrainResult train(const RunConfig& config);

/// The candidate weights swept by the staged grid search.
const std::vector<double>& loss_weight_grid();

struct GridTrial {
  int stage = 0;  // 0 = alpha sweep, 1 = beta, 2 = gamma
  double alpha = 0.0, beta = 0.0, gamma = 0.0;
  double val_rmse = 0.0;
};

struct GridSearchResult {
  std::vector<GridTrial> trials;  // 18 rows, sweep order
  double alpha = 0.0, beta = 0.0, gamma = 0.0;
  std::string table_path;
};

/// Coordinate-wise sweep: alpha with beta = gamma = 0.01, then beta with the
/// chosen alpha, then gamma. Ties break toward the smaller weight. Writes the
/// full trial table to output_dir/grid_trials.csv.
GridSearchResult staged_grid_search(const RunConfig& base);

}  // namespace stf
