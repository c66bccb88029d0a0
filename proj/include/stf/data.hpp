#pragma once

#include "stf/graph.hpp"
#include "stf/patterns.hpp"
#include "stf/tensor.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace stf {

/// Dataset description on disk. Paths are resolved relative to the manifest
/// file's directory; holidays and incidents are optional.
struct DatasetManifest {
  std::string name = "dataset";
  std::int64_t sensor_count = 0;
  int interval_minutes = 5;
  TimestampMinutes start_timestamp = 0;
  std::int64_t reading_channels = 1;
  std::string readings_path;
  std::string edges_path;
  std::string holidays_path;
  std::string incidents_path;

  static DatasetManifest load(const std::string& path);
  void save(const std::string& path) const;
  void validate() const;
};

struct Incident {
  std::int64_t node = 0;
  std::int64_t start_step = 0;
  std::int64_t duration_steps = 0;
  double magnitude = 0.0;
};

enum class GraphKind { path, grid, random };
GraphKind graph_kind_from_string(const std::string& tag);

struct SyntheticConfig {
  std::string name = "synthetic";
  std::int64_t nodes = 8;
  int days = 28;
  int interval_minutes = 15;
  GraphKind graph = GraphKind::path;
  double edge_probability = 0.3;  // random graphs only
  double base_flow = 100.0;
  double daily_amplitude = 50.0;   // per-node amplitudes vary around this
  double weekly_amplitude = 0.05;  // relative weekly swing of the base level
  double noise_std = 2.0;
  double incident_rate = 0.05;     // expected incidents per node-day
  double incident_magnitude = 0.5; // fractional drop at the incident node
  std::int64_t incident_duration = 8;  // steps
  TimestampMinutes start_timestamp = minutes_from_civil(2024, 1, 1);
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticDataset {
  std::vector<double> readings;  // steps * nodes, one channel
  std::int64_t steps = 0;
  SensorGraph graph;
  std::vector<Incident> incidents;
  SyntheticConfig config;
};

/// Seeded synthetic traffic: per-node daily sinusoid with node-specific
/// amplitude and phase, a weekly swing of the base level, Gaussian noise, and
/// Poisson-planted incidents that scale the flow by (1 - magnitude) at the
/// node and by (1 - magnitude/2) at its one-hop neighbours for their
/// duration. Flows clamp at zero.
SyntheticDataset generate_synthetic(const SyntheticConfig& config);

/// Writes manifest.json, readings.csv, edges.txt, incidents.csv (and an empty
/// holidays.txt) under `dir`. Returns the manifest path.
std::string write_synthetic(const SyntheticDataset& data, const std::string& dir);

struct LoadedDataset {
  DatasetManifest manifest;
  std::int64_t steps = 0;
  std::int64_t nodes = 0;
  std::int64_t channels = 1;
  std::shared_ptr<std::vector<double>> readings;  // steps * nodes * channels
  SensorGraph graph;
  std::vector<Incident> incidents;
  PatternCalendar calendar;

  TimestampMinutes timestamp_at(std::int64_t step) const {
    return manifest.start_timestamp + step * manifest.interval_minutes;
  }
};

LoadedDataset load_dataset(const std::string& manifest_path);

/// Per-channel z-score statistics fitted on the training rows only.
struct Normalization {
  std::vector<double> mean;
  std::vector<double> stddev;

  static Normalization fit(const std::vector<double>& readings, std::int64_t fit_rows,
                           std::int64_t nodes, std::int64_t channels);
  void apply(std::vector<double>& readings, std::int64_t nodes, std::int64_t channels) const;
  double normalize(double x, std::int64_t channel) const;
  double denormalize(double z, std::int64_t channel) const;
};

/// Contiguous chronological 70/10/20 split (integer floor on the first two,
/// remainder to test). `min_steps` guards against degenerate series.
struct SplitBounds {
  std::int64_t train_end = 0;  // [0, train_end)
  std::int64_t val_end = 0;    // [train_end, val_end)
  std::int64_t total = 0;      // [val_end, total)
};

SplitBounds split_7_1_2(std::int64_t steps, std::int64_t window_steps);

struct WindowSample {
  std::int64_t start_step = 0;  // global index of the first input step
  TimestampMinutes start_time = 0;
  int pattern_id = 0;
  bool incident = false;  // an incident overlaps the target window
};

/// Sliding windows over one split, stride 1, never crossing the split
/// boundary. Samples view the shared (normalized) readings buffer; batch
/// tensors materialize on demand.
class WindowSet {
 public:
  WindowSet() = default;
  WindowSet(std::shared_ptr<const std::vector<double>> readings, std::int64_t nodes,
            std::int64_t channels, std::int64_t input_steps, std::int64_t output_steps,
            std::vector<WindowSample> samples);

  std::int64_t size() const { return static_cast<std::int64_t>(samples_.size()); }
  bool empty() const { return samples_.empty(); }
  const WindowSample& sample(std::int64_t i) const {
    return samples_[static_cast<std::size_t>(i)];
  }
  std::int64_t input_steps() const { return input_steps_; }
  std::int64_t output_steps() const { return output_steps_; }
  std::int64_t nodes() const { return nodes_; }
  std::int64_t channels() const { return channels_; }

  Tensor inputs(const std::vector<std::int64_t>& indices) const;   // (B,T,N,C)
  Tensor targets(const std::vector<std::int64_t>& indices) const;  // (B,T',N,C)
  std::vector<int> pattern_ids(const std::vector<std::int64_t>& indices) const;

 private:
  std::shared_ptr<const std::vector<double>> readings_;
  std::int64_t nodes_ = 0, channels_ = 1, input_steps_ = 0, output_steps_ = 0;
  std::vector<WindowSample> samples_;
};

WindowSet make_windows(const LoadedDataset& data,
                       std::shared_ptr<const std::vector<double>> normalized,
                       std::int64_t split_begin, std::int64_t split_end,
                       std::int64_t input_steps, std::int64_t output_steps);

}  // namespace stf
