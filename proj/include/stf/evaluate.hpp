#pragma once

#include "stf/data.hpp"
#include "stf/model.hpp"
#include "stf/train.hpp"

#include <optional>
#include <string>
#include <vector>

namespace stf {

/// Error over one subset of samples/steps. `rmse`/`mae` are absent (not zero)
/// when the slice is empty.
struct SliceMetric {
  std::optional<double> rmse;
  std::optional<double> mae;
  std::int64_t count = 0;
};

struct HorizonMetric {
  int minutes = 0;
  std::int64_t steps = 0;  // 1-based horizon step the mark lands on
  SliceMetric metric;
};

/// Evaluation on denormalized values: overall errors, the 15/30/60-minute
/// horizon marks that fit the output window, the complex-time slice (target
/// windows starting 16:00-20:00 on non-holiday workdays) at the 1-hour
/// horizon, the incident-window slice, and the last-value persistence
/// baseline.
struct MetricsReport {
  std::int64_t sample_count = 0;
  double rmse = 0.0;
  double mae = 0.0;
  std::vector<HorizonMetric> horizons;
  SliceMetric cpx;
  std::int64_t cpx_horizon_steps = 0;
  SliceMetric incident;
  double persistence_rmse = 0.0;

  std::string to_json() const;
};

/// Raw per-sample forecasts kept for recomputation and export.
struct PredictionDump {
  std::vector<double> predictions;  // sample-major (B,T',N,C), denormalized
  std::vector<double> targets;
};

MetricsReport evaluate(const DualModel& model, const WindowSet& windows,
                       const Normalization& norm, const PatternCalendar& calendar,
                       int interval_minutes, PredictionDump* dump = nullptr);

/// CSV with one row per sample: index, start timestamp, pattern id, incident
/// flag, then the pooled intrinsic and environment readouts (2D columns).
void export_embeddings(const DualModel& model, const WindowSet& windows,
                       const std::string& path);

void write_predictions_csv(const WindowSet& windows, const PredictionDump& dump,
                           const std::string& path);

}  // namespace stf
