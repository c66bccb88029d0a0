#include "stf/evaluate.hpp"

#include "stf/ops.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace stf {

namespace {

struct ErrorAccumulator {
  double squared = 0.0;
  double absolute = 0.0;
  std::int64_t count = 0;

  void add(double prediction, double target) {
    const double err = prediction - target;
    squared += err * err;
    absolute += std::abs(err);
    ++count;
  }
  SliceMetric finish() const {
    SliceMetric m;
    m.count = count;
    if (count > 0) {
      m.rmse = std::sqrt(squared / static_cast<double>(count));
      m.mae = absolute / static_cast<double>(count);
    }
    return m;
  }
};

constexpr int kComplexStart = 16 * 60;  // complex times: 16:00-20:00 workdays
constexpr int kComplexEnd = 20 * 60;

bool in_complex_times(TimestampMinutes target_start, const PatternCalendar& calendar) {
  if (!calendar.is_workday(target_start)) return false;
  const CivilTime c = civil_from_minutes(target_start);
  const int minute = c.hour * 60 + c.minute;
  return minute >= kComplexStart && minute < kComplexEnd;
}

}  // namespace

MetricsReport evaluate(const DualModel& model, const WindowSet& windows,
                       const Normalization& norm, const PatternCalendar& calendar,
                       int interval_minutes, PredictionDump* dump) {
  NoGradGuard no_grad;
  MetricsReport report;
  report.sample_count = windows.size();
  const auto t_out = windows.output_steps();
  const auto t_in = windows.input_steps();
  const auto nodes = windows.nodes();
  const auto channels = windows.channels();
  const auto per_sample = t_out * nodes * channels;

  // horizon marks at 15/30/60 minutes where they land on a whole step
  std::vector<std::pair<int, std::int64_t>> marks;  // (minutes, 1-based step)
  for (int minutes : {15, 30, 60}) {
    if (minutes % interval_minutes == 0 && minutes / interval_minutes <= t_out) {
      marks.push_back({minutes, minutes / interval_minutes});
    }
  }
  report.cpx_horizon_steps =
      (60 % interval_minutes == 0 && 60 / interval_minutes <= t_out) ? 60 / interval_minutes
                                                                     : t_out;

  ErrorAccumulator overall, incident_acc, cpx_acc, persistence_acc;
  std::vector<ErrorAccumulator> mark_acc(marks.size());

  if (dump) {
    dump->predictions.assign(static_cast<std::size_t>(windows.size() * per_sample), 0.0);
    dump->targets.assign(static_cast<std::size_t>(windows.size() * per_sample), 0.0);
  }

  const std::int64_t batch_size = 64;
  for (std::int64_t begin = 0; begin < windows.size(); begin += batch_size) {
    std::vector<std::int64_t> idx;
    for (std::int64_t i = begin; i < std::min(windows.size(), begin + batch_size); ++i) {
      idx.push_back(i);
    }
    Tensor x = windows.inputs(idx);
    Tensor y = windows.targets(idx);
    ForwardOutputs out = forward(model, x, windows.pattern_ids(idx));

    for (std::size_t b = 0; b < idx.size(); ++b) {
      const WindowSample& sample = windows.sample(idx[b]);
      const TimestampMinutes target_start =
          sample.start_time + t_in * interval_minutes;
      const bool complex_slice = in_complex_times(target_start, calendar);
      for (std::int64_t t = 0; t < t_out; ++t) {
        for (std::int64_t v = 0; v < nodes; ++v) {
          for (std::int64_t c = 0; c < channels; ++c) {
            const auto flat = ((static_cast<std::int64_t>(b) * t_out + t) * nodes + v) *
                                  channels + c;
            const double pred = norm.denormalize(out.prediction.at(flat), c);
            const double truth = norm.denormalize(y.at(flat), c);
            overall.add(pred, truth);
            for (std::size_t m = 0; m < marks.size(); ++m) {
              if (t + 1 == marks[m].second) mark_acc[m].add(pred, truth);
            }
            if (sample.incident) incident_acc.add(pred, truth);
            if (complex_slice && t + 1 == report.cpx_horizon_steps) cpx_acc.add(pred, truth);
            // persistence repeats the last observed value over the horizon
            const auto last_in = ((static_cast<std::int64_t>(b) * t_in + (t_in - 1)) * nodes + v) *
                                     channels + c;
            persistence_acc.add(norm.denormalize(x.at(last_in), c), truth);
            if (dump) {
              const auto global = idx[b] * per_sample + (t * nodes + v) * channels + c;
              dump->predictions[static_cast<std::size_t>(global)] = pred;
              dump->targets[static_cast<std::size_t>(global)] = truth;
            }
          }
        }
      }
    }
  }

  const SliceMetric all = overall.finish();
  report.rmse = all.rmse.value_or(0.0);
  report.mae = all.mae.value_or(0.0);
  for (std::size_t m = 0; m < marks.size(); ++m) {
    HorizonMetric h;
    h.minutes = marks[m].first;
    h.steps = marks[m].second;
    h.metric = mark_acc[m].finish();
    report.horizons.push_back(h);
  }
  report.cpx = cpx_acc.finish();
  report.incident = incident_acc.finish();
  report.persistence_rmse = persistence_acc.finish().rmse.value_or(0.0);
  return report;
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["samples"] = sample_count;
  j["rmse"] = rmse;
  j["mae"] = mae;
  nlohmann::ordered_json h = nlohmann::ordered_json::object();
  for (const HorizonMetric& mark : horizons) {
    nlohmann::ordered_json entry;
    entry["steps"] = mark.steps;
    entry["rmse"] = mark.metric.rmse ? nlohmann::ordered_json(*mark.metric.rmse)
                                     : nlohmann::ordered_json(nullptr);
    entry["mae"] = mark.metric.mae ? nlohmann::ordered_json(*mark.metric.mae)
                                   : nlohmann::ordered_json(nullptr);
    h[std::to_string(mark.minutes)] = entry;
  }
  j["horizons"] = h;
  j["cpx"] = {{"count", cpx.count},
              {"horizon_steps", cpx_horizon_steps},
              {"rmse", cpx.rmse ? nlohmann::ordered_json(*cpx.rmse)
                                : nlohmann::ordered_json(nullptr)}};
  j["incident"] = {{"count", incident.count},
                   {"rmse", incident.rmse ? nlohmann::ordered_json(*incident.rmse)
                                          : nlohmann::ordered_json(nullptr)},
                   {"mae", incident.mae ? nlohmann::ordered_json(*incident.mae)
                                        : nlohmann::ordered_json(nullptr)}};
  j["persistence_rmse"] = persistence_rmse;
  return j.dump(2) + "\n";
}

void export_embeddings(const DualModel& model, const WindowSet& windows,
                       const std::string& path) {
  NoGradGuard no_grad;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("embeddings: cannot write " + path);
  out.precision(17);
  const std::int64_t batch_size = 64;
  for (std::int64_t begin = 0; begin < windows.size(); begin += batch_size) {
    std::vector<std::int64_t> idx;
    for (std::int64_t i = begin; i < std::min(windows.size(), begin + batch_size); ++i) {
      idx.push_back(i);
    }
    Tensor x = windows.inputs(idx);
    ForwardOutputs fo = forward(model, x, windows.pattern_ids(idx));
    const auto width = fo.g_intrinsic.dim(1);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const WindowSample& sample = windows.sample(idx[b]);
      out << idx[b] << ',' << format_timestamp(sample.start_time) << ',' << sample.pattern_id
          << ',' << (sample.incident ? 1 : 0);
      for (std::int64_t d = 0; d < width; ++d) {
        out << ',' << fo.g_intrinsic.at(static_cast<std::int64_t>(b) * width + d);
      }
      for (std::int64_t d = 0; d < width; ++d) {
        out << ',' << fo.g_environment.at(static_cast<std::int64_t>(b) * width + d);
      }
      out << '\n';
    }
  }
}

void write_predictions_csv(const WindowSet& windows, const PredictionDump& dump,
                           const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("predictions: cannot write " + path);
  out.precision(17);
  const auto per_sample = windows.output_steps() * windows.nodes() * windows.channels();
  for (std::int64_t i = 0; i < windows.size(); ++i) {
    out << i;
    for (std::int64_t f = 0; f < per_sample; ++f) {
      out << ',' << dump.predictions[static_cast<std::size_t>(i * per_sample + f)];
    }
    for (std::int64_t f = 0; f < per_sample; ++f) {
      out << ',' << dump.targets[static_cast<std::size_t>(i * per_sample + f)];
    }
    out << '\n';
  }
}

}  // namespace stf
