#include "stf/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace stf {

namespace {

namespace fs = std::filesystem;

std::string resolve(const std::string& base_dir, const std::string& path) {
  if (path.empty()) return path;
  fs::path p(path);
  if (p.is_absolute()) return path;
  return (fs::path(base_dir) / p).string();
}

std::vector<Incident> load_incidents(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("incidents: cannot open " + path);
  std::vector<Incident> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Incident inc;
    char c1 = 0, c2 = 0, c3 = 0;
    std::istringstream row(line);
    if (!(row >> inc.node >> c1 >> inc.start_step >> c2 >> inc.duration_steps >> c3 >>
          inc.magnitude) ||
        c1 != ',' || c2 != ',' || c3 != ',') {
      throw std::runtime_error("incidents: cannot parse line " + std::to_string(line_no) +
                               " of " + path);
    }
    out.push_back(inc);
  }
  return out;
}

}  // namespace

DatasetManifest DatasetManifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest: cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  DatasetManifest m;
  m.name = j.value("name", std::string("dataset"));
  m.sensor_count = j.at("sensor_count").get<std::int64_t>();
  m.interval_minutes = j.at("interval_minutes").get<int>();
  m.start_timestamp = parse_timestamp(j.at("start_timestamp").get<std::string>());
  m.reading_channels = j.value("reading_channels", std::int64_t{1});
  const std::string dir = fs::path(path).parent_path().string();
  m.readings_path = resolve(dir, j.at("readings").get<std::string>());
  m.edges_path = resolve(dir, j.at("edges").get<std::string>());
  if (j.contains("holidays")) m.holidays_path = resolve(dir, j["holidays"].get<std::string>());
  if (j.contains("incidents")) m.incidents_path = resolve(dir, j["incidents"].get<std::string>());
  m.validate();
  return m;
}

void DatasetManifest::save(const std::string& path) const {
  validate();
  nlohmann::ordered_json j;
  j["name"] = name;
  j["sensor_count"] = sensor_count;
  j["interval_minutes"] = interval_minutes;
  j["start_timestamp"] = format_timestamp(start_timestamp);
  j["reading_channels"] = reading_channels;
  const fs::path dir = fs::path(path).parent_path();
  auto relative_to_manifest = [&dir](const std::string& p) {
    fs::path candidate(p);
    if (candidate.is_absolute() && !dir.empty()) {
      std::error_code ec;
      fs::path rel = fs::relative(candidate, dir, ec);
      if (!ec && !rel.empty()) return rel.string();
    }
    return p;
  };
  j["readings"] = relative_to_manifest(readings_path);
  j["edges"] = relative_to_manifest(edges_path);
  if (!holidays_path.empty()) j["holidays"] = relative_to_manifest(holidays_path);
  if (!incidents_path.empty()) j["incidents"] = relative_to_manifest(incidents_path);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("manifest: cannot write " + path);
  out << j.dump(2) << "\n";
}

void DatasetManifest::validate() const {
  if (sensor_count < 1 || reading_channels < 1) {
    throw std::invalid_argument("manifest: sensor_count and reading_channels must be positive");
  }
  if (interval_minutes < 1 || (24 * 60) % interval_minutes != 0) {
    throw std::invalid_argument("manifest: interval_minutes must divide 24h, got " +
                                std::to_string(interval_minutes));
  }
}

GraphKind graph_kind_from_string(const std::string& tag) {
  if (tag == "path") return GraphKind::path;
  if (tag == "grid") return GraphKind::grid;
  if (tag == "random") return GraphKind::random;
  throw std::invalid_argument("synthetic: unknown graph kind '" + tag +
                              "' (want path|grid|random)");
}

void SyntheticConfig::validate() const {
  if (nodes < 1 || days < 1 || interval_minutes < 1 || (24 * 60) % interval_minutes != 0) {
    throw std::invalid_argument("synthetic: nodes, days and a day-dividing interval required");
  }
  if (noise_std < 0 || incident_rate < 0 || incident_magnitude < 0 ||
      incident_magnitude > 1 || incident_duration < 1) {
    throw std::invalid_argument("synthetic: incident parameters out of range");
  }
}

SyntheticDataset generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  SyntheticDataset out;
  out.config = config;
  switch (config.graph) {
    case GraphKind::path:
      out.graph = make_path_graph(config.nodes);
      break;
    case GraphKind::grid: {
      const auto rows = static_cast<std::int64_t>(std::ceil(std::sqrt(config.nodes)));
      const auto cols = (config.nodes + rows - 1) / rows;
      SensorGraph grid = make_grid_graph(rows, cols);
      // trim the grid to exactly `nodes` nodes
      std::vector<std::pair<std::int64_t, std::int64_t>> edges;
      for (auto [a, b] : grid.edges) {
        if (a < config.nodes && b < config.nodes) edges.push_back({a, b});
      }
      out.graph = SensorGraph::from_edges(config.nodes, std::move(edges));
      break;
    }
    case GraphKind::random:
      out.graph = make_random_graph(config.nodes, config.edge_probability, rng());
      break;
  }

  const std::int64_t per_day = (24 * 60) / config.interval_minutes;
  out.steps = per_day * config.days;
  const auto n = config.nodes;

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> amplitude(static_cast<std::size_t>(n));
  std::vector<double> phase(static_cast<std::size_t>(n));
  std::vector<double> weekly_phase(static_cast<std::size_t>(n));
  for (std::int64_t v = 0; v < n; ++v) {
    amplitude[static_cast<std::size_t>(v)] = config.daily_amplitude * (0.8 + 0.4 * unit(rng));
    phase[static_cast<std::size_t>(v)] = 2.0 * M_PI * unit(rng);
    weekly_phase[static_cast<std::size_t>(v)] = 2.0 * M_PI * unit(rng);
  }

  std::normal_distribution<double> noise(0.0, config.noise_std);
  out.readings.resize(static_cast<std::size_t>(out.steps * n));
  const double day_minutes = 24.0 * 60.0;
  for (std::int64_t step = 0; step < out.steps; ++step) {
    const double minute = static_cast<double>(step) * config.interval_minutes;
    const double day_frac = minute / day_minutes;
    const double week_frac = minute / (7.0 * day_minutes);
    for (std::int64_t v = 0; v < n; ++v) {
      const double weekly =
          1.0 + config.weekly_amplitude *
                    std::sin(2.0 * M_PI * week_frac + weekly_phase[static_cast<std::size_t>(v)]);
      double flow = config.base_flow * weekly +
                    amplitude[static_cast<std::size_t>(v)] *
                        std::sin(2.0 * M_PI * day_frac + phase[static_cast<std::size_t>(v)]);
      if (config.noise_std > 0.0) flow += noise(rng);
      out.readings[static_cast<std::size_t>(step * n + v)] = flow;
    }
  }

  // Poisson incident arrivals per node-day, uniform start within the day
  std::poisson_distribution<int> arrivals(config.incident_rate);
  for (std::int64_t day = 0; day < config.days; ++day) {
    for (std::int64_t v = 0; v < n; ++v) {
      const int count = config.incident_rate > 0.0 ? arrivals(rng) : 0;
      for (int i = 0; i < count; ++i) {
        Incident inc;
        inc.node = v;
        inc.start_step = day * per_day + static_cast<std::int64_t>(unit(rng) * per_day);
        inc.duration_steps = config.incident_duration;
        inc.magnitude = config.incident_magnitude;
        out.incidents.push_back(inc);
      }
    }
  }
  std::sort(out.incidents.begin(), out.incidents.end(),
            [](const Incident& a, const Incident& b) {
              return std::tie(a.start_step, a.node) < std::tie(b.start_step, b.node);
            });
  for (const Incident& inc : out.incidents) {
    const double at_node = 1.0 - inc.magnitude;
    const double at_neighbor = 1.0 - inc.magnitude / 2.0;  // half magnitude one hop out
    const auto stop = std::min(out.steps, inc.start_step + inc.duration_steps);
    for (std::int64_t step = inc.start_step; step < stop; ++step) {
      out.readings[static_cast<std::size_t>(step * n + inc.node)] *= at_node;
      for (std::int64_t u : out.graph.neighbors[static_cast<std::size_t>(inc.node)]) {
        out.readings[static_cast<std::size_t>(step * n + u)] *= at_neighbor;
      }
    }
  }
  for (double& x : out.readings) x = std::max(0.0, x);  // no negative flows
  return out;
}

std::string write_synthetic(const SyntheticDataset& data, const std::string& dir) {
  fs::create_directories(dir);
  const auto n = data.config.nodes;
  {
    std::ofstream out(fs::path(dir) / "readings.csv");
    out.precision(17);
    for (std::int64_t step = 0; step < data.steps; ++step) {
      for (std::int64_t v = 0; v < n; ++v) {
        if (v) out << ',';
        out << data.readings[static_cast<std::size_t>(step * n + v)];
      }
      out << '\n';
    }
  }
  {
    std::ofstream out(fs::path(dir) / "edges.txt");
    out << "# src,dst\n";
    for (auto [a, b] : data.graph.edges) out << a << ',' << b << '\n';
  }
  {
    std::ofstream out(fs::path(dir) / "incidents.csv");
    out.precision(17);
    for (const Incident& inc : data.incidents) {
      out << inc.node << ',' << inc.start_step << ',' << inc.duration_steps << ','
          << inc.magnitude << '\n';
    }
  }
  {
    std::ofstream out(fs::path(dir) / "holidays.txt");
    out << "# one ISO date per line\n";
  }
  DatasetManifest m;
  m.name = data.config.name;
  m.sensor_count = n;
  m.interval_minutes = data.config.interval_minutes;
  m.start_timestamp = data.config.start_timestamp;
  m.reading_channels = 1;
  m.readings_path = fs::absolute(fs::path(dir) / "readings.csv").string();
  m.edges_path = fs::absolute(fs::path(dir) / "edges.txt").string();
  m.holidays_path = fs::absolute(fs::path(dir) / "holidays.txt").string();
  m.incidents_path = fs::absolute(fs::path(dir) / "incidents.csv").string();
  const std::string manifest_path = fs::absolute(fs::path(dir) / "manifest.json").string();
  m.save(manifest_path);
  return manifest_path;
}

LoadedDataset load_dataset(const std::string& manifest_path) {
  LoadedDataset data;
  data.manifest = DatasetManifest::load(manifest_path);
  data.nodes = data.manifest.sensor_count;
  data.channels = data.manifest.reading_channels;

  std::ifstream in(data.manifest.readings_path);
  if (!in) throw std::runtime_error("readings: cannot open " + data.manifest.readings_path);
  auto readings = std::make_shared<std::vector<double>>();
  std::string line;
  std::int64_t row_no = 0;
  const auto expected = data.nodes * data.channels;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::int64_t cells = 0;
    std::size_t begin = 0;
    while (begin <= line.size()) {
      std::size_t end = line.find(',', begin);
      if (end == std::string::npos) end = line.size();
      const std::string cell = line.substr(begin, end - begin);
      try {
        std::size_t used = 0;
        const double value = std::stod(cell, &used);
        while (used < cell.size() && (cell[used] == ' ' || cell[used] == '\r')) ++used;
        if (used != cell.size()) throw std::invalid_argument(cell);
        readings->push_back(value);
      } catch (const std::exception&) {
        throw std::runtime_error("readings: non-numeric cell '" + cell + "' at row " +
                                 std::to_string(row_no));
      }
      ++cells;
      begin = end + 1;
    }
    if (cells != expected) {
      throw std::runtime_error("readings: row " + std::to_string(row_no) + " has " +
                               std::to_string(cells) + " cells, expected " +
                               std::to_string(expected));
    }
  }
  data.steps = row_no;
  data.readings = std::move(readings);
  data.graph = load_sensor_graph(data.manifest.edges_path, data.nodes);
  if (!data.manifest.holidays_path.empty()) {
    data.calendar.holidays = load_holidays(data.manifest.holidays_path);
  }
  if (!data.manifest.incidents_path.empty()) {
    data.incidents = load_incidents(data.manifest.incidents_path);
  }
  return data;
}

Normalization Normalization::fit(const std::vector<double>& readings, std::int64_t fit_rows,
                                 std::int64_t nodes, std::int64_t channels) {
  if (fit_rows < 1) throw std::invalid_argument("zscore: empty fit range");
  Normalization norm;
  norm.mean.assign(static_cast<std::size_t>(channels), 0.0);
  norm.stddev.assign(static_cast<std::size_t>(channels), 0.0);
  const double count = static_cast<double>(fit_rows * nodes);
  for (std::int64_t row = 0; row < fit_rows; ++row) {
    for (std::int64_t v = 0; v < nodes; ++v) {
      for (std::int64_t c = 0; c < channels; ++c) {
        norm.mean[static_cast<std::size_t>(c)] +=
            readings[static_cast<std::size_t>((row * nodes + v) * channels + c)];
      }
    }
  }
  for (auto& m : norm.mean) m /= count;
  for (std::int64_t row = 0; row < fit_rows; ++row) {
    for (std::int64_t v = 0; v < nodes; ++v) {
      for (std::int64_t c = 0; c < channels; ++c) {
        const double d = readings[static_cast<std::size_t>((row * nodes + v) * channels + c)] -
                         norm.mean[static_cast<std::size_t>(c)];
        norm.stddev[static_cast<std::size_t>(c)] += d * d;
      }
    }
  }
  for (std::size_t c = 0; c < norm.stddev.size(); ++c) {
    norm.stddev[c] = std::sqrt(norm.stddev[c] / count);
    if (norm.stddev[c] == 0.0) {
      throw std::invalid_argument("zscore: channel " + std::to_string(c) +
                                  " is constant on the training split");
    }
  }
  return norm;
}

void Normalization::apply(std::vector<double>& readings, std::int64_t nodes,
                          std::int64_t channels) const {
  const auto rows = static_cast<std::int64_t>(readings.size()) / (nodes * channels);
  for (std::int64_t row = 0; row < rows; ++row) {
    for (std::int64_t v = 0; v < nodes; ++v) {
      for (std::int64_t c = 0; c < channels; ++c) {
        auto& x = readings[static_cast<std::size_t>((row * nodes + v) * channels + c)];
        x = normalize(x, c);
      }
    }
  }
}

double Normalization::normalize(double x, std::int64_t channel) const {
  return (x - mean[static_cast<std::size_t>(channel)]) / stddev[static_cast<std::size_t>(channel)];
}

double Normalization::denormalize(double z, std::int64_t channel) const {
  return z * stddev[static_cast<std::size_t>(channel)] + mean[static_cast<std::size_t>(channel)];
}

SplitBounds split_7_1_2(std::int64_t steps, std::int64_t window_steps) {
  if (steps < 10 || steps < 5 * window_steps) {
    throw std::invalid_argument("split: " + std::to_string(steps) +
                                " steps is too short for windows of " +
                                std::to_string(window_steps));
  }
  SplitBounds b;
  b.train_end = steps * 7 / 10;
  b.val_end = b.train_end + steps / 10;
  b.total = steps;
  return b;
}

WindowSet::WindowSet(std::shared_ptr<const std::vector<double>> readings, std::int64_t nodes,
                     std::int64_t channels, std::int64_t input_steps, std::int64_t output_steps,
                     std::vector<WindowSample> samples)
    : readings_(std::move(readings)),
      nodes_(nodes),
      channels_(channels),
      input_steps_(input_steps),
      output_steps_(output_steps),
      samples_(std::move(samples)) {}

Tensor WindowSet::inputs(const std::vector<std::int64_t>& indices) const {
  const auto width = nodes_ * channels_;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(static_cast<std::int64_t>(indices.size()) * input_steps_ * width));
  for (std::int64_t i : indices) {
    const auto& s = samples_[static_cast<std::size_t>(i)];
    const auto begin = s.start_step * width;
    out.insert(out.end(), readings_->begin() + begin,
               readings_->begin() + begin + input_steps_ * width);
  }
  return Tensor::from_data({static_cast<std::int64_t>(indices.size()), input_steps_, nodes_,
                            channels_},
                           std::move(out));
}

Tensor WindowSet::targets(const std::vector<std::int64_t>& indices) const {
  const auto width = nodes_ * channels_;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(static_cast<std::int64_t>(indices.size()) * output_steps_ * width));
  for (std::int64_t i : indices) {
    const auto& s = samples_[static_cast<std::size_t>(i)];
    const auto begin = (s.start_step + input_steps_) * width;
    out.insert(out.end(), readings_->begin() + begin,
               readings_->begin() + begin + output_steps_ * width);
  }
  return Tensor::from_data({static_cast<std::int64_t>(indices.size()), output_steps_, nodes_,
                            channels_},
                           std::move(out));
}

std::vector<int> WindowSet::pattern_ids(const std::vector<std::int64_t>& indices) const {
  std::vector<int> ids;
  ids.reserve(indices.size());
  for (std::int64_t i : indices) ids.push_back(samples_[static_cast<std::size_t>(i)].pattern_id);
  return ids;
}

WindowSet make_windows(const LoadedDataset& data,
                       std::shared_ptr<const std::vector<double>> normalized,
                       std::int64_t split_begin, std::int64_t split_end,
                       std::int64_t input_steps, std::int64_t output_steps) {
  const auto window = input_steps + output_steps;
  if (split_end - split_begin < window) {
    throw std::invalid_argument("windows: split of " + std::to_string(split_end - split_begin) +
                                " steps cannot fit windows of " + std::to_string(window));
  }
  std::vector<WindowSample> samples;
  for (std::int64_t start = split_begin; start + window <= split_end; ++start) {
    WindowSample s;
    s.start_step = start;
    s.start_time = data.timestamp_at(start);
    s.pattern_id = assign_pattern(s.start_time, data.calendar);
    const auto target_begin = start + input_steps;
    const auto target_end = target_begin + output_steps;
    for (const Incident& inc : data.incidents) {
      if (inc.start_step < target_end && target_begin < inc.start_step + inc.duration_steps) {
        s.incident = true;
        break;
      }
    }
    samples.push_back(s);
  }
  return WindowSet(std::move(normalized), data.nodes, data.channels, input_steps, output_steps,
                   std::move(samples));
}

}  // namespace stf
