#include "stf/train.hpp"

#include "stf/autodiff.hpp"
#include "stf/evaluate.hpp"
#include "stf/ops.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>

namespace stf {

namespace {

namespace fs = std::filesystem;

int parse_minute_of_day(const std::string& hhmm) {
  int h = 0, m = 0;
  if (std::sscanf(hhmm.c_str(), "%d:%d", &h, &m) != 2 || h < 0 || h > 24 || m < 0 || m > 59) {
    throw std::invalid_argument("calendar: cannot parse time-of-day '" + hhmm + "'");
  }
  return h * 60 + m;
}

std::string minute_of_day_string(int minute) {
  char buffer[16];
  std::snprintf(buffer, sizeof(buffer), "%02d:%02d", minute / 60, minute % 60);
  return buffer;
}

// "section.key=value" into the config json, guessing bool/int/double/string
void apply_override(nlohmann::ordered_json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw std::invalid_argument("override '" + assignment + "' is not key=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::ordered_json* node = &j;
  std::size_t begin = 0;
  while (true) {
    const auto dot = path.find('.', begin);
    const std::string key = path.substr(begin, dot == std::string::npos ? dot : dot - begin);
    if (key.empty()) throw std::invalid_argument("override '" + assignment + "' has an empty key");
    if (dot == std::string::npos) {
      if (text == "true" || text == "false") {
        (*node)[key] = (text == "true");
      } else {
        try {
          std::size_t used = 0;
          const long long as_int = std::stoll(text, &used);
          if (used == text.size()) {
            (*node)[key] = as_int;
          } else {
            const double as_double = std::stod(text, &used);
            if (used != text.size()) throw std::invalid_argument(text);
            (*node)[key] = as_double;
          }
        } catch (const std::exception&) {
          (*node)[key] = text;
        }
      }
      return;
    }
    node = &(*node)[key];
    begin = dot + 1;
  }
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt_a, std::uint64_t salt_b) {
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (salt_a + 1) + 0xBF58476D1CE4E5B9ULL * (salt_b + 1);
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

double validation_rmse(const DualModel& model, const WindowSet& windows,
                       const Normalization& norm) {
  NoGradGuard no_grad;
  double sq_sum = 0.0;
  std::int64_t count = 0;
  const std::int64_t batch = 64;
  const auto channels = windows.channels();
  for (std::int64_t begin = 0; begin < windows.size(); begin += batch) {
    std::vector<std::int64_t> idx;
    for (std::int64_t i = begin; i < std::min(windows.size(), begin + batch); ++i) {
      idx.push_back(i);
    }
    Tensor x = windows.inputs(idx);
    Tensor y = windows.targets(idx);
    ForwardOutputs out = forward(model, x, windows.pattern_ids(idx));
    for (std::int64_t f = 0; f < y.numel(); ++f) {
      const auto c = f % channels;
      const double err = norm.denormalize(out.prediction.at(f), c) -
                         norm.denormalize(y.at(f), c);
      sq_sum += err * err;
    }
    count += y.numel();
  }
  return std::sqrt(sq_sum / static_cast<double>(count));
}

}  // namespace

RunConfig RunConfig::load(const std::string& path, const std::vector<std::string>& overrides) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("run config: cannot open " + path);
    j = nlohmann::ordered_json::parse(in);
  }
  for (const std::string& assignment : overrides) apply_override(j, assignment);

  RunConfig c;
  c.seed = j.value("seed", std::uint64_t{1});
  c.output_dir = j.value("output_dir", std::string("runs/run"));
  if (j.contains("data")) {
    const auto& d = j["data"];
    c.manifest_path = d.value("manifest", std::string());
    c.input_steps = d.value("input_steps", std::int64_t{12});
    c.output_steps = d.value("output_steps", c.input_steps);
    if (!c.manifest_path.empty() && !path.empty()) {
      fs::path p(c.manifest_path);
      if (!p.is_absolute()) {
        c.manifest_path = (fs::path(path).parent_path() / p).string();
      }
    }
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    c.model.hidden = m.value("hidden", std::int64_t{16});
    c.model.layers = m.value("layers", std::int64_t{2});
    c.model.levels = m.value("levels", 2);
    c.model.structure = structure_from_string(m.value("structure", std::string("sequential")));
    c.model.fusion = fusion_from_string(m.value("fusion", std::string("add")));
    c.model.span = m.value("span", std::int64_t{1});
    c.model.causal_temporal = m.value("causal_temporal", true);
  }
  if (j.contains("loss")) {
    const auto& l = j["loss"];
    c.weights.alpha = l.value("alpha", 0.0);
    c.weights.beta = l.value("beta", 0.0);
    c.weights.gamma = l.value("gamma", 0.0);
    c.weights.p_norm = l.value("p_norm", 2);
    const std::string mode = l.value("env_permutation", std::string("cyclic"));
    if (mode == "cyclic") {
      c.env_permutation = EnvPermutation::cyclic;
    } else if (mode == "random") {
      c.env_permutation = EnvPermutation::random;
    } else {
      throw std::invalid_argument("run config: env_permutation must be cyclic|random");
    }
  }
  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    c.optimizer.lr = o.value("lr", 0.001);
    c.optimizer.epochs = o.value("epochs", 30);
    c.optimizer.batch_size = o.value("batch_size", std::int64_t{16});
  }
  if (j.contains("calendar")) {
    const auto& cal = j["calendar"];
    c.calendar.am_start = parse_minute_of_day(cal.value("am_start", std::string("06:00")));
    c.calendar.am_end = parse_minute_of_day(cal.value("am_end", std::string("09:00")));
    c.calendar.pm_start = parse_minute_of_day(cal.value("pm_start", std::string("16:00")));
    c.calendar.pm_end = parse_minute_of_day(cal.value("pm_end", std::string("22:00")));
  }
  if (c.optimizer.epochs < 1 || c.optimizer.batch_size < 1 || c.optimizer.lr <= 0.0) {
    throw std::invalid_argument("run config: optimizer settings out of range");
  }
  return c;
}

std::string RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["output_dir"] = output_dir;
  j["data"] = {{"manifest", manifest_path},
               {"input_steps", input_steps},
               {"output_steps", output_steps}};
  j["model"] = {{"hidden", model.hidden},       {"layers", model.layers},
                {"levels", model.levels},       {"structure", to_string(model.structure)},
                {"fusion", to_string(model.fusion)}, {"span", model.span},
                {"causal_temporal", model.causal_temporal}};
  j["loss"] = {{"alpha", weights.alpha},
               {"beta", weights.beta},
               {"gamma", weights.gamma},
               {"p_norm", weights.p_norm},
               {"env_permutation",
                env_permutation == EnvPermutation::cyclic ? "cyclic" : "random"}};
  j["optimizer"] = {{"lr", optimizer.lr},
                    {"epochs", optimizer.epochs},
                    {"batch_size", optimizer.batch_size}};
  j["calendar"] = {{"am_start", minute_of_day_string(calendar.am_start)},
                   {"am_end", minute_of_day_string(calendar.am_end)},
                   {"pm_start", minute_of_day_string(calendar.pm_start)},
                   {"pm_end", minute_of_day_string(calendar.pm_end)}};
  return j.dump(2) + "\n";
}

AdamState AdamState::init(const std::vector<std::pair<std::string, Tensor>>& params, double lr) {
  AdamState s;
  s.lr = lr;
  s.first.reserve(params.size());
  s.second.reserve(params.size());
  for (const auto& [name, tensor] : params) {
    s.first.push_back(Eigen::ArrayXd::Zero(tensor.numel()));
    s.second.push_back(Eigen::ArrayXd::Zero(tensor.numel()));
  }
  return s;
}

void adam_step(std::vector<std::pair<std::string, Tensor>>& params, AdamState& state) {
  if (state.first.size() != params.size()) {
    throw std::invalid_argument("adam: state tracks " + std::to_string(state.first.size()) +
                                " parameters, got " + std::to_string(params.size()));
  }
  ++state.step;
  const double bias1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, tensor] = params[i];
    const Eigen::ArrayXd* grad = tensor.grad();
    Eigen::ArrayXd g = grad ? *grad : Eigen::ArrayXd::Zero(tensor.numel());
    if (!g.allFinite()) {
      throw std::runtime_error("adam: non-finite gradient on parameter '" + name + "'");
    }
    state.first[i] = state.beta1 * state.first[i] + (1.0 - state.beta1) * g;
    state.second[i] = state.beta2 * state.second[i] + (1.0 - state.beta2) * g.square();
    const Eigen::ArrayXd m_hat = state.first[i] / bias1;
    const Eigen::ArrayXd v_hat = state.second[i] / bias2;
    tensor.values() -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    tensor.zero_grad();
  }
}

PreparedData prepare_data(const RunConfig& config) {
  if (config.manifest_path.empty()) {
    throw std::invalid_argument("run config: data.manifest is required");
  }
  PreparedData prep;
  prep.data = load_dataset(config.manifest_path);
  prep.data.calendar.am_start = config.calendar.am_start;
  prep.data.calendar.am_end = config.calendar.am_end;
  prep.data.calendar.pm_start = config.calendar.pm_start;
  prep.data.calendar.pm_end = config.calendar.pm_end;
  // holidays come from the dataset manifest; run config holidays would be a
  // second source of truth
  const auto window = config.input_steps + config.output_steps;
  prep.bounds = split_7_1_2(prep.data.steps, window);
  prep.norm = Normalization::fit(*prep.data.readings, prep.bounds.train_end, prep.data.nodes,
                                 prep.data.channels);
  prep.normalized = std::make_shared<std::vector<double>>(*prep.data.readings);
  prep.norm.apply(*prep.normalized, prep.data.nodes, prep.data.channels);
  prep.train = make_windows(prep.data, prep.normalized, 0, prep.bounds.train_end,
                            config.input_steps, config.output_steps);
  prep.val = make_windows(prep.data, prep.normalized, prep.bounds.train_end, prep.bounds.val_end,
                          config.input_steps, config.output_steps);
  prep.test = make_windows(prep.data, prep.normalized, prep.bounds.val_end, prep.bounds.total,
                           config.input_steps, config.output_steps);
  return prep;
}

TrainResult train(const RunConfig& config) {
  PreparedData prep = prepare_data(config);
  ModelConfig mc = config.model;
  mc.input_steps = config.input_steps;
  mc.output_steps = config.output_steps;
  mc.nodes = prep.data.nodes;
  mc.channels = prep.data.channels;
  DualModel model = DualModel::init(mc, prep.data.graph, config.seed);
  auto params = model.parameters();
  AdamState adam = AdamState::init(params, config.optimizer.lr);

  fs::create_directories(config.output_dir);
  {
    std::ofstream echo(fs::path(config.output_dir) / "config.json");
    echo << config.to_json();
  }
  TrainResult result;
  result.checkpoint_path = (fs::path(config.output_dir) / "best.ckpt").string();
  result.log_path = (fs::path(config.output_dir) / "train_log.csv").string();
  std::ofstream log(result.log_path);
  log.precision(17);
  log << "epoch,pred,filter,environment,dbi,total,val_rmse\n";

  std::vector<std::int64_t> order(static_cast<std::size_t>(prep.train.size()));
  std::iota(order.begin(), order.end(), 0);
  double best = std::numeric_limits<double>::infinity();

  for (int epoch = 1; epoch <= config.optimizer.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(mix_seed(config.seed, static_cast<std::uint64_t>(epoch), 0));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    LossBreakdown sums;
    std::int64_t batches = 0;
    for (std::int64_t begin = 0; begin < prep.train.size();
         begin += config.optimizer.batch_size) {
      const auto end = std::min(prep.train.size(), begin + config.optimizer.batch_size);
      std::vector<std::int64_t> batch(order.begin() + begin, order.begin() + end);
      const auto batch_no = begin / config.optimizer.batch_size;
      try {
        Tensor x = prep.train.inputs(batch);
        Tensor y = prep.train.targets(batch);
        const std::vector<int> ids = prep.train.pattern_ids(batch);
        ForwardOutputs out = forward(model, x, ids);
        TotalLoss loss = total_loss(
            prediction_loss(out.prediction, y, config.weights.p_norm),
            filter_loss(out.g_intrinsic, out.g_environment),
            environment_loss(out.g_environment, config.env_permutation,
                             mix_seed(config.seed, static_cast<std::uint64_t>(epoch),
                                      static_cast<std::uint64_t>(batch_no) + 1)),
            dbi_loss(out.z_intrinsic, model.prototypes, ids), config.weights);
        const LossBreakdown values = loss.values(config.weights);
        if (!std::isfinite(values.total)) {
          throw std::runtime_error("non-finite loss");
        }
        backward(loss.total);
        adam_step(params, adam);
        sums.pred += values.pred;
        sums.filter += values.filter;
        sums.environment += values.environment;
        sums.dbi += values.dbi;
        sums.total += values.total;
        ++batches;
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("train: aborted at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(batch_no) + ": " + e.what());
      }
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.losses.pred = sums.pred / batches;
    entry.losses.filter = sums.filter / batches;
    entry.losses.environment = sums.environment / batches;
    entry.losses.dbi = sums.dbi / batches;
    entry.losses.total = sums.total / batches;
    entry.val_rmse = validation_rmse(model, prep.val, prep.norm);
    log << epoch << ',' << entry.losses.pred << ',' << entry.losses.filter << ','
        << entry.losses.environment << ',' << entry.losses.dbi << ',' << entry.losses.total
        << ',' << entry.val_rmse << '\n';
    result.epochs.push_back(entry);
    if (entry.val_rmse < best) {
      best = entry.val_rmse;
      result.best_epoch = epoch;
      result.best_val_rmse = best;
      save_checkpoint(result.checkpoint_path, params);
    }
  }
  return result;
}

const std::vector<double>& loss_weight_grid() {
  static const std::vector<double> grid = {0.01, 0.05, 0.1, 0.5, 1.0, 5.0};
  return grid;
}

GridSearchResult staged_grid_search(const RunConfig& base) {
  const auto& grid = loss_weight_grid();
  GridSearchResult result;
  result.alpha = result.beta = result.gamma = grid.front();

  auto run_trial = [&base](int stage, int index, double alpha, double beta, double gamma) {
    RunConfig trial = base;
    trial.weights.alpha = alpha;
    trial.weights.beta = beta;
    trial.weights.gamma = gamma;
    trial.output_dir = (fs::path(base.output_dir) / "grid" /
                        ("stage" + std::to_string(stage) + "_trial" + std::to_string(index)))
                           .string();
    TrainResult outcome = train(trial);
    return outcome.best_val_rmse;
  };

  for (int stage = 0; stage < 3; ++stage) {
    double best_rmse = std::numeric_limits<double>::infinity();
    double best_weight = grid.front();
    for (std::size_t i = 0; i < grid.size(); ++i) {
      GridTrial trial;
      trial.stage = stage;
      trial.alpha = stage == 0 ? grid[i] : result.alpha;
      trial.beta = stage == 1 ? grid[i] : (stage == 2 ? result.beta : grid.front());
      trial.gamma = stage == 2 ? grid[i] : grid.front();
      trial.val_rmse = run_trial(stage, static_cast<int>(i), trial.alpha, trial.beta, trial.gamma);
      result.trials.push_back(trial);
      if (trial.val_rmse < best_rmse) {  // strict: ties keep the smaller weight
        best_rmse = trial.val_rmse;
        best_weight = grid[i];
      }
    }
    if (stage == 0) result.alpha = best_weight;
    if (stage == 1) result.beta = best_weight;
    if (stage == 2) result.gamma = best_weight;
  }

  fs::create_directories(base.output_dir);
  result.table_path = (fs::path(base.output_dir) / "grid_trials.csv").string();
  std::ofstream table(result.table_path);
  table.precision(17);
  table << "stage,alpha,beta,gamma,val_rmse\n";
  for (const GridTrial& t : result.trials) {
    table << t.stage << ',' << t.alpha << ',' << t.beta << ',' << t.gamma << ',' << t.val_rmse
          << '\n';
  }
  return result;
}

}  // namespace stf
