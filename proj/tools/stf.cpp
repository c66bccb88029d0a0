// Command-line front end: dataset generation, training, grid search,
// evaluation, embedding export, and attention benchmarking.

#include <CLI11.hpp>
#include <json.hpp>

#include "stf/bench.hpp"
#include "stf/evaluate.hpp"
#include "stf/train.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

namespace fs = std::filesystem;

// --seed beats STF_SEED beats the config file value
void resolve_seed(stf::RunConfig& config, const CLI::Option* seed_option, std::uint64_t flag) {
  if (seed_option->count() > 0) {
    config.seed = flag;
  } else if (const char* env = std::getenv("STF_SEED")) {
    config.seed = std::strtoull(env, nullptr, 10);
  }
}

stf::SyntheticConfig synthetic_from_json(const std::string& path,
                                         const std::vector<std::string>& overrides) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("generate: cannot open " + path);
    j = nlohmann::ordered_json::parse(in);
  }
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::runtime_error("bad override '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string text = kv.substr(eq + 1);
    try {
      std::size_t used = 0;
      const double value = std::stod(text, &used);
      if (used == text.size()) {
        j[key] = value;
      } else {
        j[key] = text;
      }
    } catch (const std::exception&) {
      j[key] = text;
    }
  }
  stf::SyntheticConfig cfg;
  cfg.name = j.value("name", cfg.name);
  cfg.nodes = j.value("nodes", cfg.nodes);
  cfg.days = j.value("days", cfg.days);
  cfg.interval_minutes = j.value("interval_minutes", cfg.interval_minutes);
  cfg.graph = stf::graph_kind_from_string(j.value("graph", std::string("path")));
  cfg.edge_probability = j.value("edge_probability", cfg.edge_probability);
  cfg.base_flow = j.value("base_flow", cfg.base_flow);
  cfg.daily_amplitude = j.value("daily_amplitude", cfg.daily_amplitude);
  cfg.weekly_amplitude = j.value("weekly_amplitude", cfg.weekly_amplitude);
  cfg.noise_std = j.value("noise_std", cfg.noise_std);
  cfg.incident_rate = j.value("incident_rate", cfg.incident_rate);
  cfg.incident_magnitude = j.value("incident_magnitude", cfg.incident_magnitude);
  cfg.incident_duration = j.value("incident_duration", cfg.incident_duration);
  if (j.contains("start_timestamp")) {
    cfg.start_timestamp = stf::parse_timestamp(j["start_timestamp"].get<std::string>());
  }
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

stf::DualModel restore_model(const stf::RunConfig& config, const stf::PreparedData& prep,
                             const std::string& checkpoint) {
  stf::ModelConfig mc = config.model;
  mc.input_steps = config.input_steps;
  mc.output_steps = config.output_steps;
  mc.nodes = prep.data.nodes;
  mc.channels = prep.data.channels;
  stf::DualModel model = stf::DualModel::init(mc, prep.data.graph, config.seed);
  auto params = model.parameters();
  stf::load_checkpoint(checkpoint, params);
  return model;
}

const stf::WindowSet& pick_split(const stf::PreparedData& prep, const std::string& split) {
  if (split == "train") return prep.train;
  if (split == "val") return prep.val;
  if (split == "test") return prep.test;
  throw std::runtime_error("unknown split '" + split + "' (want train|val|test)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dual-branch spatial-temporal traffic forecasting toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_path, checkpoint, split = "test", predictions_path;
  std::vector<std::string> overrides;
  std::uint64_t seed_flag = 1;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run configuration JSON");
    cmd->add_option("--set", overrides, "override a config field, e.g. --set model.hidden=16");
    return cmd->add_option("--seed", seed_flag, "global seed (beats STF_SEED and the config)");
  };

  auto* generate = app.add_subcommand("generate", "write a synthetic dataset");
  std::string gen_out = "data/synthetic";
  generate->add_option("--config", config_path, "synthetic config JSON");
  generate->add_option("--set", overrides, "override a field, e.g. --set nodes=8");
  generate->add_option("--out", gen_out, "output directory");
  auto* gen_seed = generate->add_option("--seed", seed_flag, "generation seed");

  auto* train_cmd = app.add_subcommand("train", "train a model");
  auto* train_seed = add_common(train_cmd);

  auto* grid = app.add_subcommand("grid-search", "staged sweep of the loss weights");
  auto* grid_seed = add_common(grid);

  auto* eval = app.add_subcommand("evaluate", "evaluate a checkpoint on a split");
  auto* eval_seed = add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--split", split, "train|val|test (default test)");
  eval->add_option("--out", out_path, "metrics JSON path (default stdout)");
  eval->add_option("--dump-predictions", predictions_path, "also write per-sample forecasts CSV");

  auto* embed = app.add_subcommand("export-embeddings", "write pooled branch readouts");
  auto* embed_seed = add_common(embed);
  embed->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  embed->add_option("--split", split, "train|val|test (default test)");
  embed->add_option("--out", out_path, "embeddings CSV path")->required();

  auto* bench = app.add_subcommand("bench-attention", "time the attention kernels");
  std::vector<std::int64_t> sizes = {128, 256, 512};
  std::int64_t bench_steps = 4, bench_width = 16;
  int bench_reps = 5;
  bench->add_option("--sizes", sizes, "node counts to time");
  bench->add_option("--steps", bench_steps, "time window steps");
  bench->add_option("--width", bench_width, "attention width");
  bench->add_option("--reps", bench_reps, "repetitions per kernel (>= 5)");
  bench->add_option("--out", out_path, "timing CSV path (default stdout)");
  auto* bench_seed = bench->add_option("--seed", seed_flag, "operand seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*generate) {
      stf::SyntheticConfig cfg = synthetic_from_json(config_path, overrides);
      if (gen_seed->count() > 0) {
        cfg.seed = seed_flag;
      } else if (const char* env = std::getenv("STF_SEED")) {
        cfg.seed = std::strtoull(env, nullptr, 10);
      }
      const std::string manifest = stf::write_synthetic(stf::generate_synthetic(cfg), gen_out);
      std::cout << "wrote " << manifest << "\n";
    } else if (*train_cmd) {
      stf::RunConfig config = stf::RunConfig::load(config_path, overrides);
      resolve_seed(config, train_seed, seed_flag);
      stf::TrainResult result = stf::train(config);
      std::cout << "best epoch " << result.best_epoch << " val_rmse " << result.best_val_rmse
                << "\ncheckpoint " << result.checkpoint_path << "\nlog " << result.log_path
                << "\n";
    } else if (*grid) {
      stf::RunConfig config = stf::RunConfig::load(config_path, overrides);
      resolve_seed(config, grid_seed, seed_flag);
      stf::GridSearchResult result = stf::staged_grid_search(config);
      std::cout << "best alpha " << result.alpha << " beta " << result.beta << " gamma "
                << result.gamma << "\ntable " << result.table_path << "\n";
    } else if (*eval) {
      stf::RunConfig config = stf::RunConfig::load(config_path, overrides);
      resolve_seed(config, eval_seed, seed_flag);
      stf::PreparedData prep = stf::prepare_data(config);
      stf::DualModel model = restore_model(config, prep, checkpoint);
      stf::PredictionDump dump;
      const stf::WindowSet& windows = pick_split(prep, split);
      stf::MetricsReport report =
          stf::evaluate(model, windows, prep.norm, prep.data.calendar,
                        prep.data.manifest.interval_minutes,
                        predictions_path.empty() ? nullptr : &dump);
      const std::string body = report.to_json();
      if (out_path.empty()) {
        std::cout << body;
      } else {
        fs::create_directories(fs::path(out_path).parent_path());
        std::ofstream out(out_path);
        out << body;
        std::cout << "wrote " << out_path << "\n";
      }
      if (!predictions_path.empty()) {
        stf::write_predictions_csv(windows, dump, predictions_path);
        std::cout << "wrote " << predictions_path << "\n";
      }
    } else if (*embed) {
      stf::RunConfig config = stf::RunConfig::load(config_path, overrides);
      resolve_seed(config, embed_seed, seed_flag);
      stf::PreparedData prep = stf::prepare_data(config);
      stf::DualModel model = restore_model(config, prep, checkpoint);
      fs::create_directories(fs::path(out_path).parent_path());
      stf::export_embeddings(model, pick_split(prep, split), out_path);
      std::cout << "wrote " << out_path << "\n";
    } else if (*bench) {
      std::uint64_t seed = seed_flag;
      if (bench_seed->count() == 0) {
        if (const char* env = std::getenv("STF_SEED")) seed = std::strtoull(env, nullptr, 10);
      }
      auto rows = stf::benchmark_attention(sizes, bench_steps, bench_width, bench_reps, seed);
      const std::string csv = stf::bench_csv(rows);
      if (out_path.empty()) {
        std::cout << csv;
      } else {
        fs::create_directories(fs::path(out_path).parent_path());
        std::ofstream out(out_path);
        out << csv;
        std::cout << "wrote " << out_path << "\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
