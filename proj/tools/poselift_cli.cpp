#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "poselift/checkpoint.hpp"
#include "poselift/dataset.hpp"
#include "poselift/gradcheck_suite.hpp"
#include "poselift/serialize.hpp"
#include "poselift/training.hpp"

namespace {

using nlohmann::json;
using namespace poselift;

// Tiny default for gradcheck: fast enough for a pre-commit habit.
ModelConfig gradcheck_default_config() {
  ModelConfig config;
  config.num_joints = 5;
  config.input_frames = 5;
  config.drop_rate = 0;
  config.hidden_dim = 4;
  config.highest_order = 2;
  config.num_blocks = 1;
  config.num_heads = 1;
  return config;
}

SkeletonTopology resolve_topology(const std::string& path, std::size_t num_joints) {
  if (!path.empty()) return load_topology(path);
  if (num_joints == 5) return tiny5_topology();
  throw ConfigError("a topology file is required for " + std::to_string(num_joints) +
                    " joints (built-in default covers 5)");
}

json tensor_to_json(const Tensor& tensor) {
  // nested arrays following the tensor shape
  std::function<json(std::size_t, std::size_t&)> build =
      [&](std::size_t axis, std::size_t& cursor) -> json {
    if (axis == tensor.rank()) return tensor.values()[cursor++];
    json arr = json::array();
    for (std::size_t i = 0; i < tensor.dim(axis); ++i) arr.push_back(build(axis + 1, cursor));
    return arr;
  };
  std::size_t cursor = 0;
  if (tensor.rank() == 0) return tensor.values().empty() ? json() : json(tensor.item());
  return build(0, cursor);
}

void write_json_file(const std::string& path, const json& value) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << value.dump(2) << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

int run_gen_data(const std::string& out, const std::string& topology_path,
                 std::size_t sequences, std::size_t frames, std::uint64_t seed,
                 double noise_sigma) {
  SkeletonTopology topology = load_topology(topology_path);
  SyntheticOptions options;
  options.noise_sigma = noise_sigma;
  options.topology_id = std::filesystem::path(topology_path).stem().string();
  auto records = generate_synthetic(sequences, frames, topology, seed, options);
  save_dataset(out, records);
  std::cout << "wrote " << records.size() << " sequences to " << out << "\n";
  return 0;
}

int run_train(const std::string& config_path, const std::string& data_path,
              const std::string& checkpoint_path, const std::string& curve_path) {
  RunConfig config = load_run_config(config_path);
  if (config.topology_path.empty()) {
    throw ConfigError("config '" + config_path + "' must set a topology path");
  }
  SkeletonTopology topology = load_topology(config.topology_path);
  auto dataset = load_dataset(data_path, topology);
  Model model = build_model(config.model, topology, config.train.seed);

  TrainOptions options;
  options.checkpoint_path = checkpoint_path;
  options.curve_csv_path = curve_path;
  options.log = &std::cerr;
  TrainResult result = train(model, dataset, config.train, options);
  std::cout << "best mpjpe " << result.best_mpjpe << " at epoch " << result.best_epoch
            << " (" << result.curve.size() << " epochs)\n";
  return 0;
}

int run_eval(const std::string& checkpoint_path, const std::string& data_path,
             const std::string& report_path, bool root_relative) {
  Model model = load_checkpoint(checkpoint_path);
  auto dataset = load_dataset(data_path, model.topology);
  EvalReport report = evaluate(model, dataset, root_relative);
  if (!report_path.empty()) {
    write_json_file(report_path, eval_report_to_json(report));
  }
  std::cout << "mpjpe " << report.aggregate_mpjpe << " p-mpjpe "
            << report.aggregate_p_mpjpe << " over " << report.evaluated
            << " sequences (" << report.skipped << " skipped)\n";
  return 0;
}

int run_predict(const std::string& checkpoint_path, const std::string& data_path,
                const std::string& out_path) {
  Model model = load_checkpoint(checkpoint_path);
  auto dataset = load_dataset(data_path, model.topology);
  json poses = json::array();
  for (const auto& record : dataset) {
    Tensor pred = model_forward(model, record.frames_2d, false);
    json entry;
    entry["id"] = record.id;
    entry["pose_3d"] = tensor_to_json(pred);
    poses.push_back(std::move(entry));
  }
  write_json_file(out_path, poses);
  std::cout << "wrote " << poses.size() << " poses to " << out_path << "\n";
  return 0;
}

int run_gradcheck(const std::string& config_path, const std::string& module) {
  ModelConfig config = gradcheck_default_config();
  SkeletonTopology topology = tiny5_topology();
  if (!config_path.empty()) {
    RunConfig run = load_run_config(config_path);
    config = run.model;
    topology = resolve_topology(run.topology_path, config.num_joints);
  }
  auto results = run_gradcheck_suite(config, topology, module);
  double worst = 0.0;
  for (const auto& result : results) {
    std::cout << result.module << " max rel error " << result.max_rel_error << "\n";
    worst = std::max(worst, result.max_rel_error);
  }
  std::cout << "max relative error " << worst << "\n";
  return worst < 1e-5 ? 0 : 1;
}

int run_param_count(const std::string& config_path, const std::string& sweep) {
  ModelConfig config;
  SkeletonTopology topology = tiny5_topology();
  if (!config_path.empty()) {
    RunConfig run = load_run_config(config_path);
    config = run.model;
  }
  config.validate();
  ParameterCount count = count_parameters(config);
  for (const auto& [path, numel] : count.per_path) {
    std::cout << path << " " << numel << "\n";
  }
  std::cout << "total " << count.total << "\n";

  if (!sweep.empty()) {
    std::vector<std::size_t> frame_counts;
    std::stringstream stream(sweep);
    std::string token;
    while (std::getline(stream, token, ',')) {
      if (token.empty()) continue;
      std::size_t pos = 0;
      unsigned long long value = 0;
      try {
        value = std::stoull(token, &pos);
      } catch (const std::exception&) {
        throw ConfigError("--sweep-frames: '" + token + "' is not a frame count");
      }
      if (pos != token.size() || value == 0) {
        throw ConfigError("--sweep-frames: '" + token + "' is not a frame count");
      }
      frame_counts.push_back(static_cast<std::size_t>(value));
    }
    std::cout << "sweep:\n";
    for (std::size_t frames : frame_counts) {
      ModelConfig swept = config;
      swept.input_frames = frames;
      std::cout << "frames " << frames << " total " << count_parameters(swept).total
                << "\n";
    }
  }
  return 0;
}

int run_dump_attention(const std::string& checkpoint_path, const std::string& data_path,
                       const std::string& out_path) {
  Model model = load_checkpoint(checkpoint_path);
  auto dataset = load_dataset(data_path, model.topology);
  json dump = json::array();
  for (const auto& record : dataset) {
    ModelTrace trace;
    model_forward(model, record.frames_2d, false, &trace);
    json entry;
    entry["id"] = record.id;
    entry["ott"] = tensor_to_json(trace.ott);
    json jtt = json::array(), attention = json::array(), pscl = json::array();
    for (const auto& t : trace.jtt) jtt.push_back(tensor_to_json(t));
    for (const auto& t : trace.attention) attention.push_back(tensor_to_json(t));
    for (const auto& t : trace.pscl) pscl.push_back(tensor_to_json(t));
    entry["jtt"] = std::move(jtt);
    entry["bcma_attention"] = std::move(attention);
    entry["p_scl"] = std::move(pscl);
    dump.push_back(std::move(entry));
  }
  write_json_file(out_path, dump);
  std::cout << "wrote attention maps for " << dump.size() << " sequences to "
            << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"2d-to-3d human pose lifting over skeleton graphs"};
  app.require_subcommand(1);

  std::string gen_out, gen_topology;
  std::size_t gen_sequences = 16, gen_frames = 9;
  std::uint64_t gen_seed = 0;
  double gen_noise = 0.01;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--out", gen_out, "output JSONL path")->required();
  gen->add_option("--topology", gen_topology, "topology JSON path")->required();
  gen->add_option("--sequences", gen_sequences, "number of sequences");
  gen->add_option("--frames", gen_frames, "frames per sequence");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--noise-sigma", gen_noise, "2d noise std dev");

  std::string train_config, train_data, train_ckpt, train_curve;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--config", train_config, "run config JSON")->required();
  train_cmd->add_option("--data", train_data, "training dataset JSONL")->required();
  train_cmd->add_option("--out-checkpoint", train_ckpt, "best-model checkpoint path");
  train_cmd->add_option("--curve-csv", train_curve, "loss curve CSV path");

  std::string eval_ckpt, eval_data, eval_report;
  bool eval_absolute = false;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--data", eval_data, "dataset JSONL")->required();
  eval_cmd->add_option("--report-json", eval_report, "report output path");
  eval_cmd->add_flag("--absolute-targets", eval_absolute,
                     "compare against targets without root-centering");

  std::string pred_ckpt, pred_data, pred_out;
  auto* pred_cmd = app.add_subcommand("predict", "predict 3d poses");
  pred_cmd->add_option("--checkpoint", pred_ckpt, "checkpoint path")->required();
  pred_cmd->add_option("--data", pred_data, "dataset JSONL")->required();
  pred_cmd->add_option("--out-poses", pred_out, "output JSON path")->required();

  std::string grad_config, grad_module = "all";
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
  grad_cmd->add_option("--config", grad_config, "run config JSON (default: tiny)");
  grad_cmd->add_option("--module", grad_module, "all|spatial|temporal|model");

  std::string count_config, count_sweep;
  auto* count_cmd = app.add_subcommand("param-count", "parameter count breakdown");
  count_cmd->add_option("--config", count_config, "run config JSON (default config otherwise)");
  count_cmd->add_option("--sweep-frames", count_sweep,
                        "comma-separated input frame counts");

  std::string dump_ckpt, dump_data, dump_out;
  auto* dump_cmd = app.add_subcommand("dump-attention", "dump attention maps as JSON");
  dump_cmd->add_option("--checkpoint", dump_ckpt, "checkpoint path")->required();
  dump_cmd->add_option("--data", dump_data, "dataset JSONL")->required();
  dump_cmd->add_option("--out", dump_out, "output JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    std::cerr << err.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (gen->parsed()) {
      return run_gen_data(gen_out, gen_topology, gen_sequences, gen_frames, gen_seed,
                          gen_noise);
    }
    if (train_cmd->parsed()) {
      return run_train(train_config, train_data, train_ckpt, train_curve);
    }
    if (eval_cmd->parsed()) {
      return run_eval(eval_ckpt, eval_data, eval_report, !eval_absolute);
    }
    if (pred_cmd->parsed()) return run_predict(pred_ckpt, pred_data, pred_out);
    if (grad_cmd->parsed()) return run_gradcheck(grad_config, grad_module);
    if (count_cmd->parsed()) return run_param_count(count_config, count_sweep);
    if (dump_cmd->parsed()) return run_dump_attention(dump_ckpt, dump_data, dump_out);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 2;
}
