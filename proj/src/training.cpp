#include "poselift/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <set>

#include "poselift/checkpoint.hpp"
#include "poselift/metrics.hpp"
#include "poselift/ops.hpp"
#include "poselift/optimizer.hpp"
#include "poselift/rng.hpp"
#include "poselift/serialize.hpp"

namespace poselift {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& entry, const std::set<std::string>& known,
                         const char* what) {
  for (const auto& [key, value] : entry.items()) {
    if (!known.count(key)) {
      throw ConfigError(std::string(what) + ": unknown key '" + key + "'");
    }
  }
}

// %.17g round-trips doubles exactly and is locale-independent.
std::string format_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

Tensor prepare_target(const PoseSequenceRecord& record, const SkeletonTopology& topology,
                      bool root_relative) {
  if (!root_relative) return record.target_3d.detached();
  const std::size_t joints = record.target_3d.dim(0);
  std::vector<double> values = record.target_3d.values();
  const double rx = values[topology.root * 3 + 0];
  const double ry = values[topology.root * 3 + 1];
  const double rz = values[topology.root * 3 + 2];
  for (std::size_t j = 0; j < joints; ++j) {
    values[j * 3 + 0] -= rx;
    values[j * 3 + 1] -= ry;
    values[j * 3 + 2] -= rz;
  }
  return Tensor::from_values({joints, 3}, std::move(values));
}

void check_dataset(const Model& model, const std::vector<PoseSequenceRecord>& dataset,
                   bool require_targets) {
  if (dataset.empty()) throw ConfigError("dataset is empty");
  for (const auto& record : dataset) {
    if (!record.frames_2d.defined() || record.frames_2d.rank() != 3 ||
        record.frames_2d.dim(2) != 2) {
      throw ShapeError("record '" + record.id + "': frames_2d must be [T, J, 2]");
    }
    if (record.frames_2d.dim(1) != model.config.num_joints) {
      throw ShapeError("record '" + record.id + "': expected " +
                       std::to_string(model.config.num_joints) + " joints, got " +
                       std::to_string(record.frames_2d.dim(1)));
    }
    if (record.frames_2d.dim(0) != model.config.input_frames) {
      throw ShapeError("record '" + record.id + "': expected " +
                       std::to_string(model.config.input_frames) + " frames, got " +
                       std::to_string(record.frames_2d.dim(0)));
    }
    if (require_targets && !record.has_target()) {
      throw ConfigError("record '" + record.id + "' has no 3d target");
    }
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train: epochs must be positive");
  if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (learning_rate < 0.0) throw ConfigError("train: learning_rate must be non-negative");
  if (lr_decay <= 0.0 || lr_decay > 1.0) {
    throw ConfigError("train: lr_decay must lie in (0, 1]");
  }
  if (target_loss < 0.0) throw ConfigError("train: target_loss must be non-negative");
}

RunConfig run_config_from_json(const json& entry) {
  if (!entry.is_object()) throw ConfigError("run config must be a JSON object");
  reject_unknown_keys(entry, {"model", "train", "topology"}, "run config");
  RunConfig config;
  if (entry.contains("model")) {
    config.model = model_config_from_json(entry["model"]);
  }
  if (entry.contains("train")) {
    const json& train = entry["train"];
    if (!train.is_object()) throw ConfigError("train config must be a JSON object");
    reject_unknown_keys(train,
                        {"epochs", "batch_size", "learning_rate", "lr_decay", "seed",
                         "augment", "root_relative", "target_loss"},
                        "train config");
    auto read_size = [&train](const char* key, std::size_t& out) {
      if (!train.contains(key)) return;
      if (!train[key].is_number_unsigned()) {
        throw ConfigError(std::string("train: '") + key +
                          "' must be a non-negative integer");
      }
      out = train[key].get<std::size_t>();
    };
    auto read_double = [&train](const char* key, double& out) {
      if (!train.contains(key)) return;
      if (!train[key].is_number()) {
        throw ConfigError(std::string("train: '") + key + "' must be a number");
      }
      out = train[key].get<double>();
    };
    auto read_bool = [&train](const char* key, bool& out) {
      if (!train.contains(key)) return;
      if (!train[key].is_boolean()) {
        throw ConfigError(std::string("train: '") + key + "' must be a boolean");
      }
      out = train[key].get<bool>();
    };
    read_size("epochs", config.train.epochs);
    read_size("batch_size", config.train.batch_size);
    read_double("learning_rate", config.train.learning_rate);
    read_double("lr_decay", config.train.lr_decay);
    if (train.contains("seed")) {
      if (!train["seed"].is_number_unsigned()) {
        throw ConfigError("train: 'seed' must be a non-negative integer");
      }
      config.train.seed = train["seed"].get<std::uint64_t>();
    }
    read_bool("augment", config.train.augment);
    read_bool("root_relative", config.train.root_relative);
    read_double("target_loss", config.train.target_loss);
  }
  if (entry.contains("topology")) {
    if (!entry["topology"].is_string()) {
      throw ConfigError("run config: 'topology' must be a path string");
    }
    config.topology_path = entry["topology"].get<std::string>();
  }
  config.train.validate();
  return config;
}

json run_config_to_json(const RunConfig& config) {
  json entry;
  entry["model"] = model_config_to_json(config.model);
  json train;
  train["epochs"] = config.train.epochs;
  train["batch_size"] = config.train.batch_size;
  train["learning_rate"] = config.train.learning_rate;
  train["lr_decay"] = config.train.lr_decay;
  train["seed"] = config.train.seed;
  train["augment"] = config.train.augment;
  train["root_relative"] = config.train.root_relative;
  train["target_loss"] = config.train.target_loss;
  entry["train"] = std::move(train);
  if (!config.topology_path.empty()) entry["topology"] = config.topology_path;
  return entry;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  json entry;
  try {
    entry = json::parse(in);
  } catch (const json::parse_error& err) {
    throw IoError("config '" + path + "': " + err.what());
  }
  return run_config_from_json(entry);
}

EvalReport evaluate(Model& model, const std::vector<PoseSequenceRecord>& dataset,
                    bool root_relative) {
  EvalReport report;
  double mpjpe_sum = 0.0, pmpjpe_sum = 0.0;
  for (const auto& record : dataset) {
    if (!record.has_target()) {
      std::cerr << "warning: sequence '" << record.id << "' has no target; skipped\n";
      ++report.skipped;
      continue;
    }
    Tensor pred = model_forward(model, record.frames_2d, false);
    Tensor gt = prepare_target(record, model.topology, root_relative);
    double m = 0.0, p = 0.0;
    try {
      m = mpjpe(pred, gt);
      p = p_mpjpe(pred, gt);
    } catch (const AlignmentError& err) {
      std::cerr << "warning: sequence '" << record.id << "' skipped: " << err.what()
                << "\n";
      ++report.skipped;
      continue;
    }
    report.per_sequence.push_back({record.id, m});
    mpjpe_sum += m;
    pmpjpe_sum += p;
    ++report.evaluated;
  }
  if (report.evaluated > 0) {
    report.aggregate_mpjpe = mpjpe_sum / static_cast<double>(report.evaluated);
    report.aggregate_p_mpjpe = pmpjpe_sum / static_cast<double>(report.evaluated);
  }
  return report;
}

json eval_report_to_json(const EvalReport& report) {
  json entry;
  entry["aggregate_mpjpe"] = report.aggregate_mpjpe;
  entry["aggregate_p_mpjpe"] = report.aggregate_p_mpjpe;
  entry["evaluated"] = report.evaluated;
  entry["skipped"] = report.skipped;
  json rows = json::array();
  for (const auto& row : report.per_sequence) {
    json item;
    item["id"] = row.id;
    item["mpjpe"] = row.mpjpe;
    rows.push_back(std::move(item));
  }
  entry["per_sequence"] = std::move(rows);
  return entry;
}

TrainResult train(Model& model, const std::vector<PoseSequenceRecord>& dataset,
                  const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  check_dataset(model, dataset, true);
  if (config.augment && model.topology.flip_pairs.empty()) {
    throw ConfigError("augmentation needs flip pairs in the topology");
  }

  AdamConfig adam;
  adam.learning_rate = config.learning_rate;
  AdamOptimizer optimizer(model.params.named_parameters(), adam);

  TrainResult result;
  result.best_mpjpe = std::numeric_limits<double>::infinity();
  const std::size_t count = dataset.size();

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), 0);
    auto shuffle_gen = seeded_stream(config.seed, "shuffle", epoch);
    deterministic_shuffle(order, shuffle_gen);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < count; start += config.batch_size) {
      const std::size_t stop = std::min(start + config.batch_size, count);
      optimizer.zero_grad();
      Tensor batch_total;
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t idx = order[b];
        const auto& record = dataset[idx];
        Tensor seq = record.frames_2d;
        Tensor gt = prepare_target(record, model.topology, config.root_relative);
        if (config.augment) {
          auto flip_gen = seeded_stream(config.seed, "flip", epoch, idx);
          if (uniform_unit(flip_gen) < 0.5) {
            auto flipped = flip_augment(seq, gt, model.topology);
            seq = flipped.seq2d;
            gt = flipped.gt3d;
          }
        }
        Tensor pred = model_forward(model, seq, true);
        Tensor loss = mpjpe_loss(pred, gt);
        loss_sum += loss.item();
        batch_total = batch_total.defined() ? ops::add(batch_total, loss) : loss;
      }
      const double batch_count = static_cast<double>(stop - start);
      ops::mul(batch_total, Tensor::scalar(1.0 / batch_count)).backward();
      optimizer.step();
    }

    const double train_loss = loss_sum / static_cast<double>(count);
    EvalReport report = evaluate(model, dataset, config.root_relative);

    EpochRecord row;
    row.epoch = epoch;
    row.lr = optimizer.learning_rate();
    row.train_loss = train_loss;
    row.eval_mpjpe = report.aggregate_mpjpe;
    row.eval_pmpjpe = report.aggregate_p_mpjpe;
    result.curve.push_back(row);

    if (options.log) {
      *options.log << "epoch " << epoch << " lr " << format_double(row.lr)
                   << " train " << format_double(row.train_loss) << " mpjpe "
                   << format_double(row.eval_mpjpe) << " p-mpjpe "
                   << format_double(row.eval_pmpjpe) << "\n";
    }

    if (report.aggregate_mpjpe < result.best_mpjpe) {
      result.best_mpjpe = report.aggregate_mpjpe;
      result.best_epoch = epoch;
      if (!options.checkpoint_path.empty()) {
        save_checkpoint(options.checkpoint_path, model);
      }
    }

    optimizer.scale_learning_rate(config.lr_decay);
    if (config.target_loss > 0.0 && train_loss < config.target_loss) break;
  }

  if (!options.curve_csv_path.empty()) {
    write_curve_csv(options.curve_csv_path, result.curve);
  }
  return result;
}

void write_curve_csv(const std::string& path, const std::vector<EpochRecord>& curve) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write loss curve '" + path + "'");
  out << "epoch,lr,train_loss,eval_mpjpe,eval_pmpjpe\n";
  for (const auto& row : curve) {
    out << row.epoch << ',' << format_double(row.lr) << ','
        << format_double(row.train_loss) << ',' << format_double(row.eval_mpjpe) << ','
        << format_double(row.eval_pmpjpe) << "\n";
  }
  if (!out) throw IoError("write failed for loss curve '" + path + "'");
}

}  // namespace poselift
