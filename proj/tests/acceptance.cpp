// Acceptance checks for the pose lifting engine. Each check prints one
// PASS/FAIL line with its measured value and pinned tolerance; the process
// exits non-zero if any gating check fails. The order ablation check is
// informational only: training dynamics on random seeds are not a contract.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "poselift/dataset.hpp"
#include "poselift/gradcheck_suite.hpp"
#include "poselift/metrics.hpp"
#include "poselift/model.hpp"
#include "poselift/rng.hpp"
#include "poselift/training.hpp"

using namespace poselift;

namespace {

int failures = 0;

void report(int index, bool pass, const std::string& detail) {
  std::printf("%2d [%s] %s\n", index, pass ? "PASS" : "FAIL", detail.c_str());
  if (!pass) ++failures;
}

void info(int index, bool good, const std::string& detail) {
  std::printf("%2d [%s] %s\n", index, good ? "PASS" : "WARN", detail.c_str());
}

std::string fmt(const char* format, ...) {
  char buffer[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buffer, sizeof(buffer), format, args);
  va_end(args);
  return buffer;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Tensor random_tensor(std::mt19937_64& gen, const Shape& shape, double lo, double hi) {
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = uniform_range(gen, lo, hi);
  return Tensor::from_values(shape, values);
}

// Random tree on `joints` nodes plus `extra` deduplicated chords.
SkeletonTopology random_graph(std::mt19937_64& gen, std::size_t joints, std::size_t extra) {
  SkeletonTopology topology;
  topology.num_joints = joints;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (std::size_t j = 1; j < joints; ++j) {
    const std::size_t parent = gen() % j;
    seen.insert({parent, j});
  }
  for (std::size_t e = 0; e < extra; ++e) {
    const std::size_t a = gen() % joints;
    const std::size_t b = gen() % joints;
    if (a == b) continue;
    seen.insert({std::min(a, b), std::max(a, b)});
  }
  topology.edges.assign(seen.begin(), seen.end());
  return topology;
}

std::vector<std::vector<int>> bfs_distances(const SkeletonTopology& topology) {
  const std::size_t joints = topology.num_joints;
  std::vector<std::vector<std::size_t>> neighbors(joints);
  for (const auto& [a, b] : topology.edges) {
    neighbors[a].push_back(b);
    neighbors[b].push_back(a);
  }
  std::vector<std::vector<int>> dist(joints, std::vector<int>(joints, -1));
  for (std::size_t start = 0; start < joints; ++start) {
    std::queue<std::size_t> frontier;
    dist[start][start] = 0;
    frontier.push(start);
    while (!frontier.empty()) {
      const std::size_t node = frontier.front();
      frontier.pop();
      for (std::size_t next : neighbors[node]) {
        if (dist[start][next] < 0) {
          dist[start][next] = dist[start][node] + 1;
          frontier.push(next);
        }
      }
    }
  }
  return dist;
}

void check_gradients() {
  ModelConfig config;
  config.num_joints = 5;
  config.input_frames = 5;
  config.drop_rate = 0;
  config.hidden_dim = 4;
  config.highest_order = 2;
  config.num_blocks = 1;
  config.num_heads = 1;
  const auto start = std::chrono::steady_clock::now();
  const auto checks = run_gradcheck_suite(config, tiny5_topology(), "all");
  const double elapsed = seconds_since(start);
  double worst = 0.0;
  for (const auto& check : checks) worst = std::max(worst, check.max_rel_error);
  report(1, worst < 1e-5 && elapsed < 60.0,
         fmt("gradcheck on the tiny config: max rel error %.3g (limit 1e-05), %.2f s (limit 60 s)",
             worst, elapsed));
}

void check_khop_against_bfs() {
  std::size_t mismatches = 0;
  for (std::size_t g = 0; g < 200; ++g) {
    auto gen = seeded_stream(2026, "graphs", g);
    const std::size_t joints = 2 + gen() % 11;  // 2..12
    const std::size_t extra = gen() % (joints + 1);
    const SkeletonTopology topology = random_graph(gen, joints, extra);
    const int highest = static_cast<int>(gen() % 5);  // 0..4
    const auto hops = build_khop_adjacency(topology, highest);
    const auto dist = bfs_distances(topology);
    for (int k = 0; k <= highest; ++k) {
      for (std::size_t i = 0; i < joints; ++i) {
        for (std::size_t j = 0; j < joints; ++j) {
          const double expected = dist[i][j] == k ? 1.0 : 0.0;
          if (hops[static_cast<std::size_t>(k)].at({i, j}) != expected) ++mismatches;
        }
      }
    }
  }
  report(2, mismatches == 0,
         fmt("k-hop adjacency vs BFS shortest paths on 200 random graphs: %zu mismatches",
             mismatches));
}

void check_attention_rows() {
  double worst = 0.0;
  for (std::size_t i = 0; i < 100; ++i) {
    auto gen = seeded_stream(2026, "rows", i);
    const std::size_t joints = 4 + gen() % 6;  // 4..9
    ModelConfig config;
    config.num_joints = joints;
    config.input_frames = 3 + 2 * (gen() % 4);  // 3,5,7,9
    config.hidden_dim = 4;
    config.highest_order = gen() % 3;
    config.num_blocks = 1 + gen() % 2;
    config.num_heads = 1 + gen() % 2;  // G = 4J is always even
    const SkeletonTopology topology = random_graph(gen, joints, gen() % 3);
    Model model = build_model(config, topology, gen());

    const Tensor input =
        random_tensor(gen, {config.input_frames, joints, 2}, -1.0, 1.0);
    ModelTrace trace;
    model_forward(model, input, false, &trace);

    const std::size_t frames = config.frames_after_drop();
    const std::size_t orders = config.highest_order + 1;
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t j = 0; j < joints; ++j) {
        double over_orders = 0.0;
        for (std::size_t k = 0; k < orders; ++k) over_orders += trace.ott.at({t, j, k});
        worst = std::max(worst, std::abs(over_orders - 1.0));
      }
    }
    for (const Tensor& jtt : trace.jtt) {
      for (std::size_t j = 0; j < joints; ++j) {
        double over_frames = 0.0;
        for (std::size_t t = 0; t < frames; ++t) over_frames += jtt.at({t, j});
        worst = std::max(worst, std::abs(over_frames - 1.0));
      }
    }
    for (const Tensor& attention : trace.attention) {
      for (std::size_t h = 0; h < config.num_heads; ++h) {
        for (std::size_t t = 0; t < frames; ++t) {
          double over_keys = 0.0;
          for (std::size_t s = 0; s < frames; ++s) over_keys += attention.at({h, t, s});
          worst = std::max(worst, std::abs(over_keys - 1.0));
        }
      }
    }
  }
  report(3, worst <= 1e-12,
         fmt("order, frame, and temporal attention rows sum to 1 on 100 instances: "
             "max |sum-1| %.3g (limit 1e-12)",
             worst));
}

// Plain-loop multi-head attention, coded without the library ops.
std::vector<double> naive_mha(const Tensor& x, const BcmaParams& p) {
  const std::size_t frames = x.dim(0), width = x.dim(1);
  const std::size_t heads = p.w_q.size(), hd = width / heads;
  std::vector<double> concat(frames * width, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    std::vector<double> q(frames * hd, 0.0), k(frames * hd, 0.0), v(frames * hd, 0.0);
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t d = 0; d < hd; ++d)
        for (std::size_t g = 0; g < width; ++g) {
          q[t * hd + d] += x.at({t, g}) * p.w_q[h].at({g, d});
          k[t * hd + d] += x.at({t, g}) * p.w_k[h].at({g, d});
          v[t * hd + d] += x.at({t, g}) * p.w_v[h].at({g, d});
        }
    for (std::size_t t = 0; t < frames; ++t) {
      std::vector<double> row(frames, 0.0);
      double peak = -1e300;
      for (std::size_t s = 0; s < frames; ++s) {
        for (std::size_t d = 0; d < hd; ++d) row[s] += q[t * hd + d] * k[s * hd + d];
        row[s] /= std::sqrt(static_cast<double>(width));
        peak = std::max(peak, row[s]);
      }
      double total = 0.0;
      for (double& r : row) total += (r = std::exp(r - peak));
      for (double& r : row) r /= total;
      for (std::size_t d = 0; d < hd; ++d) {
        double acc = 0.0;
        for (std::size_t s = 0; s < frames; ++s) acc += row[s] * v[s * hd + d];
        concat[t * width + h * hd + d] = acc;
      }
    }
  }
  std::vector<double> out(frames * width, 0.0);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t g = 0; g < width; ++g)
      for (std::size_t c = 0; c < width; ++c)
        out[t * width + g] += concat[t * width + c] * p.w_o.at({c, g});
  return out;
}

void check_vanilla_reduction() {
  const std::size_t frames = 7, width = 16;
  double worst = 0.0;
  std::size_t compared = 0;
  for (std::size_t heads : {1UL, 2UL, 4UL}) {
    for (std::size_t i = 0; i < 50; ++i) {
      auto gen = seeded_stream(2026, "vanilla", heads, i);
      BcmaParams p;
      for (std::size_t h = 0; h < heads; ++h) {
        p.w_q.push_back(random_tensor(gen, {width, width / heads}, -0.5, 0.5));
        p.w_k.push_back(random_tensor(gen, {width, width / heads}, -0.5, 0.5));
        p.w_v.push_back(random_tensor(gen, {width, width / heads}, -0.5, 0.5));
      }
      p.w_o = random_tensor(gen, {width, width}, -0.5, 0.5);
      p.w_f = Tensor::zeros({1});  // flat central scaling
      const Tensor x = random_tensor(gen, {frames, width}, -1.0, 1.0);
      const BcmaResult result = bcma_forward(x, p);
      const std::vector<double> reference = naive_mha(x, p);
      for (std::size_t idx = 0; idx < reference.size(); ++idx) {
        worst = std::max(worst, std::abs(result.out.values()[idx] - reference[idx]));
      }
      ++compared;
    }
  }
  report(4, worst <= 1e-12,
         fmt("zero positional scale reduces to vanilla attention on %zu inputs "
             "(heads 1,2,4): max |diff| %.3g (limit 1e-12)",
             compared, worst));
}

void check_central_scaling() {
  const Tensor w_f = Tensor::from_values({1}, {1.0});
  const Tensor five = central_scaling(5, 0.5, 1.0, w_f);
  const double printed[5] = {0.7788, 0.9394, 1.0, 0.9394, 0.7788};
  double worst_exact = 0.0, worst_printed = 0.0;
  for (std::size_t t = 0; t < 5; ++t) {
    const double pos = static_cast<double>(t) / 4.0;
    const double exact = std::exp(-(pos - 0.5) * (pos - 0.5));
    worst_exact = std::max(worst_exact, std::abs(five.at({t}) - exact));
    worst_printed = std::max(worst_printed, std::abs(five.at({t}) - printed[t]));
  }
  bool shape_holds = true;
  for (std::size_t frames : {3UL, 5UL, 9UL, 27UL}) {
    const Tensor p = central_scaling(frames, 0.5, 1.0, w_f);
    const std::size_t mid = (frames - 1) / 2;
    shape_holds = shape_holds && p.at({mid}) == 1.0;
    for (std::size_t t = 0; t < frames; ++t) {
      shape_holds = shape_holds && std::abs(p.at({t}) - p.at({frames - 1 - t})) <= 1e-12;
    }
    for (std::size_t t = mid; t + 1 < frames; ++t) {
      shape_holds = shape_holds && p.at({t + 1}) < p.at({t});
    }
  }
  report(5, worst_exact <= 1e-9 && worst_printed <= 1e-4 && shape_holds,
         fmt("central scaling for 5 frames: max |err| %.3g vs closed form (limit 1e-09), "
             "%.3g vs 4-digit values (limit 1e-04); symmetric and center-peaked for "
             "T in {3,5,9,27}: %s",
             worst_exact, worst_printed, shape_holds ? "yes" : "no"));
}

Tensor similarity_transform(const Tensor& pose, std::mt19937_64& gen) {
  const double angle = uniform_range(gen, 0.0, 2.0 * 3.14159265358979323846);
  double axis[3] = {normal_draw(gen), normal_draw(gen), normal_draw(gen)};
  const double norm = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
  for (double& a : axis) a /= norm;
  const double c = std::cos(angle), s = std::sin(angle);
  double rot[3][3];
  for (int r = 0; r < 3; ++r)
    for (int col = 0; col < 3; ++col)
      rot[r][col] = c * (r == col ? 1.0 : 0.0) + (1.0 - c) * axis[r] * axis[col];
  rot[0][1] -= s * axis[2]; rot[0][2] += s * axis[1];
  rot[1][0] += s * axis[2]; rot[1][2] -= s * axis[0];
  rot[2][0] -= s * axis[1]; rot[2][1] += s * axis[0];

  const double scale = uniform_range(gen, 0.5, 2.0);
  const double shift[3] = {uniform_range(gen, -1.0, 1.0), uniform_range(gen, -1.0, 1.0),
                           uniform_range(gen, -1.0, 1.0)};
  const std::size_t joints = pose.dim(0);
  std::vector<double> out(joints * 3);
  for (std::size_t j = 0; j < joints; ++j) {
    for (int r = 0; r < 3; ++r) {
      double acc = 0.0;
      for (int col = 0; col < 3; ++col) acc += rot[r][col] * pose.at({j, static_cast<std::size_t>(col)});
      out[j * 3 + static_cast<std::size_t>(r)] = scale * acc + shift[r];
    }
  }
  return Tensor::from_values({joints, 3}, out);
}

void check_alignment_invariance() {
  const std::size_t joints = 17;
  double worst_aligned = 0.0;
  bool ordered = true;
  for (std::size_t i = 0; i < 100; ++i) {
    auto gen = seeded_stream(2026, "procrustes", i);
    std::vector<double> values(joints * 3);
    for (double& v : values) v = normal_draw(gen);
    const Tensor gt = Tensor::from_values({joints, 3}, values);
    const Tensor moved = similarity_transform(gt, gen);
    const double aligned = p_mpjpe(moved, gt);
    worst_aligned = std::max(worst_aligned, aligned);
    ordered = ordered && aligned <= mpjpe(moved, gt) + 1e-12;

    std::vector<double> noise(joints * 3);
    for (std::size_t idx = 0; idx < noise.size(); ++idx)
      noise[idx] = values[idx] + 0.3 * normal_draw(gen);
    const Tensor rough = Tensor::from_values({joints, 3}, noise);
    ordered = ordered && p_mpjpe(rough, gt) <= mpjpe(rough, gt) + 1e-12;
  }
  report(6, worst_aligned < 1e-6 && ordered,
         fmt("similarity-aligned error on 100 transformed poses: max %.3g (limit 1e-06); "
             "aligned error never exceeds raw error: %s",
             worst_aligned, ordered ? "yes" : "no"));
}

struct OverfitRun {
  TrainResult result;
  double elapsed = 0.0;
  std::string checkpoint_path;
  std::string curve_path;
};

OverfitRun run_overfit(const std::string& tag) {
  const auto topology = load_topology("data/topologies/h36m_17j.json");
  SyntheticOptions options;
  options.noise_sigma = 0.0;
  const auto dataset = generate_synthetic(32, 9, topology, 7, options);

  ModelConfig config;
  config.num_joints = 17;
  config.input_frames = 9;
  config.hidden_dim = 32;
  config.highest_order = 3;
  config.num_blocks = 2;
  config.num_heads = 2;
  Model model = build_model(config, topology, 7);

  TrainConfig train_config;
  train_config.epochs = 200;
  train_config.batch_size = 16;
  train_config.learning_rate = 3e-4;
  train_config.lr_decay = 0.95;
  train_config.seed = 7;
  train_config.augment = false;
  train_config.target_loss = 0.01;

  const auto dir = std::filesystem::temp_directory_path() / "poselift_acceptance";
  std::filesystem::create_directories(dir);
  OverfitRun run;
  run.checkpoint_path = (dir / (tag + ".bin")).string();
  run.curve_path = (dir / (tag + ".csv")).string();
  TrainOptions train_options;
  train_options.checkpoint_path = run.checkpoint_path;
  train_options.curve_csv_path = run.curve_path;

  const auto start = std::chrono::steady_clock::now();
  run.result = train(model, dataset, train_config, train_options);
  run.elapsed = seconds_since(start);
  return run;
}

OverfitRun check_overfit() {
  OverfitRun run = run_overfit("overfit_a");
  const double final_loss = run.result.curve.back().train_loss;
  const std::size_t epochs = run.result.curve.size();
  report(7, final_loss < 0.01 && epochs <= 200 && run.elapsed < 600.0,
         fmt("overfit 32 synthetic sequences: training MPJPE %.5f (limit 0.01) "
             "after %zu epochs (limit 200), %.1f s (limit 600 s)",
             final_loss, epochs, run.elapsed));
  return run;
}

void check_parameter_growth() {
  ModelConfig config;
  config.num_joints = 17;
  config.hidden_dim = 32;
  config.num_blocks = 6;
  config.num_heads = 8;

  std::size_t totals[3] = {0, 0, 0};
  const std::size_t frames[3] = {27, 81, 324};
  for (int i = 0; i < 3; ++i) {
    config.input_frames = frames[i];
    totals[i] = count_parameters(config).total;
  }
  const std::size_t per_frame =
      config.num_joints * config.num_blocks + config.feature_width();
  const bool exact = totals[1] - totals[0] == (frames[1] - frames[0]) * per_frame &&
                     totals[2] - totals[1] == (frames[2] - frames[1]) * per_frame;
  const double growth =
      static_cast<double>(totals[2] - totals[0]) / static_cast<double>(totals[0]);

  // the analytic count must match a really constructed model
  config.input_frames = 27;
  Model model = build_model(config, load_topology("data/topologies/h36m_17j.json"), 0);
  const bool consistent = count_parameters(model.params).total == totals[0];

  report(8, exact && growth < 0.02 && consistent,
         fmt("parameter totals %.2fM / %.2fM / %.2fM for 27/81/324 frames grow by "
             "exactly %zu per frame: %s; relative growth %.2f%% (limit 2%%); analytic "
             "count matches built model: %s",
             totals[0] / 1e6, totals[1] / 1e6, totals[2] / 1e6, per_frame,
             exact ? "yes" : "no", growth * 100.0, consistent ? "yes" : "no"));
}

void check_order_ablation() {
  const auto topology = load_topology("data/topologies/h36m_17j.json");
  SyntheticOptions options;
  options.noise_sigma = 0.0;
  const std::size_t epochs = 20;
  std::size_t wins = 0;
  const auto start = std::chrono::steady_clock::now();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto dataset = generate_synthetic(32, 9, topology, 300 + seed, options);
    double final_loss[2] = {0.0, 0.0};
    for (int variant = 0; variant < 2; ++variant) {
      ModelConfig config;
      config.num_joints = 17;
      config.input_frames = 9;
      config.hidden_dim = 32;
      config.highest_order = variant == 0 ? 3 : 0;
      config.num_blocks = 2;
      config.num_heads = 2;
      Model model = build_model(config, topology, seed);

      TrainConfig train_config;
      train_config.epochs = epochs;
      train_config.batch_size = 16;
      train_config.learning_rate = 3e-4;
      train_config.lr_decay = 0.95;
      train_config.seed = seed;
      train_config.augment = false;
      const TrainResult result = train(model, dataset, train_config);
      final_loss[variant] = result.curve.back().train_loss;
    }
    if (final_loss[0] <= final_loss[1]) ++wins;
  }
  info(9, wins >= 7,
       fmt("order ablation, informational: highest order 3 beat order 0 in %zu/10 "
           "seeds after %zu equal epochs (%.0f s); expectation is >= 7",
           wins, epochs, seconds_since(start)));
}

void check_reproducibility(const OverfitRun& first) {
  const OverfitRun second = run_overfit("overfit_b");
  const auto read_bytes = [](const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
  };
  const std::string ckpt_a = read_bytes(first.checkpoint_path);
  const std::string ckpt_b = read_bytes(second.checkpoint_path);
  const std::string curve_a = read_bytes(first.curve_path);
  const std::string curve_b = read_bytes(second.curve_path);
  const bool same = !ckpt_a.empty() && ckpt_a == ckpt_b && !curve_a.empty() &&
                    curve_a == curve_b;
  report(10, same,
         fmt("repeated training with the same seed: checkpoint (%zu bytes) and loss "
             "curve (%zu bytes) byte-identical: %s",
             ckpt_a.size(), curve_a.size(), same ? "yes" : "no"));
}

}  // namespace

int main() {
  std::printf("acceptance checks (one line per check)\n");
  check_gradients();
  check_khop_against_bfs();
  check_attention_rows();
  check_vanilla_reduction();
  check_central_scaling();
  check_alignment_invariance();
  const OverfitRun overfit = check_overfit();
  check_parameter_growth();
  check_order_ablation();
  check_reproducibility(overfit);
  std::printf("result: %s\n", failures == 0 ? "all gating checks passed"
                                            : "at least one gating check failed");
  return failures == 0 ? 0 : 1;
}
