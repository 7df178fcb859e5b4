#include "poselift/dataset.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <queue>
#include <sstream>

#include <json.hpp>

#include "poselift/rng.hpp"

namespace poselift {

namespace {

using nlohmann::json;

constexpr double kTwoPi = 6.283185307179586476925286766559;

[[noreturn]] void fail_line(const std::string& path, std::size_t line,
                            const std::string& message) {
  throw IoError(path + " line " + std::to_string(line) + ": " + message);
}

// Flattens an array of J [x, y, ...] rows, checking width and finiteness.
void append_joint_rows(const json& rows, std::size_t joints, std::size_t coords,
                       std::vector<double>& out, const std::string& path,
                       std::size_t line, const char* field) {
  if (!rows.is_array() || rows.size() != joints) {
    fail_line(path, line,
              std::string(field) + ": expected " + std::to_string(joints) +
                  " joints, got " + std::to_string(rows.is_array() ? rows.size() : 0));
  }
  for (const auto& row : rows) {
    if (!row.is_array() || row.size() != coords) {
      fail_line(path, line,
                std::string(field) + ": each joint needs " + std::to_string(coords) +
                    " coordinates");
    }
    for (const auto& value : row) {
      if (!value.is_number()) {
        fail_line(path, line, std::string(field) + ": coordinate is not a number");
      }
      const double v = value.get<double>();
      if (!std::isfinite(v)) {
        fail_line(path, line, std::string(field) + ": non-finite coordinate");
      }
      out.push_back(v);
    }
  }
}

PoseSequenceRecord parse_record(const json& entry, const SkeletonTopology& topology,
                                const std::string& path, std::size_t line) {
  if (!entry.is_object()) fail_line(path, line, "record is not a JSON object");
  for (const char* key : {"id", "topology_id", "frames_2d"}) {
    if (!entry.contains(key)) {
      fail_line(path, line, std::string("missing field '") + key + "'");
    }
  }
  if (!entry["id"].is_string() || !entry["topology_id"].is_string()) {
    fail_line(path, line, "id and topology_id must be strings");
  }

  PoseSequenceRecord record;
  record.id = entry["id"].get<std::string>();
  record.topology_id = entry["topology_id"].get<std::string>();

  const std::size_t joints = topology.num_joints;
  const json& frames = entry["frames_2d"];
  if (!frames.is_array() || frames.empty()) {
    fail_line(path, line, "frames_2d must be a non-empty array of frames");
  }
  const std::size_t total = frames.size();
  std::vector<double> flat;
  flat.reserve(total * joints * 2);
  for (const auto& frame : frames) {
    append_joint_rows(frame, joints, 2, flat, path, line, "frames_2d");
  }
  record.frames_2d = Tensor::from_values({total, joints, 2}, std::move(flat));

  if (entry.contains("frames_3d")) {
    const json& target = entry["frames_3d"];
    if (!target.is_array() || target.empty()) {
      fail_line(path, line, "frames_3d must be a non-empty array");
    }
    std::vector<double> pose;
    if (target[0].is_array() && !target[0].empty() && target[0][0].is_array()) {
      // [T, J, 3]: keep only the central frame
      if (target.size() != total) {
        fail_line(path, line, "frames_3d frame count differs from frames_2d");
      }
      append_joint_rows(target[total / 2], joints, 3, pose, path, line, "frames_3d");
    } else {
      append_joint_rows(target, joints, 3, pose, path, line, "frames_3d");
    }
    record.target_3d = Tensor::from_values({joints, 3}, std::move(pose));
  }
  return record;
}

json frame_rows(const Tensor& tensor, std::size_t frame, std::size_t joints,
                std::size_t coords) {
  json rows = json::array();
  for (std::size_t j = 0; j < joints; ++j) {
    json row = json::array();
    for (std::size_t c = 0; c < coords; ++c) row.push_back(tensor.at({frame, j, c}));
    rows.push_back(std::move(row));
  }
  return rows;
}

json target_rows(const Tensor& tensor, std::size_t joints) {
  json rows = json::array();
  for (std::size_t j = 0; j < joints; ++j) {
    json row = json::array();
    for (std::size_t c = 0; c < 3; ++c) row.push_back(tensor.at({j, c}));
    rows.push_back(std::move(row));
  }
  return rows;
}

using Vec3 = std::array<double, 3>;

Vec3 rotate_about(const Vec3& axis, double angle, const Vec3& v) {
  const double c = std::cos(angle), s = std::sin(angle);
  const Vec3 cross = {axis[1] * v[2] - axis[2] * v[1],
                      axis[2] * v[0] - axis[0] * v[2],
                      axis[0] * v[1] - axis[1] * v[0]};
  const double dot = axis[0] * v[0] + axis[1] * v[1] + axis[2] * v[2];
  Vec3 out;
  for (std::size_t i = 0; i < 3; ++i) {
    out[i] = v[i] * c + cross[i] * s + axis[i] * dot * (1.0 - c);
  }
  return out;
}

Vec3 random_unit(std::mt19937_64& gen) {
  while (true) {
    Vec3 v = {normal_draw(gen), normal_draw(gen), normal_draw(gen)};
    const double norm = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (norm > 1e-6) {
      for (double& x : v) x /= norm;
      return v;
    }
  }
}

}  // namespace

std::vector<PoseSequenceRecord> load_dataset(const std::string& path,
                                             const SkeletonTopology& topology) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset '" + path + "'");

  std::vector<PoseSequenceRecord> records;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json entry;
    try {
      entry = json::parse(line);
    } catch (const json::parse_error& err) {
      fail_line(path, line_number, err.what());
    }
    records.push_back(parse_record(entry, topology, path, line_number));
  }
  if (records.empty()) {
    std::cerr << "warning: dataset '" << path << "' contains no records\n";
  }
  return records;
}

void save_dataset(const std::string& path,
                  const std::vector<PoseSequenceRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset '" + path + "'");
  for (const auto& record : records) {
    if (!record.frames_2d.defined() || record.frames_2d.rank() != 3 ||
        record.frames_2d.dim(2) != 2) {
      throw ShapeError("record '" + record.id + "': frames_2d must be [T, J, 2]");
    }
    const std::size_t frames = record.frames_2d.dim(0);
    const std::size_t joints = record.frames_2d.dim(1);
    json entry;
    entry["id"] = record.id;
    entry["topology_id"] = record.topology_id;
    json frame_list = json::array();
    for (std::size_t t = 0; t < frames; ++t) {
      frame_list.push_back(frame_rows(record.frames_2d, t, joints, 2));
    }
    entry["frames_2d"] = std::move(frame_list);
    if (record.has_target()) {
      if (record.target_3d.rank() != 2 || record.target_3d.dim(0) != joints ||
          record.target_3d.dim(1) != 3) {
        throw ShapeError("record '" + record.id + "': target must be [J, 3]");
      }
      entry["frames_3d"] = target_rows(record.target_3d, joints);
    }
    out << entry.dump() << '\n';
  }
}

std::vector<PoseSequenceRecord> generate_synthetic(std::size_t num_sequences,
                                                   std::size_t frames,
                                                   const SkeletonTopology& topology,
                                                   std::uint64_t seed,
                                                   const SyntheticOptions& options,
                                                   std::vector<Tensor>* frames_3d_out) {
  if (frames == 0) throw ContractError("generate_synthetic: frames must be positive");
  if (options.noise_sigma < 0.0) {
    throw ConfigError("generate_synthetic: noise sigma must be non-negative");
  }
  topology.validate();

  const std::size_t joints = topology.num_joints;

  // Orient edges away from the root.
  std::vector<std::vector<std::size_t>> neighbours(joints);
  for (const auto& [a, b] : topology.edges) {
    neighbours[a].push_back(b);
    neighbours[b].push_back(a);
  }
  std::vector<std::size_t> parent(joints, joints);
  std::vector<std::size_t> order;
  order.reserve(joints);
  std::queue<std::size_t> frontier;
  frontier.push(topology.root);
  parent[topology.root] = topology.root;
  while (!frontier.empty()) {
    const std::size_t j = frontier.front();
    frontier.pop();
    order.push_back(j);
    for (std::size_t next : neighbours[j]) {
      if (parent[next] == joints) {
        parent[next] = j;
        frontier.push(next);
      }
    }
  }
  if (order.size() != joints) {
    throw ConfigError("generate_synthetic: topology must be connected");
  }

  std::vector<PoseSequenceRecord> records;
  records.reserve(num_sequences);
  if (frames_3d_out) {
    frames_3d_out->clear();
    frames_3d_out->reserve(num_sequences);
  }
  for (std::size_t s = 0; s < num_sequences; ++s) {
    auto motion = seeded_stream(seed, "synthetic", s);
    auto noise = seeded_stream(seed, "noise", s);

    struct BoneMotion {
      Vec3 rest;       // fixed bone vector, parent to child
      Vec3 axis;       // rotation axis
      double amplitude, frequency, phase;
    };
    std::vector<BoneMotion> bones(joints);
    for (std::size_t j : order) {
      if (j == topology.root) continue;
      BoneMotion& bone = bones[j];
      const double length = uniform_range(motion, 0.15, 0.35);
      bone.rest = random_unit(motion);
      for (double& x : bone.rest) x *= length;
      bone.axis = random_unit(motion);
      bone.amplitude = options.motion_amplitude * uniform_range(motion, 0.1, 0.6);
      bone.frequency = uniform_range(motion, 0.5, 2.0);
      bone.phase = uniform_range(motion, 0.0, kTwoPi);
    }
    Vec3 drift_amp, drift_freq, drift_phase;
    for (std::size_t c = 0; c < 3; ++c) {
      drift_amp[c] = options.motion_amplitude * uniform_range(motion, 0.0, 0.3);
      drift_freq[c] = uniform_range(motion, 0.3, 1.5);
      drift_phase[c] = uniform_range(motion, 0.0, kTwoPi);
    }

    auto joint_positions = [&](std::size_t t) {
      const double time = static_cast<double>(t) / static_cast<double>(frames);
      std::vector<Vec3> pos(joints);
      Vec3 root_pos;
      for (std::size_t c = 0; c < 3; ++c) {
        root_pos[c] = drift_amp[c] * std::sin(kTwoPi * drift_freq[c] * time +
                                              drift_phase[c]);
      }
      pos[topology.root] = root_pos;
      for (std::size_t j : order) {
        if (j == topology.root) continue;
        const BoneMotion& bone = bones[j];
        const double angle =
            bone.amplitude * std::sin(kTwoPi * bone.frequency * time + bone.phase);
        const Vec3 offset = rotate_about(bone.axis, angle, bone.rest);
        for (std::size_t c = 0; c < 3; ++c) {
          pos[j][c] = pos[parent[j]][c] + offset[c];
        }
      }
      return pos;
    };

    // Fix skeleton scale: farthest joint sits at distance 1 from the root in
    // the first frame. Scaling every bone scales every root offset equally.
    double radius = 0.0;
    {
      const auto first = joint_positions(0);
      for (std::size_t j = 0; j < joints; ++j) {
        double sq = 0.0;
        for (std::size_t c = 0; c < 3; ++c) {
          const double d = first[j][c] - first[topology.root][c];
          sq += d * d;
        }
        radius = std::max(radius, std::sqrt(sq));
      }
    }
    const double rescale = radius > 0.0 ? 1.0 / radius : 1.0;
    for (std::size_t j = 0; j < joints; ++j) {
      for (double& x : bones[j].rest) x *= rescale;
    }

    std::vector<double> flat_2d(frames * joints * 2);
    std::vector<double> flat_3d(frames * joints * 3);
    std::vector<double> target(joints * 3);
    const std::size_t central = frames / 2;
    for (std::size_t t = 0; t < frames; ++t) {
      const auto pos = joint_positions(t);
      for (std::size_t j = 0; j < joints; ++j) {
        for (std::size_t c = 0; c < 2; ++c) {
          flat_2d[(t * joints + j) * 2 + c] =
              pos[j][c] + options.noise_sigma * normal_draw(noise);
        }
        for (std::size_t c = 0; c < 3; ++c) {
          flat_3d[(t * joints + j) * 3 + c] = pos[j][c];
        }
      }
      if (t == central) {
        for (std::size_t j = 0; j < joints; ++j) {
          for (std::size_t c = 0; c < 3; ++c) {
            target[j * 3 + c] = pos[j][c] - pos[topology.root][c];
          }
        }
      }
    }
    if (frames_3d_out) {
      frames_3d_out->push_back(
          Tensor::from_values({frames, joints, 3}, std::move(flat_3d)));
    }

    PoseSequenceRecord record;
    std::ostringstream id;
    id << "seq-" << std::setw(4) << std::setfill('0') << s;
    record.id = id.str();
    record.topology_id = options.topology_id;
    record.frames_2d = Tensor::from_values({frames, joints, 2}, std::move(flat_2d));
    record.target_3d = Tensor::from_values({joints, 3}, std::move(target));
    records.push_back(std::move(record));
  }
  return records;
}

}  // namespace poselift
