#include "poselift/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "poselift/serialize.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace poselift {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'P', 'O', 'S', 'E', 'L', 'I', 'F', 'T'};
constexpr std::uint32_t kVersion = 1;

// Flat directory over parameters and batch-norm running buffers; the order
// here fixes the payload layout.
struct Entry {
  std::string path;
  Shape shape;
  std::vector<double>* data;
};

std::vector<Entry> collect_entries(Model& model) {
  std::vector<Entry> entries;
  for (auto& [path, tensor] : model.params.named_parameters()) {
    entries.push_back({path, tensor.shape(), &tensor.mutable_values()});
  }
  auto add_state = [&entries](const std::string& path, std::vector<double>& data) {
    entries.push_back({path, Shape{data.size()}, &data});
  };
  add_state("state.spatial_bn.mean", model.state.spatial_bn.running_mean);
  add_state("state.spatial_bn.var", model.state.spatial_bn.running_var);
  for (std::size_t i = 0; i < model.state.block_bn.size(); ++i) {
    const std::string prefix = "state.block." + std::to_string(i) + ".bn.";
    add_state(prefix + "mean", model.state.block_bn[i].running_mean);
    add_state(prefix + "var", model.state.block_bn[i].running_var);
  }
  return entries;
}

void write_bytes(std::ofstream& out, const void* data, std::size_t size) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
}

template <typename Int>
Int read_int(std::ifstream& in, const std::string& path) {
  Int value = 0;
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(Int))) {
    throw IoError("checkpoint '" + path + "' is truncated");
  }
  return value;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model) {
  // Read-only traversal; collect_entries exposes mutable slots only so the
  // loader can reuse it.
  auto entries = collect_entries(const_cast<Model&>(model));

  json directory = json::array();
  std::size_t offset = 0;
  for (const auto& entry : entries) {
    json item;
    item["path"] = entry.path;
    item["shape"] = entry.shape;
    item["offset"] = offset;
    item["count"] = entry.data->size();
    directory.push_back(std::move(item));
    offset += entry.data->size();
  }
  json header;
  header["config"] = model_config_to_json(model.config);
  header["topology"] = topology_to_json(model.topology);
  header["tensors"] = std::move(directory);
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  write_bytes(out, kMagic, sizeof(kMagic));
  write_bytes(out, &kVersion, sizeof(kVersion));
  const std::uint64_t header_len = header_text.size();
  write_bytes(out, &header_len, sizeof(header_len));
  write_bytes(out, header_text.data(), header_text.size());
  for (const auto& entry : entries) {
    write_bytes(out, entry.data->data(), entry.data->size() * sizeof(double));
  }
  if (!out) throw IoError("write failed for checkpoint '" + path + "'");
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");

  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw IoError("'" + path + "' is not a checkpoint file");
  }
  const auto version = read_int<std::uint32_t>(in, path);
  if (version != kVersion) {
    throw IoError("checkpoint '" + path + "' has unsupported version " +
                  std::to_string(version));
  }
  const auto header_len = read_int<std::uint64_t>(in, path);
  std::string header_text(header_len, '\0');
  if (!in.read(header_text.data(), static_cast<std::streamsize>(header_len))) {
    throw IoError("checkpoint '" + path + "' is truncated");
  }
  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::parse_error& err) {
    throw IoError("checkpoint '" + path + "' has a corrupt header: " + err.what());
  }
  if (!header.contains("config") || !header.contains("topology") ||
      !header.contains("tensors")) {
    throw IoError("checkpoint '" + path + "' header is missing required sections");
  }

  const ModelConfig config = model_config_from_json(header["config"]);
  const SkeletonTopology topology = topology_from_json(header["topology"]);
  Model model = build_model(config, topology, 0);

  auto entries = collect_entries(model);
  std::unordered_map<std::string, Entry*> by_path;
  std::size_t expected_total = 0;
  for (auto& entry : entries) {
    by_path[entry.path] = &entry;
    expected_total += entry.data->size();
  }

  std::vector<double> payload(expected_total);
  if (!in.read(reinterpret_cast<char*>(payload.data()),
               static_cast<std::streamsize>(expected_total * sizeof(double)))) {
    throw IoError("checkpoint '" + path + "' is truncated");
  }

  std::size_t filled = 0;
  for (const auto& item : header["tensors"]) {
    const std::string entry_path = item.at("path").get<std::string>();
    auto found = by_path.find(entry_path);
    if (found == by_path.end()) {
      throw IoError("checkpoint '" + path + "' has unexpected tensor '" + entry_path +
                    "'");
    }
    Entry& dest = *found->second;
    const Shape shape = item.at("shape").get<Shape>();
    const auto offset = item.at("offset").get<std::size_t>();
    const auto count = item.at("count").get<std::size_t>();
    if (shape != dest.shape || count != dest.data->size() ||
        offset + count > payload.size()) {
      throw IoError("checkpoint '" + path + "': tensor '" + entry_path +
                    "' does not match the model built from the stored config");
    }
    std::copy(payload.begin() + static_cast<std::ptrdiff_t>(offset),
              payload.begin() + static_cast<std::ptrdiff_t>(offset + count),
              dest.data->begin());
    filled += count;
  }
  if (filled != expected_total) {
    throw IoError("checkpoint '" + path + "' is missing tensors for this config");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw IoError("checkpoint '" + path + "' has trailing data");
  }
  return model;
}

}  // namespace poselift
