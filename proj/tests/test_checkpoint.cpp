#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "poselift/checkpoint.hpp"
#include "poselift/dataset.hpp"
#include "poselift/serialize.hpp"

using namespace poselift;

namespace {

struct TempFile {
  std::filesystem::path path;
  explicit TempFile(const std::string& name)
      : path(std::filesystem::temp_directory_path() / name) {}
  ~TempFile() { std::filesystem::remove(path); }
};

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

ModelConfig tiny_config() {
  ModelConfig config;
  config.num_joints = 5;
  config.input_frames = 5;
  config.hidden_dim = 4;
  config.highest_order = 2;
  config.num_blocks = 1;
  config.num_heads = 1;
  return config;
}

}  // namespace

TEST_CASE("checkpoint round-trip restores every tensor bit for bit") {
  Model model = build_model(tiny_config(), tiny5_topology(), 31);
  // perturb running stats so the state section carries non-default data
  auto records = generate_synthetic(1, 5, tiny5_topology(), 3);
  model_forward(model, records[0].frames_2d, true);

  TempFile file("poselift_ckpt_roundtrip.bin");
  save_checkpoint(file.path.string(), model);
  Model loaded = load_checkpoint(file.path.string());

  CHECK(loaded.config == model.config);
  auto original = model.params.named_parameters();
  auto restored = loaded.params.named_parameters();
  REQUIRE(original.size() == restored.size());
  for (std::size_t i = 0; i < original.size(); ++i) {
    CHECK(original[i].first == restored[i].first);
    CHECK(original[i].second.values() == restored[i].second.values());
  }
  CHECK(loaded.state.spatial_bn.running_mean == model.state.spatial_bn.running_mean);
  CHECK(loaded.state.spatial_bn.running_var == model.state.spatial_bn.running_var);
  REQUIRE(loaded.state.block_bn.size() == model.state.block_bn.size());
  for (std::size_t i = 0; i < model.state.block_bn.size(); ++i) {
    CHECK(loaded.state.block_bn[i].running_mean ==
          model.state.block_bn[i].running_mean);
    CHECK(loaded.state.block_bn[i].running_var == model.state.block_bn[i].running_var);
  }

  // the restored model must predict identically in eval mode
  Tensor before = model_forward(model, records[0].frames_2d, false);
  Tensor after = model_forward(loaded, records[0].frames_2d, false);
  CHECK(before.values() == after.values());
}

TEST_CASE("saving the same model twice writes identical bytes") {
  Model model = build_model(tiny_config(), tiny5_topology(), 9);
  TempFile first("poselift_ckpt_a.bin"), second("poselift_ckpt_b.bin");
  save_checkpoint(first.path.string(), model);
  save_checkpoint(second.path.string(), model);
  CHECK(read_bytes(first.path) == read_bytes(second.path));

  // save -> load -> save is also byte-stable
  Model loaded = load_checkpoint(first.path.string());
  TempFile third("poselift_ckpt_c.bin");
  save_checkpoint(third.path.string(), loaded);
  CHECK(read_bytes(first.path) == read_bytes(third.path));
}

TEST_CASE("config json round-trips to an equal structure") {
  ModelConfig config = tiny_config();
  config.drop_rate = 2;
  config.center = 0.25;
  config.pos_factor = 3.5;
  config.bcma_scaling = BcmaScaling::Queries;
  config.central_reduction = CentralReduction::Mean;
  CHECK(model_config_from_json(model_config_to_json(config)) == config);

  ModelConfig defaults;
  CHECK(model_config_from_json(nlohmann::json::object()) == defaults);
}

TEST_CASE("config parsing rejects unknown keys and bad values") {
  nlohmann::json entry = model_config_to_json(tiny_config());
  entry["typo_field"] = 1;
  CHECK_THROWS_WITH_AS(model_config_from_json(entry), doctest::Contains("typo_field"),
                       ConfigError);
  entry = model_config_to_json(tiny_config());
  entry["bcma_scaling"] = "sideways";
  CHECK_THROWS_AS(model_config_from_json(entry), ConfigError);
  entry = model_config_to_json(tiny_config());
  entry["num_heads"] = -3;
  CHECK_THROWS_AS(model_config_from_json(entry), ConfigError);
}

TEST_CASE("topology survives the checkpoint header") {
  Model model = build_model(tiny_config(), tiny5_topology(), 1);
  TempFile file("poselift_ckpt_topo.bin");
  save_checkpoint(file.path.string(), model);
  Model loaded = load_checkpoint(file.path.string());
  CHECK(loaded.topology.num_joints == model.topology.num_joints);
  CHECK(loaded.topology.edges == model.topology.edges);
  CHECK(loaded.topology.flip_pairs == model.topology.flip_pairs);
  CHECK(loaded.topology.root == model.topology.root);
}

TEST_CASE("corrupt checkpoints are rejected") {
  CHECK_THROWS_AS(load_checkpoint("/no/such/checkpoint.bin"), IoError);

  TempFile garbage("poselift_ckpt_garbage.bin");
  {
    std::ofstream out(garbage.path, std::ios::binary);
    out << "definitely not a checkpoint";
  }
  CHECK_THROWS_AS(load_checkpoint(garbage.path.string()), IoError);

  // truncate a valid file inside the payload
  Model model = build_model(tiny_config(), tiny5_topology(), 2);
  TempFile valid("poselift_ckpt_truncated.bin");
  save_checkpoint(valid.path.string(), model);
  const std::string bytes = read_bytes(valid.path);
  {
    std::ofstream out(valid.path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 16));
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(valid.path.string()),
                       doctest::Contains("truncated"), IoError);
}
