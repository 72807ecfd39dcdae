#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "bitta/errors.hpp"
#include "bitta/gradcheck.hpp"
#include "bitta/network.hpp"
#include "bitta/rng.hpp"
#include "bitta/stmap.hpp"
#include "bitta/stream.hpp"

using namespace bitta;
namespace fs = std::filesystem;

namespace {

// Tiny configuration for cheap gradient checks.
NetworkConfig micro_config() {
  NetworkConfig cfg;
  cfg.window_len = 16;
  cfg.spatial_size = 8;
  cfg.channels_in = 2;
  cfg.block_channels = {3, 3, 4, 4};
  cfg.pool_t = {2, 2, 2, 2};
  cfg.pool_s = {2, 2, 2, 1};
  return cfg;
}

Tensor random_window(const NetworkConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w({cfg.window_len, cfg.spatial_size, cfg.channels_in});
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(0.0, 1.0);
  return w;
}

fs::path temp_file(const char* name) {
  const fs::path dir = fs::temp_directory_path() / "bitta_network_tests";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("parameter count matches the hand count for the desk config") {
  const NetworkConfig cfg = NetworkConfig::desk_scale();
  const ParamLayout layout = param_layout(cfg);
  // stem 3x3x3x8 + 8, block1 3x3x8x8 + 8, block2 3x3x8x16 + 16,
  // block3 3x3x16x32 + 32, block4 3x3x32x32 + 32, head 32x1 + 1x1.
  const std::size_t expected = (216 + 8) + (576 + 8) + (1152 + 16) +
                               (4608 + 32) + (9216 + 32) + (32 + 1);
  CHECK(layout.total == expected);
  CHECK(layout.segments.size() == 12);
  CHECK(layout.segments.front().name == "stem.kernel");
  CHECK(layout.segments.back().name == "head.bias");
}

TEST_CASE("init is deterministic in the seed and differs across seeds") {
  const NetworkConfig cfg = micro_config();
  const auto a = init_params(cfg, 5);
  const auto b = init_params(cfg, 5);
  const auto c = init_params(cfg, 6);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(a.size() == param_layout(cfg).total);
}

TEST_CASE("feature extents follow the pooling rule") {
  const NetworkConfig cfg = NetworkConfig::desk_scale();
  const auto extents = cfg.feature_extents();
  REQUIRE(extents.size() == 4);
  CHECK(extents[0] == std::pair<std::size_t, std::size_t>{64, 8});
  CHECK(extents[1] == std::pair<std::size_t, std::size_t>{32, 4});
  CHECK(extents[2] == std::pair<std::size_t, std::size_t>{16, 2});
  CHECK(extents[3] == std::pair<std::size_t, std::size_t>{8, 1});

  NetworkConfig bad = cfg;
  bad.spatial_size = 8;  // fourth block would pool 1 -> 0
  CHECK_THROWS_AS(bad.validate(), ValueError);

  NetworkConfig mismatched = cfg;
  mismatched.pool_t.pop_back();
  CHECK_THROWS_AS(mismatched.validate(), ValueError);
}

TEST_CASE("forward: hr length, feature shapes, determinism") {
  const NetworkConfig cfg = NetworkConfig::desk_scale();
  const auto params = init_params(cfg, 11);
  const Tensor window = random_window(cfg, 3);

  Graph g;
  const auto leaves = make_param_leaves(g, cfg, params);
  const ForwardPass pass = build_forward(g, cfg, leaves, window);
  CHECK(pass.hr.tensor().shape() == std::vector<std::size_t>{128});
  REQUIRE(pass.features.size() == 4);
  CHECK(pass.features[0].tensor().shape() ==
        std::vector<std::size_t>{64, 8, 8});
  CHECK(pass.features[3].tensor().shape() ==
        std::vector<std::size_t>{8, 1, 32});

  const Tensor again = predict_hr(cfg, params, window);
  for (std::size_t i = 0; i < again.size(); ++i) {
    CHECK(again[i] == pass.hr.tensor()[i]);  // bitwise
  }
}

TEST_CASE("all-zero parameters yield a constant hr vector") {
  const NetworkConfig cfg = micro_config();
  const std::vector<double> zeros(param_layout(cfg).total, 0.0);
  const Tensor hr = predict_hr(cfg, zeros, random_window(cfg, 4));
  for (std::size_t i = 0; i < hr.size(); ++i) {
    CHECK(hr[i] == hr[0]);
  }
  CHECK(hr[0] == 0.0);  // zero head bias

  // Same with a non-zero head bias: the vector sits at exactly that bias.
  std::vector<double> biased = zeros;
  biased.back() = 63.5;  // head.bias is the last parameter
  const Tensor hr2 = predict_hr(cfg, biased, random_window(cfg, 4));
  for (std::size_t i = 0; i < hr2.size(); ++i) CHECK(hr2[i] == 63.5);
}

TEST_CASE("window shape mismatches are rejected") {
  const NetworkConfig cfg = micro_config();
  const auto params = init_params(cfg, 1);
  CHECK_THROWS_AS(predict_hr(cfg, params, Tensor({4, 4, 2}, 0.1)),
                  ShapeError);
  const std::vector<double> short_params(10, 0.0);
  CHECK_THROWS_AS(predict_hr(cfg, short_params, random_window(cfg, 1)),
                  ValueError);
}

TEST_CASE("network gradients pass the finite-difference oracle") {
  const NetworkConfig cfg = micro_config();
  const auto params = init_params(cfg, 21);
  const Tensor window = random_window(cfg, 22);

  Graph g;
  const auto leaves = make_param_leaves(g, cfg, params);
  const ForwardPass pass = build_forward(g, cfg, leaves, window);
  // Scalar readout mixing the HR vector and one latent map.
  Value loss = add(mean(multiply(pass.hr, pass.hr)),
                   sum(abs(pass.features[1])));
  const Gradients grads = g.backward(loss);
  const auto analytic = collect_param_grad(grads, leaves);

  const auto loss_fn = [&](std::span<const double> flat) {
    Graph g2;
    const auto leaves2 = make_param_leaves(g2, cfg, flat);
    const ForwardPass p2 = build_forward(g2, cfg, leaves2, window);
    return add(mean(multiply(p2.hr, p2.hr)), sum(abs(p2.features[1])))
        .item();
  };
  CHECK(finite_diff_check(loss_fn, params, analytic, 1e-6) < 1e-4);
}

TEST_CASE("checkpoints round-trip bitwise") {
  const NetworkConfig cfg = micro_config();
  const auto params = init_params(cfg, 33);
  const fs::path path = temp_file("net.btc");
  save_checkpoint(path, cfg, params, "unit-test");

  const Checkpoint back = load_checkpoint(path);
  CHECK(back.config == cfg);
  CHECK(back.provenance == "unit-test");
  CHECK(back.params == params);
}

TEST_CASE("checkpoint error paths are distinct") {
  const NetworkConfig cfg = micro_config();
  const auto params = init_params(cfg, 34);
  const fs::path path = temp_file("bad.btc");
  save_checkpoint(path, cfg, params, "unit-test");

  // Truncated payload -> length mismatch.
  fs::resize_file(path, fs::file_size(path) - 16);
  CHECK_THROWS_AS(load_checkpoint(path), LengthMismatchError);

  // Wrong version -> unsupported version.
  save_checkpoint(path, cfg, params, "unit-test");
  std::ifstream in(path, std::ios::binary);
  std::string contents((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  in.close();
  const auto pos = contents.find("bitta-ckpt/1");
  REQUIRE(pos != std::string::npos);
  contents.replace(pos, 12, "bitta-ckpt/7");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << contents;
  out.close();
  CHECK_THROWS_AS(load_checkpoint(path), UnsupportedVersionError);

  // Declared count disagreeing with the config -> length mismatch.
  save_checkpoint(path, cfg, params, "unit-test");
  std::ifstream in2(path, std::ios::binary);
  std::string text((std::istreambuf_iterator<char>(in2)),
                   std::istreambuf_iterator<char>());
  in2.close();
  const std::string count_field =
      "\"param_count\":" + std::to_string(param_layout(cfg).total);
  const auto cpos = text.find(count_field);
  REQUIRE(cpos != std::string::npos);
  text.replace(cpos, count_field.size(), "\"param_count\":999");
  std::ofstream out2(path, std::ios::binary | std::ios::trunc);
  out2 << text;
  out2.close();
  CHECK_THROWS_AS(load_checkpoint(path), LengthMismatchError);
}
