#ifndef BITTA_NETWORK_HPP
#define BITTA_NETWORK_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bitta/graph.hpp"
#include "bitta/tensor.hpp"

namespace bitta {

inline constexpr char kCheckpointFormat[] = "bitta-ckpt/1";

/// Small convolutional backbone for STMap windows: a stem conv feeding
/// n_blocks of (3x3 conv, relu, average-pool), then a per-position linear
/// head whose output is resampled back to window_len.
///
/// block_channels[i] is block i's output width; the stem emits
/// block_channels[0]. Each block halves (by default) the temporal and
/// spatial extents through its pool factors.
struct NetworkConfig {
  std::size_t window_len = 128;   // temporal input length and head output
  std::size_t spatial_size = 16;  // resized spatial extent fed to the stem
  std::size_t channels_in = 3;
  std::vector<std::size_t> block_channels = {8, 16, 32, 32};
  std::vector<int> pool_t = {2, 2, 2, 2};
  std::vector<int> pool_s = {2, 2, 2, 2};

  static NetworkConfig desk_scale() { return NetworkConfig{}; }
  static NetworkConfig full_scale() {
    NetworkConfig cfg;
    cfg.window_len = 256;
    cfg.spatial_size = 64;
    return cfg;
  }

  std::size_t n_blocks() const { return block_channels.size(); }

  /// Throws ValueError when block lists disagree or pooling would reduce an
  /// axis below one element.
  void validate() const;

  /// (temporal, spatial) extent of each block's feature map.
  std::vector<std::pair<std::size_t, std::size_t>> feature_extents() const;

  bool operator==(const NetworkConfig&) const = default;
};

std::string network_config_to_json(const NetworkConfig& cfg);
NetworkConfig network_config_from_json(const std::string& text);

struct ParamSegment {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

struct ParamLayout {
  std::vector<ParamSegment> segments;
  std::size_t total = 0;
};

ParamLayout param_layout(const NetworkConfig& cfg);

/// Fan-in-scaled uniform initialization, deterministic in the seed.
std::vector<double> init_params(const NetworkConfig& cfg, std::uint64_t seed);

/// Parameter leaves for one forward build, in param_layout order.
std::vector<Value> make_param_leaves(Graph& g, const NetworkConfig& cfg,
                                     std::span<const double> flat_params);

struct ForwardPass {
  Value hr;                     // (window_len,) in bpm
  std::vector<Value> features;  // post-pool feature map per block
};

/// Records the whole forward computation on g. Both outputs stay
/// differentiable with respect to the parameter leaves.
ForwardPass build_forward(Graph& g, const NetworkConfig& cfg,
                          std::span<const Value> param_leaves,
                          const Tensor& window);

/// Collects d(loss)/d(params) as one flat vector in layout order.
std::vector<double> collect_param_grad(const Gradients& grads,
                                       std::span<const Value> param_leaves);

/// Plain inference: HR vector in bpm for one window.
Tensor predict_hr(const NetworkConfig& cfg, std::span<const double> params,
                  const Tensor& window);

void save_checkpoint(const std::filesystem::path& path,
                     const NetworkConfig& cfg, std::span<const double> params,
                     const std::string& provenance);

struct Checkpoint {
  NetworkConfig config;
  std::vector<double> params;
  std::string provenance;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace bitta

#endif  // BITTA_NETWORK_HPP
