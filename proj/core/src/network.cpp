#include "bitta/network.hpp"

#include <cmath>

#include "bitta/errors.hpp"
#include "bitta/rng.hpp"
#include "file_format.hpp"

namespace bitta {

namespace {

constexpr std::size_t kKernel = 3;  // 3x3 convs, stride 1, same padding

nlohmann::json config_to_json_obj(const NetworkConfig& cfg) {
  return nlohmann::json{
      {"window_len", cfg.window_len},
      {"spatial_size", cfg.spatial_size},
      {"channels_in", cfg.channels_in},
      {"block_channels", cfg.block_channels},
      {"pool_t", cfg.pool_t},
      {"pool_s", cfg.pool_s},
  };
}

NetworkConfig config_from_json_obj(const nlohmann::json& j) {
  using detail::header_field;
  NetworkConfig cfg;
  cfg.window_len = header_field<std::size_t>(j, "window_len");
  cfg.spatial_size = header_field<std::size_t>(j, "spatial_size");
  cfg.channels_in = header_field<std::size_t>(j, "channels_in");
  cfg.block_channels =
      header_field<std::vector<std::size_t>>(j, "block_channels");
  cfg.pool_t = header_field<std::vector<int>>(j, "pool_t");
  cfg.pool_s = header_field<std::vector<int>>(j, "pool_s");
  cfg.validate();
  return cfg;
}

std::size_t block_in_channels(const NetworkConfig& cfg, std::size_t i) {
  return i == 0 ? cfg.block_channels[0] : cfg.block_channels[i - 1];
}

}  // namespace

void NetworkConfig::validate() const {
  if (block_channels.empty()) {
    throw ValueError("network needs at least one block");
  }
  if (pool_t.size() != block_channels.size() ||
      pool_s.size() != block_channels.size()) {
    throw ValueError("pool factor lists must match block count");
  }
  if (window_len < 1 || spatial_size < 1 || channels_in < 1) {
    throw ValueError("input extents must be at least 1");
  }
  for (std::size_t c : block_channels) {
    if (c < 1) throw ValueError("block channels must be at least 1");
  }
  std::size_t t = window_len, s = spatial_size;
  for (std::size_t i = 0; i < block_channels.size(); ++i) {
    if (pool_t[i] < 1 || pool_s[i] < 1) {
      throw ValueError("pool factors must be at least 1");
    }
    t /= static_cast<std::size_t>(pool_t[i]);
    s /= static_cast<std::size_t>(pool_s[i]);
    if (t < 1 || s < 1) {
      throw ValueError("pooling reduces an axis below 1 at block " +
                       std::to_string(i + 1));
    }
  }
}

std::vector<std::pair<std::size_t, std::size_t>>
NetworkConfig::feature_extents() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t t = window_len, s = spatial_size;
  for (std::size_t i = 0; i < block_channels.size(); ++i) {
    t /= static_cast<std::size_t>(pool_t[i]);
    s /= static_cast<std::size_t>(pool_s[i]);
    out.emplace_back(t, s);
  }
  return out;
}

std::string network_config_to_json(const NetworkConfig& cfg) {
  return config_to_json_obj(cfg).dump();
}

NetworkConfig network_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptHeaderError(std::string("network config: ") + e.what());
  }
  return config_from_json_obj(j);
}

ParamLayout param_layout(const NetworkConfig& cfg) {
  cfg.validate();
  ParamLayout layout;
  auto push = [&layout](std::string name, std::vector<std::size_t> shape) {
    ParamSegment seg;
    seg.name = std::move(name);
    seg.size = Tensor::shape_size(shape);
    seg.shape = std::move(shape);
    seg.offset = layout.total;
    layout.total += seg.size;
    layout.segments.push_back(std::move(seg));
  };

  push("stem.kernel", {kKernel, kKernel, cfg.channels_in,
                       cfg.block_channels[0]});
  push("stem.bias", {cfg.block_channels[0]});
  for (std::size_t i = 0; i < cfg.n_blocks(); ++i) {
    const std::string prefix = "block" + std::to_string(i + 1);
    push(prefix + ".kernel",
         {kKernel, kKernel, block_in_channels(cfg, i), cfg.block_channels[i]});
    push(prefix + ".bias", {cfg.block_channels[i]});
  }
  push("head.weight", {cfg.block_channels.back(), 1});
  push("head.bias", {1, 1});
  return layout;
}

std::vector<double> init_params(const NetworkConfig& cfg, std::uint64_t seed) {
  const ParamLayout layout = param_layout(cfg);
  std::vector<double> params(layout.total);
  Rng rng(Rng::derive(seed, 21));
  // Fan-in of the consuming layer: receptive patch x input channels for conv
  // kernels, feature width for the head. A bias shares the fan-in of the
  // kernel pushed right before it.
  double fan_in = 1.0;
  for (const ParamSegment& seg : layout.segments) {
    if (seg.shape.size() == 4) {
      fan_in = static_cast<double>(seg.shape[0] * seg.shape[1] * seg.shape[2]);
    } else if (!seg.name.ends_with(".bias")) {
      fan_in = static_cast<double>(seg.shape[0]);
    }
    const double bound = 1.0 / std::sqrt(fan_in);
    for (std::size_t i = 0; i < seg.size; ++i) {
      params[seg.offset + i] = rng.uniform(-bound, bound);
    }
  }
  return params;
}

std::vector<Value> make_param_leaves(Graph& g, const NetworkConfig& cfg,
                                     std::span<const double> flat_params) {
  const ParamLayout layout = param_layout(cfg);
  if (flat_params.size() != layout.total) {
    throw ValueError("parameter vector has " +
                     std::to_string(flat_params.size()) + " values, layout " +
                     "needs " + std::to_string(layout.total));
  }
  std::vector<Value> leaves;
  leaves.reserve(layout.segments.size());
  for (const ParamSegment& seg : layout.segments) {
    std::vector<double> data(flat_params.begin() + seg.offset,
                             flat_params.begin() + seg.offset + seg.size);
    leaves.push_back(g.leaf(Tensor(seg.shape, std::move(data))));
  }
  return leaves;
}

ForwardPass build_forward(Graph& g, const NetworkConfig& cfg,
                          std::span<const Value> param_leaves,
                          const Tensor& window) {
  cfg.validate();
  if (window.rank() != 3 || window.extent(0) != cfg.window_len ||
      window.extent(1) != cfg.spatial_size ||
      window.extent(2) != cfg.channels_in) {
    throw ShapeError("forward", "window " + window.shape_str() +
                                    " vs configured input (" +
                                    std::to_string(cfg.window_len) + ", " +
                                    std::to_string(cfg.spatial_size) + ", " +
                                    std::to_string(cfg.channels_in) + ")");
  }
  const std::size_t expected_leaves = 2 * (cfg.n_blocks() + 1) + 2;
  if (param_leaves.size() != expected_leaves) {
    throw ValueError("expected " + std::to_string(expected_leaves) +
                     " parameter leaves, got " +
                     std::to_string(param_leaves.size()));
  }

  constexpr int pad = static_cast<int>(kKernel) / 2;
  std::size_t next = 0;
  auto take = [&]() { return param_leaves[next++]; };

  Value x = g.constant(window);
  {
    const Value kernel = take();
    const Value bias = take();
    x = relu(conv2d(x, kernel, bias, 1, 1, pad, pad));
  }

  ForwardPass pass;
  for (std::size_t i = 0; i < cfg.n_blocks(); ++i) {
    const Value kernel = take();
    const Value bias = take();
    x = relu(conv2d(x, kernel, bias, 1, 1, pad, pad));
    x = avg_pool(x, cfg.pool_t[i], cfg.pool_s[i]);
    pass.features.push_back(x);
  }

  // Head: pool the spatial axis away, project each temporal position to a
  // scalar, then resample to the window length.
  const auto [t_last, s_last] = cfg.feature_extents().back();
  Value pooled = mean(x, 1);  // (t_last, channels)
  Value projected = matmul(pooled, take());
  Value ones = g.constant(Tensor({t_last, 1}, 1.0));
  projected = add(projected, matmul(ones, take()));  // broadcast the bias
  (void)s_last;
  pass.hr = interp_linear(reshape(projected, {t_last}), cfg.window_len);
  return pass;
}

std::vector<double> collect_param_grad(const Gradients& grads,
                                       std::span<const Value> param_leaves) {
  std::vector<double> flat;
  for (const Value& leaf : param_leaves) {
    const Tensor g = grads.of(leaf);
    flat.insert(flat.end(), g.data(), g.data() + g.size());
  }
  return flat;
}

Tensor predict_hr(const NetworkConfig& cfg, std::span<const double> params,
                  const Tensor& window) {
  Graph g;
  const auto leaves = make_param_leaves(g, cfg, params);
  return build_forward(g, cfg, leaves, window).hr.tensor();
}

void save_checkpoint(const std::filesystem::path& path,
                     const NetworkConfig& cfg, std::span<const double> params,
                     const std::string& provenance) {
  const ParamLayout layout = param_layout(cfg);
  if (params.size() != layout.total) {
    throw ValueError("checkpoint payload has " +
                     std::to_string(params.size()) + " values, config needs " +
                     std::to_string(layout.total));
  }
  nlohmann::json header{
      {"format", kCheckpointFormat},
      {"network", nlohmann::json::parse(network_config_to_json(cfg))},
      {"param_count", layout.total},
      {"provenance", provenance},
  };
  detail::write_container(path, header, detail::encode_f64(params));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto c = detail::read_container(path);
  detail::require_format(c.header, kCheckpointFormat);
  if (!c.header.contains("network")) {
    throw CorruptHeaderError("missing field \"network\"");
  }
  Checkpoint ckpt;
  ckpt.config = network_config_from_json(c.header.at("network").dump());
  ckpt.provenance =
      detail::header_field<std::string>(c.header, "provenance");
  const auto declared =
      detail::header_field<std::size_t>(c.header, "param_count");
  const ParamLayout layout = param_layout(ckpt.config);
  if (declared != layout.total) {
    throw LengthMismatchError(layout.total, declared);
  }
  ckpt.params = detail::decode_f64(c.payload, layout.total);
  return ckpt;
}

}  // namespace bitta
