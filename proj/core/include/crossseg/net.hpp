#pragma once

#include <memory>
#include <string>
#include <vector>

#include "crossseg/graph.hpp"
#include "crossseg/ops_core.hpp"
#include "crossseg/rng.hpp"
#include "crossseg/tensor.hpp"

namespace crossseg {

enum class NetworkKind {
  kCnnUnet,
  kWindowedTransformerUnet,
};

inline std::string network_kind_name(NetworkKind k) {
  return k == NetworkKind::kCnnUnet ? "cnn_unet" : "windowed_transformer_unet";
}

inline NetworkKind network_kind_from_name(const std::string& s) {
  if (s == "cnn_unet") return NetworkKind::kCnnUnet;
  if (s == "windowed_transformer_unet") return NetworkKind::kWindowedTransformerUnet;
  CROSSSEG_CHECK(false, "unknown network kind '" << s << "'");
  return NetworkKind::kCnnUnet;
}

struct NetworkConfig {
  NetworkKind kind = NetworkKind::kCnnUnet;
  int in_channels = 3;
  int num_classes = 3;

  // cnn_unet
  int base_channels = 16;
  int num_stages = 4;  // pooling steps; input H,W must be divisible by 2^num_stages

  // windowed_transformer_unet
  int embed_dim = 48;
  std::vector<int> depths = {2, 2, 2};
  std::vector<int> num_heads = {3, 6, 12};
  int window_size = 7;

  int projection_dim = 128;
  std::uint64_t seed = 0;

  void validate() const {
    CROSSSEG_CHECK(in_channels > 0, "NetworkConfig: in_channels must be > 0");
    CROSSSEG_CHECK(num_classes == 3, "NetworkConfig: num_classes is fixed at 3");
    CROSSSEG_CHECK(projection_dim > 0, "NetworkConfig: projection_dim must be > 0");
    if (kind == NetworkKind::kCnnUnet) {
      CROSSSEG_CHECK(base_channels > 0, "NetworkConfig: base_channels must be > 0");
      CROSSSEG_CHECK(num_stages >= 1 && num_stages <= 6, "NetworkConfig: num_stages must be in [1,6]");
    } else {
      CROSSSEG_CHECK(embed_dim > 0, "NetworkConfig: embed_dim must be > 0");
      CROSSSEG_CHECK(!depths.empty() && depths.size() == num_heads.size(),
                     "NetworkConfig: depths and num_heads must be non-empty and equal length");
      for (std::size_t s = 0; s < depths.size(); ++s) {
        CROSSSEG_CHECK(depths[s] > 0, "NetworkConfig: depths must be positive");
        CROSSSEG_CHECK(num_heads[s] > 0, "NetworkConfig: num_heads must be positive");
        int dim = embed_dim << s;
        CROSSSEG_CHECK(dim % num_heads[s] == 0, "NetworkConfig: stage " << s << " dim " << dim
                                                                        << " not divisible by num_heads "
                                                                        << num_heads[s]);
      }
      CROSSSEG_CHECK(window_size > 0, "NetworkConfig: window_size must be > 0");
    }
  }
};

template <typename T>
struct NamedParam {
  std::string name;
  Var<T> var;
};

template <typename T>
struct NamedBuffer {
  std::string name;
  Tensor<T>* tensor;
};

template <typename T>
struct ForwardResult {
  Var<T> logits;          // [B, num_classes, H, W]
  Var<T> representation;  // [B, projection_dim], unit rows; null unless requested
};

template <typename T>
class Network {
 public:
  explicit Network(NetworkConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }
  virtual ~Network() = default;
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  // images: [B, in_channels, H, W]
  virtual ForwardResult<T> forward(const Tensor<T>& images, bool with_representation) = 0;

  void set_training(bool training) { training_ = training; }
  bool is_training() const { return training_; }

  const NetworkConfig& config() const { return cfg_; }
  std::vector<NamedParam<T>>& parameters() { return params_; }
  const std::vector<NamedParam<T>>& parameters() const { return params_; }
  std::vector<NamedBuffer<T>>& buffers() { return buffers_; }
  const std::vector<NamedBuffer<T>>& buffers() const { return buffers_; }

  index_t parameter_count() const {
    index_t n = 0;
    for (const auto& p : params_) n += p.var->value.numel();
    return n;
  }

  Var<T> add_param(const std::string& name, Tensor<T> init) {
    auto v = make_var(std::move(init), /*requires_grad=*/true, "param");
    params_.push_back({name, v});
    return v;
  }

  Tensor<T>* add_buffer(const std::string& name, Tensor<T> init) {
    buffer_store_.push_back(std::make_unique<Tensor<T>>(std::move(init)));
    Tensor<T>* p = buffer_store_.back().get();
    buffers_.push_back({name, p});
    return p;
  }

 protected:
  void check_input(const Tensor<T>& images) const {
    CROSSSEG_CHECK(images.ndim() == 4, "forward: expected images [B,C,H,W], got "
                                           << shape_str(images.shape()));
    CROSSSEG_CHECK(images.dim(1) == cfg_.in_channels, "forward: expected " << cfg_.in_channels
                                                                           << " input channels, got "
                                                                           << images.dim(1));
    CROSSSEG_CHECK_RT(images.all_finite(), "forward: non-finite input image values");
  }

  void check_outputs(const ForwardResult<T>& r) const {
    CROSSSEG_CHECK_RT(r.logits->value.all_finite(),
                      "forward: non-finite activation in " << network_kind_name(cfg_.kind) << " logits");
    if (r.representation)
      CROSSSEG_CHECK_RT(r.representation->value.all_finite(),
                        "forward: non-finite activation in " << network_kind_name(cfg_.kind)
                                                             << " representation");
  }

  NetworkConfig cfg_;
  bool training_ = true;
  std::vector<NamedParam<T>> params_;
  std::vector<NamedBuffer<T>> buffers_;
  std::vector<std::unique_ptr<Tensor<T>>> buffer_store_;
};

namespace init {

template <typename T>
Tensor<T> normal(Rng& rng, const Shape& shape, double stddev) {
  Tensor<T> t(shape);
  for (index_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.normal() * stddev);
  return t;
}

// He initialization for layers followed by ReLU.
template <typename T>
Tensor<T> kaiming(Rng& rng, const Shape& shape, index_t fan_in) {
  return normal<T>(rng, shape, std::sqrt(2.0 / static_cast<double>(fan_in)));
}

}  // namespace init

// Shared contrastive projection head: GAP features -> linear -> ReLU -> linear -> L2 norm.
template <typename T>
struct ProjectionHead {
  Var<T> w1, b1, w2, b2;

  void init(Network<T>& net, const std::string& prefix, index_t in_dim, index_t out_dim, Rng& rng) {
    w1 = net.add_param(prefix + ".w1", init::kaiming<T>(rng, {out_dim, in_dim}, in_dim));
    b1 = net.add_param(prefix + ".b1", Tensor<T>({out_dim}));
    w2 = net.add_param(prefix + ".w2", init::kaiming<T>(rng, {out_dim, out_dim}, out_dim));
    // Small positive bias: if ReLU kills the whole hidden row (likely at
    // random init), the output is still nonzero and normalizable.
    Tensor<T> bias2({out_dim});
    bias2.fill(static_cast<T>(0.01));
    b2 = net.add_param(prefix + ".b2", std::move(bias2));
  }

  // pooled: [B, in_dim] -> [B, out_dim] with unit-norm rows.
  Var<T> operator()(const Var<T>& pooled) const {
    return l2_normalize_rows(linear(relu(linear(pooled, w1, b1)), w2, b2));
  }
};

template <typename T>
std::unique_ptr<Network<T>> build_network(const NetworkConfig& cfg);

}  // namespace crossseg
