#pragma once

#include "crossseg/net.hpp"
#include "crossseg/ops_conv.hpp"

namespace crossseg {

namespace detail {

// 3x3 conv (pad 1) + batch norm + ReLU.
template <typename T>
struct ConvBnRelu {
  Var<T> w, b, gamma, beta;
  Tensor<T>* running_mean = nullptr;
  Tensor<T>* running_var = nullptr;

  void init(Network<T>& net, const std::string& prefix, index_t cin, index_t cout, Rng& rng) {
    w = net.add_param(prefix + ".w", init::kaiming<T>(rng, {cout, cin, 3, 3}, cin * 9));
    b = net.add_param(prefix + ".b", Tensor<T>({cout}));
    gamma = net.add_param(prefix + ".bn_gamma", Tensor<T>::full({cout}, T(1)));
    beta = net.add_param(prefix + ".bn_beta", Tensor<T>({cout}));
    running_mean = net.add_buffer(prefix + ".bn_mean", Tensor<T>({cout}));
    running_var = net.add_buffer(prefix + ".bn_var", Tensor<T>::full({cout}, T(1)));
  }

  Var<T> operator()(const Var<T>& x, bool training) const {
    return relu(batch_norm2d(conv2d(x, w, b, 1, 1), gamma, beta, running_mean, running_var, training));
  }
};

template <typename T>
struct DoubleConv {
  ConvBnRelu<T> c1, c2;

  void init(Network<T>& net, const std::string& prefix, index_t cin, index_t cout, Rng& rng) {
    c1.init(net, prefix + ".conv1", cin, cout, rng);
    c2.init(net, prefix + ".conv2", cout, cout, rng);
  }

  Var<T> operator()(const Var<T>& x, bool training) const { return c2(c1(x, training), training); }
};

}  // namespace detail

// Encoder-decoder CNN: num_stages maxpool halvings with channel doubling,
// transposed-conv upsampling and concatenation skips, 1x1 head. The deepest
// feature map feeds the contrastive projection head via global average pooling.
template <typename T>
class CnnUnet : public Network<T> {
 public:
  explicit CnnUnet(NetworkConfig cfg) : Network<T>(std::move(cfg)) {
    CROSSSEG_CHECK(this->cfg_.kind == NetworkKind::kCnnUnet, "CnnUnet: wrong config kind");
    Rng rng(this->cfg_.seed);
    index_t S = this->cfg_.num_stages;
    index_t b = this->cfg_.base_channels;

    enc_.resize(static_cast<std::size_t>(S));
    for (index_t s = 0; s < S; ++s) {
      index_t cin = s == 0 ? this->cfg_.in_channels : b << (s - 1);
      enc_[static_cast<std::size_t>(s)].init(*this, "enc" + std::to_string(s), cin, b << s, rng);
    }
    bottleneck_.init(*this, "bottleneck", b << (S - 1), b << S, rng);

    up_w_.resize(static_cast<std::size_t>(S));
    up_b_.resize(static_cast<std::size_t>(S));
    dec_.resize(static_cast<std::size_t>(S));
    for (index_t s = S - 1; s >= 0; --s) {
      index_t cur = b << (s + 1);  // channels entering this decoder stage
      auto pfx = "dec" + std::to_string(s);
      up_w_[static_cast<std::size_t>(s)] =
          this->add_param(pfx + ".up_w", init::kaiming<T>(rng, {cur, cur / 2, 2, 2}, cur * 4));
      up_b_[static_cast<std::size_t>(s)] = this->add_param(pfx + ".up_b", Tensor<T>({cur / 2}));
      dec_[static_cast<std::size_t>(s)].init(*this, pfx, cur, cur / 2, rng);
    }

    head_w_ = this->add_param("head.w", init::kaiming<T>(rng, {this->cfg_.num_classes, b, 1, 1}, b));
    head_b_ = this->add_param("head.b", Tensor<T>({this->cfg_.num_classes}));

    proj_.init(*this, "proj", b << S, this->cfg_.projection_dim, rng);
  }

  ForwardResult<T> forward(const Tensor<T>& images, bool with_representation) override {
    this->check_input(images);
    index_t S = this->cfg_.num_stages;
    index_t div = index_t(1) << S;
    CROSSSEG_CHECK(images.dim(2) % div == 0 && images.dim(3) % div == 0,
                   "cnn_unet: input " << images.dim(2) << "x" << images.dim(3)
                                      << " must be divisible by " << div << " (" << S << " pooling stages)");

    auto x = make_constant(images);
    std::vector<Var<T>> skips;
    for (index_t s = 0; s < S; ++s) {
      auto e = enc_[static_cast<std::size_t>(s)](x, this->training_);
      skips.push_back(e);
      x = maxpool2x2(e);
    }
    auto bottom = bottleneck_(x, this->training_);

    x = bottom;
    for (index_t s = S - 1; s >= 0; --s) {
      auto up = conv_transpose2x2(x, up_w_[static_cast<std::size_t>(s)], up_b_[static_cast<std::size_t>(s)]);
      x = dec_[static_cast<std::size_t>(s)](concat<T>({up, skips[static_cast<std::size_t>(s)]}, 1),
                                            this->training_);
    }

    ForwardResult<T> out;
    out.logits = conv2d(x, head_w_, head_b_, 1, 0);
    if (with_representation) out.representation = proj_(global_avg_pool(bottom));
    this->check_outputs(out);
    return out;
  }

 private:
  std::vector<detail::DoubleConv<T>> enc_;
  detail::DoubleConv<T> bottleneck_;
  std::vector<Var<T>> up_w_, up_b_;
  std::vector<detail::DoubleConv<T>> dec_;
  Var<T> head_w_, head_b_;
  ProjectionHead<T> proj_;
};

}  // namespace crossseg
