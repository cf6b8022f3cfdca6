#pragma once

#include <map>
#include <tuple>

#include "crossseg/net.hpp"
#include "crossseg/ops_conv.hpp"
#include "crossseg/ops_shape.hpp"

namespace crossseg {

namespace detail {

// attn: [G, w2, w2] with G = B*nW*heads (head index fastest); bias: [heads, w2, w2].
// Adds bias[g % heads] to each attention block; the bias table is trainable.
template <typename T>
Var<T> add_relative_bias(const Var<T>& attn, const Var<T>& bias, index_t heads) {
  CROSSSEG_CHECK(attn->value.ndim() == 3 && bias->value.ndim() == 3 && bias->value.dim(0) == heads &&
                     attn->value.dim(0) % heads == 0 && attn->value.dim(1) == bias->value.dim(1) &&
                     attn->value.dim(2) == bias->value.dim(2),
                 "add_relative_bias: shape mismatch");
  index_t G = attn->value.dim(0), blk = attn->value.dim(1) * attn->value.dim(2);
  Tensor<T> out = attn->value;
  const T* pb = bias->value.data();
  for (index_t g = 0; g < G; ++g) {
    const T* src = pb + (g % heads) * blk;
    T* dst = out.data() + g * blk;
    for (index_t i = 0; i < blk; ++i) dst[i] += src[i];
  }
  return make_op<T>(std::move(out), {attn, bias},
                    [G, blk, heads](Node<T>& self) {
                      const T* g0 = self.grad.data();
                      if (self.inputs[0]->requires_grad) {
                        T* ga = self.inputs[0]->grad.data();
                        for (index_t i = 0; i < G * blk; ++i) ga[i] += g0[i];
                      }
                      if (self.inputs[1]->requires_grad) {
                        T* gb = self.inputs[1]->grad.data();
                        for (index_t g = 0; g < G; ++g) {
                          T* dst = gb + (g % heads) * blk;
                          const T* src = g0 + g * blk;
                          for (index_t i = 0; i < blk; ++i) dst[i] += src[i];
                        }
                      }
                    },
                    "add_relative_bias");
}

// attn: [B*nW*heads, w2, w2]; mask: [nW, w2, w2] additive constant (0 or -100).
template <typename T>
Var<T> add_window_mask(const Var<T>& attn, std::shared_ptr<const Tensor<T>> mask, index_t heads) {
  index_t nW = mask->dim(0), blk = mask->dim(1) * mask->dim(2);
  index_t G = attn->value.dim(0);
  CROSSSEG_CHECK(G % (nW * heads) == 0, "add_window_mask: shape mismatch");
  Tensor<T> out = attn->value;
  for (index_t g = 0; g < G; ++g) {
    index_t nw = (g / heads) % nW;
    const T* src = mask->data() + nw * blk;
    T* dst = out.data() + g * blk;
    for (index_t i = 0; i < blk; ++i) dst[i] += src[i];
  }
  return make_op<T>(std::move(out), {attn},
                    [](Node<T>& self) {
                      const T* g0 = self.grad.data();
                      T* ga = self.inputs[0]->grad.data();
                      for (index_t i = 0; i < self.grad.numel(); ++i) ga[i] += g0[i];
                    },
                    "add_window_mask");
}

template <typename T>
struct SwinBlockParams {
  Var<T> ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, po_w, po_b;
  Var<T> ln2_g, ln2_b, m1_w, m1_b, m2_w, m2_b;
  Var<T> bias_table;  // [(2w-1)^2, heads]

  void init(Network<T>& net, const std::string& p, index_t dim, index_t heads, index_t window, Rng& rng) {
    auto lin = [&](const std::string& n, index_t out, index_t in) {
      return net.add_param(p + n, init::normal<T>(rng, {out, in}, 0.02));
    };
    auto vec = [&](const std::string& n, index_t len, T v = T(0)) {
      return net.add_param(p + n, Tensor<T>::full({len}, v));
    };
    ln1_g = vec(".ln1_g", dim, T(1));
    ln1_b = vec(".ln1_b", dim);
    wq = lin(".wq", dim, dim);
    bq = vec(".bq", dim);
    wk = lin(".wk", dim, dim);
    bk = vec(".bk", dim);
    wv = lin(".wv", dim, dim);
    bv = vec(".bv", dim);
    po_w = lin(".po_w", dim, dim);
    po_b = vec(".po_b", dim);
    ln2_g = vec(".ln2_g", dim, T(1));
    ln2_b = vec(".ln2_b", dim);
    m1_w = lin(".m1_w", dim * 4, dim);
    m1_b = vec(".m1_b", dim * 4);
    m2_w = lin(".m2_w", dim, dim * 4);
    m2_b = vec(".m2_b", dim);
    index_t span = 2 * window - 1;
    bias_table = net.add_param(p + ".rel_bias", init::normal<T>(rng, {span * span, heads}, 0.02));
  }
};

}  // namespace detail

// Encoder-decoder transformer over 4x4 patches: shifted-window attention with
// relative position bias, patch-merging downsampling, patch-expanding
// upsampling, skip connections, and a x4 final expansion back to pixels. The
// final encoder stage (after its layer norm) feeds the projection head.
template <typename T>
class SwinUnet : public Network<T> {
 public:
  static constexpr index_t kPatch = 4;

  explicit SwinUnet(NetworkConfig cfg) : Network<T>(std::move(cfg)) {
    CROSSSEG_CHECK(this->cfg_.kind == NetworkKind::kWindowedTransformerUnet, "SwinUnet: wrong config kind");
    Rng rng(this->cfg_.seed);
    index_t C = this->cfg_.embed_dim;
    index_t S = static_cast<index_t>(this->cfg_.depths.size());
    index_t w = this->cfg_.window_size;

    embed_w_ = this->add_param("embed.w",
                               init::normal<T>(rng, {C, this->cfg_.in_channels, kPatch, kPatch}, 0.02));
    embed_b_ = this->add_param("embed.b", Tensor<T>({C}));
    embed_ln_g_ = this->add_param("embed.ln_g", Tensor<T>::full({C}, T(1)));
    embed_ln_b_ = this->add_param("embed.ln_b", Tensor<T>({C}));

    enc_blocks_.resize(static_cast<std::size_t>(S));
    for (index_t s = 0; s < S; ++s) {
      index_t dim = C << s;
      index_t heads = this->cfg_.num_heads[static_cast<std::size_t>(s)];
      for (index_t d = 0; d < this->cfg_.depths[static_cast<std::size_t>(s)]; ++d) {
        enc_blocks_[static_cast<std::size_t>(s)].emplace_back();
        enc_blocks_[static_cast<std::size_t>(s)].back().init(
            *this, "enc" + std::to_string(s) + ".blk" + std::to_string(d), dim, heads, w, rng);
      }
      if (s + 1 < S) {
        merge_ln_g_.push_back(this->add_param("merge" + std::to_string(s) + ".ln_g",
                                              Tensor<T>::full({4 * dim}, T(1))));
        merge_ln_b_.push_back(this->add_param("merge" + std::to_string(s) + ".ln_b", Tensor<T>({4 * dim})));
        merge_w_.push_back(this->add_param("merge" + std::to_string(s) + ".w",
                                           init::normal<T>(rng, {2 * dim, 4 * dim}, 0.02)));
        merge_b_.push_back(this->add_param("merge" + std::to_string(s) + ".b", Tensor<T>({2 * dim})));
      }
    }
    index_t Cb = C << (S - 1);
    enc_ln_g_ = this->add_param("enc_norm.ln_g", Tensor<T>::full({Cb}, T(1)));
    enc_ln_b_ = this->add_param("enc_norm.ln_b", Tensor<T>({Cb}));

    dec_blocks_.resize(static_cast<std::size_t>(S > 0 ? S - 1 : 0));
    for (index_t s = S - 2; s >= 0; --s) {
      index_t dim = C << s;
      auto pfx = "dec" + std::to_string(s);
      // expand: dim*2 -> dim tokens on a doubled grid
      expand_w_.insert(expand_w_.begin(),
                       this->add_param(pfx + ".expand_w", init::normal<T>(rng, {4 * dim, 2 * dim}, 0.02)));
      expand_b_.insert(expand_b_.begin(), this->add_param(pfx + ".expand_b", Tensor<T>({4 * dim})));
      expand_ln_g_.insert(expand_ln_g_.begin(),
                          this->add_param(pfx + ".expand_ln_g", Tensor<T>::full({dim}, T(1))));
      expand_ln_b_.insert(expand_ln_b_.begin(), this->add_param(pfx + ".expand_ln_b", Tensor<T>({dim})));
      reduce_w_.insert(reduce_w_.begin(),
                       this->add_param(pfx + ".reduce_w", init::normal<T>(rng, {dim, 2 * dim}, 0.02)));
      reduce_b_.insert(reduce_b_.begin(), this->add_param(pfx + ".reduce_b", Tensor<T>({dim})));
      index_t heads = this->cfg_.num_heads[static_cast<std::size_t>(s)];
      for (index_t d = 0; d < this->cfg_.depths[static_cast<std::size_t>(s)]; ++d) {
        dec_blocks_[static_cast<std::size_t>(s)].emplace_back();
        dec_blocks_[static_cast<std::size_t>(s)].back().init(*this, pfx + ".blk" + std::to_string(d), dim,
                                                             heads, w, rng);
      }
    }

    final_w_ = this->add_param("final.expand_w", init::normal<T>(rng, {kPatch * kPatch * C, C}, 0.02));
    final_b_ = this->add_param("final.expand_b", Tensor<T>({kPatch * kPatch * C}));
    final_ln_g_ = this->add_param("final.ln_g", Tensor<T>::full({C}, T(1)));
    final_ln_b_ = this->add_param("final.ln_b", Tensor<T>({C}));
    head_w_ = this->add_param("head.w", init::normal<T>(rng, {this->cfg_.num_classes, C}, 0.02));
    head_b_ = this->add_param("head.b", Tensor<T>({this->cfg_.num_classes}));

    proj_.init(*this, "proj", Cb, this->cfg_.projection_dim, rng);

    // relative position index (i,j) -> bias table row, shared by every block
    index_t w2 = w * w;
    auto rel = std::make_shared<std::vector<index_t>>();
    rel->reserve(static_cast<std::size_t>(w2 * w2));
    for (index_t i = 0; i < w2; ++i)
      for (index_t j = 0; j < w2; ++j) {
        index_t dy = i / w - j / w + w - 1;
        index_t dx = i % w - j % w + w - 1;
        rel->push_back(dy * (2 * w - 1) + dx);
      }
    rel_index_ = rel;
  }

  ForwardResult<T> forward(const Tensor<T>& images, bool with_representation) override {
    this->check_input(images);
    index_t B = images.dim(0), H = images.dim(2), W = images.dim(3);
    index_t S = static_cast<index_t>(this->cfg_.depths.size());
    index_t w = this->cfg_.window_size;
    CROSSSEG_CHECK(H % kPatch == 0 && W % kPatch == 0,
                   "windowed_transformer_unet: input " << H << "x" << W << " must be divisible by " << kPatch);
    for (index_t s = 0; s < S; ++s) {
      index_t Hs = (H / kPatch) >> s, Ws = (W / kPatch) >> s;
      CROSSSEG_CHECK(Hs > 0 && Ws > 0 && Hs % w == 0 && Ws % w == 0,
                     "windowed_transformer_unet: stage " << s << " token grid " << Hs << "x" << Ws
                                                         << " is not a multiple of window " << w
                                                         << " (input " << H << "x" << W << ")");
      if (s + 1 < S)
        CROSSSEG_CHECK(Hs % 2 == 0 && Ws % 2 == 0, "windowed_transformer_unet: stage " << s
                                                                                       << " token grid "
                                                                                       << Hs << "x" << Ws
                                                                                       << " cannot be halved");
    }

    // patch embedding -> tokens [B, L, C]
    auto x = conv2d(make_constant(images), embed_w_, embed_b_, kPatch, 0);
    index_t H0 = H / kPatch, W0 = W / kPatch;
    x = reshape(permute(x, {0, 2, 3, 1}), {B, H0 * W0, this->cfg_.embed_dim});
    x = layer_norm(x, embed_ln_g_, embed_ln_b_);

    std::vector<Var<T>> skips;
    for (index_t s = 0; s < S; ++s) {
      index_t Hs = H0 >> s, Ws = W0 >> s;
      index_t heads = this->cfg_.num_heads[static_cast<std::size_t>(s)];
      auto& blocks = enc_blocks_[static_cast<std::size_t>(s)];
      const GridMaps& maps = grid_maps(B, Hs, Ws);
      for (std::size_t d = 0; d < blocks.size(); ++d)
        x = block_forward(blocks[d], x, B, Hs, Ws, heads, maps, d % 2 == 1);
      if (s + 1 < S) {
        skips.push_back(x);
        x = merge(x, s, B, Hs, Ws);
      }
    }
    auto bottom = layer_norm(x, enc_ln_g_, enc_ln_b_);

    x = bottom;
    for (index_t s = S - 2; s >= 0; --s) {
      index_t Hs = H0 >> s, Ws = W0 >> s;  // grid after expansion
      x = expand2x(x, s, B, Hs / 2, Ws / 2);
      x = linear(concat<T>({x, skips[static_cast<std::size_t>(s)]}, 2), reduce_w_[static_cast<std::size_t>(s)],
                 reduce_b_[static_cast<std::size_t>(s)]);
      index_t heads = this->cfg_.num_heads[static_cast<std::size_t>(s)];
      auto& blocks = dec_blocks_[static_cast<std::size_t>(s)];
      const GridMaps& maps = grid_maps(B, Hs, Ws);
      for (std::size_t d = 0; d < blocks.size(); ++d)
        x = block_forward(blocks[d], x, B, Hs, Ws, heads, maps, d % 2 == 1);
    }

    // x4 expansion back to pixel resolution, then per-pixel head
    x = final_expand(x, B, H0, W0);
    x = layer_norm(x, final_ln_g_, final_ln_b_);
    auto logits = linear(x, head_w_, head_b_);  // [B, H, W, 3] flattened as [B, H*W, 3]
    logits = permute(reshape(logits, {B, H, W, this->cfg_.num_classes}), {0, 3, 1, 2});

    ForwardResult<T> out;
    out.logits = logits;
    if (with_representation) {
      index_t Lb = (H0 >> (S - 1)) * (W0 >> (S - 1));
      index_t Cb = this->cfg_.embed_dim << (S - 1);
      auto pooled = global_avg_pool(reshape(permute(bottom, {0, 2, 1}), {B, Cb, Lb, 1}));
      out.representation = proj_(pooled);
    }
    this->check_outputs(out);
    return out;
  }

 private:
  struct GridMaps {
    std::shared_ptr<const std::vector<index_t>> part, rev, part_shift, rev_shift;
    std::shared_ptr<const Tensor<T>> mask;  // [nW, w2, w2], set when shift > 0
    index_t shift = 0;
    index_t nW = 0;
  };

  const GridMaps& grid_maps(index_t B, index_t Hs, index_t Ws) {
    auto key = std::make_tuple(B, Hs, Ws);
    auto it = maps_cache_.find(key);
    if (it != maps_cache_.end()) return it->second;

    index_t w = this->cfg_.window_size, w2 = w * w;
    GridMaps m;
    m.shift = (Hs == w && Ws == w) ? 0 : w / 2;
    index_t nWh = Hs / w, nWw = Ws / w;
    m.nW = nWh * nWw;

    auto build_part = [&](index_t shift) {
      auto v = std::make_shared<std::vector<index_t>>(static_cast<std::size_t>(B * m.nW * w2));
      for (index_t b = 0; b < B; ++b)
        for (index_t wy = 0; wy < nWh; ++wy)
          for (index_t wx = 0; wx < nWw; ++wx)
            for (index_t iy = 0; iy < w; ++iy)
              for (index_t ix = 0; ix < w; ++ix) {
                index_t h = (wy * w + iy + shift) % Hs, c = (wx * w + ix + shift) % Ws;
                (*v)[static_cast<std::size_t>(((b * m.nW + wy * nWw + wx) * w2) + iy * w + ix)] =
                    (b * Hs + h) * Ws + c;
              }
      return v;
    };
    auto build_rev = [&](index_t shift) {
      auto v = std::make_shared<std::vector<index_t>>(static_cast<std::size_t>(B * Hs * Ws));
      for (index_t b = 0; b < B; ++b)
        for (index_t h = 0; h < Hs; ++h)
          for (index_t c = 0; c < Ws; ++c) {
            index_t a = (h - shift + Hs) % Hs, d = (c - shift + Ws) % Ws;
            (*v)[static_cast<std::size_t>((b * Hs + h) * Ws + c)] =
                (b * m.nW + (a / w) * nWw + (d / w)) * w2 + (a % w) * w + (d % w);
          }
      return v;
    };
    m.part = build_part(0);
    m.rev = build_rev(0);
    if (m.shift > 0) {
      m.part_shift = build_part(m.shift);
      m.rev_shift = build_rev(m.shift);

      // region ids; tokens from different regions must not attend across the wrap
      std::vector<int> id(static_cast<std::size_t>(Hs * Ws));
      auto region = [&](index_t v, index_t n) {
        if (v < n - w) return 0;
        if (v < n - m.shift) return 1;
        return 2;
      };
      for (index_t h = 0; h < Hs; ++h)
        for (index_t c = 0; c < Ws; ++c)
          id[static_cast<std::size_t>(h * Ws + c)] = 3 * region(h, Hs) + region(c, Ws);
      auto mask = std::make_shared<Tensor<T>>(Shape{m.nW, w2, w2});
      for (index_t wy = 0; wy < nWh; ++wy)
        for (index_t wx = 0; wx < nWw; ++wx) {
          std::vector<int> wid(static_cast<std::size_t>(w2));
          for (index_t iy = 0; iy < w; ++iy)
            for (index_t ix = 0; ix < w; ++ix) {
              index_t h = (wy * w + iy + m.shift) % Hs, c = (wx * w + ix + m.shift) % Ws;
              wid[static_cast<std::size_t>(iy * w + ix)] = id[static_cast<std::size_t>(h * Ws + c)];
            }
          index_t nw = wy * nWw + wx;
          for (index_t i = 0; i < w2; ++i)
            for (index_t j = 0; j < w2; ++j)
              mask->at(nw, i, j) = wid[static_cast<std::size_t>(i)] == wid[static_cast<std::size_t>(j)]
                                       ? T(0)
                                       : T(-100);
        }
      m.mask = mask;
    }
    return maps_cache_.emplace(key, std::move(m)).first->second;
  }

  Var<T> block_forward(const detail::SwinBlockParams<T>& p, const Var<T>& input, index_t B, index_t Hs,
                       index_t Ws, index_t heads, const GridMaps& maps, bool shifted) {
    index_t w = this->cfg_.window_size, w2 = w * w;
    index_t C = input->value.shape().back();
    index_t hd = C / heads;
    index_t nW = maps.nW;
    bool use_shift = shifted && maps.shift > 0;

    auto x = layer_norm(input, p.ln1_g, p.ln1_b);
    auto xw = gather_rows(x, use_shift ? maps.part_shift : maps.part, {B * nW, w2, C});
    auto split_heads = [&](const Var<T>& t) {
      return reshape(permute(reshape(t, {B * nW, w2, heads, hd}), {0, 2, 1, 3}), {B * nW * heads, w2, hd});
    };
    auto q = split_heads(linear(xw, p.wq, p.bq));
    auto k = split_heads(linear(xw, p.wk, p.bk));
    auto v = split_heads(linear(xw, p.wv, p.bv));

    auto attn = bmm_nt(scale(q, static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd)))), k);
    auto bias = permute(reshape(gather_rows(p.bias_table, rel_index_, {w2 * w2, heads}), {w2, w2, heads}),
                        {2, 0, 1});
    attn = detail::add_relative_bias(attn, bias, heads);
    if (use_shift) attn = detail::add_window_mask(attn, maps.mask, heads);
    attn = softmax_lastdim(attn);

    auto o = bmm(attn, v);
    o = reshape(permute(reshape(o, {B * nW, heads, w2, hd}), {0, 2, 1, 3}), {B * nW, w2, C});
    o = linear(o, p.po_w, p.po_b);
    o = gather_rows(o, use_shift ? maps.rev_shift : maps.rev, {B, Hs * Ws, C});

    auto res = add(input, o);
    auto y = linear(gelu(linear(layer_norm(res, p.ln2_g, p.ln2_b), p.m1_w, p.m1_b)), p.m2_w, p.m2_b);
    return add(res, y);
  }

  // [B, Hs*Ws, C] -> [B, (Hs/2)*(Ws/2), 2C]
  Var<T> merge(const Var<T>& x, index_t s, index_t B, index_t Hs, index_t Ws) {
    index_t H2 = Hs / 2, W2 = Ws / 2, C = x->value.shape().back();
    std::vector<Var<T>> quads;
    for (index_t dy = 0; dy < 2; ++dy)
      for (index_t dx = 0; dx < 2; ++dx) {
        auto idx = std::make_shared<std::vector<index_t>>(static_cast<std::size_t>(B * H2 * W2));
        for (index_t b = 0; b < B; ++b)
          for (index_t h = 0; h < H2; ++h)
            for (index_t c = 0; c < W2; ++c)
              (*idx)[static_cast<std::size_t>((b * H2 + h) * W2 + c)] =
                  (b * Hs + 2 * h + dy) * Ws + 2 * c + dx;
        quads.push_back(gather_rows(x, idx, {B, H2 * W2, C}));
      }
    auto cat = concat<T>(quads, 2);
    cat = layer_norm(cat, merge_ln_g_[static_cast<std::size_t>(s)], merge_ln_b_[static_cast<std::size_t>(s)]);
    return linear(cat, merge_w_[static_cast<std::size_t>(s)], merge_b_[static_cast<std::size_t>(s)]);
  }

  // [B, Hs*Ws, 2C] -> [B, (2Hs)*(2Ws), C] for decoder stage s (C = embed_dim << s)
  Var<T> expand2x(const Var<T>& x, index_t s, index_t B, index_t Hs, index_t Ws) {
    index_t Cin = x->value.shape().back();
    index_t C = Cin / 2;
    auto e = linear(x, expand_w_[static_cast<std::size_t>(s)], expand_b_[static_cast<std::size_t>(s)]);
    auto out = rearrange_expand(e, B, Hs, Ws, 2, C);
    return layer_norm(out, expand_ln_g_[static_cast<std::size_t>(s)],
                      expand_ln_b_[static_cast<std::size_t>(s)]);
  }

  Var<T> final_expand(const Var<T>& x, index_t B, index_t Hs, index_t Ws) {
    auto e = linear(x, final_w_, final_b_);
    return rearrange_expand(e, B, Hs, Ws, kPatch, this->cfg_.embed_dim);
  }

  // e: [B, Hs*Ws, F*F*C] viewed as F*F chunks of length C per token; scatter the
  // chunks onto an FHs x FWs grid so chunk (dy,dx) of token (h,w) lands at (F*h+dy, F*w+dx).
  Var<T> rearrange_expand(const Var<T>& e, index_t B, index_t Hs, index_t Ws, index_t F, index_t C) {
    auto er = reshape(e, {B * Hs * Ws * F * F, C});
    auto idx = std::make_shared<std::vector<index_t>>(static_cast<std::size_t>(B * Hs * Ws * F * F));
    for (index_t b = 0; b < B; ++b)
      for (index_t h = 0; h < Hs * F; ++h)
        for (index_t c = 0; c < Ws * F; ++c)
          (*idx)[static_cast<std::size_t>((b * Hs * F + h) * Ws * F + c)] =
              ((b * Hs + h / F) * Ws + c / F) * F * F + (h % F) * F + c % F;
    return gather_rows(er, idx, {B, Hs * F * Ws * F, C});
  }

  Var<T> embed_w_, embed_b_, embed_ln_g_, embed_ln_b_;
  std::vector<std::vector<detail::SwinBlockParams<T>>> enc_blocks_;
  std::vector<Var<T>> merge_ln_g_, merge_ln_b_, merge_w_, merge_b_;
  Var<T> enc_ln_g_, enc_ln_b_;
  std::vector<Var<T>> expand_w_, expand_b_, expand_ln_g_, expand_ln_b_, reduce_w_, reduce_b_;
  std::vector<std::vector<detail::SwinBlockParams<T>>> dec_blocks_;
  Var<T> final_w_, final_b_, final_ln_g_, final_ln_b_, head_w_, head_b_;
  ProjectionHead<T> proj_;

  std::shared_ptr<const std::vector<index_t>> rel_index_;
  std::map<std::tuple<index_t, index_t, index_t>, GridMaps> maps_cache_;
};

}  // namespace crossseg
