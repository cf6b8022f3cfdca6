#pragma once

#include <memory>

#include "crossseg/ops_core.hpp"

namespace crossseg {

namespace detail {

// cols is [Cin*kh*kw, Hout*Wout] for one image.
template <typename T>
void im2col(const T* img, index_t C, index_t H, index_t W, index_t kh, index_t kw, index_t stride,
            index_t pad, index_t Hout, index_t Wout, T* cols) {
  for (index_t c = 0; c < C; ++c) {
    for (index_t di = 0; di < kh; ++di) {
      for (index_t dj = 0; dj < kw; ++dj) {
        T* row = cols + ((c * kh + di) * kw + dj) * (Hout * Wout);
        for (index_t oy = 0; oy < Hout; ++oy) {
          index_t iy = oy * stride - pad + di;
          T* dst = row + oy * Wout;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + Wout, T(0));
            continue;
          }
          const T* src = img + (c * H + iy) * W;
          for (index_t ox = 0; ox < Wout; ++ox) {
            index_t ix = ox * stride - pad + dj;
            dst[ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, index_t C, index_t H, index_t W, index_t kh, index_t kw,
                index_t stride, index_t pad, index_t Hout, index_t Wout, T* img) {
  for (index_t c = 0; c < C; ++c) {
    for (index_t di = 0; di < kh; ++di) {
      for (index_t dj = 0; dj < kw; ++dj) {
        const T* row = cols + ((c * kh + di) * kw + dj) * (Hout * Wout);
        for (index_t oy = 0; oy < Hout; ++oy) {
          index_t iy = oy * stride - pad + di;
          if (iy < 0 || iy >= H) continue;
          T* dst = img + (c * H + iy) * W;
          const T* src = row + oy * Wout;
          for (index_t ox = 0; ox < Wout; ++ox) {
            index_t ix = ox * stride - pad + dj;
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

// conv2d on [B,Cin,H,W] with weight [Cout,Cin,kh,kw], optional bias [Cout].
// im2col + GEMM per image; im2col is recomputed in the backward pass instead
// of being cached, trading FLOPs for activation memory.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, index_t stride = 1,
              index_t pad = 0) {
  CROSSSEG_CHECK(x->value.ndim() == 4 && w->value.ndim() == 4, "conv2d: expected 4-d input and weight");
  index_t B = x->value.dim(0), Cin = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  index_t Cout = w->value.dim(0), kh = w->value.dim(2), kw = w->value.dim(3);
  CROSSSEG_CHECK(w->value.dim(1) == Cin, "conv2d: channel mismatch");
  index_t Hout = (H + 2 * pad - kh) / stride + 1;
  index_t Wout = (W + 2 * pad - kw) / stride + 1;
  CROSSSEG_CHECK(Hout > 0 && Wout > 0, "conv2d: output would be empty for input " << H << "x" << W);

  index_t K = Cin * kh * kw, P = Hout * Wout;
  Tensor<T> out({B, Cout, Hout, Wout});
  std::vector<T> cols(static_cast<std::size_t>(K * P));
  for (index_t b = 0; b < B; ++b) {
    detail::im2col(x->value.data() + b * Cin * H * W, Cin, H, W, kh, kw, stride, pad, Hout, Wout,
                   cols.data());
    MatMap<T>(out.data() + b * Cout * P, Cout, P).noalias() =
        ConstMatMap<T>(w->value.data(), Cout, K) * ConstMatMap<T>(cols.data(), K, P);
  }
  if (bias) {
    for (index_t b = 0; b < B; ++b)
      for (index_t c = 0; c < Cout; ++c) {
        T* o = out.data() + (b * Cout + c) * P;
        T bv = bias->value[c];
        for (index_t i = 0; i < P; ++i) o[i] += bv;
      }
  }
  std::vector<Var<T>> inputs = {x, w};
  if (bias) inputs.push_back(bias);
  return make_op<T>(
      std::move(out), std::move(inputs),
      [B, Cin, H, W, Cout, kh, kw, stride, pad, Hout, Wout, K, P](Node<T>& self) {
        std::vector<T> cols(static_cast<std::size_t>(K * P));
        std::vector<T> dcols(static_cast<std::size_t>(K * P));
        auto& xin = self.inputs[0];
        auto& win = self.inputs[1];
        for (index_t b = 0; b < B; ++b) {
          ConstMatMap<T> g(self.grad.data() + b * Cout * P, Cout, P);
          if (win->requires_grad || xin->requires_grad) {
            if (win->requires_grad) {
              detail::im2col(xin->value.data() + b * Cin * H * W, Cin, H, W, kh, kw, stride, pad,
                             Hout, Wout, cols.data());
              MatMap<T>(win->grad.data(), Cout, K).noalias() +=
                  g * ConstMatMap<T>(cols.data(), K, P).transpose();
            }
            if (xin->requires_grad) {
              MatMap<T>(dcols.data(), K, P).noalias() =
                  ConstMatMap<T>(win->value.data(), Cout, K).transpose() * g;
              detail::col2im_add(dcols.data(), Cin, H, W, kh, kw, stride, pad, Hout, Wout,
                                 xin->grad.data() + b * Cin * H * W);
            }
          }
        }
        if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
          T* gb = self.inputs[2]->grad.data();
          const T* g = self.grad.data();
          for (index_t b = 0; b < B; ++b)
            for (index_t c = 0; c < Cout; ++c) {
              double acc = 0.0;
              const T* gr = g + (b * Cout + c) * P;
              for (index_t i = 0; i < P; ++i) acc += gr[i];
              gb[c] += static_cast<T>(acc);
            }
        }
      },
      "conv2d");
}

// Transposed conv with kernel 2, stride 2 (the U-Net upsampler). Since
// stride == kernel size every output pixel receives exactly one term, so
// forward is a GEMM plus a disjoint scatter. Weight layout [Cin,Cout,2,2].
template <typename T>
Var<T> conv_transpose2x2(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
  CROSSSEG_CHECK(x->value.ndim() == 4 && w->value.ndim() == 4 && w->value.dim(2) == 2 &&
                     w->value.dim(3) == 2,
                 "conv_transpose2x2: expected [B,Cin,H,W] and [Cin,Cout,2,2]");
  index_t B = x->value.dim(0), Cin = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  CROSSSEG_CHECK(w->value.dim(0) == Cin, "conv_transpose2x2: channel mismatch");
  index_t Cout = w->value.dim(1);
  index_t Ho = 2 * H, Wo = 2 * W, P = H * W;

  Tensor<T> out({B, Cout, Ho, Wo});
  std::vector<T> prod(static_cast<std::size_t>(Cout * 4 * P));
  for (index_t b = 0; b < B; ++b) {
    // prod[(co*4 + di*2 + dj), i*W + j] = sum_ci w[ci,co,di,dj] * x[ci,i,j]
    MatMap<T>(prod.data(), Cout * 4, P).noalias() =
        ConstMatMap<T>(w->value.data(), Cin, Cout * 4).transpose() *
        ConstMatMap<T>(x->value.data() + b * Cin * P, Cin, P);
    for (index_t co = 0; co < Cout; ++co) {
      T bv = bias ? bias->value[co] : T(0);
      for (index_t di = 0; di < 2; ++di)
        for (index_t dj = 0; dj < 2; ++dj) {
          const T* src = prod.data() + ((co * 2 + di) * 2 + dj) * P;
          T* dst = out.data() + ((b * Cout + co) * Ho + di) * Wo + dj;
          for (index_t i = 0; i < H; ++i)
            for (index_t j = 0; j < W; ++j) dst[(i * 2) * Wo + j * 2] = src[i * W + j] + bv;
        }
    }
  }
  std::vector<Var<T>> inputs = {x, w};
  if (bias) inputs.push_back(bias);
  return make_op<T>(
      std::move(out), std::move(inputs),
      [B, Cin, Cout, H, W, Ho, Wo, P](Node<T>& self) {
        std::vector<T> dprod(static_cast<std::size_t>(Cout * 4 * P));
        auto& xin = self.inputs[0];
        auto& win = self.inputs[1];
        for (index_t b = 0; b < B; ++b) {
          for (index_t co = 0; co < Cout; ++co)
            for (index_t di = 0; di < 2; ++di)
              for (index_t dj = 0; dj < 2; ++dj) {
                T* dst = dprod.data() + ((co * 2 + di) * 2 + dj) * P;
                const T* src = self.grad.data() + ((b * Cout + co) * Ho + di) * Wo + dj;
                for (index_t i = 0; i < H; ++i)
                  for (index_t j = 0; j < W; ++j) dst[i * W + j] = src[(i * 2) * Wo + j * 2];
              }
          if (xin->requires_grad)
            MatMap<T>(xin->grad.data() + b * Cin * P, Cin, P).noalias() +=
                ConstMatMap<T>(win->value.data(), Cin, Cout * 4) *
                ConstMatMap<T>(dprod.data(), Cout * 4, P);
          if (win->requires_grad)
            MatMap<T>(win->grad.data(), Cin, Cout * 4).noalias() +=
                ConstMatMap<T>(xin->value.data() + b * Cin * P, Cin, P) *
                ConstMatMap<T>(dprod.data(), Cout * 4, P).transpose();
        }
        if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
          T* gb = self.inputs[2]->grad.data();
          const T* g = self.grad.data();
          for (index_t b = 0; b < B; ++b)
            for (index_t co = 0; co < Cout; ++co) {
              double acc = 0.0;
              const T* gr = g + (b * Cout + co) * Ho * Wo;
              for (index_t i = 0; i < Ho * Wo; ++i) acc += gr[i];
              gb[co] += static_cast<T>(acc);
            }
        }
      },
      "conv_transpose2x2");
}

// 2x2 max pooling, stride 2. Ties resolve to the first element in scan order.
template <typename T>
Var<T> maxpool2x2(const Var<T>& x) {
  CROSSSEG_CHECK(x->value.ndim() == 4, "maxpool2x2: expected [B,C,H,W]");
  index_t B = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  CROSSSEG_CHECK(H % 2 == 0 && W % 2 == 0, "maxpool2x2: odd spatial size " << H << "x" << W);
  index_t Ho = H / 2, Wo = W / 2;
  Tensor<T> out({B, C, Ho, Wo});
  auto argmax = std::make_shared<std::vector<index_t>>(static_cast<std::size_t>(out.numel()));
  const T* px = x->value.data();
  T* po = out.data();
  index_t o = 0;
  for (index_t bc = 0; bc < B * C; ++bc) {
    const T* plane = px + bc * H * W;
    for (index_t i = 0; i < Ho; ++i)
      for (index_t j = 0; j < Wo; ++j, ++o) {
        index_t base = (2 * i) * W + 2 * j;
        index_t best = base;
        T bv = plane[base];
        const index_t cand[3] = {base + 1, base + W, base + W + 1};
        for (index_t k = 0; k < 3; ++k)
          if (plane[cand[k]] > bv) {
            bv = plane[cand[k]];
            best = cand[k];
          }
        po[o] = bv;
        (*argmax)[static_cast<std::size_t>(o)] = bc * H * W + best;
      }
  }
  return make_op<T>(std::move(out), {x},
                    [argmax](Node<T>& self) {
                      T* gi = self.inputs[0]->grad.data();
                      const T* g = self.grad.data();
                      for (index_t i = 0; i < self.grad.numel(); ++i)
                        gi[(*argmax)[static_cast<std::size_t>(i)]] += g[i];
                    },
                    "maxpool2x2");
}

// [B,C,H,W] -> [B,C] spatial mean.
template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  CROSSSEG_CHECK(x->value.ndim() == 4, "global_avg_pool: expected [B,C,H,W]");
  index_t B = x->value.dim(0), C = x->value.dim(1), HW = x->value.dim(2) * x->value.dim(3);
  Tensor<T> out({B, C});
  const T* px = x->value.data();
  for (index_t bc = 0; bc < B * C; ++bc) {
    double acc = 0.0;
    const T* p = px + bc * HW;
    for (index_t i = 0; i < HW; ++i) acc += p[i];
    out[bc] = static_cast<T>(acc / HW);
  }
  return make_op<T>(std::move(out), {x},
                    [HW](Node<T>& self) {
                      T* gi = self.inputs[0]->grad.data();
                      const T* g = self.grad.data();
                      for (index_t bc = 0; bc < self.grad.numel(); ++bc) {
                        T gv = g[bc] / static_cast<T>(HW);
                        T* gd = gi + bc * HW;
                        for (index_t i = 0; i < HW; ++i) gd[i] += gv;
                      }
                    },
                    "global_avg_pool");
}

}  // namespace crossseg
