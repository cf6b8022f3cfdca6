#pragma once

#include <Eigen/Core>
#include <cmath>

#include "crossseg/graph.hpp"

namespace crossseg {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<MatRM<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const MatRM<T>>;

template <typename T>
MatMap<T> as_matrix(Tensor<T>& t, index_t rows, index_t cols) {
  return MatMap<T>(t.data(), rows, cols);
}
template <typename T>
ConstMatMap<T> as_matrix(const Tensor<T>& t, index_t rows, index_t cols) {
  return ConstMatMap<T>(t.data(), rows, cols);
}

// ---- elementwise ----

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  CROSSSEG_CHECK(a->value.same_shape(b->value), "add: shape mismatch " << shape_str(a->value.shape())
                                                                       << " vs " << shape_str(b->value.shape()));
  Tensor<T> out = a->value;
  const T* pb = b->value.data();
  T* po = out.data();
  for (index_t i = 0; i < out.numel(); ++i) po[i] += pb[i];
  return make_op<T>(std::move(out), {a, b},
                    [](Node<T>& self) {
                      const T* g = self.grad.data();
                      for (int k = 0; k < 2; ++k) {
                        auto& in = self.inputs[k];
                        if (!in->requires_grad) continue;
                        T* gi = in->grad.data();
                        for (index_t i = 0; i < self.grad.numel(); ++i) gi[i] += g[i];
                      }
                    },
                    "add");
}

// a + alpha * b
template <typename T>
Var<T> add_scaled(const Var<T>& a, const Var<T>& b, T alpha) {
  CROSSSEG_CHECK(a->value.same_shape(b->value), "add_scaled: shape mismatch");
  Tensor<T> out = a->value;
  const T* pb = b->value.data();
  T* po = out.data();
  for (index_t i = 0; i < out.numel(); ++i) po[i] += alpha * pb[i];
  return make_op<T>(std::move(out), {a, b},
                    [alpha](Node<T>& self) {
                      const T* g = self.grad.data();
                      if (self.inputs[0]->requires_grad) {
                        T* ga = self.inputs[0]->grad.data();
                        for (index_t i = 0; i < self.grad.numel(); ++i) ga[i] += g[i];
                      }
                      if (self.inputs[1]->requires_grad) {
                        T* gb = self.inputs[1]->grad.data();
                        for (index_t i = 0; i < self.grad.numel(); ++i) gb[i] += alpha * g[i];
                      }
                    },
                    "add_scaled");
}

template <typename T>
Var<T> scale(const Var<T>& a, T c) {
  Tensor<T> out = a->value;
  for (index_t i = 0; i < out.numel(); ++i) out[i] *= c;
  return make_op<T>(std::move(out), {a},
                    [c](Node<T>& self) {
                      T* gi = self.inputs[0]->grad.data();
                      const T* g = self.grad.data();
                      for (index_t i = 0; i < self.grad.numel(); ++i) gi[i] += c * g[i];
                    },
                    "scale");
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  CROSSSEG_CHECK(a->value.same_shape(b->value), "mul: shape mismatch");
  Tensor<T> out = a->value;
  const T* pb = b->value.data();
  for (index_t i = 0; i < out.numel(); ++i) out[i] *= pb[i];
  return make_op<T>(std::move(out), {a, b},
                    [](Node<T>& self) {
                      const T* g = self.grad.data();
                      const T* va = self.inputs[0]->value.data();
                      const T* vb = self.inputs[1]->value.data();
                      if (self.inputs[0]->requires_grad) {
                        T* ga = self.inputs[0]->grad.data();
                        for (index_t i = 0; i < self.grad.numel(); ++i) ga[i] += g[i] * vb[i];
                      }
                      if (self.inputs[1]->requires_grad) {
                        T* gb = self.inputs[1]->grad.data();
                        for (index_t i = 0; i < self.grad.numel(); ++i) gb[i] += g[i] * va[i];
                      }
                    },
                    "mul");
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Tensor<T> out = a->value;
  for (index_t i = 0; i < out.numel(); ++i) out[i] = out[i] > T(0) ? out[i] : T(0);
  return make_op<T>(std::move(out), {a},
                    [](Node<T>& self) {
                      const T* g = self.grad.data();
                      const T* v = self.inputs[0]->value.data();
                      T* gi = self.inputs[0]->grad.data();
                      for (index_t i = 0; i < self.grad.numel(); ++i)
                        if (v[i] > T(0)) gi[i] += g[i];
                    },
                    "relu");
}

// Exact erf form, smooth everywhere (kind to finite-difference checks).
template <typename T>
Var<T> gelu(const Var<T>& a) {
  constexpr double kInvSqrt2 = 0.7071067811865475244;
  constexpr double kInvSqrt2Pi = 0.3989422804014326779;
  Tensor<T> out = a->value;
  for (index_t i = 0; i < out.numel(); ++i) {
    double x = static_cast<double>(out[i]);
    out[i] = static_cast<T>(0.5 * x * (1.0 + std::erf(x * kInvSqrt2)));
  }
  return make_op<T>(std::move(out), {a},
                    [](Node<T>& self) {
                      const T* g = self.grad.data();
                      const T* v = self.inputs[0]->value.data();
                      T* gi = self.inputs[0]->grad.data();
                      for (index_t i = 0; i < self.grad.numel(); ++i) {
                        double x = static_cast<double>(v[i]);
                        double d = 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
                                   x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
                        gi[i] += g[i] * static_cast<T>(d);
                      }
                    },
                    "gelu");
}

// ---- reductions ----

template <typename T>
Var<T> sum_all(const Var<T>& a) {
  double acc = a->value.sum();
  return make_op<T>(Tensor<T>::scalar(static_cast<T>(acc)), {a},
                    [](Node<T>& self) {
                      T g = self.grad[0];
                      T* gi = self.inputs[0]->grad.data();
                      for (index_t i = 0; i < self.inputs[0]->value.numel(); ++i) gi[i] += g;
                    },
                    "sum_all");
}

template <typename T>
Var<T> mean_all(const Var<T>& a) {
  index_t n = a->value.numel();
  CROSSSEG_CHECK(n > 0, "mean_all: empty tensor");
  double acc = a->value.sum() / static_cast<double>(n);
  return make_op<T>(Tensor<T>::scalar(static_cast<T>(acc)), {a},
                    [n](Node<T>& self) {
                      T g = self.grad[0] / static_cast<T>(n);
                      T* gi = self.inputs[0]->grad.data();
                      for (index_t i = 0; i < n; ++i) gi[i] += g;
                    },
                    "mean_all");
}

// ---- dense linear algebra ----

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  CROSSSEG_CHECK(a->value.ndim() == 2 && b->value.ndim() == 2 && a->value.dim(1) == b->value.dim(0),
                 "matmul: bad shapes " << shape_str(a->value.shape()) << " x " << shape_str(b->value.shape()));
  index_t M = a->value.dim(0), K = a->value.dim(1), N = b->value.dim(1);
  Tensor<T> out({M, N});
  as_matrix(out, M, N).noalias() = as_matrix(a->value, M, K) * as_matrix(b->value, K, N);
  return make_op<T>(std::move(out), {a, b},
                    [M, K, N](Node<T>& self) {
                      auto g = as_matrix(self.grad, M, N);
                      auto va = as_matrix(self.inputs[0]->value, M, K);
                      auto vb = as_matrix(self.inputs[1]->value, K, N);
                      if (self.inputs[0]->requires_grad)
                        as_matrix(self.inputs[0]->grad, M, K).noalias() += g * vb.transpose();
                      if (self.inputs[1]->requires_grad)
                        as_matrix(self.inputs[1]->grad, K, N).noalias() += va.transpose() * g;
                    },
                    "matmul");
}

// a [M,K] x b[N,K]^T -> [M,N]; used for similarity matrices.
template <typename T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b) {
  CROSSSEG_CHECK(a->value.ndim() == 2 && b->value.ndim() == 2 && a->value.dim(1) == b->value.dim(1),
                 "matmul_nt: bad shapes");
  index_t M = a->value.dim(0), K = a->value.dim(1), N = b->value.dim(0);
  Tensor<T> out({M, N});
  as_matrix(out, M, N).noalias() = as_matrix(a->value, M, K) * as_matrix(b->value, N, K).transpose();
  return make_op<T>(std::move(out), {a, b},
                    [M, K, N](Node<T>& self) {
                      auto g = as_matrix(self.grad, M, N);
                      auto va = as_matrix(self.inputs[0]->value, M, K);
                      auto vb = as_matrix(self.inputs[1]->value, N, K);
                      if (self.inputs[0]->requires_grad)
                        as_matrix(self.inputs[0]->grad, M, K).noalias() += g * vb;
                      if (self.inputs[1]->requires_grad)
                        as_matrix(self.inputs[1]->grad, N, K).noalias() += g.transpose() * va;
                    },
                    "matmul_nt");
}

// y = x W^T + bias, weight stored [out_features, in_features].
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
  index_t in_features = w->value.dim(1), out_features = w->value.dim(0);
  index_t n = x->value.numel();
  CROSSSEG_CHECK(n % in_features == 0 && x->value.shape().back() == in_features,
                 "linear: input last dim " << x->value.shape().back() << " != " << in_features);
  index_t M = n / in_features;
  Shape out_shape = x->value.shape();
  out_shape.back() = out_features;
  Tensor<T> out(out_shape);
  auto ym = as_matrix(out, M, out_features);
  ym.noalias() = as_matrix(x->value, M, in_features) * as_matrix(w->value, out_features, in_features).transpose();
  if (bias) {
    const T* pb = bias->value.data();
    T* po = out.data();
    for (index_t r = 0; r < M; ++r)
      for (index_t c = 0; c < out_features; ++c) po[r * out_features + c] += pb[c];
  }
  std::vector<Var<T>> inputs = {x, w};
  if (bias) inputs.push_back(bias);
  return make_op<T>(std::move(out), std::move(inputs),
                    [M, in_features, out_features](Node<T>& self) {
                      auto g = as_matrix(self.grad, M, out_features);
                      auto xv = as_matrix(self.inputs[0]->value, M, in_features);
                      auto wv = as_matrix(self.inputs[1]->value, out_features, in_features);
                      if (self.inputs[0]->requires_grad)
                        as_matrix(self.inputs[0]->grad, M, in_features).noalias() += g * wv;
                      if (self.inputs[1]->requires_grad)
                        as_matrix(self.inputs[1]->grad, out_features, in_features).noalias() +=
                            g.transpose() * xv;
                      if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
                        T* gb = self.inputs[2]->grad.data();
                        const T* pg = self.grad.data();
                        for (index_t r = 0; r < M; ++r)
                          for (index_t c = 0; c < out_features; ++c) gb[c] += pg[r * out_features + c];
                      }
                    },
                    "linear");
}

// Batched matmul over leading dim: a [B,M,K] x b [B,K,N] -> [B,M,N].
template <typename T>
Var<T> bmm(const Var<T>& a, const Var<T>& b) {
  CROSSSEG_CHECK(a->value.ndim() == 3 && b->value.ndim() == 3 && a->value.dim(0) == b->value.dim(0) &&
                     a->value.dim(2) == b->value.dim(1),
                 "bmm: bad shapes");
  index_t B = a->value.dim(0), M = a->value.dim(1), K = a->value.dim(2), N = b->value.dim(2);
  Tensor<T> out({B, M, N});
  for (index_t i = 0; i < B; ++i) {
    ConstMatMap<T> ma(a->value.data() + i * M * K, M, K);
    ConstMatMap<T> mb(b->value.data() + i * K * N, K, N);
    MatMap<T>(out.data() + i * M * N, M, N).noalias() = ma * mb;
  }
  return make_op<T>(std::move(out), {a, b},
                    [B, M, K, N](Node<T>& self) {
                      for (index_t i = 0; i < B; ++i) {
                        ConstMatMap<T> g(self.grad.data() + i * M * N, M, N);
                        ConstMatMap<T> ma(self.inputs[0]->value.data() + i * M * K, M, K);
                        ConstMatMap<T> mb(self.inputs[1]->value.data() + i * K * N, K, N);
                        if (self.inputs[0]->requires_grad)
                          MatMap<T>(self.inputs[0]->grad.data() + i * M * K, M, K).noalias() +=
                              g * mb.transpose();
                        if (self.inputs[1]->requires_grad)
                          MatMap<T>(self.inputs[1]->grad.data() + i * K * N, K, N).noalias() +=
                              ma.transpose() * g;
                      }
                    },
                    "bmm");
}

// a [B,M,K] x b [B,N,K]^T -> [B,M,N]; attention scores q k^T.
template <typename T>
Var<T> bmm_nt(const Var<T>& a, const Var<T>& b) {
  CROSSSEG_CHECK(a->value.ndim() == 3 && b->value.ndim() == 3 && a->value.dim(0) == b->value.dim(0) &&
                     a->value.dim(2) == b->value.dim(2),
                 "bmm_nt: bad shapes");
  index_t B = a->value.dim(0), M = a->value.dim(1), K = a->value.dim(2), N = b->value.dim(1);
  Tensor<T> out({B, M, N});
  for (index_t i = 0; i < B; ++i) {
    ConstMatMap<T> ma(a->value.data() + i * M * K, M, K);
    ConstMatMap<T> mb(b->value.data() + i * N * K, N, K);
    MatMap<T>(out.data() + i * M * N, M, N).noalias() = ma * mb.transpose();
  }
  return make_op<T>(std::move(out), {a, b},
                    [B, M, K, N](Node<T>& self) {
                      for (index_t i = 0; i < B; ++i) {
                        ConstMatMap<T> g(self.grad.data() + i * M * N, M, N);
                        ConstMatMap<T> ma(self.inputs[0]->value.data() + i * M * K, M, K);
                        ConstMatMap<T> mb(self.inputs[1]->value.data() + i * N * K, N, K);
                        if (self.inputs[0]->requires_grad)
                          MatMap<T>(self.inputs[0]->grad.data() + i * M * K, M, K).noalias() += g * mb;
                        if (self.inputs[1]->requires_grad)
                          MatMap<T>(self.inputs[1]->grad.data() + i * N * K, N, K).noalias() +=
                              g.transpose() * ma;
                      }
                    },
                    "bmm_nt");
}

// ---- row-wise normalizations ----

// Softmax over the last dimension; all leading dims are treated as rows.
template <typename T>
Var<T> softmax_lastdim(const Var<T>& a) {
  index_t N = a->value.shape().back();
  index_t R = a->value.numel() / N;
  Tensor<T> out = a->value;
  T* p = out.data();
  for (index_t r = 0; r < R; ++r, p += N) {
    T mx = p[0];
    for (index_t c = 1; c < N; ++c) mx = std::max(mx, p[c]);
    double denom = 0.0;
    for (index_t c = 0; c < N; ++c) {
      p[c] = static_cast<T>(std::exp(static_cast<double>(p[c] - mx)));
      denom += static_cast<double>(p[c]);
    }
    T inv = static_cast<T>(1.0 / denom);
    for (index_t c = 0; c < N; ++c) p[c] *= inv;
  }
  return make_op<T>(std::move(out), {a},
                    [R, N](Node<T>& self) {
                      const T* y = self.value.data();
                      const T* g = self.grad.data();
                      T* gi = self.inputs[0]->grad.data();
                      for (index_t r = 0; r < R; ++r) {
                        const T* yr = y + r * N;
                        const T* gr = g + r * N;
                        double dot = 0.0;
                        for (index_t c = 0; c < N; ++c) dot += static_cast<double>(gr[c]) * yr[c];
                        T* gir = gi + r * N;
                        for (index_t c = 0; c < N; ++c)
                          gir[c] += yr[c] * (gr[c] - static_cast<T>(dot));
                      }
                    },
                    "softmax");
}

// LayerNorm over the last dimension with affine parameters.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5)) {
  index_t N = x->value.shape().back();
  CROSSSEG_CHECK(gamma->value.numel() == N && beta->value.numel() == N, "layer_norm: affine size mismatch");
  index_t R = x->value.numel() / N;
  Tensor<T> out(x->value.shape());
  Tensor<T> xhat(x->value.shape());
  Tensor<T> inv_sigma({R});
  const T* px = x->value.data();
  const T* pg = gamma->value.data();
  const T* pb = beta->value.data();
  for (index_t r = 0; r < R; ++r) {
    const T* xr = px + r * N;
    double mu = 0.0;
    for (index_t c = 0; c < N; ++c) mu += xr[c];
    mu /= N;
    double var = 0.0;
    for (index_t c = 0; c < N; ++c) {
      double d = xr[c] - mu;
      var += d * d;
    }
    var /= N;
    double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
    inv_sigma[r] = static_cast<T>(inv);
    T* hr = xhat.data() + r * N;
    T* yr = out.data() + r * N;
    for (index_t c = 0; c < N; ++c) {
      hr[c] = static_cast<T>((xr[c] - mu) * inv);
      yr[c] = pg[c] * hr[c] + pb[c];
    }
  }
  auto xhat_p = std::make_shared<Tensor<T>>(std::move(xhat));
  auto inv_p = std::make_shared<Tensor<T>>(std::move(inv_sigma));
  return make_op<T>(std::move(out), {x, gamma, beta},
                    [R, N, xhat_p, inv_p](Node<T>& self) {
                      const T* g = self.grad.data();
                      const T* gam = self.inputs[1]->value.data();
                      const T* h = xhat_p->data();
                      for (index_t r = 0; r < R; ++r) {
                        const T* gr = g + r * N;
                        const T* hr = h + r * N;
                        if (self.inputs[0]->requires_grad) {
                          double mean_dy = 0.0, mean_dyh = 0.0;
                          for (index_t c = 0; c < N; ++c) {
                            double dy = static_cast<double>(gr[c]) * gam[c];
                            mean_dy += dy;
                            mean_dyh += dy * hr[c];
                          }
                          mean_dy /= N;
                          mean_dyh /= N;
                          T* gx = self.inputs[0]->grad.data() + r * N;
                          T inv = (*inv_p)[r];
                          for (index_t c = 0; c < N; ++c) {
                            double dy = static_cast<double>(gr[c]) * gam[c];
                            gx[c] += static_cast<T>(inv * (dy - mean_dy - hr[c] * mean_dyh));
                          }
                        }
                      }
                      if (self.inputs[1]->requires_grad) {
                        T* ggam = self.inputs[1]->grad.data();
                        for (index_t r = 0; r < R; ++r)
                          for (index_t c = 0; c < N; ++c) ggam[c] += g[r * N + c] * h[r * N + c];
                      }
                      if (self.inputs[2]->requires_grad) {
                        T* gbet = self.inputs[2]->grad.data();
                        for (index_t r = 0; r < R; ++r)
                          for (index_t c = 0; c < N; ++c) gbet[c] += g[r * N + c];
                      }
                    },
                    "layer_norm");
}

// Row-wise L2 normalization: y_r = x_r / ||x_r||. Rejects near-zero rows.
template <typename T>
Var<T> l2_normalize_rows(const Var<T>& x) {
  index_t N = x->value.shape().back();
  index_t R = x->value.numel() / N;
  Tensor<T> out(x->value.shape());
  Tensor<T> inv_norm({R});
  const T* px = x->value.data();
  for (index_t r = 0; r < R; ++r) {
    double sq = 0.0;
    const T* xr = px + r * N;
    for (index_t c = 0; c < N; ++c) sq += static_cast<double>(xr[c]) * xr[c];
    double norm = std::sqrt(sq);
    CROSSSEG_CHECK_RT(std::isfinite(norm) && norm > 1e-20,
                      "l2_normalize_rows: degenerate (zero or non-finite) row " << r);
    inv_norm[r] = static_cast<T>(1.0 / norm);
    T* yr = out.data() + r * N;
    for (index_t c = 0; c < N; ++c) yr[c] = static_cast<T>(xr[c] / norm);
  }
  auto inv_p = std::make_shared<Tensor<T>>(std::move(inv_norm));
  return make_op<T>(std::move(out), {x},
                    [R, N, inv_p](Node<T>& self) {
                      const T* y = self.value.data();
                      const T* g = self.grad.data();
                      T* gx = self.inputs[0]->grad.data();
                      for (index_t r = 0; r < R; ++r) {
                        const T* yr = y + r * N;
                        const T* gr = g + r * N;
                        double dot = 0.0;
                        for (index_t c = 0; c < N; ++c) dot += static_cast<double>(gr[c]) * yr[c];
                        T inv = (*inv_p)[r];
                        T* gxr = gx + r * N;
                        for (index_t c = 0; c < N; ++c)
                          gxr[c] += inv * (gr[c] - static_cast<T>(dot) * yr[c]);
                      }
                    },
                    "l2_normalize");
}

// BatchNorm2d on [B,C,H,W]. Training mode uses batch statistics and updates
// the running buffers in place (biased batch var for normalization, unbiased
// for the running estimate); eval mode reads the frozen buffers.
template <typename T>
Var<T> batch_norm2d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>* running_mean,
                    Tensor<T>* running_var, bool training, T momentum = T(0.1), T eps = T(1e-5)) {
  CROSSSEG_CHECK(x->value.ndim() == 4, "batch_norm2d: expected [B,C,H,W]");
  index_t B = x->value.dim(0), C = x->value.dim(1), HW = x->value.dim(2) * x->value.dim(3);
  CROSSSEG_CHECK(gamma->value.numel() == C && beta->value.numel() == C &&
                     running_mean->numel() == C && running_var->numel() == C,
                 "batch_norm2d: channel size mismatch");
  index_t Nc = B * HW;
  Tensor<T> mean({C}), inv_sigma({C});
  if (training) {
    CROSSSEG_CHECK(Nc > 1, "batch_norm2d: needs more than one value per channel in training mode");
    for (index_t c = 0; c < C; ++c) {
      double mu = 0.0;
      for (index_t b = 0; b < B; ++b) {
        const T* p = x->value.data() + (b * C + c) * HW;
        for (index_t i = 0; i < HW; ++i) mu += p[i];
      }
      mu /= Nc;
      double var = 0.0;
      for (index_t b = 0; b < B; ++b) {
        const T* p = x->value.data() + (b * C + c) * HW;
        for (index_t i = 0; i < HW; ++i) {
          double d = p[i] - mu;
          var += d * d;
        }
      }
      var /= Nc;
      mean[c] = static_cast<T>(mu);
      inv_sigma[c] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      (*running_mean)[c] = (T(1) - momentum) * (*running_mean)[c] + momentum * static_cast<T>(mu);
      double unbiased = var * static_cast<double>(Nc) / static_cast<double>(Nc - 1);
      (*running_var)[c] = (T(1) - momentum) * (*running_var)[c] + momentum * static_cast<T>(unbiased);
    }
  } else {
    for (index_t c = 0; c < C; ++c) {
      mean[c] = (*running_mean)[c];
      inv_sigma[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>((*running_var)[c]) +
                                                    static_cast<double>(eps)));
    }
  }
  Tensor<T> out(x->value.shape());
  const T* pg = gamma->value.data();
  const T* pb = beta->value.data();
  for (index_t b = 0; b < B; ++b)
    for (index_t c = 0; c < C; ++c) {
      const T* p = x->value.data() + (b * C + c) * HW;
      T* o = out.data() + (b * C + c) * HW;
      T mu = mean[c], inv = inv_sigma[c], ga = pg[c], be = pb[c];
      for (index_t i = 0; i < HW; ++i) o[i] = ga * (p[i] - mu) * inv + be;
    }
  auto mean_p = std::make_shared<Tensor<T>>(std::move(mean));
  auto inv_p = std::make_shared<Tensor<T>>(std::move(inv_sigma));
  return make_op<T>(
      std::move(out), {x, gamma, beta},
      [B, C, HW, Nc, mean_p, inv_p, training](Node<T>& self) {
        const T* g = self.grad.data();
        const T* xv = self.inputs[0]->value.data();
        const T* gam = self.inputs[1]->value.data();
        for (index_t c = 0; c < C; ++c) {
          T mu = (*mean_p)[c], inv = (*inv_p)[c];
          double sum_g = 0.0, sum_gh = 0.0;
          for (index_t b = 0; b < B; ++b) {
            const T* gr = g + (b * C + c) * HW;
            const T* xr = xv + (b * C + c) * HW;
            for (index_t i = 0; i < HW; ++i) {
              sum_g += gr[i];
              sum_gh += static_cast<double>(gr[i]) * (xr[i] - mu) * inv;
            }
          }
          if (self.inputs[1]->requires_grad) self.inputs[1]->grad[c] += static_cast<T>(sum_gh);
          if (self.inputs[2]->requires_grad) self.inputs[2]->grad[c] += static_cast<T>(sum_g);
          if (self.inputs[0]->requires_grad) {
            double mean_g = sum_g / Nc, mean_gh = sum_gh / Nc;
            for (index_t b = 0; b < B; ++b) {
              const T* gr = g + (b * C + c) * HW;
              const T* xr = xv + (b * C + c) * HW;
              T* gx = self.inputs[0]->grad.data() + (b * C + c) * HW;
              if (training) {
                for (index_t i = 0; i < HW; ++i) {
                  double h = (xr[i] - mu) * inv;
                  gx[i] += static_cast<T>(gam[c] * inv * (gr[i] - mean_g - h * mean_gh));
                }
              } else {
                for (index_t i = 0; i < HW; ++i) gx[i] += gam[c] * inv * gr[i];
              }
            }
          }
        }
      },
      "batch_norm2d");
}

}  // namespace crossseg
