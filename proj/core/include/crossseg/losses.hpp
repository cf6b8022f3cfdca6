#pragma once

#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "crossseg/ops_core.hpp"
#include "crossseg/ops_shape.hpp"

namespace crossseg {

struct RampUpConfig {
  double lambda_max = 0.1;
  std::int64_t ramp_iters = 6000;

  void validate() const {
    CROSSSEG_CHECK(lambda_max >= 0.0, "RampUpConfig: lambda_max must be >= 0");
    CROSSSEG_CHECK(ramp_iters > 0, "RampUpConfig: ramp_iters must be > 0");
  }
};

enum class ContrastivePairing {
  kCrossNetworkSameImage,
  kLabeledUnlabeledLiteral,
};

struct ContrastiveConfig {
  double temperature = 0.07;
  ContrastivePairing pairing = ContrastivePairing::kCrossNetworkSameImage;
  bool enabled = true;

  void validate() const {
    CROSSSEG_CHECK(temperature > 0.0, "ContrastiveConfig: temperature must be > 0");
  }
};

inline std::string pairing_name(ContrastivePairing p) {
  return p == ContrastivePairing::kCrossNetworkSameImage ? "cross_network_same_image"
                                                         : "labeled_unlabeled_literal";
}

inline ContrastivePairing pairing_from_name(const std::string& s) {
  if (s == "cross_network_same_image") return ContrastivePairing::kCrossNetworkSameImage;
  if (s == "labeled_unlabeled_literal") return ContrastivePairing::kLabeledUnlabeledLiteral;
  CROSSSEG_CHECK(false, "unknown contrastive pairing '" << s << "'");
  return ContrastivePairing::kCrossNetworkSameImage;
}

struct LossReport {
  double total = 0.0;
  double sup1 = 0.0;
  double sup2 = 0.0;
  double semi1 = 0.0;
  double semi2 = 0.0;
  double contra = 0.0;
  double lambda_t = 0.0;
};

namespace detail {
template <typename T>
void check_logits_targets(const Var<T>& logits, const MaskBatch& targets) {
  CROSSSEG_CHECK(logits->value.ndim() == 4, "loss: logits must be [B,C,H,W]");
  CROSSSEG_CHECK(targets.ndim() == 3, "loss: targets must be [B,H,W]");
  CROSSSEG_CHECK(logits->value.dim(0) == targets.dim(0) && logits->value.dim(2) == targets.dim(1) &&
                     logits->value.dim(3) == targets.dim(2),
                 "loss: logits " << shape_str(logits->value.shape()) << " vs targets "
                                 << shape_str(targets.shape()) << " shape mismatch");
  index_t C = logits->value.dim(1);
  for (index_t i = 0; i < targets.numel(); ++i)
    CROSSSEG_CHECK(targets[i] >= 0 && targets[i] < C,
                   "loss: target label " << targets[i] << " outside [0," << C << ")");
}
}  // namespace detail

// Mean over all pixels of -log softmax(logits)[target].
template <typename T>
Var<T> cross_entropy_loss(const Var<T>& logits, const MaskBatch& targets) {
  detail::check_logits_targets(logits, targets);
  index_t B = logits->value.dim(0), C = logits->value.dim(1);
  index_t HW = logits->value.dim(2) * logits->value.dim(3);
  index_t Npix = B * HW;
  const T* z = logits->value.data();
  double acc = 0.0;
  for (index_t b = 0; b < B; ++b) {
    const T* zb = z + b * C * HW;
    const std::int32_t* tb = targets.data() + b * HW;
    for (index_t i = 0; i < HW; ++i) {
      double mx = zb[i];
      for (index_t c = 1; c < C; ++c) mx = std::max(mx, static_cast<double>(zb[c * HW + i]));
      double denom = 0.0;
      for (index_t c = 0; c < C; ++c) denom += std::exp(static_cast<double>(zb[c * HW + i]) - mx);
      acc += mx + std::log(denom) - static_cast<double>(zb[tb[i] * HW + i]);
    }
  }
  auto targets_p = std::make_shared<MaskBatch>(targets);
  return make_op<T>(Tensor<T>::scalar(static_cast<T>(acc / Npix)), {logits},
                    [B, C, HW, Npix, targets_p](Node<T>& self) {
                      T g = self.grad[0] / static_cast<T>(Npix);
                      const T* z = self.inputs[0]->value.data();
                      T* gz = self.inputs[0]->grad.data();
                      for (index_t b = 0; b < B; ++b) {
                        const T* zb = z + b * C * HW;
                        T* gb = gz + b * C * HW;
                        const std::int32_t* tb = targets_p->data() + b * HW;
                        for (index_t i = 0; i < HW; ++i) {
                          double mx = zb[i];
                          for (index_t c = 1; c < C; ++c)
                            mx = std::max(mx, static_cast<double>(zb[c * HW + i]));
                          double denom = 0.0;
                          for (index_t c = 0; c < C; ++c)
                            denom += std::exp(static_cast<double>(zb[c * HW + i]) - mx);
                          for (index_t c = 0; c < C; ++c) {
                            double p = std::exp(static_cast<double>(zb[c * HW + i]) - mx) / denom;
                            gb[c * HW + i] += g * static_cast<T>(p - (tb[i] == c ? 1.0 : 0.0));
                          }
                        }
                      }
                    },
                    "cross_entropy");
}

// 1 - mean_c (2*sum(p_c*g_c)+eps)/(sum(p_c)+sum(g_c)+eps) with p = softmax
// over classes and g the one-hot target, sums taken over the whole batch.
template <typename T>
Var<T> soft_dice_loss(const Var<T>& logits, const MaskBatch& targets, double eps = 1e-5) {
  detail::check_logits_targets(logits, targets);
  index_t B = logits->value.dim(0), C = logits->value.dim(1);
  index_t HW = logits->value.dim(2) * logits->value.dim(3);

  // Softmax probabilities are kept for the backward pass.
  auto probs = std::make_shared<Tensor<T>>(logits->value.shape());
  const T* z = logits->value.data();
  T* pp = probs->data();
  for (index_t b = 0; b < B; ++b)
    for (index_t i = 0; i < HW; ++i) {
      const T* zb = z + b * C * HW;
      T* pb = pp + b * C * HW;
      double mx = zb[i];
      for (index_t c = 1; c < C; ++c) mx = std::max(mx, static_cast<double>(zb[c * HW + i]));
      double denom = 0.0;
      for (index_t c = 0; c < C; ++c) {
        double e = std::exp(static_cast<double>(zb[c * HW + i]) - mx);
        pb[c * HW + i] = static_cast<T>(e);
        denom += e;
      }
      for (index_t c = 0; c < C; ++c) pb[c * HW + i] = static_cast<T>(pb[c * HW + i] / denom);
    }

  std::vector<double> inter(static_cast<std::size_t>(C), 0.0), psum(static_cast<std::size_t>(C), 0.0),
      gsum(static_cast<std::size_t>(C), 0.0);
  for (index_t b = 0; b < B; ++b) {
    const std::int32_t* tb = targets.data() + b * HW;
    for (index_t c = 0; c < C; ++c) {
      const T* pb = pp + (b * C + c) * HW;
      double& ic = inter[static_cast<std::size_t>(c)];
      double& pc = psum[static_cast<std::size_t>(c)];
      for (index_t i = 0; i < HW; ++i) {
        pc += pb[i];
        if (tb[i] == c) {
          ic += pb[i];
          gsum[static_cast<std::size_t>(c)] += 1.0;
        }
      }
    }
  }
  double dice_sum = 0.0;
  auto num = std::make_shared<std::vector<double>>(static_cast<std::size_t>(C));
  auto den = std::make_shared<std::vector<double>>(static_cast<std::size_t>(C));
  for (index_t c = 0; c < C; ++c) {
    (*num)[static_cast<std::size_t>(c)] = 2.0 * inter[static_cast<std::size_t>(c)] + eps;
    (*den)[static_cast<std::size_t>(c)] =
        psum[static_cast<std::size_t>(c)] + gsum[static_cast<std::size_t>(c)] + eps;
    dice_sum += (*num)[static_cast<std::size_t>(c)] / (*den)[static_cast<std::size_t>(c)];
  }
  double loss = 1.0 - dice_sum / C;

  auto targets_p = std::make_shared<MaskBatch>(targets);
  return make_op<T>(
      Tensor<T>::scalar(static_cast<T>(loss)), {logits},
      [B, C, HW, probs, targets_p, num, den](Node<T>& self) {
        T g = self.grad[0];
        T* gz = self.inputs[0]->grad.data();
        const T* pp = probs->data();
        // dL/dp_c(x) = -(1/C) * (2*g_c(x)*den_c - num_c) / den_c^2
        for (index_t b = 0; b < B; ++b) {
          const std::int32_t* tb = targets_p->data() + b * HW;
          for (index_t i = 0; i < HW; ++i) {
            const T* pb = pp + b * C * HW;
            double dot = 0.0;
            double dLdp[8];  // C <= 8 everywhere in this artifact
            for (index_t c = 0; c < C; ++c) {
              double dc = (*den)[static_cast<std::size_t>(c)];
              double gc = (tb[i] == c) ? 1.0 : 0.0;
              dLdp[c] = -(2.0 * gc * dc - (*num)[static_cast<std::size_t>(c)]) / (dc * dc) / C;
              dot += dLdp[c] * pb[c * HW + i];
            }
            T* gzb = gz + b * C * HW;
            for (index_t c = 0; c < C; ++c)
              gzb[c * HW + i] += g * static_cast<T>(pb[c * HW + i] * (dLdp[c] - dot));
          }
        }
      },
      "soft_dice");
}

// CE + soft Dice against ground truth.
template <typename T>
Var<T> supervised_loss(const Var<T>& logits, const MaskBatch& y_gt) {
  return add(cross_entropy_loss(logits, y_gt), soft_dice_loss(logits, y_gt));
}

// Per-pixel argmax, ties resolved to the lowest class index. Operates on raw
// values, so the result carries no gradient path back to the producer.
template <typename T>
MaskBatch pseudo_label(const Tensor<T>& logits) {
  CROSSSEG_CHECK(logits.ndim() == 4, "pseudo_label: logits must be [B,C,H,W]");
  CROSSSEG_CHECK(logits.all_finite(), "pseudo_label: non-finite logits");
  index_t B = logits.dim(0), C = logits.dim(1), HW = logits.dim(2) * logits.dim(3);
  MaskBatch out({B, logits.dim(2), logits.dim(3)});
  const T* z = logits.data();
  for (index_t b = 0; b < B; ++b) {
    const T* zb = z + b * C * HW;
    std::int32_t* ob = out.data() + b * HW;
    for (index_t i = 0; i < HW; ++i) {
      index_t best = 0;
      T bv = zb[i];
      for (index_t c = 1; c < C; ++c)
        if (zb[c * HW + i] > bv) {
          bv = zb[c * HW + i];
          best = c;
        }
      ob[i] = static_cast<std::int32_t>(best);
    }
  }
  return out;
}

// CE + soft Dice against the other network's pseudo labels. Gradients
// flow only into own_logits because the pseudo mask is plain data.
template <typename T>
Var<T> semi_supervised_loss(const Var<T>& own_logits, const MaskBatch& other_pseudo) {
  return add(cross_entropy_loss(own_logits, other_pseudo), soft_dice_loss(own_logits, other_pseudo));
}

// InfoNCE with one positive and explicit negatives; q, k_pos and k_negs
// are unit-norm embedding vectors.
template <typename T>
Var<T> info_nce(const Var<T>& q, const Var<T>& k_pos, const std::vector<Var<T>>& k_negs, double tau) {
  CROSSSEG_CHECK(tau > 0.0, "info_nce: temperature must be > 0");
  index_t D = q->value.numel();
  auto check_vec = [D](const Var<T>& v, const char* name) {
    CROSSSEG_CHECK(v->value.numel() == D, "info_nce: " << name << " dimension mismatch");
    CROSSSEG_CHECK_RT(v->value.all_finite(), "info_nce: non-finite " << name);
    double sq = 0.0;
    for (index_t i = 0; i < D; ++i) sq += static_cast<double>(v->value[i]) * v->value[i];
    CROSSSEG_CHECK_RT(sq > 1e-20, "info_nce: zero " << name << " vector");
  };
  check_vec(q, "query");
  check_vec(k_pos, "positive key");
  for (const auto& k : k_negs) check_vec(k, "negative key");

  index_t K = static_cast<index_t>(k_negs.size());
  auto dot = [D](const Var<T>& a, const Var<T>& b) {
    double acc = 0.0;
    for (index_t i = 0; i < D; ++i) acc += static_cast<double>(a->value[i]) * b->value[i];
    return acc;
  };
  std::vector<double> s(static_cast<std::size_t>(K + 1));
  s[0] = dot(q, k_pos) / tau;
  for (index_t k = 0; k < K; ++k) s[static_cast<std::size_t>(k + 1)] = dot(q, k_negs[static_cast<std::size_t>(k)]) / tau;
  double mx = s[0];
  for (double v : s) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : s) z += std::exp(v - mx);
  double loss = -s[0] + mx + std::log(z);

  auto p = std::make_shared<std::vector<double>>(static_cast<std::size_t>(K + 1));
  for (index_t k = 0; k <= K; ++k) (*p)[static_cast<std::size_t>(k)] = std::exp(s[static_cast<std::size_t>(k)] - mx) / z;

  std::vector<Var<T>> inputs = {q, k_pos};
  inputs.insert(inputs.end(), k_negs.begin(), k_negs.end());
  return make_op<T>(
      Tensor<T>::scalar(static_cast<T>(loss)), std::move(inputs),
      [D, K, tau, p](Node<T>& self) {
        T g = self.grad[0];
        auto& q = self.inputs[0];
        // dL/ds_pos = p_pos - 1, dL/ds_neg_k = p_k; s = (q . k)/tau
        for (index_t k = 0; k <= K; ++k) {
          double coef = (*p)[static_cast<std::size_t>(k)] - (k == 0 ? 1.0 : 0.0);
          auto& key = self.inputs[static_cast<std::size_t>(k + 1)];
          if (q->requires_grad) {
            T* gq = q->grad.data();
            for (index_t i = 0; i < D; ++i)
              gq[i] += g * static_cast<T>(coef / tau * key->value[i]);
          }
          if (key->requires_grad) {
            T* gk = key->grad.data();
            for (index_t i = 0; i < D; ++i)
              gk[i] += g * static_cast<T>(coef / tau * q->value[i]);
          }
        }
      },
      "info_nce");
}

// Mean over rows of (logsumexp(row) - row[target]).
template <typename T>
Var<T> row_cross_entropy(const Var<T>& logits, std::shared_ptr<const std::vector<index_t>> targets) {
  CROSSSEG_CHECK(logits->value.ndim() == 2, "row_cross_entropy: expected [M,N]");
  index_t M = logits->value.dim(0), N = logits->value.dim(1);
  CROSSSEG_CHECK(static_cast<index_t>(targets->size()) == M, "row_cross_entropy: target count mismatch");
  const T* z = logits->value.data();
  double acc = 0.0;
  for (index_t r = 0; r < M; ++r) {
    const T* zr = z + r * N;
    double mx = zr[0];
    for (index_t c = 1; c < N; ++c) mx = std::max(mx, static_cast<double>(zr[c]));
    double sum = 0.0;
    for (index_t c = 0; c < N; ++c) sum += std::exp(static_cast<double>(zr[c]) - mx);
    acc += mx + std::log(sum) - static_cast<double>(zr[(*targets)[static_cast<std::size_t>(r)]]);
  }
  return make_op<T>(Tensor<T>::scalar(static_cast<T>(acc / M)), {logits},
                    [M, N, targets](Node<T>& self) {
                      T g = self.grad[0] / static_cast<T>(M);
                      const T* z = self.inputs[0]->value.data();
                      T* gz = self.inputs[0]->grad.data();
                      for (index_t r = 0; r < M; ++r) {
                        const T* zr = z + r * N;
                        double mx = zr[0];
                        for (index_t c = 1; c < N; ++c) mx = std::max(mx, static_cast<double>(zr[c]));
                        double sum = 0.0;
                        for (index_t c = 0; c < N; ++c) sum += std::exp(static_cast<double>(zr[c]) - mx);
                        index_t t = (*targets)[static_cast<std::size_t>(r)];
                        T* gr = gz + r * N;
                        for (index_t c = 0; c < N; ++c) {
                          double p = std::exp(static_cast<double>(zr[c]) - mx) / sum;
                          gr[c] += g * static_cast<T>(p - (c == t ? 1.0 : 0.0));
                        }
                      }
                    },
                    "row_cross_entropy");
}

// Mean over all (row, column) pairs of (logsumexp(row) - row[column]). This
// the labeled/unlabeled double sum with every column of a row acting once as the
// positive while the rest of the row are the negatives.
template <typename T>
Var<T> all_pairs_row_cross_entropy(const Var<T>& logits) {
  CROSSSEG_CHECK(logits->value.ndim() == 2, "all_pairs_row_cross_entropy: expected [M,N]");
  index_t M = logits->value.dim(0), N = logits->value.dim(1);
  const T* z = logits->value.data();
  double acc = 0.0;
  for (index_t r = 0; r < M; ++r) {
    const T* zr = z + r * N;
    double mx = zr[0];
    for (index_t c = 1; c < N; ++c) mx = std::max(mx, static_cast<double>(zr[c]));
    double sum = 0.0, rowsum = 0.0;
    for (index_t c = 0; c < N; ++c) {
      sum += std::exp(static_cast<double>(zr[c]) - mx);
      rowsum += zr[c];
    }
    acc += N * (mx + std::log(sum)) - rowsum;
  }
  return make_op<T>(Tensor<T>::scalar(static_cast<T>(acc / (M * N))), {logits},
                    [M, N](Node<T>& self) {
                      T g = self.grad[0];
                      const T* z = self.inputs[0]->value.data();
                      T* gz = self.inputs[0]->grad.data();
                      for (index_t r = 0; r < M; ++r) {
                        const T* zr = z + r * N;
                        double mx = zr[0];
                        for (index_t c = 1; c < N; ++c) mx = std::max(mx, static_cast<double>(zr[c]));
                        double sum = 0.0;
                        for (index_t c = 0; c < N; ++c) sum += std::exp(static_cast<double>(zr[c]) - mx);
                        T* gr = gz + r * N;
                        for (index_t c = 0; c < N; ++c) {
                          double p = std::exp(static_cast<double>(zr[c]) - mx) / sum;
                          gr[c] += g * static_cast<T>(p / M - 1.0 / (M * N));
                        }
                      }
                    },
                    "all_pairs_row_ce");
}

// Batch contrastive term over unit-norm representations. Rows [0, num_labeled) of
// z1/z2 are the labeled images, the rest the unlabeled ones, in batch order.
template <typename T>
Var<T> contrastive_loss(const Var<T>& reps_net1, const Var<T>& reps_net2, index_t num_labeled,
                        index_t num_unlabeled, const ContrastiveConfig& cfg) {
  cfg.validate();
  CROSSSEG_CHECK(reps_net1->value.ndim() == 2 && reps_net2->value.ndim() == 2 &&
                     reps_net1->value.same_shape(reps_net2->value),
                 "contrastive_loss: representation batches must be [B,D] with equal shapes");
  index_t B = reps_net1->value.dim(0);
  CROSSSEG_CHECK(num_labeled >= 0 && num_unlabeled >= 0 && num_labeled + num_unlabeled == B,
                 "contrastive_loss: labeled+unlabeled counts must equal batch size");
  T inv_tau = static_cast<T>(1.0 / cfg.temperature);

  if (cfg.pairing == ContrastivePairing::kCrossNetworkSameImage) {
    if (B < 2) {
      std::cerr << "[crossseg] warning: contrastive_loss needs >= 2 images in "
                   "cross_network_same_image mode (got "
                << B << "); returning 0\n";
      return make_constant(Tensor<T>::scalar(T(0)));
    }
    auto diag = std::make_shared<std::vector<index_t>>();
    for (index_t i = 0; i < B; ++i) diag->push_back(i);
    auto l12 = row_cross_entropy(scale(matmul_nt(reps_net1, reps_net2), inv_tau), diag);
    auto l21 = row_cross_entropy(scale(matmul_nt(reps_net2, reps_net1), inv_tau), diag);
    return scale(add(l12, l21), T(0.5));
  }

  // labeled_unlabeled_literal
  if (num_labeled == 0 || num_unlabeled == 0) return make_constant(Tensor<T>::scalar(T(0)));
  auto z1_l = slice_axis0(reps_net1, 0, num_labeled);
  auto z2_u = slice_axis0(reps_net2, num_labeled, num_unlabeled);
  return all_pairs_row_cross_entropy(scale(matmul_nt(z1_l, z2_u), inv_tau));
}

// Gaussian warm-up weight: lambda_max * exp(-5 (1 - min(t,T)/T)^2).
inline double ramp_up_lambda(std::int64_t iter, const RampUpConfig& cfg) {
  cfg.validate();
  CROSSSEG_CHECK(iter >= 0, "ramp_up_lambda: iter must be >= 0");
  double frac = static_cast<double>(std::min(iter, cfg.ramp_iters)) / static_cast<double>(cfg.ramp_iters);
  double u = 1.0 - frac;
  return cfg.lambda_max * std::exp(-5.0 * u * u);
}

// L_total = (L1_sup + L2_sup) + lambda_t (L1_semi + L2_semi) + L_contra.
inline LossReport total_loss(double sup1, double sup2, double semi1, double semi2, double contra,
                             double lambda_t) {
  auto chk = [](double v, const char* name) {
    CROSSSEG_CHECK_RT(std::isfinite(v), "total_loss: non-finite component '" << name << "' = " << v);
  };
  chk(sup1, "sup1");
  chk(sup2, "sup2");
  chk(semi1, "semi1");
  chk(semi2, "semi2");
  chk(contra, "contra");
  chk(lambda_t, "lambda_t");
  LossReport r;
  r.sup1 = sup1;
  r.sup2 = sup2;
  r.semi1 = semi1;
  r.semi2 = semi2;
  r.contra = contra;
  r.lambda_t = lambda_t;
  r.total = (sup1 + sup2) + lambda_t * (semi1 + semi2) + contra;
  return r;
}

}  // namespace crossseg
