#pragma once

#include <memory>

#include "crossseg/graph.hpp"

namespace crossseg {

template <typename T>
Var<T> reshape(const Var<T>& a, Shape new_shape) {
  Tensor<T> out = a->value.reshaped(new_shape);
  return make_op<T>(std::move(out), {a},
                    [](Node<T>& self) {
                      T* gi = self.inputs[0]->grad.data();
                      const T* g = self.grad.data();
                      for (index_t i = 0; i < self.grad.numel(); ++i) gi[i] += g[i];
                    },
                    "reshape");
}

namespace detail {
inline void unravel(index_t flat, const Shape& shape, index_t* idx) {
  for (index_t d = static_cast<index_t>(shape.size()) - 1; d >= 0; --d) {
    idx[d] = flat % shape[static_cast<std::size_t>(d)];
    flat /= shape[static_cast<std::size_t>(d)];
  }
}
}  // namespace detail

// General N-d transpose (copying).
template <typename T>
Var<T> permute(const Var<T>& a, std::vector<index_t> axes) {
  const Shape& in_shape = a->value.shape();
  index_t nd = a->value.ndim();
  CROSSSEG_CHECK(static_cast<index_t>(axes.size()) == nd, "permute: axes size mismatch");
  Shape out_shape(static_cast<std::size_t>(nd));
  for (index_t d = 0; d < nd; ++d) out_shape[static_cast<std::size_t>(d)] = in_shape[static_cast<std::size_t>(axes[static_cast<std::size_t>(d)])];
  // Precompute the source index for every destination element once; forward
  // and backward then reduce to gather / scatter-add over that map.
  auto src_of = std::make_shared<std::vector<index_t>>(static_cast<std::size_t>(a->value.numel()));
  std::vector<index_t> in_strides(static_cast<std::size_t>(nd)), out_idx(static_cast<std::size_t>(nd));
  index_t s = 1;
  for (index_t d = nd - 1; d >= 0; --d) {
    in_strides[static_cast<std::size_t>(d)] = s;
    s *= in_shape[static_cast<std::size_t>(d)];
  }
  index_t total = a->value.numel();
  for (index_t o = 0; o < total; ++o) {
    detail::unravel(o, out_shape, out_idx.data());
    index_t src = 0;
    for (index_t d = 0; d < nd; ++d)
      src += out_idx[static_cast<std::size_t>(d)] * in_strides[static_cast<std::size_t>(axes[static_cast<std::size_t>(d)])];
    (*src_of)[static_cast<std::size_t>(o)] = src;
  }
  Tensor<T> out(out_shape);
  const T* pa = a->value.data();
  T* po = out.data();
  for (index_t o = 0; o < total; ++o) po[o] = pa[(*src_of)[static_cast<std::size_t>(o)]];
  return make_op<T>(std::move(out), {a},
                    [src_of](Node<T>& self) {
                      T* gi = self.inputs[0]->grad.data();
                      const T* g = self.grad.data();
                      for (index_t o = 0; o < self.grad.numel(); ++o)
                        gi[(*src_of)[static_cast<std::size_t>(o)]] += g[o];
                    },
                    "permute");
}

// Concatenate along an axis; all other dims must agree.
template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, index_t axis) {
  CROSSSEG_CHECK(!parts.empty(), "concat: no inputs");
  const Shape& s0 = parts[0]->value.shape();
  index_t nd = parts[0]->value.ndim();
  CROSSSEG_CHECK(axis >= 0 && axis < nd, "concat: bad axis");
  Shape out_shape = s0;
  index_t axis_total = 0;
  for (const auto& p : parts) {
    CROSSSEG_CHECK(p->value.ndim() == nd, "concat: rank mismatch");
    for (index_t d = 0; d < nd; ++d)
      CROSSSEG_CHECK(d == axis || p->value.dim(d) == s0[static_cast<std::size_t>(d)], "concat: dim mismatch");
    axis_total += p->value.dim(axis);
  }
  out_shape[static_cast<std::size_t>(axis)] = axis_total;

  index_t outer = 1, inner = 1;
  for (index_t d = 0; d < axis; ++d) outer *= s0[static_cast<std::size_t>(d)];
  for (index_t d = axis + 1; d < nd; ++d) inner *= s0[static_cast<std::size_t>(d)];

  Tensor<T> out(out_shape);
  index_t offset = 0;
  for (const auto& p : parts) {
    index_t len = p->value.dim(axis) * inner;
    const T* src = p->value.data();
    for (index_t o = 0; o < outer; ++o)
      std::copy(src + o * len, src + (o + 1) * len, out.data() + o * axis_total * inner + offset);
    offset += len;
  }
  return make_op<T>(std::move(out), parts,
                    [outer, inner, axis_total](Node<T>& self) {
                      index_t offset = 0;
                      for (auto& in : self.inputs) {
                        index_t len = in->value.numel() / outer;
                        if (in->requires_grad) {
                          T* gi = in->grad.data();
                          const T* g = self.grad.data();
                          for (index_t o = 0; o < outer; ++o) {
                            const T* gsrc = g + o * axis_total * inner + offset;
                            T* gdst = gi + o * len;
                            for (index_t i = 0; i < len; ++i) gdst[i] += gsrc[i];
                          }
                        }
                        offset += len;
                      }
                    },
                    "concat");
}

// Contiguous slice along the leading axis.
template <typename T>
Var<T> slice_axis0(const Var<T>& a, index_t start, index_t len) {
  const Shape& s = a->value.shape();
  CROSSSEG_CHECK(start >= 0 && len >= 0 && start + len <= s[0], "slice_axis0: out of range");
  index_t inner = a->value.numel() / s[0];
  Shape out_shape = s;
  out_shape[0] = len;
  Tensor<T> out(out_shape);
  std::copy(a->value.data() + start * inner, a->value.data() + (start + len) * inner, out.data());
  return make_op<T>(std::move(out), {a},
                    [start, inner](Node<T>& self) {
                      T* gi = self.inputs[0]->grad.data() + start * inner;
                      const T* g = self.grad.data();
                      for (index_t i = 0; i < self.grad.numel(); ++i) gi[i] += g[i];
                    },
                    "slice_axis0");
}

// out[r, :] = x[indices[r], :]. Covers window partition/reverse, cyclic
// shifts, patch merge/expand rearrangements and bias-table lookups.
template <typename T>
Var<T> gather_rows(const Var<T>& x, std::shared_ptr<const std::vector<index_t>> indices,
                   Shape out_shape) {
  index_t C = x->value.shape().back();
  index_t rows_in = x->value.numel() / C;
  index_t rows_out = static_cast<index_t>(indices->size());
  CROSSSEG_CHECK(shape_numel(out_shape) == rows_out * C, "gather_rows: out_shape mismatch");
  Tensor<T> out(out_shape);
  const T* px = x->value.data();
  T* po = out.data();
  for (index_t r = 0; r < rows_out; ++r) {
    index_t src = (*indices)[static_cast<std::size_t>(r)];
    CROSSSEG_CHECK(src >= 0 && src < rows_in, "gather_rows: index out of range");
    std::copy(px + src * C, px + (src + 1) * C, po + r * C);
  }
  return make_op<T>(std::move(out), {x},
                    [indices, C](Node<T>& self) {
                      T* gi = self.inputs[0]->grad.data();
                      const T* g = self.grad.data();
                      index_t rows_out = static_cast<index_t>(indices->size());
                      for (index_t r = 0; r < rows_out; ++r) {
                        index_t src = (*indices)[static_cast<std::size_t>(r)];
                        const T* gr = g + r * C;
                        T* gd = gi + src * C;
                        for (index_t c = 0; c < C; ++c) gd[c] += gr[c];
                      }
                    },
                    "gather_rows");
}

}  // namespace crossseg
