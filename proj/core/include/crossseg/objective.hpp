#pragma once

#include "crossseg/losses.hpp"
#include "crossseg/net.hpp"

namespace crossseg {

template <typename T>
struct ObjectiveResult {
  Var<T> total;      // scalar graph root: (sup1+sup2) + lambda*(semi1+semi2) + contra
  LossReport report;  // the same terms as plain numbers
};

// One training objective evaluation. Labeled images occupy the first rows of
// the joint batch so normalization layers see the full mixed batch, matching
// the row convention of contrastive_loss. Pseudo-labels are taken from raw
// logit values, so no gradient reaches the network that produced them.
// unlabeled_images may have zero rows; semi terms are then exactly 0.
template <typename T>
ObjectiveResult<T> build_objective(Network<T>& net1, Network<T>& net2, const Tensor<T>& labeled_images,
                                   const MaskBatch& labeled_masks, const Tensor<T>& unlabeled_images,
                                   double lambda_t, const ContrastiveConfig& contrastive) {
  CROSSSEG_CHECK(labeled_images.ndim() == 4 && labeled_images.dim(0) >= 1,
                 "build_objective: need at least one labeled image");
  index_t bl = labeled_images.dim(0);
  index_t bu = unlabeled_images.numel() == 0 ? 0 : unlabeled_images.dim(0);

  Tensor<T> joint;
  if (bu == 0) {
    joint = labeled_images;
  } else {
    CROSSSEG_CHECK(unlabeled_images.ndim() == 4 && unlabeled_images.dim(1) == labeled_images.dim(1) &&
                       unlabeled_images.dim(2) == labeled_images.dim(2) &&
                       unlabeled_images.dim(3) == labeled_images.dim(3),
                   "build_objective: labeled/unlabeled image shape mismatch");
    joint = Tensor<T>({bl + bu, labeled_images.dim(1), labeled_images.dim(2), labeled_images.dim(3)});
    std::copy(labeled_images.data(), labeled_images.data() + labeled_images.numel(), joint.data());
    std::copy(unlabeled_images.data(), unlabeled_images.data() + unlabeled_images.numel(),
              joint.data() + labeled_images.numel());
  }

  bool want_repr = contrastive.enabled;
  auto out1 = net1.forward(joint, want_repr);
  auto out2 = net2.forward(joint, want_repr);

  auto logits1_l = slice_axis0(out1.logits, 0, bl);
  auto logits2_l = slice_axis0(out2.logits, 0, bl);
  auto sup1 = supervised_loss(logits1_l, labeled_masks);
  auto sup2 = supervised_loss(logits2_l, labeled_masks);

  Var<T> semi1, semi2;
  if (bu > 0) {
    auto logits1_u = slice_axis0(out1.logits, bl, bu);
    auto logits2_u = slice_axis0(out2.logits, bl, bu);
    MaskBatch pseudo1 = pseudo_label(logits1_u->value);
    MaskBatch pseudo2 = pseudo_label(logits2_u->value);
    semi1 = semi_supervised_loss(logits1_u, pseudo2);
    semi2 = semi_supervised_loss(logits2_u, pseudo1);
  } else {
    semi1 = make_constant(Tensor<T>::scalar(T(0)));
    semi2 = make_constant(Tensor<T>::scalar(T(0)));
  }

  Var<T> contra;
  if (contrastive.enabled) {
    contra = contrastive_loss(out1.representation, out2.representation, bl, bu, contrastive);
  } else {
    contra = make_constant(Tensor<T>::scalar(T(0)));
  }

  ObjectiveResult<T> r;
  r.total = add(add(sup1, sup2), add(scale(add(semi1, semi2), static_cast<T>(lambda_t)), contra));
  r.report = total_loss(scalar_value(sup1), scalar_value(sup2), scalar_value(semi1), scalar_value(semi2),
                        scalar_value(contra), lambda_t);
  return r;
}

}  // namespace crossseg
