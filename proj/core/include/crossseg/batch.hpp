#pragma once

#include "crossseg/augment.hpp"
#include "crossseg/data.hpp"

namespace crossseg {

struct MixedBatch {
  std::vector<LabeledSample> labeled;
  std::vector<UnlabeledSample> unlabeled;
};

// Infinite deterministic batch stream: both pools are reshuffled per epoch on
// their own RNG stream and cycle when exhausted; labeled samples pass through
// the augmentation pipeline (unlabeled never do). State round-trips through a
// JSON string so a resumed run continues the exact same sequence.
class BatchComposer {
 public:
  // Pools are referenced, not copied; they must outlive the composer.
  BatchComposer(const std::vector<LabeledSample>* labeled, const std::vector<UnlabeledSample>* unlabeled,
                index_t b_l, index_t b_u, std::uint64_t seed, bool augment = true);

  MixedBatch next();

  index_t labeled_batch_size() const { return b_l_; }
  index_t unlabeled_batch_size() const { return b_u_; }

  std::string serialize_state() const;
  void restore_state(const std::string& json_text);

 private:
  void reshuffle(std::vector<index_t>& order, std::size_t pool_size);

  const std::vector<LabeledSample>* labeled_;
  const std::vector<UnlabeledSample>* unlabeled_;
  index_t b_l_, b_u_;
  bool augment_;
  Rng shuffle_rng_;
  Rng augment_rng_;
  std::vector<index_t> labeled_order_, unlabeled_order_;
  std::size_t labeled_pos_ = 0, unlabeled_pos_ = 0;
};

// Stacks sample images into one [N,3,H,W] tensor; shapes must agree.
Tensor<float> stack_images(const std::vector<const Image*>& images);
// Stacks masks into [N,H,W].
Tensor<std::int32_t> stack_masks(const std::vector<const Mask*>& masks);

}  // namespace crossseg
