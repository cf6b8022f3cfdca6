#include "crossseg/batch.hpp"

#include <nlohmann/json.hpp>

using json = nlohmann::json;

namespace crossseg {

BatchComposer::BatchComposer(const std::vector<LabeledSample>* labeled,
                             const std::vector<UnlabeledSample>* unlabeled, index_t b_l, index_t b_u,
                             std::uint64_t seed, bool augment)
    : labeled_(labeled),
      unlabeled_(unlabeled),
      b_l_(b_l),
      b_u_(b_u),
      augment_(augment),
      shuffle_rng_(derive_seed(seed, streams::kData)),
      augment_rng_(derive_seed(seed, streams::kAugment)) {
  CROSSSEG_CHECK(labeled_ != nullptr && unlabeled_ != nullptr, "BatchComposer: null pools");
  CROSSSEG_CHECK(b_l_ >= 1, "BatchComposer: b_L must be >= 1");
  CROSSSEG_CHECK(b_u_ >= 0, "BatchComposer: b_U must be >= 0");
  CROSSSEG_CHECK(!labeled_->empty(), "BatchComposer: labeled pool is empty");
  CROSSSEG_CHECK(b_u_ == 0 || !unlabeled_->empty(),
                 "BatchComposer: b_U > 0 requires a non-empty unlabeled pool");
}

void BatchComposer::reshuffle(std::vector<index_t>& order, std::size_t pool_size) {
  order.resize(pool_size);
  for (std::size_t i = 0; i < pool_size; ++i) order[i] = static_cast<index_t>(i);
  shuffle_rng_.shuffle(order);
}

MixedBatch BatchComposer::next() {
  MixedBatch batch;
  batch.labeled.reserve(static_cast<std::size_t>(b_l_));
  batch.unlabeled.reserve(static_cast<std::size_t>(b_u_));
  for (index_t i = 0; i < b_l_; ++i) {
    if (labeled_pos_ >= labeled_order_.size()) {
      reshuffle(labeled_order_, labeled_->size());
      labeled_pos_ = 0;
    }
    const LabeledSample& s = (*labeled_)[static_cast<std::size_t>(labeled_order_[labeled_pos_++])];
    batch.labeled.push_back(augment_ ? augment_labeled(s, augment_rng_) : s);
  }
  for (index_t i = 0; i < b_u_; ++i) {
    if (unlabeled_pos_ >= unlabeled_order_.size()) {
      reshuffle(unlabeled_order_, unlabeled_->size());
      unlabeled_pos_ = 0;
    }
    batch.unlabeled.push_back((*unlabeled_)[static_cast<std::size_t>(unlabeled_order_[unlabeled_pos_++])]);
  }
  return batch;
}

std::string BatchComposer::serialize_state() const {
  json j;
  j["shuffle_rng"] = shuffle_rng_.serialize();
  j["augment_rng"] = augment_rng_.serialize();
  j["labeled_order"] = labeled_order_;
  j["unlabeled_order"] = unlabeled_order_;
  j["labeled_pos"] = labeled_pos_;
  j["unlabeled_pos"] = unlabeled_pos_;
  return j.dump();
}

void BatchComposer::restore_state(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw RuntimeError(std::string("BatchComposer::restore_state: malformed JSON: ") + e.what());
  }
  shuffle_rng_.deserialize(j.at("shuffle_rng").get<std::string>());
  augment_rng_.deserialize(j.at("augment_rng").get<std::string>());
  labeled_order_ = j.at("labeled_order").get<std::vector<index_t>>();
  unlabeled_order_ = j.at("unlabeled_order").get<std::vector<index_t>>();
  labeled_pos_ = j.at("labeled_pos").get<std::size_t>();
  unlabeled_pos_ = j.at("unlabeled_pos").get<std::size_t>();
  CROSSSEG_CHECK_RT(labeled_pos_ <= labeled_order_.size() && unlabeled_pos_ <= unlabeled_order_.size(),
                    "BatchComposer::restore_state: positions out of range");
}

Tensor<float> stack_images(const std::vector<const Image*>& images) {
  CROSSSEG_CHECK(!images.empty(), "stack_images: empty list");
  const Image& first = *images[0];
  Tensor<float> out({static_cast<index_t>(images.size()), first.dim(0), first.dim(1), first.dim(2)});
  index_t n = first.numel();
  for (std::size_t i = 0; i < images.size(); ++i) {
    CROSSSEG_CHECK(images[i]->same_shape(first), "stack_images: shape mismatch at index " << i);
    std::copy(images[i]->data(), images[i]->data() + n, out.data() + static_cast<index_t>(i) * n);
  }
  return out;
}

Tensor<std::int32_t> stack_masks(const std::vector<const Mask*>& masks) {
  CROSSSEG_CHECK(!masks.empty(), "stack_masks: empty list");
  const Mask& first = *masks[0];
  Tensor<std::int32_t> out({static_cast<index_t>(masks.size()), first.dim(0), first.dim(1)});
  index_t n = first.numel();
  for (std::size_t i = 0; i < masks.size(); ++i) {
    CROSSSEG_CHECK(masks[i]->same_shape(first), "stack_masks: shape mismatch at index " << i);
    std::copy(masks[i]->data(), masks[i]->data() + n, out.data() + static_cast<index_t>(i) * n);
  }
  return out;
}

}  // namespace crossseg
