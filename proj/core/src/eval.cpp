#include "crossseg/eval.hpp"

#include <chrono>

#include "crossseg/losses.hpp"

namespace crossseg {

namespace {

struct EvalModeGuard {
  explicit EvalModeGuard(Network<float>& net) : net_(net), was_training_(net.is_training()) {
    net_.set_training(false);
  }
  ~EvalModeGuard() { net_.set_training(was_training_); }
  Network<float>& net_;
  bool was_training_;
};

}  // namespace

Mask predict_mask(Network<float>& net, const Image& image, index_t net_h, index_t net_w,
                  double* infer_ms) {
  Image resized = resize_bilinear(image, net_h, net_w);
  Tensor<float> batch = resized.reshaped({1, image.dim(0), net_h, net_w});

  auto t0 = std::chrono::steady_clock::now();
  auto out = net.forward(batch, false);
  auto t1 = std::chrono::steady_clock::now();
  if (infer_ms) *infer_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();

  MaskBatch labels = pseudo_label(out.logits->value);
  Mask mask({net_h, net_w});
  std::copy(labels.data(), labels.data() + labels.numel(), mask.data());
  return mask;
}

EvalResult evaluate_dataset(Network<float>& net, const std::vector<LabeledSample>& samples, index_t net_h,
                            index_t net_w, bool use_hd95) {
  CROSSSEG_CHECK(!samples.empty(), "evaluate_dataset: no samples");
  EvalModeGuard guard(net);

  auto hd = use_hd95 ? hausdorff_distance_95 : hausdorff_distance;
  std::vector<EvalRow> rows;
  std::vector<std::string> flags;
  for (const auto& s : samples) {
    EvalRow row;
    row.id = s.id;
    Mask pred = predict_mask(net, s.image, net_h, net_w, &row.infer_ms);
    Mask gt = resize_nearest(s.mask, net_h, net_w);
    row.dsc_class1 = dsc(pred, gt, 1);
    row.dsc_class2 = dsc(pred, gt, 2);
    bool f1 = false, f2 = false;
    row.hd_class1 = hd(pred, gt, 1, &f1);
    row.hd_class2 = hd(pred, gt, 2, &f2);
    if (f1) flags.push_back(s.id + ": class 1 degenerate (empty region)");
    if (f2) flags.push_back(s.id + ": class 2 degenerate (empty region)");
    rows.push_back(std::move(row));
  }
  return aggregate_eval(std::move(rows), std::move(flags));
}

std::pair<double, double> validate_models(Network<float>& net1, Network<float>& net2,
                                          const std::vector<LabeledSample>& val, index_t net_h,
                                          index_t net_w) {
  CROSSSEG_CHECK(!val.empty(), "validate_models: empty validation set");
  EvalModeGuard g1(net1), g2(net2);
  double sum1 = 0.0, sum2 = 0.0;
  for (const auto& s : val) {
    Mask gt = resize_nearest(s.mask, net_h, net_w);
    Mask p1 = predict_mask(net1, s.image, net_h, net_w);
    Mask p2 = predict_mask(net2, s.image, net_h, net_w);
    sum1 += 0.5 * (dsc(p1, gt, 1) + dsc(p1, gt, 2));
    sum2 += 0.5 * (dsc(p2, gt, 1) + dsc(p2, gt, 2));
  }
  double n = static_cast<double>(val.size());
  return {sum1 / n, sum2 / n};
}

}  // namespace crossseg
