#pragma once

#include "crossseg/data.hpp"
#include "crossseg/metrics.hpp"
#include "crossseg/net.hpp"

namespace crossseg {

// Resizes to (net_h, net_w), runs one forward in whatever mode the network is
// in, and returns the per-pixel argmax at network resolution. infer_ms, when
// given, receives the forward wall time (resizing and argmax excluded).
Mask predict_mask(Network<float>& net, const Image& image, index_t net_h, index_t net_w,
                  double* infer_ms = nullptr);

// Per-sample class-1/class-2 DSC and Hausdorff at network resolution (ground
// truth downsampled with nearest-neighbor), plus forward timing. Degenerate
// Hausdorff cases are listed in flags. Evaluation mode is enforced for the
// duration of the call and the previous mode restored. use_hd95 swaps the
// boundary metric for its 95th-percentile variant.
EvalResult evaluate_dataset(Network<float>& net, const std::vector<LabeledSample>& samples, index_t net_h,
                            index_t net_w, bool use_hd95 = false);

// Mean foreground DSC of each network over the validation set, in evaluation
// mode; parameters and training-mode flags are left untouched.
std::pair<double, double> validate_models(Network<float>& net1, Network<float>& net2,
                                          const std::vector<LabeledSample>& val, index_t net_h,
                                          index_t net_w);

}  // namespace crossseg
