#pragma once

#include <string>
#include <vector>

#include "crossseg/image_ops.hpp"

namespace crossseg {

// 2|P∩G| / (|P|+|G|) on the class-cls binarizations; both empty -> 1, one
// empty -> 0.
double dsc(const Mask& pred, const Mask& gt, int cls);

// Symmetric Hausdorff distance between class-cls region boundaries, in pixels.
// Boundary = region pixels with at least one 4-neighbor outside the region
// (the image border counts as outside). Degenerate cases set *flagged: one
// region empty -> image diagonal, both empty -> 0.
double hausdorff_distance(const Mask& pred, const Mask& gt, int cls, bool* flagged = nullptr);

// Robust variant: max over both directions of the 95th percentile (linear
// interpolation) of boundary-to-boundary distances. Same degenerate-case
// conventions as hausdorff_distance.
double hausdorff_distance_95(const Mask& pred, const Mask& gt, int cls, bool* flagged = nullptr);

struct EvalRow {
  std::string id;
  double dsc_class1 = 0.0;
  double dsc_class2 = 0.0;
  double hd_class1 = 0.0;
  double hd_class2 = 0.0;
  double infer_ms = 0.0;
};

struct EvalResult {
  std::vector<EvalRow> per_sample;
  double mean_dsc = 0.0;       // over both classes and all samples
  double mean_hd = 0.0;        // idem
  double mean_infer_ms = 0.0;  // forward wall time per image
  std::vector<std::string> flags;
};

EvalResult aggregate_eval(std::vector<EvalRow> rows, std::vector<std::string> flags);

void write_eval_json(const std::string& path, const EvalResult& r);
// One row per sample plus a trailing "mean" row.
void write_eval_csv(const std::string& path, const EvalResult& r);

}  // namespace crossseg
