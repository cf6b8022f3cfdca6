#include "crossseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

using json = nlohmann::json;

namespace crossseg {

double dsc(const Mask& pred, const Mask& gt, int cls) {
  CROSSSEG_CHECK(pred.same_shape(gt), "dsc: shape mismatch " << shape_str(pred.shape()) << " vs "
                                                             << shape_str(gt.shape()));
  index_t np = 0, ng = 0, ni = 0;
  for (index_t i = 0; i < pred.numel(); ++i) {
    bool p = pred[i] == cls, g = gt[i] == cls;
    np += p;
    ng += g;
    ni += p && g;
  }
  if (np == 0 && ng == 0) return 1.0;
  if (np == 0 || ng == 0) return 0.0;
  return 2.0 * static_cast<double>(ni) / static_cast<double>(np + ng);
}

namespace {

// Region pixels with a 4-neighbor outside the region; the border is outside.
std::vector<std::pair<index_t, index_t>> boundary_pixels(const Mask& m, int cls) {
  index_t H = m.dim(0), W = m.dim(1);
  auto in_region = [&](index_t y, index_t x) {
    return y >= 0 && y < H && x >= 0 && x < W && m.at(y, x) == cls;
  };
  std::vector<std::pair<index_t, index_t>> out;
  for (index_t y = 0; y < H; ++y)
    for (index_t x = 0; x < W; ++x)
      if (m.at(y, x) == cls && (!in_region(y - 1, x) || !in_region(y + 1, x) || !in_region(y, x - 1) ||
                                !in_region(y, x + 1)))
        out.emplace_back(y, x);
  return out;
}

constexpr double kInf = std::numeric_limits<double>::infinity();
// Empty cells carry a large finite height instead of infinity: parabola
// intersections subtract heights, and inf - inf would poison the envelope
// with NaNs. 1e20 dwarfs any real squared distance (< 2*4096^2) without that.
constexpr double kBig = 1e20;

// Exact 1-d squared distance transform (lower envelope of parabolas).
void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<index_t>& v,
            std::vector<double>& z) {
  index_t n = static_cast<index_t>(f.size());
  d.assign(f.size(), 0.0);
  v.assign(f.size(), 0);
  z.assign(f.size() + 1, 0.0);
  index_t k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (index_t q = 1; q < n; ++q) {
    double s;
    while (true) {
      index_t p = v[static_cast<std::size_t>(k)];
      s = ((f[static_cast<std::size_t>(q)] + q * q) - (f[static_cast<std::size_t>(p)] + p * p)) /
          (2.0 * q - 2.0 * p);
      if (s <= z[static_cast<std::size_t>(k)]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k) + 1] = kInf;
  }
  k = 0;
  for (index_t q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(k) + 1] < q) ++k;
    index_t p = v[static_cast<std::size_t>(k)];
    d[static_cast<std::size_t>(q)] = (q - p) * static_cast<double>(q - p) + f[static_cast<std::size_t>(p)];
  }
}

// Squared Euclidean distance from every grid cell to the nearest seed.
std::vector<double> edt_2d(index_t H, index_t W, const std::vector<std::pair<index_t, index_t>>& seeds) {
  std::vector<double> grid(static_cast<std::size_t>(H * W), kBig);
  for (auto [y, x] : seeds) grid[static_cast<std::size_t>(y * W + x)] = 0.0;

  std::vector<double> f(static_cast<std::size_t>(std::max(H, W))), d;
  std::vector<index_t> v;
  std::vector<double> z;
  for (index_t x = 0; x < W; ++x) {
    f.resize(static_cast<std::size_t>(H));
    for (index_t y = 0; y < H; ++y) f[static_cast<std::size_t>(y)] = grid[static_cast<std::size_t>(y * W + x)];
    edt_1d(f, d, v, z);
    for (index_t y = 0; y < H; ++y) grid[static_cast<std::size_t>(y * W + x)] = d[static_cast<std::size_t>(y)];
  }
  for (index_t y = 0; y < H; ++y) {
    f.resize(static_cast<std::size_t>(W));
    for (index_t x = 0; x < W; ++x) f[static_cast<std::size_t>(x)] = grid[static_cast<std::size_t>(y * W + x)];
    edt_1d(f, d, v, z);
    for (index_t x = 0; x < W; ++x) grid[static_cast<std::size_t>(y * W + x)] = d[static_cast<std::size_t>(x)];
  }
  return grid;
}

double directed_max(const std::vector<std::pair<index_t, index_t>>& from, const std::vector<double>& edt_sq,
                    index_t W) {
  double worst = 0.0;
  for (auto [y, x] : from) worst = std::max(worst, edt_sq[static_cast<std::size_t>(y * W + x)]);
  return std::sqrt(worst);
}

double directed_percentile95(const std::vector<std::pair<index_t, index_t>>& from,
                             const std::vector<double>& edt_sq, index_t W) {
  std::vector<double> d;
  d.reserve(from.size());
  for (auto [y, x] : from) d.push_back(std::sqrt(edt_sq[static_cast<std::size_t>(y * W + x)]));
  std::sort(d.begin(), d.end());
  // Linear-interpolation percentile over n points: rank = 0.95 * (n - 1).
  double rank = 0.95 * static_cast<double>(d.size() - 1);
  std::size_t lo = static_cast<std::size_t>(rank);
  std::size_t hi = std::min(lo + 1, d.size() - 1);
  double frac = rank - static_cast<double>(lo);
  return d[lo] + frac * (d[hi] - d[lo]);
}

// Shared degenerate-case handling; returns true when the caller should return
// `out` directly without computing boundary distances.
bool hausdorff_trivial(const Mask& pred, const Mask& gt, int cls, bool* flagged, double* out) {
  if (flagged) *flagged = false;
  index_t H = pred.dim(0), W = pred.dim(1);
  bool p_empty = true, g_empty = true;
  for (index_t i = 0; i < pred.numel() && (p_empty || g_empty); ++i) {
    p_empty = p_empty && pred[i] != cls;
    g_empty = g_empty && gt[i] != cls;
  }
  if (p_empty && g_empty) {
    if (flagged) *flagged = true;
    *out = 0.0;
    return true;
  }
  if (p_empty || g_empty) {
    if (flagged) *flagged = true;
    *out = std::sqrt(static_cast<double>(H * H + W * W));
    return true;
  }
  return false;
}

}  // namespace

double hausdorff_distance(const Mask& pred, const Mask& gt, int cls, bool* flagged) {
  CROSSSEG_CHECK(pred.same_shape(gt), "hausdorff_distance: shape mismatch "
                                          << shape_str(pred.shape()) << " vs " << shape_str(gt.shape()));
  double trivial;
  if (hausdorff_trivial(pred, gt, cls, flagged, &trivial)) return trivial;

  index_t H = pred.dim(0), W = pred.dim(1);
  auto bp = boundary_pixels(pred, cls);
  auto bg = boundary_pixels(gt, cls);
  auto edt_g = edt_2d(H, W, bg);
  auto edt_p = edt_2d(H, W, bp);
  return std::max(directed_max(bp, edt_g, W), directed_max(bg, edt_p, W));
}

double hausdorff_distance_95(const Mask& pred, const Mask& gt, int cls, bool* flagged) {
  CROSSSEG_CHECK(pred.same_shape(gt), "hausdorff_distance_95: shape mismatch "
                                          << shape_str(pred.shape()) << " vs " << shape_str(gt.shape()));
  double trivial;
  if (hausdorff_trivial(pred, gt, cls, flagged, &trivial)) return trivial;

  index_t H = pred.dim(0), W = pred.dim(1);
  auto bp = boundary_pixels(pred, cls);
  auto bg = boundary_pixels(gt, cls);
  auto edt_g = edt_2d(H, W, bg);
  auto edt_p = edt_2d(H, W, bp);
  return std::max(directed_percentile95(bp, edt_g, W), directed_percentile95(bg, edt_p, W));
}

EvalResult aggregate_eval(std::vector<EvalRow> rows, std::vector<std::string> flags) {
  CROSSSEG_CHECK(!rows.empty(), "aggregate_eval: no samples");
  EvalResult r;
  r.per_sample = std::move(rows);
  r.flags = std::move(flags);
  double ds = 0.0, hs = 0.0, ts = 0.0;
  for (const auto& row : r.per_sample) {
    ds += row.dsc_class1 + row.dsc_class2;
    hs += row.hd_class1 + row.hd_class2;
    ts += row.infer_ms;
  }
  double n = static_cast<double>(r.per_sample.size());
  r.mean_dsc = ds / (2.0 * n);
  r.mean_hd = hs / (2.0 * n);
  r.mean_infer_ms = ts / n;
  return r;
}

namespace {

json row_json(const EvalRow& row) {
  return json{{"id", row.id},           {"dsc_class1", row.dsc_class1}, {"dsc_class2", row.dsc_class2},
              {"hd_class1", row.hd_class1}, {"hd_class2", row.hd_class2},   {"infer_ms", row.infer_ms}};
}

}  // namespace

void write_eval_json(const std::string& path, const EvalResult& r) {
  json j;
  j["per_sample"] = json::array();
  for (const auto& row : r.per_sample) j["per_sample"].push_back(row_json(row));
  j["aggregate"] = {{"mean_dsc", r.mean_dsc}, {"mean_hd", r.mean_hd}, {"mean_infer_ms", r.mean_infer_ms}};
  j["flags"] = r.flags;
  std::ofstream out(path);
  CROSSSEG_CHECK_RT(out.good(), "write_eval_json: cannot write '" << path << "'");
  out << j.dump(2) << "\n";
  CROSSSEG_CHECK_RT(out.good(), "write_eval_json: write failed for '" << path << "'");
}

void write_eval_csv(const std::string& path, const EvalResult& r) {
  std::ofstream out(path);
  CROSSSEG_CHECK_RT(out.good(), "write_eval_csv: cannot write '" << path << "'");
  out << "id,dsc_class1,dsc_class2,hd_class1,hd_class2,infer_ms\n";
  out.precision(9);
  double d1 = 0.0, d2 = 0.0, h1 = 0.0, h2 = 0.0;
  for (const auto& row : r.per_sample) {
    out << row.id << ',' << row.dsc_class1 << ',' << row.dsc_class2 << ',' << row.hd_class1 << ','
        << row.hd_class2 << ',' << row.infer_ms << "\n";
    d1 += row.dsc_class1;
    d2 += row.dsc_class2;
    h1 += row.hd_class1;
    h2 += row.hd_class2;
  }
  double n = std::max<double>(1.0, static_cast<double>(r.per_sample.size()));
  out << "mean," << d1 / n << ',' << d2 / n << ',' << h1 / n << ',' << h2 / n << ',' << r.mean_infer_ms
      << "\n";
  CROSSSEG_CHECK_RT(out.good(), "write_eval_csv: write failed for '" << path << "'");
}

}  // namespace crossseg
