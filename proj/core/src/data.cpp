#include "crossseg/data.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "crossseg/png_io.hpp"
#include "crossseg/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace crossseg {

void save_manifest(const std::string& path, const DatasetManifest& m) {
  json j;
  j["labeled"] = m.labeled;
  j["unlabeled"] = m.unlabeled;
  j["val"] = m.val;
  std::ofstream out(path);
  CROSSSEG_CHECK_RT(out.good(), "save_manifest: cannot write '" << path << "'");
  out << j.dump(2) << "\n";
  CROSSSEG_CHECK_RT(out.good(), "save_manifest: write failed for '" << path << "'");
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  CROSSSEG_CHECK_RT(in.good(), "load_manifest: cannot open '" << path << "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw RuntimeError("load_manifest: malformed JSON in '" + path + "': " + e.what());
  }
  DatasetManifest m;
  auto read_split = [&](const char* key, std::vector<std::string>& dst) {
    CROSSSEG_CHECK_RT(j.contains(key) && j[key].is_array(),
                      "load_manifest: '" << path << "' missing array field '" << key << "'");
    dst = j[key].get<std::vector<std::string>>();
  };
  read_split("labeled", m.labeled);
  read_split("unlabeled", m.unlabeled);
  read_split("val", m.val);
  return m;
}

namespace {

struct EllipseSpec {
  double cy, cx, ry, rx;  // pixels
  bool inside(double y, double x) const {
    double dy = (y - cy) / ry, dx = (x - cx) / rx;
    return dy * dy + dx * dx <= 1.0;
  }
};

// Paints `label` where `region` holds and the mask is still background;
// returns the painted pixel count.
template <typename Region>
index_t paint(Mask& mask, std::int32_t label, Region&& region) {
  index_t n = 0;
  for (index_t y = 0; y < mask.dim(0); ++y)
    for (index_t x = 0; x < mask.dim(1); ++x)
      if (mask.at(y, x) == 0 && region(y, x)) {
        mask.at(y, x) = label;
        ++n;
      }
  return n;
}

}  // namespace

void synthesize_sample(const SyntheticConfig& cfg, std::uint64_t id_seed, Image* image, Mask* mask) {
  cfg.validate();
  index_t H = cfg.height, W = cfg.width;
  Rng rng(id_seed);

  Mask m({H, W});
  for (int attempt = 0;; ++attempt) {
    CROSSSEG_CHECK_RT(attempt < 100, "synthesize_sample: failed to place foreground regions at "
                                         << H << "x" << W);
    m.fill(0);

    // Crescent (class 1) in the upper half: ellipse minus an ellipse shifted up.
    EllipseSpec c1;
    c1.ry = std::max(rng.uniform(0.10, 0.14) * H, 4.0);
    c1.rx = std::max(rng.uniform(0.22, 0.30) * W, 8.0);
    c1.cy = rng.uniform(0.28, 0.36) * H;
    c1.cx = rng.uniform(0.42, 0.58) * W;
    EllipseSpec cut = c1;
    cut.cy = c1.cy - rng.uniform(0.9, 1.3) * c1.ry;
    cut.ry = c1.ry * rng.uniform(1.0, 1.2);

    // Ellipse (class 2) in the lower half; the center bands keep it disjoint
    // from the crescent by construction.
    EllipseSpec e2;
    e2.ry = std::max(rng.uniform(0.06, 0.11) * H, 4.0);
    e2.rx = std::max(rng.uniform(0.20, 0.28) * W, 8.0);
    e2.cy = rng.uniform(0.62, 0.70) * H;
    e2.cx = rng.uniform(0.42, 0.58) * W;

    index_t n1 = paint(m, 1, [&](index_t y, index_t x) {
      return c1.inside(y, x) && !cut.inside(y, x);
    });
    index_t n2 = paint(m, 2, [&](index_t y, index_t x) { return e2.inside(y, x); });
    if (n1 >= 50 && n2 >= 50) break;
  }

  // Speckled background, brighter foreground, then blur for soft boundaries.
  Image gray({1, H, W});
  for (index_t y = 0; y < H; ++y)
    for (index_t x = 0; x < W; ++x) {
      double v = 0.2 + rng.normal(0.0, cfg.noise_sigma);
      if (m.at(y, x) != 0) v += 0.4;
      gray.at(0, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  gray = clamp01(gaussian_blur(gray, 1.0));

  Image img({3, H, W});
  for (index_t c = 0; c < 3; ++c)
    for (index_t y = 0; y < H; ++y)
      for (index_t x = 0; x < W; ++x) img.at(c, y, x) = gray.at(0, y, x);

  *image = std::move(img);
  *mask = std::move(m);
}

DatasetManifest generate_synthetic_dataset(const SyntheticConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "images", ec);
  CROSSSEG_CHECK_RT(!ec, "generate_synthetic_dataset: cannot create '" << out_dir << "': " << ec.message());
  fs::create_directories(fs::path(out_dir) / "masks", ec);
  CROSSSEG_CHECK_RT(!ec, "generate_synthetic_dataset: cannot create '" << out_dir << "': " << ec.message());

  std::uint64_t base = derive_seed(cfg.seed, streams::kSynthetic);
  DatasetManifest manifest;
  std::uint64_t index = 0;

  auto emit = [&](const std::string& id, bool with_mask) {
    Image image;
    Mask mask;
    synthesize_sample(cfg, derive_seed(base, index++), &image, &mask);
    write_png((fs::path(out_dir) / "images" / (id + ".png")).string(), image_to_png(image));
    if (with_mask) write_png((fs::path(out_dir) / "masks" / (id + ".png")).string(), mask_to_png(mask));
  };

  char buf[32];
  for (int i = 0; i < cfg.num_labeled; ++i) {
    std::snprintf(buf, sizeof buf, "lab_%04d", i);
    manifest.labeled.emplace_back(buf);
    emit(buf, true);
  }
  for (int i = 0; i < cfg.num_unlabeled; ++i) {
    std::snprintf(buf, sizeof buf, "unl_%04d", i);
    manifest.unlabeled.emplace_back(buf);
    emit(buf, false);
  }
  for (int i = 0; i < cfg.num_val; ++i) {
    std::snprintf(buf, sizeof buf, "val_%04d", i);
    manifest.val.emplace_back(buf);
    emit(buf, true);
  }

  save_manifest((fs::path(out_dir) / "manifest.json").string(), manifest);
  return manifest;
}

namespace {

Image load_image_checked(const fs::path& path) {
  CROSSSEG_CHECK_RT(fs::exists(path), "load_dataset: missing image '" << path.string() << "'");
  return image_from_png(read_png(path.string()));
}

Mask load_mask_checked(const fs::path& path, const Image& image) {
  CROSSSEG_CHECK_RT(fs::exists(path), "load_dataset: missing mask '" << path.string() << "'");
  Mask mask = mask_from_png(read_png(path.string()));
  for (index_t i = 0; i < mask.numel(); ++i)
    CROSSSEG_CHECK(mask[i] >= 0 && mask[i] <= 2, "load_dataset: mask '"
                                                     << path.string() << "' contains out-of-range value "
                                                     << mask[i] << " (labels must be 0, 1 or 2)");
  CROSSSEG_CHECK(mask.dim(0) == image.dim(1) && mask.dim(1) == image.dim(2),
                 "load_dataset: image/mask shape mismatch for '" << path.string() << "'");
  return mask;
}

}  // namespace

Dataset load_dataset(const std::string& dir) {
  fs::path root(dir);
  CROSSSEG_CHECK_RT(fs::is_directory(root), "load_dataset: '" << dir << "' is not a directory");
  fs::path manifest_path = root / "manifest.json";

  DatasetManifest m;
  if (fs::exists(manifest_path)) m = load_manifest(manifest_path.string());
  std::sort(m.labeled.begin(), m.labeled.end());
  std::sort(m.unlabeled.begin(), m.unlabeled.end());
  std::sort(m.val.begin(), m.val.end());

  Dataset ds;
  for (const auto& id : m.labeled) {
    LabeledSample s;
    s.id = id;
    s.image = load_image_checked(root / "images" / (id + ".png"));
    s.mask = load_mask_checked(root / "masks" / (id + ".png"), s.image);
    ds.labeled.push_back(std::move(s));
  }
  for (const auto& id : m.unlabeled) {
    UnlabeledSample s;
    s.id = id;
    s.image = load_image_checked(root / "images" / (id + ".png"));
    ds.unlabeled.push_back(std::move(s));
  }
  for (const auto& id : m.val) {
    LabeledSample s;
    s.id = id;
    s.image = load_image_checked(root / "images" / (id + ".png"));
    s.mask = load_mask_checked(root / "masks" / (id + ".png"), s.image);
    ds.val.push_back(std::move(s));
  }
  return ds;
}

}  // namespace crossseg
