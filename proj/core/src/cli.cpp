#include "crossseg/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "crossseg/eval.hpp"
#include "crossseg/png_io.hpp"
#include "crossseg/train.hpp"

namespace fs = std::filesystem;

namespace crossseg {

namespace {

// CLI11's vector overload consumes arguments back to front.
void parse_reversed(CLI::App& app, std::vector<std::string> args) {
  std::reverse(args.begin(), args.end());
  app.parse(args);
}

// Shared outcome mapping: CLI11 help/parse exceptions and our two error
// categories onto the 0/1/2 exit contract.
template <typename Fn>
CommandResult run_command(CLI::App& app, const std::vector<std::string>& args, Fn&& body) {
  try {
    parse_reversed(app, args);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return {0, "help", {}};
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return {2, e.what(), {}};
  }
  try {
    return body();
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return {2, e.what(), {}};
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return {1, e.what(), {}};
  }
}

std::pair<int, int> parse_size(const std::string& s) {
  std::size_t x = s.find('x');
  CROSSSEG_CHECK(x != std::string::npos && x > 0 && x + 1 < s.size(),
                 "--size must look like HxW, got '" << s << "'");
  try {
    std::size_t p1 = 0, p2 = 0;
    int h = std::stoi(s.substr(0, x), &p1);
    int w = std::stoi(s.substr(x + 1), &p2);
    CROSSSEG_CHECK(p1 == x && p2 == s.size() - x - 1, "--size must look like HxW, got '" << s << "'");
    return {h, w};
  } catch (const ValidationError&) {
    throw;
  } catch (...) {
    throw ValidationError("--size must look like HxW, got '" + s + "'");
  }
}

}  // namespace

CommandResult cmd_synthgen(const std::vector<std::string>& args) {
  CLI::App app{"Generate a synthetic ultrasound-like segmentation dataset"};
  app.name("crossseg synthgen");
  std::string out, size = "64x64";
  int num_labeled = 0, num_unlabeled = 0, num_val = 0;
  std::uint64_t seed = 0;
  double noise_sigma = 0.05;
  app.add_option("--out", out, "Output dataset directory")->required();
  app.add_option("--num-labeled", num_labeled, "Labeled training images")->capture_default_str();
  app.add_option("--num-unlabeled", num_unlabeled, "Unlabeled training images")->capture_default_str();
  app.add_option("--num-val", num_val, "Validation images")->capture_default_str();
  app.add_option("--size", size, "Image size HxW; both divisible by 32")->capture_default_str();
  app.add_option("--seed", seed, "Generation seed")->capture_default_str();
  app.add_option("--noise-sigma", noise_sigma, "Background speckle sigma")->capture_default_str();

  return run_command(app, args, [&]() -> CommandResult {
    SyntheticConfig cfg;
    cfg.num_labeled = num_labeled;
    cfg.num_unlabeled = num_unlabeled;
    cfg.num_val = num_val;
    std::tie(cfg.height, cfg.width) = parse_size(size);
    cfg.seed = seed;
    cfg.noise_sigma = noise_sigma;
    cfg.validate();

    DatasetManifest m = generate_synthetic_dataset(cfg, out);
    std::ostringstream s;
    s << "wrote " << m.labeled.size() << " labeled, " << m.unlabeled.size() << " unlabeled, "
      << m.val.size() << " val images (" << cfg.height << "x" << cfg.width << ") to " << out;
    std::cout << s.str() << "\n";
    return {0, s.str(), {out + "/manifest.json"}};
  });
}

CommandResult cmd_train(const std::vector<std::string>& args) {
  CLI::App app{"Train the cross-teaching segmentation pair"};
  app.name("crossseg train");
  std::string config_path, resume;
  std::int64_t max_iters_override = -1;
  std::int64_t seed_override = -1;
  app.add_option("--config", config_path, "Training config file (key = value lines)")->required();
  app.add_option("--resume", resume, "Checkpoint to resume from");
  app.add_option("--max-iters", max_iters_override, "Override optimizer.max_iters");
  app.add_option("--seed", seed_override, "Override seed");

  return run_command(app, args, [&]() -> CommandResult {
    TrainConfig cfg = parse_train_config_file(config_path);
    if (max_iters_override >= 0) cfg.optimizer.max_iters = max_iters_override;
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);

    Trainer trainer(cfg);
    if (!resume.empty()) trainer.restore_from(resume);
    CheckpointRecord best = trainer.run();

    std::ostringstream s;
    if (best.iter >= 0) {
      s << "trained to iter " << trainer.iter() << "; best " << best.chosen << " @ iter " << best.iter
        << " (val dsc net1 " << best.val_dsc1 << ", net2 " << best.val_dsc2 << ")";
    } else {
      s << "trained to iter " << trainer.iter() << "; no validation performed";
    }
    std::cout << s.str() << "\n";
    CommandResult r{0, s.str(), {trainer.loss_log_path()}};
    if (fs::exists(trainer.checkpoint_path())) r.artifact_paths.push_back(trainer.checkpoint_path());
    return r;
  });
}

CommandResult cmd_evaluate(const std::vector<std::string>& args) {
  CLI::App app{"Evaluate the best network of a checkpoint on a dataset split"};
  app.name("crossseg evaluate");
  std::string ckpt, data, split = "val", out_json, out_csv;
  bool hd95 = false;
  app.add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  app.add_option("--data", data, "Dataset directory")->required();
  app.add_option("--split", split, "Dataset split to score")
      ->check(CLI::IsMember({"val", "test"}))
      ->capture_default_str();
  app.add_option("--out", out_json, "Metrics JSON output path")->required();
  app.add_option("--csv", out_csv, "Also write a per-sample CSV table");
  app.add_flag("--hd95", hd95, "Report 95th-percentile Hausdorff instead of the maximum");

  return run_command(app, args, [&]() -> CommandResult {
    Checkpoint ck = load_checkpoint(ckpt);
    auto net = best_network_from_checkpoint(ck);

    Dataset ds = load_dataset(data);
    CROSSSEG_CHECK_RT(split != "test",
                      "dataset '" << data << "' has no test split (synthetic datasets ship "
                                     "labeled/unlabeled/val only)");
    CROSSSEG_CHECK_RT(!ds.val.empty(), "dataset '" << data << "' has an empty val split");

    EvalResult r =
        evaluate_dataset(*net, ds.val, ck.config.image_h, ck.config.image_w, hd95);
    write_eval_json(out_json, r);
    CommandResult res;
    res.artifact_paths.push_back(out_json);
    if (!out_csv.empty()) {
      write_eval_csv(out_csv, r);
      res.artifact_paths.push_back(out_csv);
    }
    std::ostringstream s;
    s << "evaluated " << r.per_sample.size() << " samples with " << ck.best.network << ": mean_dsc "
      << r.mean_dsc << ", mean_hd " << r.mean_hd << ", mean_infer_ms " << r.mean_infer_ms;
    std::cout << s.str() << "\n";
    res.summary = s.str();
    return res;
  });
}

CommandResult cmd_predict(const std::vector<std::string>& args) {
  CLI::App app{"Segment a directory of PNG images with a trained checkpoint"};
  app.name("crossseg predict");
  std::string ckpt, images_dir, out_dir;
  bool overlay = false;
  app.add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  app.add_option("--images", images_dir, "Directory of input PNG images")->required();
  app.add_option("--out", out_dir, "Output directory for mask PNGs")->required();
  app.add_flag("--overlay", overlay, "Also write RGB overlays (class 1 red, class 2 blue, alpha 0.4)");

  return run_command(app, args, [&]() -> CommandResult {
    Checkpoint ck = load_checkpoint(ckpt);
    auto net = best_network_from_checkpoint(ck);

    CROSSSEG_CHECK_RT(fs::is_directory(images_dir), "predict: '" << images_dir << "' is not a directory");
    std::vector<std::string> inputs;
    for (const auto& e : fs::directory_iterator(images_dir))
      if (e.is_regular_file() && e.path().extension() == ".png") inputs.push_back(e.path().string());
    std::sort(inputs.begin(), inputs.end());
    CROSSSEG_CHECK_RT(!inputs.empty(), "predict: no .png files in '" << images_dir << "'");

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    CROSSSEG_CHECK_RT(!ec, "predict: cannot create '" << out_dir << "': " << ec.message());

    CommandResult res;
    int skipped = 0;
    for (const auto& in_path : inputs) {
      Image img;
      try {
        img = image_from_png(read_png(in_path));
      } catch (const std::exception& e) {
        std::cerr << "warning: skipping unreadable image '" << in_path << "': " << e.what() << "\n";
        ++skipped;
        continue;
      }
      Mask pred = predict_mask(*net, img, ck.config.image_h, ck.config.image_w);
      Mask full = resize_nearest(pred, img.dim(1), img.dim(2));

      std::string stem = fs::path(in_path).stem().string();
      std::string mask_path = out_dir + "/" + stem + ".png";
      write_png(mask_path, mask_to_png(full));
      res.artifact_paths.push_back(mask_path);

      if (overlay) {
        Image blend = img;
        const float kAlpha = 0.4f;
        index_t H = img.dim(1), W = img.dim(2);
        for (index_t y = 0; y < H; ++y)
          for (index_t x = 0; x < W; ++x) {
            int cls = full.at(y, x);
            if (cls == 0) continue;
            float r = cls == 1 ? 1.0f : 0.0f;
            float b = cls == 2 ? 1.0f : 0.0f;
            blend.at(0, y, x) = (1 - kAlpha) * blend.at(0, y, x) + kAlpha * r;
            blend.at(1, y, x) = (1 - kAlpha) * blend.at(1, y, x);
            blend.at(2, y, x) = (1 - kAlpha) * blend.at(2, y, x) + kAlpha * b;
          }
        std::string overlay_path = out_dir + "/" + stem + "_overlay.png";
        write_png(overlay_path, image_to_png(blend));
        res.artifact_paths.push_back(overlay_path);
      }
    }

    std::ostringstream s;
    s << "wrote " << res.artifact_paths.size() << " files to " << out_dir;
    if (skipped > 0) s << " (" << skipped << " inputs skipped)";
    std::cout << s.str() << "\n";
    res.summary = s.str();
    res.exit_code = skipped > 0 ? 1 : 0;
    return res;
  });
}

int run_cli(int argc, const char* const* argv) {
  const std::string usage =
      "usage: crossseg <command> [options]\n"
      "\n"
      "commands:\n"
      "  synthgen   generate a synthetic dataset\n"
      "  train      train the dual-network segmentation model\n"
      "  evaluate   score a checkpoint on a dataset split\n"
      "  predict    write segmentation masks for a directory of images\n"
      "\n"
      "run 'crossseg <command> --help' for per-command flags\n";
  if (argc < 2) {
    std::cerr << usage;
    return 2;
  }
  std::string cmd = argv[1];
  std::vector<std::string> rest(argv + 2, argv + argc);
  if (cmd == "--help" || cmd == "-h" || cmd == "help") {
    std::cout << usage;
    return 0;
  }
  if (cmd == "synthgen") return cmd_synthgen(rest).exit_code;
  if (cmd == "train") return cmd_train(rest).exit_code;
  if (cmd == "evaluate") return cmd_evaluate(rest).exit_code;
  if (cmd == "predict") return cmd_predict(rest).exit_code;
  std::cerr << "error: unknown command '" << cmd << "'\n" << usage;
  return 2;
}

}  // namespace crossseg
