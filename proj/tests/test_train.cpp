#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crossseg/data.hpp"
#include "crossseg/train.hpp"
#include "test_util.hpp"

using namespace crossseg;
using namespace crossseg::testutil;
namespace fs = std::filesystem;

namespace {

// One shared miniature dataset for every trainer in this file.
const std::string& shared_data_dir() {
  static TempDir td("train_data");
  static bool done = false;
  if (!done) {
    SyntheticConfig cfg;
    cfg.num_labeled = 2;
    cfg.num_unlabeled = 2;
    cfg.num_val = 2;
    cfg.height = 32;
    cfg.width = 32;
    cfg.seed = 99;
    generate_synthetic_dataset(cfg, td.path());
    done = true;
  }
  return td.path();
}

TrainConfig tiny_cfg(const std::string& out_dir) {
  TrainConfig cfg;
  cfg.optimizer.max_iters = 50;
  cfg.batch.b_l = 1;
  cfg.batch.b_u = 1;
  cfg.image_h = 32;
  cfg.image_w = 32;
  cfg.eval_every = 2;
  cfg.seed = 7;
  cfg.data_dir = shared_data_dir();
  cfg.out_dir = out_dir;
  cfg.model1.base_channels = 4;
  cfg.model1.num_stages = 2;
  cfg.model1.projection_dim = 8;
  cfg.model2.embed_dim = 8;
  cfg.model2.depths = {1};
  cfg.model2.num_heads = {2};
  cfg.model2.window_size = 2;
  cfg.model2.projection_dim = 8;
  return cfg;
}

bool params_identical(Network<float>& a, Network<float>& b) {
  if (a.parameters().size() != b.parameters().size()) return false;
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    const auto& va = a.parameters()[i].var->value;
    const auto& vb = b.parameters()[i].var->value;
    if (va.numel() != vb.numel()) return false;
    for (index_t k = 0; k < va.numel(); ++k)
      if (va[k] != vb[k]) return false;
  }
  for (std::size_t i = 0; i < a.buffers().size(); ++i) {
    const auto& ba = *a.buffers()[i].tensor;
    const auto& bb = *b.buffers()[i].tensor;
    for (index_t k = 0; k < ba.numel(); ++k)
      if (ba[k] != bb[k]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("flat config files parse every dotted key") {
  std::string text = R"(# training run
optimizer.lr0 = 0.002
optimizer.momentum = 0.8
optimizer.weight_decay = 0.0002
optimizer.max_iters = 123
optimizer.poly_power = 0.9
ramp.lambda_max = 0.05
ramp.ramp_iters = 77
contrastive.temperature = 0.1
contrastive.pairing = labeled_unlabeled_literal
contrastive.enabled = true
batch.b_L = 3
batch.b_U = 5
image_size.h = 64
image_size.w = 96
eval_every = 9
seed = 42
data_dir = /tmp/d
out_dir = /tmp/o
model1.kind = cnn_unet
model1.base_channels = 8
model1.num_stages = 3
model1.projection_dim = 16
model2.kind = windowed_transformer_unet
model2.embed_dim = 24
model2.depths = 2,2
model2.num_heads = 2,4
model2.window_size = 4
model2.projection_dim = 16
)";
  TrainConfig cfg = parse_train_config_text(text);
  CHECK(cfg.optimizer.lr0 == 0.002);
  CHECK(cfg.optimizer.max_iters == 123);
  CHECK(cfg.ramp.ramp_iters == 77);
  CHECK(cfg.contrastive.pairing == ContrastivePairing::kLabeledUnlabeledLiteral);
  CHECK(cfg.batch.b_l == 3);
  CHECK(cfg.batch.b_u == 5);
  CHECK(cfg.image_w == 96);
  CHECK(cfg.seed == 42);
  CHECK(cfg.model1.num_stages == 3);
  REQUIRE(cfg.model2.depths.size() == 2);
  CHECK(cfg.model2.depths[1] == 2);
  CHECK(cfg.model2.num_heads[1] == 4);
  CHECK(cfg.model2.window_size == 4);
}

TEST_CASE("config parser reports unknown keys and bad values with line numbers") {
  try {
    parse_train_config_text("optimizer.lr0 = 0.001\nnot_a_key = 5\n");
    FAIL("expected an error");
  } catch (const std::exception& e) {
    std::string msg = e.what();
    CHECK(msg.find("not_a_key") != std::string::npos);
    CHECK(msg.find("2") != std::string::npos);
  }
  CHECK_THROWS(parse_train_config_text("optimizer.max_iters = soon\n"));
  CHECK_THROWS(parse_train_config_text("optimizer.lr0\n"));  // no '='
}

TEST_CASE("config files round-trip through the JSON form") {
  TrainConfig cfg = tiny_cfg("/tmp/x");
  std::string j1 = train_config_to_json(cfg);
  TrainConfig back = train_config_from_json(j1);
  CHECK(train_config_to_json(back) == j1);
}

TEST_CASE("parse_train_config_file reads from disk") {
  TempDir td("cfgfile");
  std::ofstream(td.sub("run.cfg")) << "seed = 12\ndata_dir = a\nout_dir = b\n";
  TrainConfig cfg = parse_train_config_file(td.sub("run.cfg"));
  CHECK(cfg.seed == 12);
  CHECK(cfg.data_dir == "a");
  CHECK_THROWS(parse_train_config_file(td.sub("missing.cfg")));
}

TEST_CASE("poly learning-rate schedule oracle") {
  OptimizerConfig cfg;  // lr0 0.001, power 0.9, max 30000
  CHECK(lr_schedule(0, cfg) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(lr_schedule(15000, cfg) == doctest::Approx(0.001 * std::pow(0.5, 0.9)).epsilon(1e-12));
  CHECK(lr_schedule(15000, cfg) == doctest::Approx(5.359e-4).epsilon(1e-3));
  CHECK(lr_schedule(30000, cfg) == 0.0);
  CHECK_THROWS(lr_schedule(30001, cfg));
  CHECK_THROWS(lr_schedule(-1, cfg));
  double prev = 1;
  for (std::int64_t t = 0; t <= 30000; t += 1000) {
    double v = lr_schedule(t, cfg);
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("trainer steps advance the counter and report finite losses") {
  TempDir out("train_smoke");
  Trainer tr(tiny_cfg(out.path()));
  CHECK(tr.iter() == 0);
  for (int i = 0; i < 3; ++i) {
    LossReport r = tr.step_once(tr.composer().next());
    CHECK(std::isfinite(r.total));
    CHECK(r.sup1 >= 0.0);
    CHECK(r.lambda_t == doctest::Approx(ramp_up_lambda(i, tr.config().ramp)).epsilon(1e-12));
  }
  CHECK(tr.iter() == 3);

  auto [d1, d2] = tr.validate_now();
  CHECK(d1 >= 0.0);
  CHECK(d1 <= 1.0);
  CHECK(d2 >= 0.0);
  CHECK(d2 <= 1.0);
}

TEST_CASE("checkpoint selection keeps the better network, ties to net1") {
  TempDir out("train_select");
  Trainer tr(tiny_cfg(out.path()));
  tr.step_once(tr.composer().next());

  CheckpointRecord r1 = tr.select_and_checkpoint(0.5, 0.5);
  CHECK(r1.chosen == "net1");
  CHECK(!r1.path.empty());
  CHECK(fs::exists(r1.path));
  CHECK(tr.best().val_dsc == 0.5);

  CheckpointRecord r2 = tr.select_and_checkpoint(0.5, 0.5);  // no strict improvement
  CHECK(r2.path.empty());
  CheckpointRecord r3 = tr.select_and_checkpoint(0.4, 0.6);
  CHECK(r3.chosen == "net2");
  CHECK(!r3.path.empty());
  CHECK(tr.best().network == "net2");
  CHECK(tr.best().val_dsc == 0.6);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  TempDir out("ck_roundtrip");
  Trainer tr(tiny_cfg(out.path()));
  for (int i = 0; i < 2; ++i) tr.step_once(tr.composer().next());

  Checkpoint ck = tr.to_checkpoint();
  std::string p1 = out.sub("a.ckpt"), p2 = out.sub("b.ckpt");
  save_checkpoint(p1, ck);
  Checkpoint back = load_checkpoint(p1);
  CHECK(back.iter == ck.iter);
  CHECK(back.composer_state == ck.composer_state);
  CHECK(train_config_to_json(back.config) == train_config_to_json(ck.config));
  REQUIRE(back.tensors.size() == ck.tensors.size());
  for (const auto& [name, t] : ck.tensors) {
    REQUIRE(back.tensors.count(name) == 1);
    const auto& u = back.tensors.at(name);
    REQUIRE(u.numel() == t.numel());
    for (index_t k = 0; k < t.numel(); ++k) CHECK(u[k] == t[k]);
  }

  save_checkpoint(p2, back);
  auto bytes = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  };
  CHECK(bytes(p1) == bytes(p2));
}

TEST_CASE("load_checkpoint rejects garbage and truncation") {
  TempDir td("ck_bad");
  std::ofstream(td.sub("junk.ckpt")) << "whatever";
  CHECK_THROWS(load_checkpoint(td.sub("junk.ckpt")));
  CHECK_THROWS(load_checkpoint(td.sub("missing.ckpt")));

  TempDir out("ck_trunc");
  Trainer tr(tiny_cfg(out.path()));
  save_checkpoint(td.sub("ok.ckpt"), tr.to_checkpoint());
  auto full = fs::file_size(td.sub("ok.ckpt"));
  std::ifstream in(td.sub("ok.ckpt"), std::ios::binary);
  std::vector<char> buf(static_cast<std::size_t>(full) - 200);
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  std::ofstream(td.sub("cut.ckpt"), std::ios::binary).write(buf.data(), static_cast<std::streamsize>(buf.size()));
  CHECK_THROWS(load_checkpoint(td.sub("cut.ckpt")));
}

TEST_CASE("networks rebuilt from a checkpoint reproduce the trainer's outputs") {
  TempDir out("ck_rebuild");
  Trainer tr(tiny_cfg(out.path()));
  for (int i = 0; i < 2; ++i) tr.step_once(tr.composer().next());
  Checkpoint ck = tr.to_checkpoint();

  auto n1 = network_from_checkpoint(ck, 1);
  auto n2 = network_from_checkpoint(ck, 2);
  CHECK(params_identical(tr.net1(), *n1));
  CHECK(params_identical(tr.net2(), *n2));

  // best record is still the sentinel -> best network defaults to net1
  auto nb = best_network_from_checkpoint(ck);
  CHECK(params_identical(*n1, *nb));

  tr.net1().set_training(false);
  n1->set_training(false);
  const auto& img = tr.train_labeled()[0].image;
  Tensor<float> x({1, 3, img.dim(1), img.dim(2)});
  for (index_t k = 0; k < img.numel(); ++k) x[k] = img[k];
  auto a = tr.net1().forward(x, false), b = n1->forward(x, false);
  for (index_t k = 0; k < a.logits->value.numel(); ++k) CHECK(a.logits->value[k] == b.logits->value[k]);
}

TEST_CASE("two trainers with the same config evolve identically") {
  TempDir o1("det_a"), o2("det_b");
  Trainer a(tiny_cfg(o1.path())), b(tiny_cfg(o2.path()));
  for (int i = 0; i < 4; ++i) {
    LossReport ra = a.step_once(a.composer().next());
    LossReport rb = b.step_once(b.composer().next());
    CHECK(ra.total == rb.total);
  }
  CHECK(params_identical(a.net1(), b.net1()));
  CHECK(params_identical(a.net2(), b.net2()));
}

TEST_CASE("a resumed run continues exactly where the checkpoint left off") {
  TempDir oa("resume_a"), ob("resume_b"), oc("resume_c");
  Trainer a(tiny_cfg(oa.path()));
  for (int i = 0; i < 6; ++i) a.step_once(a.composer().next());

  Trainer b(tiny_cfg(ob.path()));
  for (int i = 0; i < 3; ++i) b.step_once(b.composer().next());
  std::string ckpath = ob.sub("mid.ckpt");
  save_checkpoint(ckpath, b.to_checkpoint());

  Trainer c(tiny_cfg(oc.path()));
  c.restore_from(ckpath);
  CHECK(c.iter() == 3);
  for (int i = 0; i < 3; ++i) c.step_once(c.composer().next());

  CHECK(params_identical(a.net1(), c.net1()));
  CHECK(params_identical(a.net2(), c.net2()));
}

TEST_CASE("restore_from rejects a checkpoint with a different architecture") {
  TempDir oa("mismatch_a"), ob("mismatch_b");
  Trainer a(tiny_cfg(oa.path()));
  std::string ckpath = oa.sub("a.ckpt");
  save_checkpoint(ckpath, a.to_checkpoint());

  TrainConfig other = tiny_cfg(ob.path());
  other.model1.base_channels = 8;  // different net shape
  Trainer b(other);
  CHECK_THROWS(b.restore_from(ckpath));

  // differing out_dir/max_iters are allowed (resume with extended budget)
  TrainConfig extended = tiny_cfg(ob.path());
  extended.optimizer.max_iters = 60;
  Trainer c(extended);
  c.restore_from(ckpath);
  CHECK(c.iter() == a.iter());
}

TEST_CASE("run() writes a parseable loss log with the pinned schedule values") {
  TempDir out("run_log");
  TrainConfig cfg = tiny_cfg(out.path());
  cfg.optimizer.max_iters = 4;
  cfg.eval_every = 2;
  Trainer tr(cfg);
  tr.run();
  CHECK(tr.iter() == 4);

  std::ifstream log(tr.loss_log_path());
  REQUIRE(log.good());
  std::string line;
  std::int64_t expect_iter = 0;
  while (std::getline(log, line)) {
    auto j = nlohmann::json::parse(line);
    CHECK(j["iter"].get<std::int64_t>() == expect_iter);
    CHECK(std::isfinite(j["total"].get<double>()));
    CHECK(j["lambda"].get<double>() ==
          doctest::Approx(ramp_up_lambda(expect_iter, cfg.ramp)).epsilon(1e-12));
    CHECK(j["lr"].get<double>() ==
          doctest::Approx(lr_schedule(expect_iter, cfg.optimizer)).epsilon(1e-12));
    for (const char* key : {"sup1", "sup2", "semi1", "semi2", "contra"}) CHECK(j.contains(key));
    ++expect_iter;
  }
  CHECK(expect_iter == 4);

  // validations ran (val pool is non-empty) so a best checkpoint exists
  CHECK(fs::exists(tr.checkpoint_path()));
  CHECK(tr.best().val_dsc >= 0.0);
}
