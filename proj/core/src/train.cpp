#include "crossseg/train.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace crossseg {

namespace {

using nlohmann::json;

json network_config_to_json(const NetworkConfig& c) {
  return json{{"kind", network_kind_name(c.kind)},
              {"in_channels", c.in_channels},
              {"num_classes", c.num_classes},
              {"base_channels", c.base_channels},
              {"num_stages", c.num_stages},
              {"embed_dim", c.embed_dim},
              {"depths", c.depths},
              {"num_heads", c.num_heads},
              {"window_size", c.window_size},
              {"projection_dim", c.projection_dim},
              {"seed", c.seed}};
}

NetworkConfig network_config_from_json(const json& j) {
  NetworkConfig c;
  try {
    c.kind = network_kind_from_name(j.at("kind").get<std::string>());
    c.in_channels = j.at("in_channels").get<int>();
    c.num_classes = j.at("num_classes").get<int>();
    c.base_channels = j.at("base_channels").get<int>();
    c.num_stages = j.at("num_stages").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.depths = j.at("depths").get<std::vector<int>>();
    c.num_heads = j.at("num_heads").get<std::vector<int>>();
    c.window_size = j.at("window_size").get<int>();
    c.projection_dim = j.at("projection_dim").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    CROSSSEG_CHECK(false, "network config json: " << e.what());
  }
  return c;
}

json train_config_to_json_obj(const TrainConfig& c) {
  return json{{"optimizer",
               {{"lr0", c.optimizer.lr0},
                {"momentum", c.optimizer.momentum},
                {"weight_decay", c.optimizer.weight_decay},
                {"max_iters", c.optimizer.max_iters},
                {"poly_power", c.optimizer.poly_power}}},
              {"ramp", {{"lambda_max", c.ramp.lambda_max}, {"ramp_iters", c.ramp.ramp_iters}}},
              {"contrastive",
               {{"temperature", c.contrastive.temperature},
                {"pairing", pairing_name(c.contrastive.pairing)},
                {"enabled", c.contrastive.enabled}}},
              {"batch", {{"b_L", c.batch.b_l}, {"b_U", c.batch.b_u}}},
              {"image_size", {{"h", c.image_h}, {"w", c.image_w}}},
              {"eval_every", c.eval_every},
              {"seed", c.seed},
              {"data_dir", c.data_dir},
              {"out_dir", c.out_dir},
              {"model1", network_config_to_json(c.model1)},
              {"model2", network_config_to_json(c.model2)}};
}

TrainConfig train_config_from_json_obj(const json& j) {
  TrainConfig c;
  try {
    const json& o = j.at("optimizer");
    c.optimizer.lr0 = o.at("lr0").get<double>();
    c.optimizer.momentum = o.at("momentum").get<double>();
    c.optimizer.weight_decay = o.at("weight_decay").get<double>();
    c.optimizer.max_iters = o.at("max_iters").get<std::int64_t>();
    c.optimizer.poly_power = o.at("poly_power").get<double>();
    const json& r = j.at("ramp");
    c.ramp.lambda_max = r.at("lambda_max").get<double>();
    c.ramp.ramp_iters = r.at("ramp_iters").get<std::int64_t>();
    const json& ct = j.at("contrastive");
    c.contrastive.temperature = ct.at("temperature").get<double>();
    c.contrastive.pairing = pairing_from_name(ct.at("pairing").get<std::string>());
    c.contrastive.enabled = ct.at("enabled").get<bool>();
    const json& b = j.at("batch");
    c.batch.b_l = b.at("b_L").get<index_t>();
    c.batch.b_u = b.at("b_U").get<index_t>();
    const json& s = j.at("image_size");
    c.image_h = s.at("h").get<index_t>();
    c.image_w = s.at("w").get<index_t>();
    c.eval_every = j.at("eval_every").get<std::int64_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.data_dir = j.at("data_dir").get<std::string>();
    c.out_dir = j.at("out_dir").get<std::string>();
    c.model1 = network_config_from_json(j.at("model1"));
    c.model2 = network_config_from_json(j.at("model2"));
  } catch (const json::exception& e) {
    CROSSSEG_CHECK(false, "train config json: " << e.what());
  }
  return c;
}

constexpr char kMagic[8] = {'X', 'S', 'E', 'G', 'C', 'K', 'P', '1'};

void write_exact(std::ostream& os, const void* p, std::size_t n, const std::string& path) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  CROSSSEG_CHECK_RT(os.good(), "checkpoint: write failed for " << path);
}

void read_exact(std::istream& is, void* p, std::size_t n, const std::string& path) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  CROSSSEG_CHECK_RT(is.gcount() == static_cast<std::streamsize>(n),
                    "checkpoint: truncated read from " << path);
}

// --- flat key=value parsing ---

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

struct KvLine {
  std::string key, value;
  int line_no;
};

double parse_double(const KvLine& kv) {
  try {
    std::size_t pos = 0;
    double v = std::stod(kv.value, &pos);
    CROSSSEG_CHECK(pos == kv.value.size(), "");
    return v;
  } catch (...) {
    throw ValidationError("config line " + std::to_string(kv.line_no) + ": '" + kv.value +
                          "' is not a number for key '" + kv.key + "'");
  }
}

std::int64_t parse_int(const KvLine& kv) {
  try {
    std::size_t pos = 0;
    std::int64_t v = std::stoll(kv.value, &pos);
    CROSSSEG_CHECK(pos == kv.value.size(), "");
    return v;
  } catch (...) {
    throw ValidationError("config line " + std::to_string(kv.line_no) + ": '" + kv.value +
                          "' is not an integer for key '" + kv.key + "'");
  }
}

std::uint64_t parse_u64(const KvLine& kv) {
  try {
    std::size_t pos = 0;
    std::uint64_t v = std::stoull(kv.value, &pos);
    CROSSSEG_CHECK(pos == kv.value.size() && kv.value[0] != '-', "");
    return v;
  } catch (...) {
    throw ValidationError("config line " + std::to_string(kv.line_no) + ": '" + kv.value +
                          "' is not an unsigned integer for key '" + kv.key + "'");
  }
}

bool parse_bool(const KvLine& kv) {
  if (kv.value == "true" || kv.value == "1") return true;
  if (kv.value == "false" || kv.value == "0") return false;
  throw ValidationError("config line " + std::to_string(kv.line_no) + ": '" + kv.value +
                        "' is not a boolean (true/false) for key '" + kv.key + "'");
}

std::vector<int> parse_int_list(const KvLine& kv) {
  std::vector<int> out;
  std::stringstream ss(kv.value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    KvLine sub{kv.key, item, kv.line_no};
    out.push_back(static_cast<int>(parse_int(sub)));
  }
  if (out.empty())
    throw ValidationError("config line " + std::to_string(kv.line_no) + ": empty list for key '" +
                          kv.key + "'");
  return out;
}

bool apply_model_key(NetworkConfig& m, const std::string& field, const KvLine& kv) {
  if (field == "kind")
    m.kind = network_kind_from_name(kv.value);
  else if (field == "base_channels")
    m.base_channels = static_cast<int>(parse_int(kv));
  else if (field == "num_stages")
    m.num_stages = static_cast<int>(parse_int(kv));
  else if (field == "embed_dim")
    m.embed_dim = static_cast<int>(parse_int(kv));
  else if (field == "depths")
    m.depths = parse_int_list(kv);
  else if (field == "num_heads")
    m.num_heads = parse_int_list(kv);
  else if (field == "window_size")
    m.window_size = static_cast<int>(parse_int(kv));
  else if (field == "projection_dim")
    m.projection_dim = static_cast<int>(parse_int(kv));
  else
    return false;
  return true;
}

}  // namespace

std::string train_config_to_json(const TrainConfig& cfg) { return train_config_to_json_obj(cfg).dump(2); }

TrainConfig train_config_from_json(const std::string& json_text) {
  json j = json::parse(json_text, nullptr, /*allow_exceptions=*/false);
  CROSSSEG_CHECK(!j.is_discarded(), "train config json: parse error");
  return train_config_from_json_obj(j);
}

TrainConfig parse_train_config_text(const std::string& text) {
  TrainConfig cfg;
  std::stringstream ss(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(ss, raw)) {
    ++line_no;
    std::size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    std::string line = trim(raw);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    CROSSSEG_CHECK(eq != std::string::npos,
                   "config line " << line_no << ": expected key = value, got '" << line << "'");
    KvLine kv{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no};
    CROSSSEG_CHECK(!kv.key.empty(), "config line " << line_no << ": empty key");

    if (kv.key == "optimizer.lr0")
      cfg.optimizer.lr0 = parse_double(kv);
    else if (kv.key == "optimizer.momentum")
      cfg.optimizer.momentum = parse_double(kv);
    else if (kv.key == "optimizer.weight_decay")
      cfg.optimizer.weight_decay = parse_double(kv);
    else if (kv.key == "optimizer.max_iters")
      cfg.optimizer.max_iters = parse_int(kv);
    else if (kv.key == "optimizer.poly_power")
      cfg.optimizer.poly_power = parse_double(kv);
    else if (kv.key == "ramp.lambda_max")
      cfg.ramp.lambda_max = parse_double(kv);
    else if (kv.key == "ramp.ramp_iters")
      cfg.ramp.ramp_iters = parse_int(kv);
    else if (kv.key == "contrastive.temperature")
      cfg.contrastive.temperature = parse_double(kv);
    else if (kv.key == "contrastive.pairing")
      cfg.contrastive.pairing = pairing_from_name(kv.value);
    else if (kv.key == "contrastive.enabled")
      cfg.contrastive.enabled = parse_bool(kv);
    else if (kv.key == "batch.b_L")
      cfg.batch.b_l = parse_int(kv);
    else if (kv.key == "batch.b_U")
      cfg.batch.b_u = parse_int(kv);
    else if (kv.key == "image_size.h")
      cfg.image_h = parse_int(kv);
    else if (kv.key == "image_size.w")
      cfg.image_w = parse_int(kv);
    else if (kv.key == "eval_every")
      cfg.eval_every = parse_int(kv);
    else if (kv.key == "seed")
      cfg.seed = parse_u64(kv);
    else if (kv.key == "data_dir")
      cfg.data_dir = kv.value;
    else if (kv.key == "out_dir")
      cfg.out_dir = kv.value;
    else if (kv.key.rfind("model1.", 0) == 0) {
      CROSSSEG_CHECK(apply_model_key(cfg.model1, kv.key.substr(7), kv),
                     "config line " << line_no << ": unknown key '" << kv.key << "'");
    } else if (kv.key.rfind("model2.", 0) == 0) {
      CROSSSEG_CHECK(apply_model_key(cfg.model2, kv.key.substr(7), kv),
                     "config line " << line_no << ": unknown key '" << kv.key << "'");
    } else {
      CROSSSEG_CHECK(false, "config line " << line_no << ": unknown key '" << kv.key << "'");
    }
  }
  return cfg;
}

TrainConfig parse_train_config_file(const std::string& path) {
  std::ifstream f(path);
  CROSSSEG_CHECK(f.good(), "cannot open config file '" << path << "'");
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_train_config_text(buf.str());
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  json header;
  header["version"] = 1;
  header["iter"] = ck.iter;
  header["best"] = {{"val_dsc", ck.best.val_dsc},
                    {"network", ck.best.network},
                    {"iter", ck.best.iter},
                    {"dsc1", ck.best.dsc1},
                    {"dsc2", ck.best.dsc2}};
  header["config"] = train_config_to_json_obj(ck.config);
  header["composer_state"] = ck.composer_state;
  json tensors = json::array();
  for (const auto& [name, t] : ck.tensors) tensors.push_back(json{{"name", name}, {"shape", t.shape()}});
  header["tensors"] = std::move(tensors);
  std::string htext = header.dump();

  std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    CROSSSEG_CHECK_RT(os.good(), "checkpoint: cannot open '" << tmp << "' for writing");
    write_exact(os, kMagic, sizeof(kMagic), tmp);
    std::uint64_t hlen = htext.size();
    write_exact(os, &hlen, sizeof(hlen), tmp);
    write_exact(os, htext.data(), htext.size(), tmp);
    for (const auto& [name, t] : ck.tensors)
      write_exact(os, t.data(), sizeof(float) * static_cast<std::size_t>(t.numel()), tmp);
    os.flush();
    CROSSSEG_CHECK_RT(os.good(), "checkpoint: flush failed for " << tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  CROSSSEG_CHECK_RT(!ec, "checkpoint: cannot move '" << tmp << "' to '" << path << "': " << ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  CROSSSEG_CHECK_RT(is.good(), "checkpoint: cannot open '" << path << "'");
  char magic[8];
  read_exact(is, magic, sizeof(magic), path);
  CROSSSEG_CHECK_RT(std::memcmp(magic, kMagic, sizeof(kMagic)) == 0,
                    "checkpoint: '" << path << "' is not a checkpoint file (bad magic)");
  std::uint64_t hlen = 0;
  read_exact(is, &hlen, sizeof(hlen), path);
  CROSSSEG_CHECK_RT(hlen > 0 && hlen < (1ull << 30), "checkpoint: implausible header size in " << path);
  std::string htext(hlen, '\0');
  read_exact(is, htext.data(), hlen, path);
  json header = json::parse(htext, nullptr, /*allow_exceptions=*/false);
  CROSSSEG_CHECK_RT(!header.is_discarded(), "checkpoint: corrupt header json in " << path);

  Checkpoint ck;
  try {
    CROSSSEG_CHECK_RT(header.at("version").get<int>() == 1,
                      "checkpoint: unsupported version in " << path);
    ck.iter = header.at("iter").get<std::int64_t>();
    const json& b = header.at("best");
    ck.best.val_dsc = b.at("val_dsc").get<double>();
    ck.best.network = b.at("network").get<std::string>();
    ck.best.iter = b.at("iter").get<std::int64_t>();
    ck.best.dsc1 = b.at("dsc1").get<double>();
    ck.best.dsc2 = b.at("dsc2").get<double>();
    ck.config = train_config_from_json_obj(header.at("config"));
    ck.composer_state = header.at("composer_state").get<std::string>();
    for (const json& te : header.at("tensors")) {
      std::string name = te.at("name").get<std::string>();
      Shape shape = te.at("shape").get<Shape>();
      Tensor<float> t(shape);
      read_exact(is, t.data(), sizeof(float) * static_cast<std::size_t>(t.numel()), path);
      CROSSSEG_CHECK_RT(ck.tensors.emplace(name, std::move(t)).second,
                        "checkpoint: duplicate tensor '" << name << "' in " << path);
    }
  } catch (const json::exception& e) {
    CROSSSEG_CHECK_RT(false, "checkpoint: malformed header in " << path << ": " << e.what());
  }
  is.peek();
  CROSSSEG_CHECK_RT(is.eof(), "checkpoint: trailing bytes in " << path);
  return ck;
}

namespace {

void load_tensor_into(const Checkpoint& ck, const std::string& name, Tensor<float>& dst) {
  auto it = ck.tensors.find(name);
  CROSSSEG_CHECK_RT(it != ck.tensors.end(), "checkpoint: missing tensor '" << name << "'");
  CROSSSEG_CHECK_RT(it->second.same_shape(dst), "checkpoint: tensor '"
                                                    << name << "' has shape "
                                                    << shape_str(it->second.shape()) << ", expected "
                                                    << shape_str(dst.shape()));
  std::copy(it->second.data(), it->second.data() + it->second.numel(), dst.data());
}

void load_network_state(const Checkpoint& ck, Network<float>& net, int which) {
  std::string p = which == 1 ? "net1." : "net2.";
  std::string b = which == 1 ? "buf1." : "buf2.";
  for (auto& np : net.parameters()) load_tensor_into(ck, p + np.name, np.var->value);
  for (auto& nb : net.buffers()) load_tensor_into(ck, b + nb.name, *nb.tensor);
}

}  // namespace

std::unique_ptr<Network<float>> network_from_checkpoint(const Checkpoint& ck, int which) {
  CROSSSEG_CHECK(which == 1 || which == 2, "network_from_checkpoint: which must be 1 or 2");
  auto net = build_network<float>(which == 1 ? ck.config.model1 : ck.config.model2);
  load_network_state(ck, *net, which);
  net->set_training(false);
  return net;
}

std::unique_ptr<Network<float>> best_network_from_checkpoint(const Checkpoint& ck) {
  return network_from_checkpoint(ck, ck.best.network == "net2" ? 2 : 1);
}

Trainer::Trainer(TrainConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Dataset ds = load_dataset(cfg_.data_dir);
  CROSSSEG_CHECK(!ds.labeled.empty(), "training requires at least one labeled sample in '"
                                          << cfg_.data_dir << "'");
  CROSSSEG_CHECK(cfg_.batch.b_u == 0 || !ds.unlabeled.empty(),
                 "batch.b_U > 0 but '" << cfg_.data_dir << "' has no unlabeled split");

  auto fit_labeled = [&](LabeledSample& s) {
    s.image = resize_bilinear(s.image, cfg_.image_h, cfg_.image_w);
    s.mask = resize_nearest(s.mask, cfg_.image_h, cfg_.image_w);
  };
  labeled_ = std::move(ds.labeled);
  unlabeled_ = std::move(ds.unlabeled);
  val_ = std::move(ds.val);
  for (auto& s : labeled_) fit_labeled(s);
  for (auto& s : unlabeled_) s.image = resize_bilinear(s.image, cfg_.image_h, cfg_.image_w);
  for (auto& s : val_) fit_labeled(s);

  cfg_.model1.seed = derive_seed(cfg_.seed, streams::kModel1);
  cfg_.model2.seed = derive_seed(cfg_.seed, streams::kModel2);
  net1_ = build_network<float>(cfg_.model1);
  net2_ = build_network<float>(cfg_.model2);

  std::vector<Var<float>> params;
  for (auto& np : net1_->parameters()) params.push_back(np.var);
  for (auto& np : net2_->parameters()) params.push_back(np.var);
  sgd_ = std::make_unique<Sgd<float>>(std::move(params), cfg_.optimizer.momentum,
                                      cfg_.optimizer.weight_decay);

  composer_ = std::make_unique<BatchComposer>(&labeled_, &unlabeled_, cfg_.batch.b_l, cfg_.batch.b_u,
                                              cfg_.seed, /*augment=*/true);

  std::error_code ec;
  std::filesystem::create_directories(cfg_.out_dir, ec);
  CROSSSEG_CHECK_RT(!ec, "cannot create out_dir '" << cfg_.out_dir << "': " << ec.message());
}

std::string Trainer::loss_log_path() const { return cfg_.out_dir + "/loss_log.jsonl"; }
std::string Trainer::checkpoint_path() const { return cfg_.out_dir + "/checkpoint_best.ckpt"; }

LossReport Trainer::step_once(const MixedBatch& batch) {
  CROSSSEG_CHECK(iter_ < cfg_.optimizer.max_iters,
                 "step_once: already at max_iters = " << cfg_.optimizer.max_iters);
  net1_->set_training(true);
  net2_->set_training(true);

  std::vector<const Image*> limg;
  std::vector<const Mask*> lmask;
  for (const auto& s : batch.labeled) {
    limg.push_back(&s.image);
    lmask.push_back(&s.mask);
  }
  Tensor<float> labeled_images = stack_images(limg);
  MaskBatch labeled_masks = stack_masks(lmask);
  Tensor<float> unlabeled_images;
  if (!batch.unlabeled.empty()) {
    std::vector<const Image*> uimg;
    for (const auto& s : batch.unlabeled) uimg.push_back(&s.image);
    unlabeled_images = stack_images(uimg);
  }

  double lambda_t = ramp_up_lambda(iter_, cfg_.ramp);
  double lr = lr_schedule(iter_, cfg_.optimizer);

  sgd_->zero_grad();
  auto obj = build_objective(*net1_, *net2_, labeled_images, labeled_masks, unlabeled_images, lambda_t,
                             cfg_.contrastive);
  backward(obj.total);
  sgd_->step(lr);
  ++iter_;
  return obj.report;
}

std::pair<double, double> Trainer::validate_now() {
  return validate_models(*net1_, *net2_, val_, cfg_.image_h, cfg_.image_w);
}

CheckpointRecord Trainer::select_and_checkpoint(double dsc1, double dsc2) {
  CheckpointRecord rec;
  rec.iter = iter_;
  rec.val_dsc1 = dsc1;
  rec.val_dsc2 = dsc2;
  rec.chosen = dsc1 >= dsc2 ? "net1" : "net2";
  double score = std::max(dsc1, dsc2);
  if (score > best_.val_dsc) {
    best_.val_dsc = score;
    best_.network = rec.chosen;
    best_.iter = iter_;
    best_.dsc1 = dsc1;
    best_.dsc2 = dsc2;
    try {
      save_checkpoint(checkpoint_path(), to_checkpoint());
      rec.path = checkpoint_path();
    } catch (const std::exception& e) {
      std::cerr << "warning: checkpoint save failed, training continues: " << e.what() << "\n";
    }
    best_record_ = rec;
  }
  return rec;
}

Checkpoint Trainer::to_checkpoint() const {
  Checkpoint ck;
  ck.config = cfg_;
  ck.iter = iter_;
  ck.best = best_;
  ck.composer_state = composer_->serialize_state();
  for (const auto& np : net1_->parameters()) ck.tensors.emplace("net1." + np.name, np.var->value);
  for (const auto& np : net2_->parameters()) ck.tensors.emplace("net2." + np.name, np.var->value);
  for (const auto& nb : net1_->buffers()) ck.tensors.emplace("buf1." + nb.name, *nb.tensor);
  for (const auto& nb : net2_->buffers()) ck.tensors.emplace("buf2." + nb.name, *nb.tensor);
  const auto& momenta = sgd_->momenta();
  std::size_t n1 = net1_->parameters().size();
  for (std::size_t i = 0; i < n1; ++i)
    ck.tensors.emplace("mom1." + net1_->parameters()[i].name, momenta[i]);
  for (std::size_t i = 0; i < net2_->parameters().size(); ++i)
    ck.tensors.emplace("mom2." + net2_->parameters()[i].name, momenta[n1 + i]);
  return ck;
}

void Trainer::restore_from(const std::string& checkpoint_path_in) {
  Checkpoint ck = load_checkpoint(checkpoint_path_in);

  // Everything the restored state depends on must match. Locations and
  // forward-looking knobs may differ: resuming with a longer max_iters or a
  // different validation cadence is legitimate.
  json a = train_config_to_json_obj(ck.config);
  json b = train_config_to_json_obj(cfg_);
  for (auto* j : {&a, &b}) {
    j->erase("data_dir");
    j->erase("out_dir");
    j->erase("eval_every");
    (*j)["optimizer"].erase("max_iters");
  }
  CROSSSEG_CHECK(a == b, "restore_from: checkpoint config does not match the trainer's config");

  load_network_state(ck, *net1_, 1);
  load_network_state(ck, *net2_, 2);
  auto& momenta = sgd_->momenta();
  std::size_t n1 = net1_->parameters().size();
  for (std::size_t i = 0; i < n1; ++i)
    load_tensor_into(ck, "mom1." + net1_->parameters()[i].name, momenta[i]);
  for (std::size_t i = 0; i < net2_->parameters().size(); ++i)
    load_tensor_into(ck, "mom2." + net2_->parameters()[i].name, momenta[n1 + i]);

  iter_ = ck.iter;
  best_ = ck.best;
  composer_->restore_state(ck.composer_state);
  resumed_ = true;
  best_record_ = CheckpointRecord{};
  if (best_.iter >= 0) {
    best_record_.path = checkpoint_path();
    best_record_.iter = best_.iter;
    best_record_.val_dsc1 = best_.dsc1;
    best_record_.val_dsc2 = best_.dsc2;
    best_record_.chosen = best_.network;
  }
}

CheckpointRecord Trainer::run() {
  std::ofstream log(loss_log_path(), resumed_ ? std::ios::app : std::ios::trunc);
  CROSSSEG_CHECK_RT(log.good(), "cannot open loss log '" << loss_log_path() << "'");

  while (iter_ < cfg_.optimizer.max_iters) {
    std::int64_t t = iter_;
    MixedBatch batch = composer_->next();
    LossReport rep = step_once(batch);

    json line{{"iter", t},       {"total", rep.total}, {"sup1", rep.sup1},
              {"sup2", rep.sup2}, {"semi1", rep.semi1}, {"semi2", rep.semi2},
              {"contra", rep.contra}, {"lambda", rep.lambda_t},
              {"lr", lr_schedule(t, cfg_.optimizer)}};
    log << line.dump() << "\n";
    log.flush();

    if (iter_ % cfg_.eval_every == 0 || iter_ == cfg_.optimizer.max_iters) {
      if (val_.empty()) {
        if (!warned_no_val_) {
          std::cerr << "note: validation set is empty; skipping validation and checkpointing\n";
          warned_no_val_ = true;
        }
      } else {
        auto [d1, d2] = validate_now();
        select_and_checkpoint(d1, d2);
      }
    }
  }
  return best_record_;
}

}  // namespace crossseg
