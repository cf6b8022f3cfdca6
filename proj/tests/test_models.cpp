#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "crossseg/losses.hpp"
#include "crossseg/networks.hpp"
#include "test_util.hpp"

using namespace crossseg;
using namespace crossseg::testutil;

namespace {

NetworkConfig tiny_cnn(std::uint64_t seed) {
  NetworkConfig cfg;
  cfg.kind = NetworkKind::kCnnUnet;
  cfg.base_channels = 4;
  cfg.num_stages = 2;
  cfg.projection_dim = 8;
  cfg.seed = seed;
  return cfg;
}

NetworkConfig tiny_swin(std::uint64_t seed) {
  NetworkConfig cfg;
  cfg.kind = NetworkKind::kWindowedTransformerUnet;
  cfg.embed_dim = 8;
  cfg.depths = {2};
  cfg.num_heads = {2};
  cfg.window_size = 2;
  cfg.projection_dim = 8;
  cfg.seed = seed;
  return cfg;
}

template <typename T>
Tensor<T> probe_image(index_t B, index_t H, index_t W, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<T> t({B, 3, H, W});
  for (index_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(0, 1));
  return t;
}

}  // namespace

TEST_CASE("same seed gives identical parameters, different seed does not") {
  for (auto mk : {&tiny_cnn, &tiny_swin}) {
    auto a = build_network<float>(mk(5));
    auto b = build_network<float>(mk(5));
    auto c = build_network<float>(mk(6));
    REQUIRE(a->parameters().size() == b->parameters().size());
    CHECK(a->parameter_count() > 0);
    bool all_eq = true, any_diff_c = false;
    for (std::size_t i = 0; i < a->parameters().size(); ++i) {
      const auto& pa = a->parameters()[i].var->value;
      const auto& pb = b->parameters()[i].var->value;
      const auto& pc = c->parameters()[i].var->value;
      for (index_t k = 0; k < pa.numel(); ++k) {
        all_eq = all_eq && pa[k] == pb[k];
        any_diff_c = any_diff_c || pa[k] != pc[k];
      }
    }
    CHECK(all_eq);
    CHECK(any_diff_c);
  }
}

TEST_CASE("parameter names are unique (checkpoints key on them)") {
  for (auto mk : {&tiny_cnn, &tiny_swin}) {
    auto net = build_network<float>(mk(1));
    std::set<std::string> names;
    for (const auto& p : net->parameters()) CHECK(names.insert(p.name).second);
    for (const auto& b : net->buffers()) CHECK(names.insert(b.name).second);
  }
}

TEST_CASE("cnn shape contract: 64x64 batch of 8") {
  NetworkConfig cfg;  // defaults: base 16, 4 stages
  cfg.seed = 2;
  auto net = build_network<float>(cfg);
  net->set_training(false);
  auto out = net->forward(probe_image<float>(8, 64, 64, 10), false);
  REQUIRE(out.logits->value.ndim() == 4);
  CHECK(out.logits->value.dim(0) == 8);
  CHECK(out.logits->value.dim(1) == 3);
  CHECK(out.logits->value.dim(2) == 64);
  CHECK(out.logits->value.dim(3) == 64);
  CHECK(!out.representation);
}

TEST_CASE("transformer shape contract at the training resolution") {
  NetworkConfig cfg;
  cfg.kind = NetworkKind::kWindowedTransformerUnet;
  cfg.embed_dim = 12;
  cfg.depths = {1, 1};
  cfg.num_heads = {2, 2};
  cfg.window_size = 7;
  cfg.seed = 3;
  auto net = build_network<float>(cfg);
  net->set_training(false);
  auto out = net->forward(probe_image<float>(1, 224, 224, 11), true);
  CHECK(out.logits->value.dim(2) == 224);
  CHECK(out.logits->value.dim(3) == 224);
  REQUIRE(out.representation);
  CHECK(out.representation->value.dim(0) == 1);
  CHECK(out.representation->value.dim(1) == cfg.projection_dim);
}

TEST_CASE("spatial-size preconditions are enforced at forward time") {
  auto cnn = build_network<float>(tiny_cnn(1));  // 2 stages -> needs /4
  CHECK_THROWS(cnn->forward(probe_image<float>(1, 30, 32, 12), false));

  NetworkConfig sw;  // default window 7; 64/4 = 16 tokens, 7 does not divide 16
  sw.kind = NetworkKind::kWindowedTransformerUnet;
  sw.embed_dim = 6;
  sw.depths = {1};
  sw.num_heads = {2};
  sw.seed = 1;
  auto net = build_network<float>(sw);
  CHECK_THROWS(net->forward(probe_image<float>(1, 64, 64, 13), false));

  CHECK_THROWS(cnn->forward(Tensor<float>({1, 1, 32, 32}), false));  // wrong channels
}

TEST_CASE("representations are unit rows for both architectures") {
  for (auto mk : {&tiny_cnn, &tiny_swin}) {
    auto net = build_network<float>(mk(7));
    net->set_training(false);
    auto out = net->forward(probe_image<float>(3, 16, 16, 14), true);
    REQUIRE(out.representation);
    const auto& z = out.representation->value;
    for (index_t r = 0; r < z.dim(0); ++r) {
      double n = 0;
      for (index_t c = 0; c < z.dim(1); ++c) n += static_cast<double>(z.at(r, c)) * z.at(r, c);
      CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-5);
    }
  }
}

TEST_CASE("evaluation mode is deterministic and never touches buffers") {
  for (auto mk : {&tiny_cnn, &tiny_swin}) {
    auto a = build_network<float>(mk(9));
    auto b = build_network<float>(mk(9));
    a->set_training(false);
    b->set_training(false);
    auto x = probe_image<float>(2, 16, 16, 15);
    auto o1 = a->forward(x, true), o2 = a->forward(x, true), o3 = b->forward(x, true);
    for (index_t i = 0; i < o1.logits->value.numel(); ++i) {
      CHECK(o1.logits->value[i] == o2.logits->value[i]);
      CHECK(o1.logits->value[i] == o3.logits->value[i]);
    }
    std::vector<Tensor<float>> before;
    for (const auto& buf : a->buffers()) before.push_back(*buf.tensor);
    a->forward(x, false);
    for (std::size_t i = 0; i < before.size(); ++i)
      for (index_t k = 0; k < before[i].numel(); ++k)
        CHECK(before[i][k] == (*a->buffers()[i].tensor)[k]);
  }
}

TEST_CASE("training mode updates normalization statistics (cnn)") {
  auto net = build_network<float>(tiny_cnn(4));
  REQUIRE(!net->buffers().empty());
  std::vector<Tensor<float>> before;
  for (const auto& buf : net->buffers()) before.push_back(*buf.tensor);
  net->set_training(true);
  net->forward(probe_image<float>(2, 16, 16, 16), false);
  bool changed = false;
  for (std::size_t i = 0; i < before.size() && !changed; ++i)
    for (index_t k = 0; k < before[i].numel() && !changed; ++k)
      changed = before[i][k] != (*net->buffers()[i].tensor)[k];
  CHECK(changed);
}

TEST_CASE("different seeds and brighter inputs both change the logits") {
  for (auto mk : {&tiny_cnn, &tiny_swin}) {
    auto a = build_network<float>(mk(20));
    auto b = build_network<float>(mk(21));
    a->set_training(false);
    b->set_training(false);
    auto x = probe_image<float>(1, 16, 16, 17);
    auto oa = a->forward(x, false), ob = b->forward(x, false);
    bool seed_diff = false;
    for (index_t i = 0; i < oa.logits->value.numel() && !seed_diff; ++i)
      seed_diff = oa.logits->value[i] != ob.logits->value[i];
    CHECK(seed_diff);

    Tensor<float> bright = x;
    for (index_t i = 0; i < bright.numel(); ++i) bright[i] *= 2.0f;
    auto obr = a->forward(bright, false);
    bool input_diff = false;
    for (index_t i = 0; i < oa.logits->value.numel() && !input_diff; ++i)
      input_diff = oa.logits->value[i] != obr.logits->value[i];
    CHECK(input_diff);
  }
}

TEST_CASE("autodiff through whole networks matches finite differences") {
  Rng pick(55);
  for (auto mk : {&tiny_cnn, &tiny_swin}) {
    auto net = build_network<double>(mk(30));
    net->set_training(false);  // frozen stats keep FD and autodiff aligned
    auto x = probe_image<double>(1, 8, 8, 18);
    MaskBatch m({1, 8, 8});
    for (index_t i = 0; i < m.numel(); ++i) m[i] = static_cast<std::int32_t>(pick.uniform_int(3));

    auto loss_of = [&] {
      auto out = net->forward(x, true);
      auto ce = supervised_loss(out.logits, m);
      // pull the representation head into the graph too
      auto zsum = mean_all(out.representation);
      return add(ce, zsum);
    };
    for (auto& p : net->parameters()) p.var->grad = Tensor<double>();
    auto loss = loss_of();
    backward(loss);

    int checked = 0;
    const double step = 1e-4;
    while (checked < 10) {
      auto& p = net->parameters()[pick.uniform_int(net->parameters().size())];
      if (p.var->grad.numel() == 0) continue;
      index_t k = static_cast<index_t>(pick.uniform_int(static_cast<std::uint64_t>(p.var->value.numel())));
      double keep = p.var->value[k];
      p.var->value[k] = keep + step;
      double up = scalar_value(loss_of());
      p.var->value[k] = keep - step;
      double dn = scalar_value(loss_of());
      p.var->value[k] = keep;
      double fd = (up - dn) / (2 * step);
      double ad = p.var->grad[k];
      double rel = std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)});
      CHECK(rel < 1e-3);
      ++checked;
    }
  }
}

TEST_CASE("contrastive gradients reach both projection heads") {
  auto n1 = build_network<float>(tiny_cnn(40));
  auto n2 = build_network<float>(tiny_swin(41));
  n1->set_training(false);
  n2->set_training(false);
  auto x = probe_image<float>(2, 16, 16, 19);
  auto o1 = n1->forward(x, true), o2 = n2->forward(x, true);
  ContrastiveConfig cfg;
  auto loss = contrastive_loss(o1.representation, o2.representation, 1, 1, cfg);
  backward(loss);
  for (auto* net : {n1.get(), n2.get()}) {
    bool head_grad = false;
    for (const auto& p : net->parameters())
      if (p.name.find("proj") != std::string::npos && p.var->grad.numel() > 0)
        for (index_t k = 0; k < p.var->grad.numel(); ++k) head_grad = head_grad || p.var->grad[k] != 0.0f;
    CHECK(head_grad);
  }
}
