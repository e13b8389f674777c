#include <doctest.h>

#include <cmath>
#include <fstream>

#include "helpers.hpp"
#include "lrstat/backbone.hpp"
#include "tiny_model.hpp"

using namespace lrstat;
using testutil::random_tensor;

namespace {

std::vector<Tensor> frames_of(const BackboneConfig& cfg, std::uint64_t seed) {
  std::vector<Tensor> out;
  for (std::size_t k = 0; k < cfg.segments; ++k) out.push_back(random_tensor({cfg.in_channels, cfg.in_h, cfg.in_w}, seed + k, 0.0, 1.0));
  return out;
}

BackboneConfig small_config() {
  BackboneConfig c;
  c.widths = {4, 6, 8, 8};
  c.num_classes = 5;
  c.tam_hidden = 7;
  return c;
}

}  // namespace

TEST_SUITE("backbone") {
  TEST_CASE("block geometry at 12x16") {
    const auto g = block_geometry(small_config());
    REQUIRE(g.size() == 4);
    const std::size_t h[] = {6, 3, 3, 3}, w[] = {8, 4, 4, 4};
    for (std::size_t b = 0; b < 4; ++b) {
      CHECK(g[b].out_h == h[b]);
      CHECK(g[b].out_w == w[b]);
    }
    CHECK(g[0].pooled);
    CHECK(g[1].pooled);
    CHECK_FALSE(g[2].pooled);
    CHECK(g[1].in_channels == 4);
  }

  TEST_CASE("forward shapes") {
    const BackboneConfig cfg = small_config();
    const ModelParams p = init_model(cfg, 3);
    const auto frames = frames_of(cfg, 10);
    const ModelOutput out = model_forward(frames, make_vars(p, false), cfg);
    CHECK(out.logits.value().shape() == Shape{1, 5});
    REQUIRE(out.backbone.segments.size() == 4);
    CHECK(out.backbone.segments[0].blocks[0].value().shape() == Shape{4, 6, 8});
    CHECK(out.backbone.segments[3].blocks[3].value().shape() == Shape{8, 3, 4});
    CHECK(out.backbone.features.value().shape() == Shape{4, 8});
    CHECK(out.tam.attention.hidden.value().shape() == Shape{1, 7});
    CHECK(out.tam.attention.weights.value().shape() == Shape{1, 4});
  }

  TEST_CASE("segment sampling") {
    CHECK(segment_sample(8, 4, SampleMode::TestCenter).frame_indices == std::vector<std::size_t>{1, 3, 5, 7});
    CHECK(segment_sample(4, 4, SampleMode::TestCenter).frame_indices == std::vector<std::size_t>{0, 1, 2, 3});
    // 10 frames: lengths 3, 3, 2, 2
    CHECK(segment_sample(10, 4, SampleMode::TestCenter).frame_indices == std::vector<std::size_t>{1, 4, 7, 9});
    Rng a(42), b(42);
    for (int trial = 0; trial < 50; ++trial) {
      const auto s = segment_sample(10, 4, SampleMode::TrainRandom, &a);
      CHECK(s.frame_indices == segment_sample(10, 4, SampleMode::TrainRandom, &b).frame_indices);
      CHECK(s.frame_indices[0] <= 2);
      CHECK(s.frame_indices[1] >= 3);
      CHECK(s.frame_indices[1] <= 5);
      CHECK(s.frame_indices[2] >= 6);
      CHECK(s.frame_indices[2] <= 7);
      CHECK(s.frame_indices[3] >= 8);
    }
    CHECK(segment_sample(4, 4, SampleMode::TrainRandom, &a).frame_indices == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK_THROWS(segment_sample(3, 4, SampleMode::TestCenter));
    CHECK_THROWS(segment_sample(8, 0, SampleMode::TestCenter));
    CHECK_THROWS(segment_sample(8, 4, SampleMode::TrainRandom));
  }

  TEST_CASE("zero input with zero biases gives zero activations") {
    const BackboneConfig cfg = small_config();
    const ModelParams p = init_model(cfg, 5);
    std::vector<Tensor> frames(cfg.segments, Tensor(Shape{1, 12, 16}));
    const ModelOutput out = model_forward(frames, make_vars(p, false), cfg);
    for (const auto& seg : out.backbone.segments)
      for (const Var& b : seg.blocks) CHECK(b.value().max_abs() == 0.0);
    CHECK(out.logits.value().max_abs() == 0.0);
    // The blocks carry no signal, so spatial attention on them must fail loudly.
    CHECK_THROWS_AS(sat_loss(out.backbone.segments[0].blocks, out.backbone.segments[0].blocks,
                             std::vector<double>{0.25, 0.25, 0.25, 0.25}),
                    DegenerateInputError);
  }

  TEST_CASE("identical segments give uniform temporal weights when the logits agree") {
    BackboneConfig cfg = small_config();
    ModelParams p = init_model(cfg, 7);
    p.tam_fc2_w.fill(0.0);
    const Tensor frame = random_tensor({1, 12, 16}, 99, 0.0, 1.0);
    std::vector<Tensor> frames(cfg.segments, frame);
    const ModelOutput out = model_forward(frames, make_vars(p, false), cfg);
    for (std::size_t k = 0; k < 4; ++k) CHECK(out.tam.attention.weights.value()[k] == doctest::Approx(0.25).epsilon(1e-15));
    const Tensor& f = out.backbone.features.value();
    for (std::size_t d = 0; d < 8; ++d) CHECK(out.tam.video_feature.value()[d] == doctest::Approx(f[d]).epsilon(1e-14));
  }

  TEST_CASE("single class head") {
    BackboneConfig cfg = small_config();
    cfg.num_classes = 1;
    const ModelParams p = init_model(cfg, 1);
    const ModelOutput out = model_forward(frames_of(cfg, 4), make_vars(p, false), cfg);
    CHECK(out.logits.value().shape() == Shape{1, 1});
    CHECK(cross_entropy(out.logits, 0).value().item() == 0.0);
  }

  TEST_CASE("input shape mismatch") {
    const BackboneConfig cfg = small_config();
    const ModelParams p = init_model(cfg, 1);
    std::vector<Tensor> frames = frames_of(cfg, 1);
    frames[2] = Tensor(Shape{1, 12, 15});
    CHECK_THROWS_AS(model_forward(frames, make_vars(p, false), cfg), ShapeError);
    frames.pop_back();
    CHECK_THROWS(model_forward(frames, make_vars(p, false), cfg));
  }

  TEST_CASE("init bounds and determinism") {
    const BackboneConfig cfg = small_config();
    const ModelParams p = init_model(cfg, 11);
    CHECK(p.checksum() == init_model(cfg, 11).checksum());
    CHECK(p.checksum() != init_model(cfg, 12).checksum());
    for (std::size_t b = 0; b < 4; ++b) {
      const auto& s = p.conv_w[b].shape();
      const double fan_in = static_cast<double>(s[1] * s[2] * s[3]), fan_out = static_cast<double>(s[0] * s[2] * s[3]);
      CHECK(p.conv_w[b].max_abs() <= std::sqrt(6.0 / (fan_in + fan_out)));
      CHECK(p.conv_b[b].max_abs() == 0.0);
    }
    CHECK(p.head_w.max_abs() <= std::sqrt(6.0 / (8.0 + 5.0)));
    CHECK(p.tam_fc1_w.max_abs() <= std::sqrt(6.0 / (32.0 + 7.0)));
    CHECK(p.names().size() == p.tensors().size());
  }

  TEST_CASE("checkpoint round trip") {
    testutil::TempDir dir("ckpt");
    BackboneConfig cfg = small_config();
    cfg.segments = 3;
    ModelParams p = init_model(cfg, 21);
    testutil::randomize(p, 5);
    save_checkpoint(dir.path / "m.ckpt", p);
    const ModelParams q = load_checkpoint(dir.path / "m.ckpt");
    CHECK(q.config == cfg);
    CHECK(q.checksum() == p.checksum());
    const auto a = p.tensors();
    const auto b = q.tensors();
    for (std::size_t i = 0; i < a.size(); ++i) {
      REQUIRE(a[i]->shape() == b[i]->shape());
      for (std::size_t j = 0; j < a[i]->numel(); ++j) CHECK((*a[i])[j] == (*b[i])[j]);
    }
    CHECK_THROWS(load_checkpoint(dir.path / "missing.ckpt"));
    {
      std::ofstream bad(dir.path / "bad.ckpt", std::ios::binary);
      bad << "not a checkpoint";
    }
    CHECK_THROWS(load_checkpoint(dir.path / "bad.ckpt"));
  }

  TEST_CASE("end-to-end gradient of the total loss") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const auto pair = testutil::make_tiny_pair(seed);
      LossWeights w;
      w.sat_blocks = {0.5, 0.5};
      CHECK(testutil::tiny_grad_check(pair, w) < 1e-5);
      w.ce = 1.0;
      w.sat = w.tat = 0.0;
      CHECK(testutil::tiny_grad_check(pair, w) < 1e-5);
    }
  }
}
