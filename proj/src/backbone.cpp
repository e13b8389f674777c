#include "lrstat/backbone.hpp"

#include <cmath>
#include <stdexcept>

namespace lrstat {

void BackboneConfig::validate() const {
  if (widths.size() < 2) throw std::invalid_argument("backbone: need at least 2 blocks");
  for (auto w : widths) {
    if (w == 0) throw std::invalid_argument("backbone: block widths must be positive");
  }
  if (in_channels == 0 || in_h == 0 || in_w == 0) throw std::invalid_argument("backbone: empty input shape");
  if (kernel == 0 || kernel % 2 == 0) throw std::invalid_argument("backbone: kernel size must be odd");
  if (num_classes == 0) throw std::invalid_argument("backbone: need at least one class");
  if (segments < 2) throw std::invalid_argument("backbone: temporal attention needs K >= 2 segments");
  if (tam_hidden == 0) throw std::invalid_argument("backbone: TAM hidden width must be positive");
}

std::vector<BlockGeometry> block_geometry(const BackboneConfig& cfg) {
  cfg.validate();
  std::vector<BlockGeometry> g;
  std::size_t c = cfg.in_channels, h = cfg.in_h, w = cfg.in_w;
  for (auto width : cfg.widths) {
    const bool pool = h % 2 == 0 && w % 2 == 0;
    g.push_back({c, width, h, w, pool, pool ? h / 2 : h, pool ? w / 2 : w});
    c = width;
    h = g.back().out_h;
    w = g.back().out_w;
  }
  return g;
}

std::vector<Tensor*> ModelParams::tensors() {
  std::vector<Tensor*> t;
  for (std::size_t b = 0; b < conv_w.size(); ++b) {
    t.push_back(&conv_w[b]);
    t.push_back(&conv_b[b]);
  }
  for (Tensor* x : {&head_w, &head_b, &tam_fc1_w, &tam_fc1_b, &tam_fc2_w, &tam_fc2_b}) t.push_back(x);
  return t;
}

std::vector<const Tensor*> ModelParams::tensors() const {
  auto mut = const_cast<ModelParams*>(this)->tensors();
  return {mut.begin(), mut.end()};
}

std::vector<std::string> ModelParams::names() const {
  std::vector<std::string> n;
  for (std::size_t b = 0; b < conv_w.size(); ++b) {
    n.push_back("block" + std::to_string(b) + ".conv_w");
    n.push_back("block" + std::to_string(b) + ".conv_b");
  }
  for (const char* s : {"head.w", "head.b", "tam.fc1_w", "tam.fc1_b", "tam.fc2_w", "tam.fc2_b"}) n.emplace_back(s);
  return n;
}

std::uint64_t ModelParams::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Tensor* t : tensors()) h = fnv1a(t->data(), h);
  return h;
}

namespace {

Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(-limit, limit);
  return t;
}

}  // namespace

ModelParams init_model(const BackboneConfig& cfg, std::uint64_t seed) {
  const auto geo = block_geometry(cfg);
  Rng rng(Rng::derive(seed, {0x1417}));
  ModelParams p;
  p.config = cfg;
  const std::size_t kk = cfg.kernel * cfg.kernel;
  for (const auto& g : geo) {
    p.conv_w.push_back(glorot(Shape{g.out_channels, g.in_channels, cfg.kernel, cfg.kernel},
                              g.in_channels * kk, g.out_channels * kk, rng));
    p.conv_b.push_back(Tensor::zeros(Shape{g.out_channels}));
  }
  const std::size_t d = cfg.feature_dim(), k = cfg.segments, hid = cfg.tam_hidden;
  p.head_w = glorot(Shape{d, cfg.num_classes}, d, cfg.num_classes, rng);
  p.head_b = Tensor::zeros(Shape{1, cfg.num_classes});
  p.tam_fc1_w = glorot(Shape{k * d, hid}, k * d, hid, rng);
  p.tam_fc1_b = Tensor::zeros(Shape{1, hid});
  p.tam_fc2_w = glorot(Shape{hid, k}, hid, k, rng);
  p.tam_fc2_b = Tensor::zeros(Shape{1, k});
  return p;
}

std::vector<Var> ModelVars::all() const {
  std::vector<Var> v;
  for (std::size_t b = 0; b < conv_w.size(); ++b) {
    v.push_back(conv_w[b]);
    v.push_back(conv_b[b]);
  }
  for (const Var* x : {&head_w, &head_b, &tam.fc1_w, &tam.fc1_b, &tam.fc2_w, &tam.fc2_b}) v.push_back(*x);
  return v;
}

ModelVars make_vars(const ModelParams& p, bool requires_grad) {
  ModelVars v;
  for (std::size_t b = 0; b < p.conv_w.size(); ++b) {
    v.conv_w.push_back(Var::leaf(p.conv_w[b], requires_grad));
    v.conv_b.push_back(Var::leaf(p.conv_b[b], requires_grad));
  }
  v.head_w = Var::leaf(p.head_w, requires_grad);
  v.head_b = Var::leaf(p.head_b, requires_grad);
  v.tam = {Var::leaf(p.tam_fc1_w, requires_grad), Var::leaf(p.tam_fc1_b, requires_grad),
           Var::leaf(p.tam_fc2_w, requires_grad), Var::leaf(p.tam_fc2_b, requires_grad)};
  return v;
}

SegmentSample segment_sample(std::size_t frame_count, std::size_t k, SampleMode mode, Rng* rng) {
  if (k == 0 || frame_count < k) {
    throw std::invalid_argument("segment_sample: " + std::to_string(frame_count) + " frames cannot fill " +
                                std::to_string(k) + " segments");
  }
  if (mode == SampleMode::TrainRandom && rng == nullptr) {
    throw std::invalid_argument("segment_sample: random mode needs an rng");
  }
  SegmentSample s;
  s.mode = mode;
  const std::size_t base = frame_count / k, extra = frame_count % k;
  std::size_t start = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t len = base + (i < extra ? 1 : 0);
    s.frame_indices.push_back(mode == SampleMode::TestCenter ? start + len / 2 : start + rng->below(len));
    start += len;
  }
  return s;
}

SegmentSample segment_sample(const VideoClip& clip, std::size_t k, SampleMode mode, Rng* rng) {
  return segment_sample(clip.frames.size(), k, mode, rng);
}

BlockActivations frame_forward(const Tensor& frame, const ModelVars& vars, const BackboneConfig& cfg) {
  const auto geo = block_geometry(cfg);
  const Shape expected{cfg.in_channels, cfg.in_h, cfg.in_w};
  if (frame.shape() != expected) {
    throw ShapeError("backbone: frame " + shape_str(frame.shape()) + " does not match model input " +
                     shape_str(expected));
  }
  BlockActivations acts;
  Var x = Var::constant(frame);
  for (std::size_t b = 0; b < geo.size(); ++b) {
    x = relu(add_channel_bias(conv2d(x, vars.conv_w[b], 1, cfg.kernel / 2), vars.conv_b[b]));
    if (geo[b].pooled) x = avgpool2d(x, 2, 2);
    acts.blocks.push_back(x);
  }
  const auto& last = geo.back();
  acts.feature = scale(reduce_sum(reduce_sum(x, 2), 1), 1.0 / static_cast<double>(last.out_h * last.out_w));
  return acts;
}

BackboneOutput backbone_forward(std::span<const Tensor> frames, const ModelVars& vars, const BackboneConfig& cfg) {
  if (frames.size() != cfg.segments) {
    throw ShapeError("backbone_forward: expected " + std::to_string(cfg.segments) + " segment frames, got " +
                     std::to_string(frames.size()));
  }
  BackboneOutput out;
  std::vector<Var> feats;
  for (const auto& f : frames) {
    out.segments.push_back(frame_forward(f, vars, cfg));
    feats.push_back(out.segments.back().feature);
  }
  out.features = stack(feats);
  return out;
}

ModelOutput model_forward(std::span<const Tensor> frames, const ModelVars& vars, const BackboneConfig& cfg) {
  ModelOutput out;
  out.backbone = backbone_forward(frames, vars, cfg);
  out.tam = tam_forward(out.backbone.features, vars.tam);
  out.logits = add(matmul(out.tam.video_feature, vars.head_w), vars.head_b);
  return out;
}

}  // namespace lrstat
