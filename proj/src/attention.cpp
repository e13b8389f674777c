#include "lrstat/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace lrstat {

std::string to_string(DistanceKind kind) {
  return kind == DistanceKind::Squared ? "squared" : "euclidean";
}

DistanceKind distance_from_string(const std::string& name) {
  if (name == "squared") return DistanceKind::Squared;
  if (name == "euclidean") return DistanceKind::Euclidean;
  throw std::invalid_argument("unknown distance kind '" + name + "' (expected squared|euclidean)");
}

namespace {

void check_group(std::span<const double> w, const char* what) {
  double s = 0.0;
  for (double v : w) {
    if (!(v >= 0.0)) throw std::invalid_argument(std::string(what) + ": weights must be non-negative");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-12) {
    throw std::invalid_argument(std::string(what) + ": weights sum to " + std::to_string(s) + ", expected 1");
  }
}

Tensor normalized(const Tensor& t, const std::string& what) {
  double ss = 0.0;
  for (double v : t.data()) ss += v * v;
  const double norm = std::sqrt(ss);
  if (!(norm > kNormEpsilon)) throw DegenerateInputError(what + ": zero-norm attention");
  Tensor out(Shape{t.numel()});
  for (std::size_t i = 0; i < t.numel(); ++i) out[i] = t[i] / norm;
  return out;
}

}  // namespace

void LossWeights::validate() const {
  const double overall[] = {ce, sat, tat};
  check_group(overall, "loss weights (ce, sat, tat)");
  check_group(sat_blocks, "sat block weights");
  check_group(tat_layers, "tat layer weights");
}

Var spatial_attention(const Var& activation) {
  if (activation.value().rank() != 3) {
    throw ShapeError("spatial_attention: expected [C x H x W], got " + shape_str(activation.shape()));
  }
  return reduce_sum(abs(activation), 0);
}

Var attention_vector(const Var& map) { return l2_normalize(reshape(map, Shape{map.value().numel()})); }

Tensor align_teacher_map(const Tensor& teacher_map, std::size_t student_h, std::size_t student_w) {
  if (teacher_map.rank() != 2) {
    throw ShapeError("align_teacher_map: expected [H x W], got " + shape_str(teacher_map.shape()));
  }
  const std::size_t th = teacher_map.dim(0), tw = teacher_map.dim(1);
  if (th < student_h || tw < student_w) {
    throw ShapeError("align_teacher_map: student grid " + std::to_string(student_h) + "x" +
                     std::to_string(student_w) + " exceeds teacher map " + shape_str(teacher_map.shape()));
  }
  if (th == student_h && tw == student_w) return teacher_map;
  Tensor out(Shape{student_h, student_w});
  kernels::area_resample(teacher_map.data(), th, tw, 1, out.data(), student_h, student_w);
  return out;
}

Var attention_distance(const Var& student_vec, const Tensor& target_vec, DistanceKind kind) {
  Var diff = sub(student_vec, Var::constant(target_vec.reshaped(student_vec.shape())));
  return kind == DistanceKind::Squared ? sum(square(diff)) : l2_norm(diff);
}

TeacherSpatialTargets teacher_spatial_targets(std::span<const Var> teacher_blocks,
                                              std::span<const Shape> student_block_shapes) {
  if (teacher_blocks.size() != student_block_shapes.size()) {
    throw ShapeError("sat: teacher has " + std::to_string(teacher_blocks.size()) + " blocks, student has " +
                     std::to_string(student_block_shapes.size()));
  }
  TeacherSpatialTargets t;
  for (std::size_t i = 0; i < teacher_blocks.size(); ++i) {
    const Tensor map = spatial_attention(detach(teacher_blocks[i])).value();
    const auto& ss = student_block_shapes[i];
    if (ss.size() != 3) throw ShapeError("sat: student block " + std::to_string(i) + " is not [C x H x W]");
    t.vectors.push_back(normalized(align_teacher_map(map, ss[1], ss[2]), "teacher block " + std::to_string(i)));
  }
  return t;
}

TeacherSpatialTargets teacher_spatial_targets(std::span<const Var> teacher_blocks,
                                              std::span<const Var> student_blocks) {
  std::vector<Shape> shapes;
  for (const auto& b : student_blocks) shapes.push_back(b.shape());
  return teacher_spatial_targets(teacher_blocks, shapes);
}

Var sat_loss(std::span<const Var> student_blocks, const TeacherSpatialTargets& targets,
             std::span<const double> block_weights, DistanceKind kind) {
  if (student_blocks.size() != targets.vectors.size() || block_weights.size() != student_blocks.size()) {
    throw ShapeError("sat_loss: " + std::to_string(student_blocks.size()) + " student blocks, " +
                     std::to_string(targets.vectors.size()) + " teacher blocks, " +
                     std::to_string(block_weights.size()) + " weights");
  }
  Var total = Var::constant(Tensor::scalar(0.0));
  for (std::size_t i = 0; i < student_blocks.size(); ++i) {
    Var q;
    try {
      q = attention_vector(spatial_attention(student_blocks[i]));
    } catch (const DegenerateInputError& e) {
      throw DegenerateInputError("sat_loss: student block " + std::to_string(i) + ": " + e.what());
    }
    if (q.value().numel() != targets.vectors[i].numel()) {
      throw ShapeError("sat_loss: block " + std::to_string(i) + " student map has " +
                       std::to_string(q.value().numel()) + " cells, teacher target " +
                       std::to_string(targets.vectors[i].numel()));
    }
    total = add(total, scale(attention_distance(q, targets.vectors[i], kind), block_weights[i]));
  }
  return total;
}

Var sat_loss(std::span<const Var> student_blocks, std::span<const Var> teacher_blocks,
             std::span<const double> block_weights, DistanceKind kind) {
  return sat_loss(student_blocks, teacher_spatial_targets(teacher_blocks, student_blocks), block_weights, kind);
}

TamOutput tam_forward(const Var& segment_features, const TamVars& p) {
  const auto& fs = segment_features.shape();
  if (fs.size() != 2 || fs[0] < 2) {
    throw ShapeError("tam_forward: expected [K x D] with K >= 2, got " + shape_str(fs));
  }
  const std::size_t k = fs[0], d = fs[1];
  const auto& w1 = p.fc1_w.shape();
  const auto& w2 = p.fc2_w.shape();
  if (w1.size() != 2 || w1[0] != k * d || p.fc1_b.shape() != Shape{1, w1[1]} || w2.size() != 2 ||
      w2[0] != w1[1] || w2[1] != k || p.fc2_b.shape() != Shape{1, k}) {
    throw ShapeError("tam_forward: parameters " + shape_str(w1) + "/" + shape_str(w2) +
                     " do not fit features " + shape_str(fs));
  }
  TamOutput out;
  Var flat = reshape(segment_features, Shape{1, k * d});
  out.attention.hidden = relu(add(matmul(flat, p.fc1_w), p.fc1_b));
  out.attention.logits = add(matmul(out.attention.hidden, p.fc2_w), p.fc2_b);
  out.attention.weights = softmax(out.attention.logits, 1);
  out.video_feature = matmul(out.attention.weights, segment_features);
  return out;
}

Var tat_loss(const TemporalAttention& student, const TemporalAttention& teacher,
             std::span<const double> layer_weights, DistanceKind kind) {
  if (layer_weights.size() != 2) {
    throw ShapeError("tat_loss: expected 2 layer weights, got " + std::to_string(layer_weights.size()));
  }
  const Var* s_layers[] = {&student.hidden, &student.logits};
  const Var* t_layers[] = {&teacher.hidden, &teacher.logits};
  const char* names[] = {"hidden", "logits"};
  Var total = Var::constant(Tensor::scalar(0.0));
  for (std::size_t j = 0; j < 2; ++j) {
    const auto& sv = s_layers[j]->value();
    const auto& tv = t_layers[j]->value();
    if (sv.numel() != tv.numel()) {
      throw ShapeError(std::string("tat_loss: ") + names[j] + " width " + std::to_string(sv.numel()) +
                       " vs teacher " + std::to_string(tv.numel()));
    }
    Var u;
    Tensor target;
    try {
      u = l2_normalize(reshape(*s_layers[j], Shape{sv.numel()}));
      target = normalized(tv, std::string("teacher ") + names[j]);
    } catch (const DegenerateInputError& e) {
      throw DegenerateInputError(std::string("tat_loss: ") + names[j] + " layer: " + e.what());
    }
    total = add(total, scale(attention_distance(u, target, kind), layer_weights[j]));
  }
  return total;
}

Var total_loss(const Var& ce, const Var& sat, const Var& tat, const LossWeights& w) {
  w.validate();
  for (const Var* v : {&ce, &sat, &tat}) {
    if (v->value().numel() != 1) throw ShapeError("total_loss: component is not scalar");
  }
  return add(add(scale(ce, w.ce), scale(sat, w.sat)), scale(tat, w.tat));
}

}  // namespace lrstat
