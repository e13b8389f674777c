#include "lrstat/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

namespace lrstat {

using detail::Node;

namespace {

Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> bw) {
  auto node = std::make_shared<Node>();
  node->grad = Tensor::zeros(value.shape());
  node->value = std::move(value);
  for (const auto& p : parents) node->requires_grad = node->requires_grad || p.requires_grad();
  if (node->requires_grad) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.ptr());
    node->backward = std::move(bw);
  }
  return Var(std::move(node));
}

bool wants_grad(const std::shared_ptr<Node>& n) { return n->requires_grad; }

void require_same(const Var& a, const Var& b, const char* op) {
  require_same_shape(a.value(), b.value(), op);
}

std::size_t inner_extent(const Shape& s, std::size_t from) {
  std::size_t n = 1;
  for (std::size_t i = from; i < s.size(); ++i) n *= s[i];
  return n;
}

std::size_t outer_extent(const Shape& s, std::size_t to) {
  std::size_t n = 1;
  for (std::size_t i = 0; i < to; ++i) n *= s[i];
  return n;
}

}  // namespace

Var Var::leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->grad = Tensor::zeros(value.shape());
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Var(std::move(node));
}

const Tensor& Var::value() const { return node_->value; }
const Tensor& Var::grad() const { return node_->grad; }
bool Var::requires_grad() const { return node_->requires_grad; }
bool Var::is_leaf() const { return !node_->backward; }
void Var::zero_grad() { node_->grad.fill(0.0); }

Var detach(const Var& v) { return Var::constant(v.value()); }

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!wants_grad(p)) continue;
      for (std::size_t i = 0; i < self.grad.numel(); ++i) p->grad[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (wants_grad(pa)) {
      for (std::size_t i = 0; i < self.grad.numel(); ++i) pa->grad[i] += self.grad[i];
    }
    if (wants_grad(pb)) {
      for (std::size_t i = 0; i < self.grad.numel(); ++i) pb->grad[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (wants_grad(pa)) {
      for (std::size_t i = 0; i < self.grad.numel(); ++i) pa->grad[i] += self.grad[i] * pb->value[i];
    }
    if (wants_grad(pb)) {
      for (std::size_t i = 0; i < self.grad.numel(); ++i) pb->grad[i] += self.grad[i] * pa->value[i];
    }
  });
}

Var scale(const Var& a, double c) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = c * a.value()[i];
  return make_result(std::move(out), {a}, [c](Node& self) {
    auto& p = self.parents[0];
    for (std::size_t i = 0; i < self.grad.numel(); ++i) p->grad[i] += c * self.grad[i];
  });
}

Var abs(const Var& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::abs(a.value()[i]);
  return make_result(std::move(out), {a}, [](Node& self) {
    auto& p = self.parents[0];
    for (std::size_t i = 0; i < self.grad.numel(); ++i) {
      const double x = p->value[i];
      if (x > 0.0) {
        p->grad[i] += self.grad[i];
      } else if (x < 0.0) {
        p->grad[i] -= self.grad[i];
      }
    }
  });
}

Var square(const Var& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * a.value()[i];
  return make_result(std::move(out), {a}, [](Node& self) {
    auto& p = self.parents[0];
    for (std::size_t i = 0; i < self.grad.numel(); ++i) p->grad[i] += 2.0 * p->value[i] * self.grad[i];
  });
}

Var relu(const Var& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] > 0.0 ? a.value()[i] : 0.0;
  return make_result(std::move(out), {a}, [](Node& self) {
    auto& p = self.parents[0];
    for (std::size_t i = 0; i < self.grad.numel(); ++i) {
      if (p->value[i] > 0.0) p->grad[i] += self.grad[i];
    }
  });
}

Var reduce_sum(const Var& a, std::size_t axis) {
  const Shape& s = a.shape();
  if (axis >= s.size()) {
    throw ShapeError("reduce_sum: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  const std::size_t outer = outer_extent(s, axis), n = s[axis], inner = inner_extent(s, axis + 1);
  Shape os = s;
  os.erase(os.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor out(os);
  const auto& x = a.value();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += x[(o * n + k) * inner + i];
    }
  }
  return make_result(std::move(out), {a}, [outer, n, inner](Node& self) {
    auto& p = self.parents[0];
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < inner; ++i) p->grad[(o * n + k) * inner + i] += self.grad[o * inner + i];
      }
    }
  });
}

Var sum(const Var& a) {
  return make_result(Tensor::scalar(a.value().sum()), {a}, [](Node& self) {
    auto& p = self.parents[0];
    const double g = self.grad[0];
    for (std::size_t i = 0; i < p->grad.numel(); ++i) p->grad[i] += g;
  });
}

Var reshape(const Var& a, Shape shape) {
  return make_result(a.value().reshaped(std::move(shape)), {a}, [](Node& self) {
    auto& p = self.parents[0];
    for (std::size_t i = 0; i < self.grad.numel(); ++i) p->grad[i] += self.grad[i];
  });
}

Var stack(std::span<const Var> items) {
  if (items.empty()) throw ShapeError("stack: no items");
  const Shape& item_shape = items.front().shape();
  for (const auto& it : items) require_same_shape(items.front().value(), it.value(), "stack");
  Shape os{items.size()};
  os.insert(os.end(), item_shape.begin(), item_shape.end());
  Tensor out(os);
  const std::size_t m = shape_numel(item_shape);
  for (std::size_t k = 0; k < items.size(); ++k) {
    std::copy_n(items[k].value().data().begin(), m, out.data().begin() + static_cast<std::ptrdiff_t>(k * m));
  }
  return make_result(std::move(out), std::vector<Var>(items.begin(), items.end()), [m](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      auto& p = self.parents[k];
      if (!wants_grad(p)) continue;
      for (std::size_t i = 0; i < m; ++i) p->grad[i] += self.grad[k * m + i];
    }
  });
}

Var row(const Var& a, std::size_t i) {
  if (a.value().rank() != 2 || i >= a.shape()[0]) {
    throw ShapeError("row: index " + std::to_string(i) + " invalid for " + shape_str(a.shape()));
  }
  const std::size_t n = a.shape()[1];
  Tensor out(Shape{n});
  for (std::size_t j = 0; j < n; ++j) out[j] = a.value().at(i, j);
  return make_result(std::move(out), {a}, [i, n](Node& self) {
    auto& p = self.parents[0];
    for (std::size_t j = 0; j < n; ++j) p->grad[i * n + j] += self.grad[j];
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a.value().rank() != 2 || b.value().rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul: cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor out(Shape{m, n});
  kernels::gemm(false, false, m, n, k, a.value().data(), b.value().data(), out.data());
  return make_result(std::move(out), {a, b}, [m, k, n](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (wants_grad(pa)) {
      std::vector<double> tmp(m * k);
      kernels::gemm(false, true, m, k, n, self.grad.data(), pb->value.data(), tmp);
      for (std::size_t i = 0; i < tmp.size(); ++i) pa->grad[i] += tmp[i];
    }
    if (wants_grad(pb)) {
      std::vector<double> tmp(k * n);
      kernels::gemm(true, false, k, n, m, pa->value.data(), self.grad.data(), tmp);
      for (std::size_t i = 0; i < tmp.size(); ++i) pb->grad[i] += tmp[i];
    }
  });
}

Var conv2d(const Var& x, const Var& kernel, std::size_t stride, std::size_t pad) {
  const Shape& xs = x.shape();
  const Shape& ks = kernel.shape();
  if (xs.size() != 3 || ks.size() != 4 || xs[0] != ks[1]) {
    throw ShapeError("conv2d: input " + shape_str(xs) + " incompatible with kernel " + shape_str(ks));
  }
  kernels::Conv2dGeometry g{xs[0], xs[1], xs[2], ks[0], ks[2], ks[3], stride, pad};
  g.validate();
  Tensor out(Shape{g.out_channels, g.out_h(), g.out_w()});
  kernels::conv2d_forward(g, x.value().data(), kernel.value().data(), out.data());
  return make_result(std::move(out), {x, kernel}, [g](Node& self) {
    auto& px = self.parents[0];
    auto& pk = self.parents[1];
    if (wants_grad(px)) kernels::conv2d_backward_input(g, self.grad.data(), pk->value.data(), px->grad.data());
    if (wants_grad(pk)) kernels::conv2d_backward_kernel(g, self.grad.data(), px->value.data(), pk->grad.data());
  });
}

Var add_channel_bias(const Var& x, const Var& bias) {
  const Shape& xs = x.shape();
  if (xs.size() != 3 || bias.shape() != Shape{xs[0]}) {
    throw ShapeError("add_channel_bias: bias " + shape_str(bias.shape()) + " does not match " + shape_str(xs));
  }
  const std::size_t c = xs[0], plane = xs[1] * xs[2];
  Tensor out(xs);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double b = bias.value()[ch];
    for (std::size_t i = 0; i < plane; ++i) out[ch * plane + i] = x.value()[ch * plane + i] + b;
  }
  return make_result(std::move(out), {x, bias}, [c, plane](Node& self) {
    auto& px = self.parents[0];
    auto& pb = self.parents[1];
    if (wants_grad(px)) {
      for (std::size_t i = 0; i < self.grad.numel(); ++i) px->grad[i] += self.grad[i];
    }
    if (wants_grad(pb)) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) s += self.grad[ch * plane + i];
        pb->grad[ch] += s;
      }
    }
  });
}

Var avgpool2d(const Var& x, std::size_t window, std::size_t stride) {
  const Shape& xs = x.shape();
  if (xs.size() != 3) throw ShapeError("avgpool2d: expected [C x H x W], got " + shape_str(xs));
  kernels::Pool2dGeometry g{xs[0], xs[1], xs[2], window, stride};
  g.validate();
  Tensor out(Shape{g.channels, g.out_h(), g.out_w()});
  kernels::avgpool2d_forward(g, x.value().data(), out.data());
  return make_result(std::move(out), {x}, [g](Node& self) {
    kernels::avgpool2d_backward(g, self.grad.data(), self.parents[0]->grad.data());
  });
}

Var softmax(const Var& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  const std::size_t outer = outer_extent(s, axis), n = s[axis], inner = inner_extent(s, axis + 1);
  Tensor out(s);
  const auto& v = x.value();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      auto at = [&](std::size_t k) { return (o * n + k) * inner + i; };
      double m = v[at(0)];
      for (std::size_t k = 1; k < n; ++k) m = std::max(m, v[at(k)]);
      double z = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        out[at(k)] = std::exp(v[at(k)] - m);
        z += out[at(k)];
      }
      for (std::size_t k = 0; k < n; ++k) out[at(k)] /= z;
    }
  }
  return make_result(std::move(out), {x}, [outer, n, inner](Node& self) {
    auto& p = self.parents[0];
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        auto at = [&](std::size_t k) { return (o * n + k) * inner + i; };
        double dot = 0.0;
        for (std::size_t k = 0; k < n; ++k) dot += self.grad[at(k)] * self.value[at(k)];
        for (std::size_t k = 0; k < n; ++k) p->grad[at(k)] += self.value[at(k)] * (self.grad[at(k)] - dot);
      }
    }
  });
}

Var l2_normalize(const Var& x) {
  const auto& v = x.value();
  double ss = 0.0;
  for (double e : v.data()) ss += e * e;
  const double norm = std::sqrt(ss);
  if (!(norm > kNormEpsilon)) {
    throw DegenerateInputError("l2_normalize: vector norm " + std::to_string(norm) +
                               " is at or below 1e-12 (all-zero attention or activation)");
  }
  Tensor out(v.shape());
  for (std::size_t i = 0; i < v.numel(); ++i) out[i] = v[i] / norm;
  return make_result(std::move(out), {x}, [norm](Node& self) {
    auto& p = self.parents[0];
    double dot = 0.0;
    for (std::size_t i = 0; i < self.grad.numel(); ++i) dot += self.grad[i] * self.value[i];
    for (std::size_t i = 0; i < self.grad.numel(); ++i) {
      p->grad[i] += (self.grad[i] - self.value[i] * dot) / norm;
    }
  });
}

Var l2_norm(const Var& x) {
  double ss = 0.0;
  for (double e : x.value().data()) ss += e * e;
  const double norm = std::sqrt(ss);
  return make_result(Tensor::scalar(norm), {x}, [norm](Node& self) {
    if (norm == 0.0) return;
    auto& p = self.parents[0];
    const double g = self.grad[0];
    for (std::size_t i = 0; i < p->grad.numel(); ++i) p->grad[i] += g * p->value[i] / norm;
  });
}

Var cross_entropy(const Var& logits, std::size_t label) {
  const auto& v = logits.value();
  if (label >= v.numel()) {
    throw std::out_of_range("cross_entropy: label " + std::to_string(label) + " out of range for " +
                            std::to_string(v.numel()) + " classes");
  }
  double m = v[0];
  for (double e : v.data()) m = std::max(m, e);
  double z = 0.0;
  for (double e : v.data()) z += std::exp(e - m);
  const double lse = m + std::log(z);
  return make_result(Tensor::scalar(lse - v[label]), {logits}, [label, m, z](Node& self) {
    auto& p = self.parents[0];
    const double g = self.grad[0];
    for (std::size_t i = 0; i < p->grad.numel(); ++i) {
      const double prob = std::exp(p->value[i] - m) / z;
      p->grad[i] += g * (prob - (i == label ? 1.0 : 0.0));
    }
  });
}

void backward(const Var& root) {
  if (root.value().numel() != 1) {
    throw ShapeError("backward: root must be scalar, got " + shape_str(root.shape()));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{&root.node(), 0}};
  seen.insert(&root.node());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (n->backward) n->grad.fill(0.0);
  }
  root.node().grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

double grad_check(const std::function<Var(const Var&)>& f, const Tensor& x, double h) {
  Var leaf = Var::leaf(x);
  Var y = f(leaf);
  backward(y);
  const Tensor analytic = leaf.grad();

  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(Var::constant(probe)).item();
    probe[i] = x[i] - h;
    const double down = f(Var::constant(probe)).item();
    probe[i] = x[i];
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace lrstat
