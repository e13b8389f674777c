#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "lrstat/attention.hpp"

using namespace lrstat;
using testutil::random_tensor;

namespace {

TamVars random_tam(std::size_t k, std::size_t d, std::size_t hidden, std::uint64_t seed) {
  return {Var::leaf(random_tensor({k * d, hidden}, seed, -0.5, 0.5)), Var::leaf(random_tensor({1, hidden}, seed + 1, 0.0, 0.2)),
          Var::leaf(random_tensor({hidden, k}, seed + 2, -0.5, 0.5)), Var::leaf(random_tensor({1, k}, seed + 3, -0.1, 0.1))};
}

TemporalAttention fixed_tam(Tensor hidden, Tensor logits) {
  const Var l = Var::constant(logits);
  return {Var::constant(std::move(hidden)), l, softmax(l, 1)};
}

}  // namespace

TEST_SUITE("attention") {
  TEST_CASE("spatial attention map") {
    CHECK(spatial_attention(Var::constant(Tensor(Shape{3, 2, 2}))).value().max_abs() == 0.0);
    Tensor o(Shape{2, 1, 1});
    o[0] = 1.0;
    o[1] = -2.0;
    CHECK(spatial_attention(Var::constant(o)).value().item() == 3.0);
    const Tensor x = random_tensor({4, 3, 5}, 1);
    Tensor cx = x;
    for (auto& v : cx.data()) v *= -2.5;
    const Tensor a = spatial_attention(Var::constant(x)).value(), b = spatial_attention(Var::constant(cx)).value();
    CHECK(a.shape() == Shape{3, 5});
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(b[i] == doctest::Approx(2.5 * a[i]).epsilon(1e-14));
    CHECK_THROWS_AS(spatial_attention(Var::constant(Tensor(Shape{3, 3}))), ShapeError);
  }

  TEST_CASE("attention vector") {
    const Tensor v = attention_vector(Var::constant(Tensor::matrix({{3, 0}, {0, 4}}))).value();
    CHECK(v.shape() == Shape{4});
    CHECK(v[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(v[1] == 0.0);
    CHECK(v[3] == doctest::Approx(0.8).epsilon(1e-15));
    const Tensor u = attention_vector(Var::constant(Tensor(Shape{3, 4}, 2.0))).value();
    for (double e : u.data()) CHECK(e == doctest::Approx(1.0 / std::sqrt(12.0)).epsilon(1e-15));
    CHECK_THROWS_AS(attention_vector(Var::constant(Tensor(Shape{2, 2}))), DegenerateInputError);
  }

  TEST_CASE("teacher map alignment") {
    const Tensor same = random_tensor({3, 4}, 2, 0.0, 1.0);
    CHECK(align_teacher_map(same, 3, 4).bit_equal(same));
    const Tensor c = align_teacher_map(Tensor(Shape{24, 32}, 0.37), 3, 4);
    for (double v : c.data()) CHECK(v == 0.37);
    const Tensor blocks =
        Tensor::matrix({{1, 1, 2, 2}, {1, 1, 2, 2}, {3, 3, 4, 4}, {3, 3, 4, 4}});
    CHECK(align_teacher_map(blocks, 2, 2).bit_equal(Tensor::matrix({{1, 2}, {3, 4}})));
    // Fractional footprints: 3 cells onto 2 gives weights (2/3, 1/3) and (1/3, 2/3).
    const Tensor frac = align_teacher_map(Tensor::matrix({{0, 3, 6}}), 1, 2);
    CHECK(frac[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(frac[1] == doctest::Approx(5.0).epsilon(1e-15));
    const Tensor nonneg = align_teacher_map(random_tensor({7, 9}, 3, 0.0, 1.0), 3, 4);
    for (double v : nonneg.data()) CHECK(v >= 0.0);
    CHECK_THROWS_AS(align_teacher_map(same, 4, 4), ShapeError);
  }

  TEST_CASE("sat loss values") {
    const std::vector<Var> s{Var::constant(random_tensor({2, 3, 4}, 4)), Var::constant(random_tensor({3, 2, 2}, 5))};
    const std::vector<double> w{0.5, 0.5};
    CHECK(sat_loss(s, s, w).item() == 0.0);

    Tensor e1(Shape{1, 1, 2}), e2(Shape{1, 1, 2});
    e1[0] = 1.0;
    e2[1] = 5.0;
    const std::vector<Var> a{Var::constant(e1)}, b{Var::constant(e2)};
    const std::vector<double> one{1.0};
    CHECK(sat_loss(a, b, one).item() == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(sat_loss(a, b, one, DistanceKind::Euclidean).item() == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  }

  TEST_CASE("sat loss is invariant to positive rescaling of any block") {
    const std::vector<Var> s{Var::constant(random_tensor({2, 6, 8}, 6)), Var::constant(random_tensor({4, 3, 4}, 7))};
    const std::vector<Var> t{Var::constant(random_tensor({2, 12, 16}, 8)), Var::constant(random_tensor({4, 6, 8}, 9))};
    const std::vector<double> w{0.3, 0.7};
    const double base = sat_loss(s, t, w).item();
    Tensor scaled = s[1].value();
    for (auto& v : scaled.data()) v *= 13.0;
    const std::vector<Var> s2{s[0], Var::constant(scaled)};
    CHECK(std::abs(sat_loss(s2, t, w).item() - base) < 1e-9);
  }

  TEST_CASE("sat loss errors") {
    const std::vector<Var> s{Var::constant(random_tensor({2, 3, 4}, 10))};
    const std::vector<Var> t2{s[0], s[0]};
    const std::vector<double> one{1.0}, two{0.5, 0.5};
    CHECK_THROWS_AS(sat_loss(s, t2, two), ShapeError);
    CHECK_THROWS_AS(sat_loss(s, s, two), ShapeError);
    const std::vector<Var> dead{Var::constant(Tensor(Shape{2, 3, 4}))};
    try {
      sat_loss(dead, s, one);
      FAIL("expected degenerate input");
    } catch (const DegenerateInputError& e) {
      CHECK(std::string(e.what()).find("student block 0") != std::string::npos);
    }
    try {
      sat_loss(s, dead, one);
      FAIL("expected degenerate input");
    } catch (const DegenerateInputError& e) {
      CHECK(std::string(e.what()).find("teacher block 0") != std::string::npos);
    }
  }

  TEST_CASE("sat loss sends no gradient to the teacher") {
    Var s = Var::leaf(random_tensor({2, 3, 4}, 11));
    Var t = Var::leaf(random_tensor({2, 6, 8}, 12));
    const std::vector<double> one{1.0};
    backward(sat_loss(std::vector<Var>{s}, std::vector<Var>{t}, one));
    CHECK(t.grad().max_abs() == 0.0);
    CHECK(s.grad().max_abs() > 0.0);
  }

  TEST_CASE("sat loss gradient") {
    const Tensor t = random_tensor({3, 6, 8}, 13);
    const std::vector<double> one{1.0};
    for (auto kind : {DistanceKind::Squared, DistanceKind::Euclidean}) {
      const double err = grad_check(
          [&](const Var& x) { return sat_loss(std::vector<Var>{x}, std::vector<Var>{Var::constant(t)}, one, kind); },
          random_tensor({3, 3, 4}, 14), 1e-5);
      CHECK(err < 1e-5);
    }
  }

  TEST_CASE("tam forward") {
    const std::size_t k = 3, d = 4;
    const Tensor f = random_tensor({k, d}, 15);
    TamVars p = random_tam(k, d, 8, 16);
    const TamOutput out = tam_forward(Var::constant(f), p);
    CHECK(out.attention.hidden.shape() == Shape{1, 8});
    CHECK(out.attention.logits.shape() == Shape{1, k});
    double s = 0.0;
    for (double w : out.attention.weights.value().data()) {
      CHECK(w > 0.0);
      CHECK(w < 1.0);
      s += w;
    }
    CHECK(std::abs(s - 1.0) <= 1e-12);
    for (double h : out.attention.hidden.value().data()) CHECK(h >= 0.0);

    // Zero second layer: equal logits, so the feature is the segment mean.
    p.fc2_w = Var::constant(Tensor(Shape{8, k}));
    p.fc2_b = Var::constant(Tensor(Shape{1, k}, 0.4));
    const Tensor mean = tam_forward(Var::constant(f), p).video_feature.value();
    for (std::size_t j = 0; j < d; ++j) {
      CHECK(mean[j] == doctest::Approx((f.at(0, j) + f.at(1, j) + f.at(2, j)) / 3.0).epsilon(1e-14));
    }
  }

  TEST_CASE("tam convexity bound for K = 2") {
    const Tensor f = random_tensor({2, 5}, 17);
    TamVars p = random_tam(2, 5, 4, 18);
    p.fc2_w = Var::constant(Tensor(Shape{4, 2}));
    p.fc2_b = Var::constant(Tensor::matrix({{0.0, -9.0}}));
    const TamOutput out = tam_forward(Var::constant(f), p);
    const double eps = out.attention.weights.value()[1];
    double gap = 0.0, dist = 0.0;
    for (std::size_t j = 0; j < 5; ++j) {
      gap += std::pow(f.at(1, j) - f.at(0, j), 2);
      dist += std::pow(out.video_feature.value()[j] - f.at(0, j), 2);
    }
    CHECK(std::sqrt(dist) <= eps * std::sqrt(gap) * (1.0 + 1e-12));
  }

  TEST_CASE("tam shape errors") {
    const TamVars p = random_tam(3, 4, 8, 19);
    CHECK_THROWS_AS(tam_forward(Var::constant(Tensor(Shape{1, 4})), random_tam(1, 4, 8, 20)), ShapeError);
    CHECK_THROWS_AS(tam_forward(Var::constant(Tensor(Shape{3, 5})), p), ShapeError);
    CHECK_THROWS_AS(tam_forward(Var::constant(Tensor(Shape{12})), p), ShapeError);
  }

  TEST_CASE("tam gradients") {
    const std::size_t k = 3, d = 4, h = 6;
    const Tensor f = random_tensor({k, d}, 21);
    const TamVars p = random_tam(k, d, h, 22);
    const Tensor coef = random_tensor({1, d}, 23);
    auto readout = [&](const TamOutput& o) { return sum(mul(o.video_feature, Var::constant(coef))); };
    CHECK(grad_check([&](const Var& x) { return readout(tam_forward(x, p)); }, f) < 1e-5);
    CHECK(grad_check([&](const Var& x) { return readout(tam_forward(Var::constant(f), {x, p.fc1_b, p.fc2_w, p.fc2_b})); },
                     p.fc1_w.value()) < 1e-5);
    CHECK(grad_check([&](const Var& x) { return readout(tam_forward(Var::constant(f), {p.fc1_w, x, p.fc2_w, p.fc2_b})); },
                     p.fc1_b.value()) < 1e-5);
    CHECK(grad_check([&](const Var& x) { return readout(tam_forward(Var::constant(f), {p.fc1_w, p.fc1_b, x, p.fc2_b})); },
                     p.fc2_w.value()) < 1e-5);
    CHECK(grad_check([&](const Var& x) { return readout(tam_forward(Var::constant(f), {p.fc1_w, p.fc1_b, p.fc2_w, x})); },
                     p.fc2_b.value()) < 1e-5);
  }

  TEST_CASE("tat loss values") {
    const std::vector<double> half{0.5, 0.5};
    const auto a = fixed_tam(Tensor::matrix({{1, 0, 0}}), Tensor::matrix({{0.2, 0.5}}));
    const auto b = fixed_tam(Tensor::matrix({{0, 2, 0}}), Tensor::matrix({{0.4, 1.0}}));
    CHECK(tat_loss(a, a, half).item() == 0.0);
    CHECK(tat_loss(a, b, half).item() == doctest::Approx(1.0).epsilon(1e-15));
    const auto c = fixed_tam(Tensor::matrix({{1, 1, 0}}), Tensor::matrix({{-1.0, 0.5}}));
    const double l = tat_loss(a, c, std::vector<double>{0.25, 0.75}).item();
    CHECK(l >= 0.0);
    CHECK(l <= 4.0);
  }

  TEST_CASE("tat loss errors") {
    const auto a = fixed_tam(Tensor::matrix({{1, 0, 0}}), Tensor::matrix({{0.2, 0.5}}));
    const auto wide = fixed_tam(Tensor::matrix({{1, 0, 0, 0}}), Tensor::matrix({{0.2, 0.5}}));
    const auto dead = fixed_tam(Tensor::matrix({{0, 0, 0}}), Tensor::matrix({{0.2, 0.5}}));
    CHECK_THROWS_AS(tat_loss(a, wide, std::vector<double>{0.5, 0.5}), ShapeError);
    CHECK_THROWS_AS(tat_loss(a, a, std::vector<double>{1.0}), ShapeError);
    CHECK_THROWS_AS(tat_loss(dead, a, std::vector<double>{0.5, 0.5}), DegenerateInputError);
    CHECK_THROWS_AS(tat_loss(a, dead, std::vector<double>{0.5, 0.5}), DegenerateInputError);
  }

  TEST_CASE("total loss") {
    const Var ce = Var::constant(Tensor::scalar(3.0)), sat = Var::constant(Tensor::scalar(6.0)),
              tat = Var::constant(Tensor::scalar(9.0));
    LossWeights w;
    CHECK(total_loss(ce, sat, tat, w).item() == doctest::Approx(6.0).epsilon(1e-15));
    w.ce = 1.0;
    w.sat = w.tat = 0.0;
    CHECK(total_loss(ce, sat, tat, w).item() == 3.0);
    w.ce = 0.5;
    CHECK_THROWS_AS(total_loss(ce, sat, tat, w), std::invalid_argument);
    LossWeights bad;
    bad.sat_blocks = {0.5, 0.6};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    LossWeights neg;
    neg.ce = -0.1;
    neg.sat = 0.6;
    neg.tat = 0.5;
    CHECK_THROWS_AS(neg.validate(), std::invalid_argument);
    CHECK_THROWS_AS(total_loss(Var::constant(Tensor(Shape{2})), sat, tat, LossWeights{}), ShapeError);
  }

  TEST_CASE("distance names") {
    CHECK(distance_from_string(to_string(DistanceKind::Euclidean)) == DistanceKind::Euclidean);
    CHECK(distance_from_string("squared") == DistanceKind::Squared);
    CHECK_THROWS_AS(distance_from_string("l1"), std::invalid_argument);
  }
}
