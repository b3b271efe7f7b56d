#include "wsod/attention.hpp"

#include <cmath>

#include <stdexcept>

#include "doctest.h"
#include "wsod/rng.hpp"

using namespace wsod;

TEST_CASE("zero projection gives a uniform attention map") {
  Tensor map({3, 4, 2});
  Rng rng(79);
  rng.fill_uniform(map, -2.0, 2.0);
  Tensor proj = Tensor::zeros({2});
  AttentionMap att = compute_attention(map, proj);
  for (std::size_t i = 0; i < att.weights.size(); ++i) {
    CHECK(att.weights[i] == doctest::Approx(1.0 / 12.0).epsilon(1e-12));
  }
}

TEST_CASE("attention saturates to one-hot on a dominant cell") {
  Tensor map = Tensor::zeros({2, 2, 1});
  map.at(1, 0, 0) = 50.0;
  Tensor proj({1}, {1.0});
  AttentionMap att = compute_attention(map, proj);
  CHECK(att.weights.at(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("attention weights are a probability distribution") {
  Rng rng(83);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor map({(std::size_t)rng.uniform_int(1, 6), (std::size_t)rng.uniform_int(1, 6),
                (std::size_t)rng.uniform_int(1, 4)});
    rng.fill_uniform(map, -3.0, 3.0);
    Tensor proj({map.dim(2)});
    rng.fill_uniform(proj, -1.0, 1.0);
    AttentionMap att = compute_attention(map, proj);
    double sum = 0.0;
    for (std::size_t i = 0; i < att.weights.size(); ++i) {
      CHECK(att.weights[i] >= 0.0);
      sum += att.weights[i];
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("enhance applies 1 + A exactly") {
  Tensor map({2, 2, 3});
  Rng rng(89);
  rng.fill_uniform(map, -1.0, 1.0);

  AttentionMap uniform;
  uniform.weights = Tensor::full({2, 2}, 0.25);
  Tensor out = enhance(map, uniform);
  for (std::size_t i = 0; i < map.size(); ++i) {
    CHECK(out[i] == doctest::Approx(map[i] * 1.25).epsilon(1e-15));
  }

  AttentionMap onehot;
  onehot.weights = Tensor::zeros({2, 2});
  onehot.weights.at(0, 1) = 1.0;
  Tensor out2 = enhance(map, onehot);
  for (std::size_t d = 0; d < 3; ++d) {
    CHECK(out2.at(0, 1, d) == doctest::Approx(2.0 * map.at(0, 1, d)));
    CHECK(out2.at(1, 0, d) == map.at(1, 0, d));
  }

  // elementwise identity: recomputing X + X.A reproduces X' exactly
  AttentionMap att;
  att.weights = Tensor({2, 2});
  rng.fill_uniform(att.weights, 0.0, 1.0);
  Tensor out3 = enhance(map, att);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t d = 0; d < 3; ++d) {
        const double recomputed = map.at(r, c, d) + map.at(r, c, d) * att.weights.at(r, c);
        CHECK(out3.at(r, c, d) == recomputed);
      }
}

TEST_CASE("enhance rejects dimension mismatch and is linear in X") {
  Tensor map({2, 3, 1});
  AttentionMap att;
  att.weights = Tensor::full({3, 2}, 1.0 / 6.0);
  CHECK_THROWS_AS(enhance(map, att), std::invalid_argument);

  AttentionMap ok;
  ok.weights = Tensor::full({2, 3}, 1.0 / 6.0);
  Tensor zero = Tensor::zeros({2, 3, 1});
  Tensor out = enhance(zero, ok);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("AttentionLayer gradients pass finite differences") {
  Rng rng(97);
  for (int trial = 0; trial < 5; ++trial) {
    AttentionLayer layer(3, rng);
    Tensor map({4, 3, 3});
    rng.fill_uniform(map, -1.0, 1.0);
    Tensor target(map.shape());
    rng.fill_uniform(target, -1.0, 1.0);

    ParamSet ps;
    layer.register_params(ps, "att");
    ps.zero_grads();

    Tensor y = layer.forward(map);
    Tensor gout(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i) gout[i] = y[i] - target[i];
    Tensor gmap = layer.backward(gout);

    auto [proj, gproj] = ps.entries().at("att.projection");
    Tensor saved = *proj;
    auto loss_of_proj = [&](const Tensor& cand) {
      *proj = cand;
      Tensor yy = layer.forward(map);
      *proj = saved;
      double s = 0.0;
      for (std::size_t i = 0; i < yy.size(); ++i)
        s += 0.5 * (yy[i] - target[i]) * (yy[i] - target[i]);
      return s;
    };
    CHECK(finite_difference_check(loss_of_proj, saved, *gproj, 1e-5) < 1e-4);

    auto loss_of_map = [&](const Tensor& cand) {
      Tensor yy = layer.forward(cand);
      double s = 0.0;
      for (std::size_t i = 0; i < yy.size(); ++i)
        s += 0.5 * (yy[i] - target[i]) * (yy[i] - target[i]);
      return s;
    };
    CHECK(finite_difference_check(loss_of_map, map, gmap, 1e-5, 20) < 1e-4);
  }
}
