#include "amm_doctest.hpp"

#include <cmath>

#include "amm/errors.hpp"
#include "amm/networks.hpp"
#include "helpers.hpp"

using namespace amm;
using amm::testing::small_spec;
using amm::testing::conv_spec;

namespace {

torch::Tensor vector_batch(int64_t m, uint64_t seed) {
  return torch::randn({m, 2, 1, 1}, make_rng(seed), real_options()) * 3.0;
}

torch::Tensor image_batch(int64_t m, uint64_t seed) {
  return torch::rand({m, 1, 8, 8}, make_rng(seed), real_options());
}

}  // namespace

TEST_CASE("noise-free y is the softmax of the mean head") {
  auto model = build_model(small_spec(), 1);
  auto x = vector_batch(7, 2);
  auto rng = make_rng(3);
  auto y = sample_inference_y(x, model.encoder_y, rng, {}, 0.0);
  auto head = model.encoder_y->forward(x, {}, rng, 0.0);
  CHECK(torch::equal(y.logits, head.mean));
  CHECK(torch::allclose(y.y, torch::softmax(head.mean, 1), 0, 1e-15));
}

TEST_CASE("inferred y lies on the simplex") {
  for (auto spec : {small_spec(4, 2), conv_spec(4, 3)}) {
    auto model = build_model(spec, 5);
    auto x = spec.encoder.kind == NetKind::Conv ? image_batch(16, 1) : vector_batch(16, 1);
    auto rng = make_rng(6);
    auto y = sample_inference_y(x, model.encoder_y, rng).y;
    CHECK(torch::all((y.sum(1) - 1).abs() <= 1e-6).item<bool>());
    CHECK(torch::all((y > 0) & (y < 1)).item<bool>());
  }
}

TEST_CASE("inference samplers are deterministic under a replayed stream") {
  auto model = build_model(small_spec(), 2);
  auto x = vector_batch(10, 3);
  auto a = make_rng(77), b = make_rng(77);
  auto ya = sample_inference_y(x, model.encoder_y, a);
  auto yb = sample_inference_y(x, model.encoder_y, b);
  CHECK(torch::equal(ya.logits, yb.logits));
  CHECK(torch::equal(ya.y, yb.y));
  CHECK(torch::equal(sample_inference_z(x, ya.logits, model.encoder_z, a),
                     sample_inference_z(x, yb.logits, model.encoder_z, b)));
}

TEST_CASE("noise-free z is the mean head") {
  auto model = build_model(small_spec(), 3);
  auto x = vector_batch(5, 4);
  auto rng = make_rng(0);
  auto cond = torch::randn({5, 3}, make_rng(1), real_options());
  auto z = sample_inference_z(x, cond, model.encoder_z, rng, 0.0);
  CHECK(torch::equal(z, model.encoder_z->forward(x, cond, rng, 0.0).mean));
}

TEST_CASE("perturbing the final mean bias shifts z by the same amount") {
  auto model = build_model(small_spec(), 4);
  auto x = vector_batch(3, 5);
  auto cond = torch::randn({3, 3}, make_rng(2), real_options());
  const double delta = 1e-4;
  auto before_rng = make_rng(8);
  auto before = sample_inference_z(x, cond, model.encoder_z, before_rng).detach();
  {
    torch::NoGradGuard guard;
    model.encoder_z->mean_head()->bias[1] += delta;
  }
  auto after_rng = make_rng(8);
  auto after = sample_inference_z(x, cond, model.encoder_z, after_rng).detach();
  auto diff = after - before;
  CHECK(torch::allclose(diff.select(1, 1), torch::full({3}, delta, real_options()), 0, 1e-12));
  CHECK(torch::allclose(diff.select(1, 0), torch::zeros({3}, real_options()), 0, 1e-12));
}

TEST_CASE("h_y moments match the reparameterized Gaussian") {
  auto model = build_model(small_spec(3, 2), 6);
  auto x = vector_batch(1, 9);
  auto rng = make_rng(10);
  auto head = model.encoder_y->forward(x, {}, rng, 0.0);
  const int64_t n = 10000;
  auto xs = x.expand({n, 2, 1, 1}).contiguous();
  auto h = sample_inference_y(xs, model.encoder_y, rng).logits.detach();
  auto mu = head.mean[0].detach();
  auto sigma = head.log_stddev[0].exp().detach();
  auto mean = h.mean(0), sd = h.std(0);
  for (int64_t k = 0; k < 3; ++k) {
    const double s = sigma[k].item<double>();
    CHECK(std::abs(mean[k].item<double>() - mu[k].item<double>()) <= 4.0 * s / std::sqrt(double(n)));
    CHECK(std::abs(sd[k].item<double>() - s) <= 4.0 * s / std::sqrt(2.0 * (n - 1)));
  }
}

TEST_CASE("initial encoder stddevs are close to one") {
  auto model = build_model(small_spec(), 7);
  auto rng = make_rng(0);
  auto head = model.encoder_y->forward(vector_batch(20, 1), {}, rng);
  auto sigma = head.log_stddev.exp();
  CHECK(torch::all((sigma - 1).abs() < 0.2).item<bool>());
}

TEST_CASE("under Q1 z depends on the y-encoder parameters") {
  auto model = build_model(small_spec(), 8);
  auto x = vector_batch(6, 2);
  auto rng = make_rng(1);
  auto s = model.infer(x, rng);
  auto params = model.encoder_y->parameters();
  auto grads = torch::autograd::grad({s.z.pow(2).sum()}, params, {}, false, false, true);
  double total = 0.0;
  for (auto& g : grads) {
    if (g.defined()) total += g.abs().sum().item<double>();
  }
  CHECK(total > 0.0);
}

TEST_CASE("Q2 draws z first and conditions y on it") {
  auto model = build_model(small_spec(3, 2, Factorization::Q2), 9);
  CHECK(model.encoder_z->cond_dim() == 0);
  CHECK(model.encoder_y->cond_dim() == 2);
  auto rng = make_rng(2);
  auto s = model.infer(vector_batch(8, 3), rng);
  CHECK(s.y.sizes() == torch::IntArrayRef({8, 3}));
  CHECK(s.z.sizes() == torch::IntArrayRef({8, 2}));
  CHECK(torch::all((s.y.sum(1) - 1).abs() <= 1e-6).item<bool>());
}

TEST_CASE("z sampler rejects a wrong conditioning width") {
  auto model = build_model(small_spec(), 1);
  auto rng = make_rng(0);
  CHECK_THROWS_AS(sample_inference_z(vector_batch(4, 1), torch::zeros({4, 5}, real_options()),
                                     model.encoder_z, rng),
                  DimensionError);
}

TEST_CASE("non-finite inputs surface as numeric errors") {
  auto model = build_model(small_spec(), 1);
  auto rng = make_rng(0);
  auto x = vector_batch(2, 1);
  x[0][0][0][0] = std::nan("");
  CHECK_THROWS_AS(sample_inference_y(x, model.encoder_y, rng), NumericError);
}

TEST_CASE("decoder output shape, range and determinism") {
  auto spec = conv_spec(3, 4);
  auto model = build_model(spec, 11);
  auto y = amm::one_hot(torch::tensor({0, 1, 2, 1}, torch::kLong), 3);
  auto z = torch::randn({4, 4}, make_rng(3), real_options()) * 5.0;
  auto out = model.decoder->forward(y, z);
  CHECK(out.sizes() == torch::IntArrayRef({4, 1, 8, 8}));
  CHECK(torch::all((out >= 0) & (out <= 1)).item<bool>());
  CHECK(torch::equal(out, model.decoder->forward(y, z)));

  auto dense = build_model(small_spec(), 1);
  CHECK(dense.decoder->forward(y, torch::zeros({4, 2}, real_options())).sizes() ==
        torch::IntArrayRef({4, 2, 1, 1}));
}

TEST_CASE("discriminator output lies strictly inside (0,1)") {
  auto model = build_model(conv_spec(), 12);
  auto x = image_batch(9, 4);
  auto y = torch::softmax(torch::randn({9, 3}, make_rng(1), real_options()), 1);
  auto z = torch::randn({9, 4}, make_rng(2), real_options());
  auto rho = model.discriminator->forward(x, y, z);
  CHECK(rho.sizes() == torch::IntArrayRef({9}));
  CHECK(torch::all((rho > 0) & (rho < 1)).item<bool>());
}

TEST_CASE("discriminator input gradient matches central differences") {
  auto spec = conv_spec();
  spec.discriminator.init_std = 0.3;
  auto model = build_model(spec, 13);
  auto x = image_batch(4, 5).requires_grad_(true);
  auto y = torch::softmax(torch::randn({4, 3}, make_rng(1), real_options()), 1);
  auto z = torch::randn({4, 4}, make_rng(2), real_options());
  auto f = [&](const torch::Tensor& xx) { return model.discriminator->forward(xx, y, z).mean(); };
  auto grad = torch::autograd::grad({f(x)}, {x})[0];
  const double h = 1e-5;
  const int64_t probes[4][3] = {{0, 1, 1}, {1, 3, 6}, {2, 7, 0}, {3, 4, 4}};
  for (auto& p : probes) {
    auto plus = x.detach().clone(), minus = x.detach().clone();
    plus[p[0]][0][p[1]][p[2]] += h;
    minus[p[0]][0][p[1]][p[2]] -= h;
    const double fd = (f(plus).item<double>() - f(minus).item<double>()) / (2 * h);
    const double an = grad[p[0]][0][p[1]][p[2]].item<double>();
    CHECK(testing::rel_error(an, fd) <= 1e-3);
  }
}

TEST_CASE("permuting the batch permutes the discriminator outputs") {
  auto model = build_model(small_spec(), 14);
  auto x = vector_batch(6, 1);
  auto y = torch::softmax(torch::randn({6, 3}, make_rng(1), real_options()), 1);
  auto z = torch::randn({6, 2}, make_rng(2), real_options());
  auto perm = torch::tensor({3, 0, 5, 1, 4, 2}, torch::kLong);
  auto rho = model.discriminator->forward(x, y, z);
  auto rho_p = model.discriminator->forward(x.index_select(0, perm), y.index_select(0, perm),
                                            z.index_select(0, perm));
  CHECK(torch::allclose(rho_p, rho.index_select(0, perm), 0, 1e-14));
}

TEST_CASE("initialization: Gaussian weights with the configured std and zero biases") {
  auto spec = small_spec();
  spec.discriminator.hidden = {256, 256};
  auto model = build_model(spec, 15);
  for (const auto& item : model.discriminator->named_parameters()) {
    if (item.key().find("bias") != std::string::npos) {
      CHECK(torch::all(item.value() == 0).item<bool>());
    } else if (item.value().numel() > 10000) {
      CHECK(item.value().std().item<double>() == doctest::Approx(0.02).epsilon(0.05));
    }
  }
  CHECK(parameters_finite(*model.discriminator));
}

TEST_CASE("same seed builds identical networks") {
  auto a = build_model(small_spec(), 21), b = build_model(small_spec(), 21);
  auto pa = testing::snapshot(*a.encoder_z), pb = testing::snapshot(*b.encoder_z);
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) CHECK(torch::equal(pa[i], pb[i]));
  CHECK(parameter_count(*a.decoder) == parameter_count(*b.decoder));
}
