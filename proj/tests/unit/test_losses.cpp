#include <cmath>

#include "testing.hpp"
#include "oracles.hpp"
#include "tiny_nets.hpp"

#include "migan/errors.hpp"
#include "migan/losses.hpp"

using namespace migan;

namespace {
const double kLog2 = std::log(2.0);
}

TEST_CASE("constant-zero discriminator gives 2 log 2 and log 2") {
  for (auto scales : {std::vector<double>{0.0}, std::vector<double>{0.0, 0.0, 0.0}}) {
    tiny::ConstantDiscriminator d(scales);
    auto real = torch::randn({4, 3, 8, 8});
    auto fake = torch::randn({4, 3, 8, 8});
    auto losses = adversarial_losses(d, real, fake);
    CHECK(losses.d_loss.item<double>() == doctest::Approx(2 * kLog2).epsilon(1e-6));
    CHECK(losses.g_loss.item<double>() == doctest::Approx(kLog2).epsilon(1e-6));
  }
}

TEST_CASE("confident correct discriminator has vanishing loss") {
  tiny::SignDiscriminator d(20.0);
  auto real = torch::full({4, 1, 4, 4}, 0.5);
  auto fake = torch::full({4, 1, 4, 4}, -0.5);
  CHECK(discriminator_loss(d, real, fake).item<double>() < 1e-6);
}

TEST_CASE("non-saturating generator loss keeps a gradient against a confident discriminator") {
  tiny::SignDiscriminator d(20.0);
  auto fake = torch::full({4, 1, 4, 4}, -0.5, torch::requires_grad());
  auto g = generator_adversarial_loss(d, fake);
  g.backward();
  CHECK(g.item<double>() > 10.0);
  CHECK(fake.grad().abs().sum().item<double>() > 0.0);
}

TEST_CASE("discriminator loss never reaches the generator") {
  tiny::LinearDiscriminator d(16);
  auto fake = torch::randn({3, 1, 4, 4}, torch::requires_grad());
  discriminator_loss(d, torch::randn({3, 1, 4, 4}), fake).backward();
  CHECK_FALSE(fake.grad().defined());
}

TEST_CASE("adversarial shape mismatch") {
  tiny::ConstantDiscriminator d({0.0});
  CHECK_THROWS_AS(adversarial_losses(d, torch::zeros({2, 3, 8, 8}), torch::zeros({2, 3, 4, 4})), ArgumentError);
}

TEST_CASE("l1 loss is a per-element mean") {
  CHECK(migan::l1_loss(torch::ones({2, 3}), torch::ones({2, 3})).item<double>() == 0.0);
  CHECK(migan::l1_loss(torch::ones({2, 3, 4, 4}), torch::zeros({2, 3, 4, 4})).item<double>() == 1.0);
  auto a = torch::zeros({1, 1, 2, 2});
  auto b = a.clone();
  b[0][0][1][0] = 0.5;
  CHECK(migan::l1_loss(a, b).item<double>() == doctest::Approx(0.125));
  CHECK_THROWS_AS(migan::l1_loss(torch::zeros({1, 2}), torch::zeros({2, 1})), ArgumentError);
}

TEST_CASE("rot90 turns clockwise and inverts") {
  auto x = torch::arange(4, torch::kFloat32).view({1, 1, 2, 2});  // [[0,1],[2,3]]
  auto r = apply_transform(GeometricTransform::rot90, x);
  CHECK(torch::equal(r, torch::tensor({2.0f, 0.0f, 3.0f, 1.0f}).view({1, 1, 2, 2})));
  for (auto t : {GeometricTransform::identity, GeometricTransform::rot90, GeometricTransform::vflip}) {
    auto y = torch::randn({2, 3, 8, 8});
    CHECK(torch::equal(apply_inverse_transform(t, apply_transform(t, y)), y));
    CHECK(parse_transform(to_string(t)) == t);
  }
  CHECK_THROWS_AS(parse_transform("shear"), ArgumentError);
}

TEST_CASE("geometry consistency vanishes for an equivariant generator") {
  tiny::FixedGenerator pointwise;
  auto a = torch::randn({2, 3, 8, 8});
  auto z = torch::randn({2, 4});
  for (auto t : {GeometricTransform::rot90, GeometricTransform::vflip}) {
    CHECK(geometry_consistency_loss(as_generate_fn(pointwise), a, z, t).item<double>() == 0.0);
  }
  tiny::LinearGenerator mixing(3 * 8 * 8 / 3, 4);
  auto gray = torch::randn({2, 1, 8, 8});
  auto gc = geometry_consistency_loss(as_generate_fn(mixing), gray, z, GeometricTransform::rot90);
  CHECK(gc.item<double>() > 0.0);
}

TEST_CASE("latent reconstruction checks the code dimension") {
  auto z = torch::randn({4, 8});
  EncodeFn perfect = [&](const torch::Tensor&) { return z; };
  EncodeFn wrong = [](const torch::Tensor& x) { return torch::zeros({x.size(0), 3}); };
  CHECK(latent_reconstruction_loss(perfect, torch::zeros({4, 3, 2, 2}), z).item<double>() == 0.0);
  CHECK_THROWS_AS(latent_reconstruction_loss(wrong, torch::zeros({4, 3, 2, 2}), z), ArgumentError);
}

TEST_CASE("mi loss sends gradients to both the critic and the generator") {
  tiny::LinearGenerator g(4, 2);
  auto t = build_mlp_critic(2, 4, {8}, 1);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(2);
  auto a = torch::randn({16, 1, 2, 2});
  auto z = torch::randn({16, 2});
  auto fake = g.forward(a, z);
  // critic output layer starts at zero; one step makes both sides move
  auto loss = mi_loss(*t, fake, z, resampling_negative_sampler(gen));
  CHECK(loss.item<double>() == doctest::Approx(std::log(4.0)));
  loss.backward();
  bool critic_grad = false;
  for (auto& p : t->parameters()) critic_grad = critic_grad || (p.grad().defined() && p.grad().abs().sum().item<double>() > 0);
  CHECK(critic_grad);

  torch::optim::SGD opt(t->parameters(), 0.5);
  opt.step();
  t->zero_grad();
  g.zero_grad();
  auto fake2 = g.forward(a, z);
  mi_loss(*t, fake2, z, regenerating_negative_sampler(as_generate_fn(g), a, gen)).backward();
  double g_grad = 0.0;
  for (auto& p : g.parameters()) g_grad += p.grad().abs().sum().item<double>();
  CHECK(g_grad > 0.0);
}

TEST_CASE("regenerating sampler pairs positive codes with a second batch") {
  tiny::LinearGenerator g(4, 2);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(3);
  auto a = torch::randn({8, 1, 2, 2});
  auto z = torch::randn({8, 2});
  auto sampler = regenerating_negative_sampler(as_generate_fn(g), a, gen);
  auto neg = sampler(z, g.forward(a, z));
  CHECK(neg.size() == 8);
  CHECK(torch::equal(neg.codes, z));
  CHECK_FALSE(torch::allclose(neg.images, g.forward(a, z)));
  CHECK_THROWS_AS(sampler(z.slice(0, 0, 4), torch::zeros({4, 1, 2, 2})), ArgumentError);
}

TEST_CASE("total loss is the weighted sum of its components") {
  LossWeights w{.lambda_mi = 3, .lambda_l1 = 3, .lambda_gc = 20, .lambda_latent_rec = 0.5};
  std::map<std::string, double> c{{"adv", 1.0}, {"l1", 0.1}, {"gc", 0.01}, {"mi", 1.2}, {"latent_rec", 2.0}};
  CHECK(total_loss(w, c, 0) == doctest::Approx(1.0 + 0.3 + 0.2 + 3.6 + 1.0));
  std::map<std::string, torch::Tensor> t{{"adv", torch::tensor(1.0)}, {"mi", torch::tensor(1.2)}};
  CHECK(total_loss(w, t, 0).item<double>() == doctest::Approx(1.0 + 3.6));
  LossWeights zero_mi = w;
  zero_mi.lambda_mi = 0.0;
  CHECK(total_loss(zero_mi, t, 0).item<double>() == doctest::Approx(1.0));
}

TEST_CASE("total loss rejects unknown and non-finite components") {
  LossWeights w;
  CHECK_THROWS_AS(total_loss(w, std::map<std::string, double>{{"cycle", 1.0}}, 0), ArgumentError);
  try {
    total_loss(w, std::map<std::string, double>{{"l1", std::nan("")}}, 42);
    FAIL("expected a training error");
  } catch (const TrainingError& e) {
    CHECK(e.step() == 42);
    CHECK(std::string(e.what()).find("l1") != std::string::npos);
  }
  CHECK_THROWS_AS((LossWeights{.lambda_mi = -1}.validate()), ArgumentError);
  CHECK_THROWS_AS((LossWeights{.lambda_gc = INFINITY}.validate()), ArgumentError);
}

TEST_CASE("mi loss gradient matches central differences") {
  tiny::LinearGenerator g(4, 2);
  auto t = build_mlp_critic(2, 4, {5}, 2);
  g.to(torch::kDouble);
  t->to(torch::kDouble);
  {
    torch::NoGradGuard no_grad;
    for (auto& p : t->parameters()) p.normal_(0.0, 0.5);
  }
  std::vector<torch::Tensor> params = t->parameters();
  for (auto& p : g.parameters()) params.push_back(p);
  std::int64_t count = 0;
  for (auto& p : params) count += p.numel();
  CHECK(count <= 100);

  auto a = torch::randn({12, 1, 2, 2}, torch::kDouble);
  auto z = torch::randn({12, 2}, torch::kDouble);
  auto z_other = torch::randn({12, 2}, torch::kDouble);
  NegativeSampler fixed = [&](const torch::Tensor& codes, const torch::Tensor&) {
    return make_cross_negative_pairs(codes, g.forward(a, z_other), z_other);
  };
  auto loss = [&] { return mi_loss(*t, g.forward(a, z), z, fixed).item<double>(); };
  auto fd = oracle::finite_difference_gradient(params, loss);
  for (auto& p : params) p.mutable_grad() = torch::Tensor();
  mi_loss(*t, g.forward(a, z), z, fixed).backward();
  CHECK(oracle::max_relative_error(oracle::flatten_grads(params), fd) < 1e-3);
}

TEST_CASE("adversarial loss gradients match central differences") {
  tiny::LinearDiscriminator d(16);
  d.to(torch::kDouble);
  CHECK(parameter_count(d) <= 100);
  auto real = torch::randn({6, 1, 4, 4}, torch::kDouble);
  auto fake = torch::randn({6, 1, 4, 4}, torch::kDouble);
  auto d_params = d.parameters();
  auto d_value = [&] { return discriminator_loss(d, real, fake).item<double>(); };
  auto fd = oracle::finite_difference_gradient(d_params, d_value);
  discriminator_loss(d, real, fake).backward();
  CHECK(oracle::max_relative_error(oracle::flatten_grads(d_params), fd) < 1e-3);

  // generator side: gradient with respect to the fake pixels
  auto pixels = fake.clone().requires_grad_(true);
  auto g_value = [&] { return generator_adversarial_loss(d, pixels).item<double>(); };
  auto fd_pixels = oracle::finite_difference_gradient({pixels}, g_value);
  generator_adversarial_loss(d, pixels).backward();
  CHECK(oracle::max_relative_error(oracle::flatten_grads({pixels}), fd_pixels) < 1e-3);
}
