#include <cmath>
#include <filesystem>

#include "testing.hpp"
#include "oracles.hpp"

#include "migan/errors.hpp"
#include "migan/mi_core.hpp"
#include "migan/networks.hpp"

using namespace migan;

namespace {

const double kLog4 = std::log(4.0);

// Reports a fixed logit per sample, taken from the code's first entry.
class LookupCritic : public Critic {
 public:
  torch::Tensor forward(const torch::Tensor& codes, const torch::Tensor&) override {
    return codes.select(1, 0);
  }
};

class ZeroCritic : public Critic {
 public:
  torch::Tensor forward(const torch::Tensor& codes, const torch::Tensor&) override {
    return torch::zeros({codes.size(0)});
  }
};

}  // namespace

TEST_CASE("sample_latent draws seeded standard normals") {
  auto a = sample_latent(1000, 8, 3);
  auto b = sample_latent(1000, 8, 3);
  CHECK(a.sizes() == torch::IntArrayRef({1000, 8}));
  CHECK(torch::equal(a, b));
  CHECK(std::abs(a.mean().item<double>()) < 0.05);
  CHECK(std::abs(a.std().item<double>() - 1.0) < 0.05);
  CHECK_FALSE(torch::equal(a, sample_latent(1000, 8, 4)));
  CHECK_THROWS_AS(sample_latent(0, 8, 1), ArgumentError);
  CHECK_THROWS_AS(sample_latent(4, 0, 1), ArgumentError);
}

TEST_CASE("negative pairs keep the batch size and avoid the generating code") {
  auto codes = sample_latent(32, 8, 1);
  auto images = torch::randn({32, 3, 4, 4});
  auto neg = make_negative_pairs(codes, images, 7);
  CHECK(neg.polarity == Polarity::negative);
  CHECK(neg.size() == 32);
  CHECK((neg.codes == codes).all(1).sum().item<int64_t>() == 0);
  CHECK(torch::equal(neg.codes, make_negative_pairs(codes, images, 7).codes));

  auto one = make_negative_pairs(sample_latent(1, 8, 2), torch::zeros({1, 3, 4, 4}), 5);
  CHECK_FALSE(torch::equal(one.codes, sample_latent(1, 8, 2)));
}

TEST_CASE("cross negatives reject a code paired with its own image") {
  auto codes = sample_latent(4, 8, 1);
  auto images = torch::zeros({4, 3, 4, 4});
  auto other = sample_latent(4, 8, 2);
  auto neg = make_cross_negative_pairs(codes, images, other);
  CHECK(torch::equal(neg.codes, codes));
  auto clash = other.clone();
  clash[2] = codes[2];
  CHECK_THROWS_AS(make_cross_negative_pairs(codes, images, clash), ArgumentError);
  CHECK_THROWS_AS(make_cross_negative_pairs(codes, images, other.slice(0, 0, 3)), ArgumentError);
}

TEST_CASE("resampled codes never equal the originals") {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(11);
  auto codes = torch::zeros({16, 2});
  for (int i = 0; i < 100; ++i) {
    auto fresh = resample_distinct_codes(codes, gen);
    CHECK((fresh == codes).all(1).sum().item<int64_t>() == 0);
  }
}

TEST_CASE("jsd bound of a constant-zero critic is -log 4") {
  auto z = sample_latent(64, 8, 1);
  auto x = torch::randn({64, 3, 4, 4});
  ZeroCritic critic;
  auto est = jsd_mi_estimate(critic, make_positive_pairs(z, x), make_negative_pairs(z, x, 2));
  CHECK(est.item<double>() == doctest::Approx(-kLog4).epsilon(1e-6));
}

TEST_CASE("saturated critic drives the jsd bound to zero") {
  auto pos = torch::full({32}, 20.0);
  auto neg = torch::full({32}, -20.0);
  CHECK(std::abs(jsd_bound_from_logits(pos, neg).item<double>()) < 1e-6);
}

TEST_CASE("jsd bound stays finite and non-positive for extreme logits") {
  auto pos = torch::tensor({-1000.0f, 1000.0f, 0.0f});
  auto neg = torch::tensor({1000.0f, -1000.0f, 3.0f});
  auto v = jsd_bound_from_logits(pos, neg).item<double>();
  CHECK(std::isfinite(v));
  CHECK(v <= 0.0);
}

TEST_CASE("jsd bound matches direct evaluation of the log-sigmoid terms") {
  auto pos = torch::randn({50}, torch::kDouble) * 3;
  auto neg = torch::randn({50}, torch::kDouble) * 3;
  double expected = 0.0;
  for (int i = 0; i < 50; ++i) {
    expected += oracle::log_sigmoid(pos[i].item<double>()) / 50.0;
    expected += oracle::log_sigmoid(-neg[i].item<double>()) / 50.0;
  }
  CHECK(jsd_bound_from_logits(pos, neg).item<double>() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("estimators check polarity and batch sizes") {
  auto z = sample_latent(8, 2, 1);
  auto x = torch::zeros({8, 1, 1, 1});
  LookupCritic critic;
  auto pos = make_positive_pairs(z, x);
  auto neg = make_negative_pairs(z, x, 1);
  CHECK_THROWS_AS(jsd_mi_estimate(critic, neg, pos), ArgumentError);
  CHECK_THROWS_AS(jsd_mi_estimate(critic, pos, pos), ArgumentError);
  auto short_neg = make_negative_pairs(z.slice(0, 0, 4), x.slice(0, 0, 4), 1);
  CHECK_THROWS_AS(jsd_mi_estimate(critic, pos, short_neg), ArgumentError);
  CHECK_THROWS_AS(make_positive_pairs(z, torch::zeros({7, 1, 1, 1})), ArgumentError);
  CHECK_THROWS_AS(jsd_bound_from_logits(torch::zeros({0}), torch::zeros({0})), ArgumentError);
}

TEST_CASE("dv bound of a constant critic is zero") {
  auto t = torch::full({128}, 0.7);
  CHECK(std::abs(dv_bound_from_logits(t, t).item<double>()) < 1e-6);
}

TEST_CASE("analytic Gaussian MI") {
  CHECK(GaussianOracleSpec{0.0}.analytic_mi() == 0.0);
  CHECK(GaussianOracleSpec{0.9}.analytic_mi() == doctest::Approx(0.830366).epsilon(1e-5));
  CHECK(GaussianOracleSpec{0.8}.analytic_mi() == doctest::Approx(0.510826).epsilon(1e-5));
  CHECK((GaussianOracleSpec{0.5, 3}.analytic_mi() == doctest::Approx(3 * 0.143841).epsilon(1e-4)));
  CHECK_THROWS_AS(GaussianOracleSpec{1.0}.validate(), ArgumentError);
  CHECK_THROWS_AS(GaussianOracleSpec{-1.2}.validate(), ArgumentError);
}

TEST_CASE("Gaussian pairs have the requested correlation") {
  auto [pos, neg] = gaussian_pairs(GaussianOracleSpec{0.6}, 20000, 3);
  auto x = pos.codes.reshape({-1});
  auto y = pos.images.reshape({-1});
  auto yn = neg.images.reshape({-1});
  auto corr = [](const torch::Tensor& a, const torch::Tensor& b) {
    auto ac = a - a.mean();
    auto bc = b - b.mean();
    return ((ac * bc).mean() / (ac.std(false) * bc.std(false))).item<double>();
  };
  CHECK(corr(x, y) == doctest::Approx(0.6).epsilon(0.03));
  CHECK(std::abs(corr(neg.codes.reshape({-1}), yn)) < 0.03);
  CHECK(pos.images.sizes() == torch::IntArrayRef({20000, 1, 1, 1}));
}

TEST_CASE("trained jsd critic approaches the quadrature optimum") {
  for (double rho : {0.5, 0.9}) {
    const GaussianOracleSpec spec{rho};
    auto critic = build_mlp_critic(1, 1, {64, 64}, 1);
    EstimatorTrainOptions options{.steps = 2000, .lr = 1e-3};
    train_estimator(*critic, gaussian_pair_source(spec, 256, 2), options);
    torch::NoGradGuard no_grad;
    auto [pos, neg] = gaussian_pairs(spec, 50000, 9);
    const double est = jsd_mi_estimate(*critic, pos, neg).item<double>();
    const double optimum = oracle::optimal_jsd_bound_gaussian(rho);
    CAPTURE(rho);
    CHECK(est <= optimum + 0.01);
    CHECK(std::abs(est - optimum) < 0.03);
  }
}

TEST_CASE("trained dv critic recovers the analytic MI") {
  const GaussianOracleSpec spec{0.8};
  auto critic = build_mlp_critic(1, 1, {64, 64}, 4);
  EstimatorTrainOptions options{.steps = 2000, .lr = 1e-3, .objective = EstimatorObjective::dv};
  train_estimator(*critic, gaussian_pair_source(spec, 256, 5), options);
  torch::NoGradGuard no_grad;
  auto [pos, neg] = gaussian_pairs(spec, 50000, 6);
  CHECK(std::abs(dv_mi_estimate(*critic, pos, neg).item<double>() - spec.analytic_mi()) < 0.15);
}

TEST_CASE("jsd estimate gradient matches central differences") {
  auto critic = build_mlp_critic(2, 2, {6}, 3);
  critic->to(torch::kDouble);
  {
    // move off the zero output layer so every parameter has a gradient
    torch::NoGradGuard no_grad;
    auto gen = at::make_generator<at::CPUGeneratorImpl>(8);
    for (auto& p : critic->parameters()) p.normal_(0.0, 0.5, gen);
  }
  CHECK(parameter_count(*critic) <= 100);
  auto z = sample_latent(16, 2, 1).to(torch::kDouble);
  auto x = torch::randn({16, 2, 1, 1}, torch::kDouble);
  auto zn = sample_latent(16, 2, 2).to(torch::kDouble);
  auto pos = make_positive_pairs(z, x);
  PairBatch neg{zn, x, Polarity::negative};
  auto loss = [&] { return jsd_mi_estimate(*critic, pos, neg).item<double>(); };
  auto fd = oracle::finite_difference_gradient(critic->parameters(), loss);
  critic->zero_grad();
  jsd_mi_estimate(*critic, pos, neg).backward();
  CHECK(oracle::max_relative_error(oracle::flatten_grads(critic->parameters()), fd) < 1e-3);
}

TEST_CASE("estimator training reports a non-finite estimate as a training error") {
  auto critic = build_mlp_critic(1, 1, {4}, 1);
  PairSource bad = [] {
    auto z = torch::full({4, 1}, std::nan(""));
    auto x = torch::zeros({4, 1, 1, 1});
    return std::make_pair(make_positive_pairs(z, x), PairBatch{z, x, Polarity::negative});
  };
  CHECK_THROWS_AS(train_estimator(*critic, bad, {.steps = 3}), TrainingError);
}

TEST_CASE("trace CSV round trip") {
  auto path = std::filesystem::temp_directory_path() / "migan_trace_test.csv";
  std::vector<TracePoint> trace{{0, -1.386}, {1, -1.2}, {2, -0.5}};
  write_trace_csv(path, trace);
  auto back = read_trace_csv(path);
  REQUIRE(back.size() == 3);
  CHECK(back[2].step == 2);
  CHECK(back[2].estimate == doctest::Approx(-0.5));
  std::filesystem::remove(path);
}
