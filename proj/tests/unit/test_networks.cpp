#include "testing.hpp"

#include "migan/errors.hpp"
#include "migan/networks.hpp"

using namespace migan;

namespace {

std::int64_t conv_params(std::int64_t in, std::int64_t out, std::int64_t k = 4) { return k * k * in * out + out; }
std::int64_t linear_params(std::int64_t in, std::int64_t out) { return in * out + out; }

// hand walk of the statistics network layer table
std::int64_t statistics_network_params(std::int64_t size, std::int64_t c, std::int64_t z, std::int64_t w) {
  std::int64_t total = 0;
  std::int64_t in = c;
  std::int64_t side = size;
  std::int64_t width = w;
  while (side > 4) {
    const auto out = std::min<std::int64_t>(width, 512);
    total += conv_params(in + z, out);
    in = out;
    side /= 2;
    width *= 2;
  }
  total += linear_params(side * side * in + z, 512) + linear_params(512, 1);
  return total;
}

std::int64_t unet_params(const std::vector<std::int64_t>& ch, std::int64_t c, std::int64_t z) {
  std::int64_t total = 0;
  for (std::size_t i = 0; i < ch.size(); ++i) total += conv_params(i == 0 ? c + z : ch[i - 1], ch[i]);
  total += conv_params(ch.back() + z, ch.back(), 3);
  for (std::size_t i = 0; i < ch.size(); ++i) total += conv_params(2 * ch[i], i == 0 ? c : ch[i - 1]);
  return total;
}

}  // namespace

TEST_CASE("statistics network reproduces the 256 px layer table") {
  NetworkSpec spec{.image_size = 256, .image_channels = 3, .z_dim = 8, .base_width = 32};
  auto net = std::make_shared<StatisticsNetwork>(spec);
  CHECK((net->conv_input_channels() == std::vector<std::int64_t>{3 + 8, 32 + 8, 64 + 8, 128 + 8, 256 + 8, 512 + 8}));
  CHECK((net->conv_output_channels() == std::vector<std::int64_t>{32, 64, 128, 256, 512, 512}));
  CHECK(net->fc_input_features() == 4 * 4 * 512 + 8);
  CHECK(net->fc_hidden_features() == 512);
}

TEST_CASE("statistics network at 32 px has three convs") {
  NetworkSpec spec;
  auto net = std::make_shared<StatisticsNetwork>(spec);
  CHECK(spec.conv_depth() == 3);
  CHECK((net->conv_output_channels() == std::vector<std::int64_t>{32, 64, 128}));
  CHECK(net->fc_input_features() == 4 * 4 * 128 + 8);
  auto out = net->forward(torch::randn({5, 8}), torch::randn({5, 3, 32, 32}));
  CHECK(out.sizes() == torch::IntArrayRef({5}));
  CHECK(torch::isfinite(out).all().item<bool>());
}

TEST_CASE("parameter counts match the hand formula") {
  for (auto spec : {NetworkSpec{}, NetworkSpec{.image_size = 64, .z_dim = 4, .base_width = 16},
                    NetworkSpec{.image_size = 16, .image_channels = 1, .z_dim = 2, .base_width = 8,
                                .n_discriminator_scales = 1}}) {
    CAPTURE(spec.image_size);
    auto t = build_statistics_network(spec, 1);
    CHECK(parameter_count(*t) ==
          statistics_network_params(spec.image_size, spec.image_channels, spec.z_dim, spec.base_width));
    auto g = build_generator(spec, 1);
    CHECK(parameter_count(*g) == unet_params(spec.channel_schedule(), spec.image_channels, spec.z_dim));
    auto d = build_discriminator(spec, 1);
    const auto w = spec.base_width;
    const auto per_scale = conv_params(spec.image_channels, w) + conv_params(w, 2 * w) + conv_params(2 * w, 1);
    CHECK(parameter_count(*d) == spec.n_discriminator_scales * per_scale);
  }
}

TEST_CASE("channel schedule doubles and caps at 512") {
  NetworkSpec spec{.image_size = 1024, .base_width = 64};
  CHECK((spec.channel_schedule() == std::vector<std::int64_t>{64, 128, 256, 512, 512, 512, 512, 512}));
}

TEST_CASE("spec validation") {
  CHECK_THROWS_AS((NetworkSpec{.image_size = 48}.validate()), ArgumentError);
  CHECK_THROWS_AS((NetworkSpec{.image_size = 8}.validate()), ArgumentError);
  CHECK_THROWS_AS((NetworkSpec{.image_size = 16, .n_discriminator_scales = 3}.validate()), ArgumentError);
  CHECK_THROWS_AS(build_generator(NetworkSpec{.image_size = 100}, 0), ArgumentError);
  CHECK_NOTHROW((NetworkSpec{.image_size = 1, .image_channels = 2, .arch = Architecture::mlp}.validate()));
  CHECK(parse_architecture("mlp") == Architecture::mlp);
  CHECK_THROWS_AS(parse_architecture("resnet"), ArgumentError);
}

TEST_CASE("generator maps inputs and codes to bounded images") {
  NetworkSpec spec;
  auto g = build_generator(spec, 3);
  auto a = torch::rand({4, 3, 32, 32}) * 2 - 1;
  auto z1 = torch::randn({4, 8});
  auto z2 = torch::randn({4, 8});
  auto out = g->forward(a, z1);
  CHECK((out.sizes() == torch::IntArrayRef({4, 3, 32, 32})));
  CHECK(out.abs().max().item<double>() <= 1.0);
  CHECK((out - g->forward(a, z2)).abs().sum().item<double>() > 0.0);
  CHECK_THROWS_AS(g->forward(a, torch::randn({3, 8})), ArgumentError);
}

TEST_CASE("generator output responds to every code coordinate at initialization") {
  NetworkSpec spec{.image_size = 16, .base_width = 8};
  auto g = build_generator(spec, 5);
  g->to(torch::kDouble);
  torch::NoGradGuard no_grad;
  auto a = torch::rand({1, 3, 16, 16}, torch::kDouble) * 2 - 1;
  auto z = torch::randn({1, 8}, torch::kDouble);
  const double eps = 1e-4;
  for (int k = 0; k < 8; ++k) {
    auto up = z.clone();
    auto down = z.clone();
    up[0][k] += eps;
    down[0][k] -= eps;
    const double slope = ((g->forward(a, up) - g->forward(a, down)) / (2 * eps)).abs().sum().item<double>();
    CAPTURE(k);
    CHECK(slope > 0.0);
  }
}

TEST_CASE("batched and single-image generation agree") {
  auto g = build_generator(NetworkSpec{}, 2);
  torch::NoGradGuard no_grad;
  auto a = torch::rand({3, 3, 32, 32}) * 2 - 1;
  auto z = torch::randn({3, 8});
  auto batched = g->forward(a, z);
  CHECK(torch::allclose(batched[1], g->forward(a.slice(0, 1, 2), z.slice(0, 1, 2))[0], 1e-5, 1e-6));
}

TEST_CASE("multi-scale discriminator returns one patch map per scale") {
  NetworkSpec spec;
  auto d = build_discriminator(spec, 1);
  auto maps = d->forward(torch::randn({2, 3, 32, 32}));
  REQUIRE(maps.size() == 2);
  CHECK((maps[0].sizes() == torch::IntArrayRef({2, 1, 7, 7})));
  CHECK((maps[1].sizes() == torch::IntArrayRef({2, 1, 3, 3})));
  auto constant = d->forward(torch::full({2, 3, 32, 32}, 0.5));
  for (auto& m : constant) CHECK(torch::isfinite(m).all().item<bool>());
}

TEST_CASE("discriminator treats batch entries independently") {
  auto d = build_discriminator(NetworkSpec{}, 4);
  torch::NoGradGuard no_grad;
  auto x = torch::randn({4, 3, 32, 32});
  auto perm = torch::tensor({2, 0, 3, 1});
  auto direct = d->forward(x);
  auto permuted = d->forward(x.index_select(0, perm));
  for (std::size_t s = 0; s < direct.size(); ++s) {
    CHECK(torch::allclose(direct[s].index_select(0, perm), permuted[s], 1e-5, 1e-6));
  }
}

TEST_CASE("statistics network treats a replicated code map like the code vector") {
  NetworkSpec spec;
  auto t = build_statistics_network(spec, 6);
  {
    torch::NoGradGuard no_grad;
    for (auto& p : t->parameters()) p.normal_(0.0, 0.05);
  }
  auto z = torch::randn({3, 8});
  auto x = torch::randn({3, 3, 32, 32});
  auto vector_out = t->forward(z, x);
  auto map_out = t->forward(replicate_code(z, 32, 32), x);
  CHECK(torch::allclose(vector_out, map_out, 1e-5, 1e-6));
}

TEST_CASE("fresh statistics network outputs zero") {
  auto t = build_statistics_network(NetworkSpec{}, 1);
  auto out = t->forward(torch::randn({4, 8}), torch::randn({4, 3, 32, 32}));
  CHECK(out.abs().max().item<double>() == 0.0);
}

TEST_CASE("builders are deterministic in the seed") {
  NetworkSpec spec{.image_size = 16, .base_width = 8};
  auto a = build_generator(spec, 9)->parameters();
  auto b = build_generator(spec, 9)->parameters();
  auto c = build_generator(spec, 10)->parameters();
  bool same = true;
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    same = same && torch::equal(a[i], b[i]);
    differs = differs || !torch::equal(a[i], c[i]);
  }
  CHECK(same);
  CHECK(differs);
}

TEST_CASE("conv weights start near N(0, 0.02) with zero biases") {
  auto g = build_generator(NetworkSpec{.image_size = 64}, 1);
  for (const auto& item : g->named_parameters()) {
    const auto& p = item.value();
    if (item.key().find("bias") != std::string::npos) {
      CHECK(p.abs().max().item<double>() == 0.0);
    } else if (p.numel() > 10000) {
      CHECK(p.std().item<double>() == doctest::Approx(0.02).epsilon(0.05));
    }
  }
}

TEST_CASE("point architecture") {
  NetworkSpec spec{.image_size = 1, .image_channels = 2, .z_dim = 4, .arch = Architecture::mlp, .mlp_hidden = 16};
  auto g = build_generator(spec, 1);
  auto d = build_discriminator(spec, 1);
  auto t = build_statistics_network(spec, 1);
  auto e = build_encoder(spec, 1);
  auto a = torch::randn({6, 2, 1, 1});
  auto z = torch::randn({6, 4});
  auto b = g->forward(a, z);
  CHECK(b.sizes() == a.sizes());
  CHECK(d->forward(b).size() == 1);
  CHECK(t->forward(z, b).sizes() == torch::IntArrayRef({6}));
  CHECK((e->forward(b).sizes() == torch::IntArrayRef({6, 4})));
}

TEST_CASE("conv encoder recovers code-sized vectors") {
  auto e = build_encoder(NetworkSpec{}, 2);
  CHECK((e->forward(torch::randn({2, 3, 32, 32})).sizes() == torch::IntArrayRef({2, 8})));
}
