#include <cmath>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "memorize.hpp"
#include "texsyn/gan.hpp"
#include "texsyn/image.hpp"
#include "texsyn/metrics.hpp"

using namespace texsyn;
using namespace texsyn::metrics;
using texsyn::testing::random_tensor;

namespace {

GaussianFit diagonal(std::vector<double> mean, const std::vector<double>& var) {
  GaussianFit g;
  g.dim = mean.size();
  g.mean = std::move(mean);
  g.cov.assign(g.dim * g.dim, 0.0);
  for (std::size_t i = 0; i < g.dim; ++i) g.cov[i * g.dim + i] = var[i];
  return g;
}

GaussianFit random_fit(std::size_t dim, std::size_t rank, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<std::vector<double>> rows(rank + 1, std::vector<double>(dim));
  for (auto& r : rows)
    for (double& x : r) x = n(rng);
  return fit_gaussian(rows);
}

}  // namespace

TEST_CASE("ssim examples") {
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor({16, 16, 3}, rng, 0, 1);
  CHECK(ssim(x, x) == 1.0);
  const double c1 = 1e-4;
  const double flat = ssim(Tensor::zeros({8, 8}), Tensor::full({8, 8}, 1.0));
  CHECK(flat < 0.05);
  CHECK(std::abs(flat - c1 / (1.0 + c1)) <= 1e-15);
  CHECK_THROWS_AS(ssim(Tensor::zeros({8, 8}), Tensor::zeros({8, 9})), DimensionError);
}

TEST_CASE("ssim is symmetric, bounded and 1 only for identical inputs") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    const Tensor a = random_tensor({12, 10, 3}, rng, 0, 1);
    const Tensor b = random_tensor({12, 10, 3}, rng, 0, 1);
    const double ab = ssim(a, b), ba = ssim(b, a);
    CHECK(std::abs(ab - ba) <= 1e-12);
    CHECK(ab >= -1.0);
    CHECK(ab < 1.0);

    std::vector<double> v(a.values().begin(), a.values().end());
    v[(t * 7) % v.size()] += 0.05;
    CHECK(ssim(a, Tensor(a.shape(), v)) < 1.0);
  }
  // Inverted structure drives it towards -1.
  const Tensor cb = checkerboard(16, 16, 2, 0.2, 0.8);
  const Tensor inv = checkerboard(16, 16, 2, 0.8, 0.2);
  CHECK(ssim(cb, inv) < -0.9);
}

TEST_CASE("best crop ssim finds the matching offset") {
  const Tensor ex = checkerboard(40, 40, 4, 0.1, 0.9);
  const Tensor piece = crop(ex, 8, 4, 16, 16);
  CHECK(best_crop_ssim(piece, ex, 4) == 1.0);
  CHECK(best_crop_ssim(crop(ex, 24, 24, 16, 16), ex, 16) == 1.0);  // last offset
  CHECK_THROWS_AS(best_crop_ssim(ex, piece, 4), DimensionError);
}

TEST_CASE("frechet distance diagonal closed form") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> m1(5), m2(5), s1(5), s2(5);
    for (auto* v : {&m1, &m2, &s1, &s2})
      for (double& x : *v) x = u(rng);
    double want = 0.0;
    for (std::size_t i = 0; i < 5; ++i)
      want += std::pow(m1[i] - m2[i], 2) + std::pow(std::sqrt(s1[i]) - std::sqrt(s2[i]), 2);
    const double got = frechet_distance(diagonal(m1, s1), diagonal(m2, s2), 0.0);
    CHECK(std::abs(got - want) <= 1e-10 * std::max(1.0, want));
  }
  CHECK_THROWS_AS(frechet_distance(diagonal({0, 0}, {1, 1}), diagonal({0}, {1})), DimensionError);
}

TEST_CASE("frechet distance is non-negative, symmetric and zero on itself") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t dim = 2 + t % 7;
    const GaussianFit a = random_fit(dim, t % 4, rng), b = random_fit(dim, (t / 4) % 5, rng);
    const double ab = frechet_distance(a, b), ba = frechet_distance(b, a);
    CHECK(ab >= 0.0);
    CHECK(std::isfinite(ab));
    CHECK(std::abs(ab - ba) <= 1e-9 * std::max(1.0, ab));
    CHECK(frechet_distance(a, a) < 1e-6);
  }
}

TEST_CASE("descriptor frechet contract and identity") {
  std::mt19937_64 rng(5);
  std::vector<Tensor> set;
  for (int i = 0; i < 4; ++i) set.push_back(random_tensor({16, 16, 3}, rng, 0, 1));
  CHECK(descriptor_frechet(set, set) < 1e-6);
  std::vector<Tensor> other;
  for (int i = 0; i < 4; ++i) other.push_back(checkerboard(16, 16, 2 + i));
  const double ab = descriptor_frechet(set, other), ba = descriptor_frechet(other, set);
  CHECK(ab > 0.0);
  CHECK(std::abs(ab - ba) <= 1e-9);
  CHECK_THROWS_AS(descriptor_frechet(std::span(set).first(1), set), ContractError);
  CHECK_THROWS_AS(descriptor_frechet(set, std::span(other).first(1)), ContractError);
}

TEST_CASE("memorizing generator scores ssim 1 and zero frechet") {
  const auto config = texsyn::testing::memorizer_config();
  nn::Rng rng(6);
  const gan::Generator g(config, rng);
  const Tensor ex = checkerboard(32, 32, 4, 0.2, 0.8);
  texsyn::testing::memorize(g, ex);
  EvaluateOptions opt;
  opt.samples = 4;
  const MetricReport r = evaluate(g, ex, opt);
  CHECK(r.ssim == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.ssim_mean == doctest::Approx(1.0).epsilon(1e-12));
  REQUIRE(r.dfrechet.has_value());
  CHECK(*r.dfrechet < 1e-6);

  opt.samples = 1;
  opt.with_dfrechet = false;
  const MetricReport one = evaluate(g, ex, opt);
  CHECK(one.ssim == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_FALSE(one.dfrechet.has_value());
}

TEST_CASE("untrained generators stay near the noise baseline") {
  const Tensor ex = checkerboard(64, 64, 4);
  gan::TrainRunConfig config;
  EvaluateOptions opt;
  opt.samples = 4;
  opt.with_dfrechet = false;
  double worst = -1.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    nn::Rng rng(seed);
    const gan::Generator g(config, rng);
    opt.seed = seed;
    worst = std::max(worst, evaluate(g, ex, opt).ssim);
  }
  CHECK(worst < 0.2);
}

TEST_CASE("evaluate is deterministic and validates its inputs") {
  gan::TrainRunConfig config;
  config.feature_dim = 16;
  config.hidden_dim = 16;
  config.heads = 2;
  nn::Rng rng(7);
  const gan::Generator g(config, rng);
  const Tensor ex = checkerboard(48, 48, 4);
  EvaluateOptions opt;
  opt.samples = 3;
  opt.seed = 11;
  opt.exemplar_id = "board";
  const std::string a = evaluate(g, ex, opt).to_json();
  CHECK(a == evaluate(g, ex, opt).to_json());
  CHECK(a.find("\"exemplar\": \"board\"") != std::string::npos);
  opt.seed = 12;
  CHECK(a != evaluate(g, ex, opt).to_json());

  opt.samples = 1;
  CHECK_THROWS_AS(evaluate(g, ex, opt), ContractError);
  opt.samples = 0;
  opt.with_dfrechet = false;
  CHECK_THROWS_AS(evaluate(g, ex, opt), ContractError);
  opt.samples = 2;
  CHECK_THROWS_AS(evaluate(g, checkerboard(16, 16, 4), opt), ContractError);
}
