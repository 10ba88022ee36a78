#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "texsyn/descriptors.hpp"
#include "texsyn/image.hpp"

using namespace texsyn;
using namespace texsyn::descriptors;

namespace {

// Pixel pairs of a 2x2 window, corners indexed row-major (a, b, c, d).
constexpr std::array<std::array<int, 2>, 4> kOraclePairs{{{0, 1}, {0, 2}, {0, 3}, {1, 2}}};

std::uint8_t oracle_types(const std::array<int, 4>& px) {
  std::uint8_t t = 0;
  for (std::size_t i = 0; i < 4; ++i)
    if (px[kOraclePairs[i][0]] == px[kOraclePairs[i][1]]) t |= static_cast<std::uint8_t>(1u << i);
  return t;
}

Tensor rgb_image(std::size_t h, std::size_t w, const std::vector<std::array<double, 3>>& px) {
  std::vector<double> v;
  for (const auto& p : px) v.insert(v.end(), p.begin(), p.end());
  return Tensor({h, w, 3}, std::move(v));
}

Tensor rotate180(const Tensor& img) {
  const std::size_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
  std::vector<double> v(img.size());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t k = 0; k < c; ++k)
        v[((h - 1 - y) * w + (w - 1 - x)) * c + k] = img.value((y * w + x) * c + k);
  return Tensor(img.shape(), std::move(v));
}

Tensor transpose_patch(const Tensor& p) { return transpose(p); }

// Independent histogram oracle: every stride-2 window, per-type pixel counts.
TextonFeatures mth_oracle(const Tensor& img, double threshold) {
  const std::size_t h = img.dim(0), w = img.dim(1);
  auto at = [&](long y, long x, std::size_t k) {
    y = std::clamp<long>(y, 0, static_cast<long>(h) - 1);
    x = std::clamp<long>(x, 0, static_cast<long>(w) - 1);
    return img.value((static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)) * 3 + k);
  };
  auto gray = [&](long y, long x) { return (at(y, x, 0) + at(y, x, 1) + at(y, x, 2)) / 3.0; };
  auto qcolor = [&](long y, long x) {
    int q[3];
    for (std::size_t k = 0; k < 3; ++k) q[k] = static_cast<int>(std::lround(at(y, x, k) * 255)) / 64;
    return 16 * q[0] + 4 * q[1] + q[2];
  };
  auto obin = [&](long y, long x) {
    const double gx = (gray(y - 1, x + 1) + 2 * gray(y, x + 1) + gray(y + 1, x + 1)) -
                      (gray(y - 1, x - 1) + 2 * gray(y, x - 1) + gray(y + 1, x - 1));
    const double gy = (gray(y + 1, x - 1) + 2 * gray(y + 1, x) + gray(y + 1, x + 1)) -
                      (gray(y - 1, x - 1) + 2 * gray(y - 1, x) + gray(y - 1, x + 1));
    if (std::hypot(gx, gy) / (4 * std::numbers::sqrt2) < threshold) return -1;
    double deg = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
    if (deg < 0) deg += 180.0;
    if (deg >= 180.0) deg -= 180.0;
    return static_cast<int>(std::floor(deg / 10.0 + 1e-9)) % 18;  // 179.99.. folds to 0
  };
  TextonFeatures f;
  for (long y = 0; y < static_cast<long>(h); y += 2)
    for (long x = 0; x < static_cast<long>(w); x += 2) {
      const std::array<std::array<long, 2>, 4> corners{{{y, x}, {y, x + 1}, {y + 1, x}, {y + 1, x + 1}}};
      for (const auto& pair : kOraclePairs) {
        const auto& p = corners[pair[0]];
        const auto& q = corners[pair[1]];
        if (qcolor(p[0], p[1]) != qcolor(q[0], q[1])) continue;
        for (const auto& c : {p, q}) {
          f.color[qcolor(c[0], c[1])] += 1;
          const int b = obin(c[0], c[1]);
          if (b >= 0) f.orientation[b] += 1;
        }
      }
    }
  return f;
}

}  // namespace

TEST_CASE("mu map examples") {
  for (double c : {1.0, 0.5}) {
    const Tensor m = mu_map(Tensor::full({4, 4}, c));
    for (double v : m.values()) CHECK(v == doctest::Approx(c * c).epsilon(1e-15));
  }
  const Tensor m = mu_map(Tensor({2, 2}, {0, 1, 1, 0}));
  for (double v : m.values()) CHECK(v == doctest::Approx(0.25));
  CHECK_THROWS_AS(mu_map(Tensor::zeros({0, 4})), DimensionError);
}

TEST_CASE("sigma2 map examples") {
  const Tensor flat = sigma2_map(Tensor::full({4, 4}, 0.3));
  for (double v : flat.values()) CHECK(v == 0.0);
  const Tensor checker = sigma2_map(Tensor({2, 2}, {0, 1, 1, 0}));
  for (double v : checker.values()) CHECK(v == doctest::Approx(0.0625));
}

TEST_CASE("mu/sigma maps: non-negativity and transposition symmetry") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<std::size_t> ext(1, 7);
  for (int t = 0; t < 200; ++t) {
    const Tensor p = testing::random_tensor({ext(rng), ext(rng)}, rng, 0.0, 1.0);
    const Tensor s = sigma2_map(p);
    for (double v : s.values()) CHECK(v >= 0.0);
    const Tensor mt = mu_map(transpose_patch(p));
    const Tensor st = sigma2_map(transpose_patch(p));
    const Tensor m_ref = transpose(mu_map(p));
    const Tensor s_ref = transpose(s);
    for (std::size_t i = 0; i < mt.size(); ++i) {
      CHECK(std::abs(mt.value(i) - m_ref.value(i)) <= 1e-15);
      CHECK(std::abs(st.value(i) - s_ref.value(i)) <= 1e-15);
    }
  }
}

TEST_CASE("batched maps match per-patch maps") {
  std::mt19937_64 rng(10);
  const Tensor img = testing::random_tensor({12, 12, 3}, rng, 0.0, 1.0);
  const PatchGrid grid = make_patch_grid(12, 12, 4, 2);
  const MuSigmaMaps maps = image_mu_sigma(img, grid);
  CHECK(maps.mean_map.shape() == Shape{25, 16});
  const Tensor planes = extract_planes(channel_mean(img), grid);
  for (std::size_t i = 0; i < grid.count(); ++i) {
    std::vector<double> pv(planes.values().begin() + i * 16, planes.values().begin() + (i + 1) * 16);
    const Tensor p({4, 4}, pv);
    const Tensor m = mu_map(p), s = sigma2_map(p);
    for (std::size_t j = 0; j < 16; ++j) {
      CHECK(maps.mean_map.value(i * 16 + j) == doctest::Approx(m.value(j)).epsilon(1e-13));
      CHECK(maps.var_map.value(i * 16 + j) == doctest::Approx(s.value(j)).epsilon(1e-13));
    }
  }
}

TEST_CASE("mu/sigma batch gradients") {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 5; ++t) {
    const double e = testing::gradcheck(
        [](const std::vector<Tensor>& v) {
          const auto maps = mu_sigma_batch(v[0]);
          return add(maps.mean_map, maps.var_map);
        },
        {testing::random_tensor({3, 4, 4}, rng, 0.0, 1.0)});
    CHECK(e < 1e-4);
  }
}

TEST_CASE("sobel orientation examples") {
  const OrientationMap flat = sobel_orientation(Tensor::full({5, 5}, 0.4));
  for (int b : flat.bins) CHECK(b == kNoEdge);
  for (double m : flat.magnitude.values()) CHECK(m == 0.0);

  std::vector<double> v(8 * 8), h(8 * 8);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) {
      v[y * 8 + x] = x >= 4 ? 1.0 : 0.0;
      h[y * 8 + x] = y >= 4 ? 1.0 : 0.0;
    }
  const OrientationMap vert = sobel_orientation(Tensor({8, 8}, v));
  const OrientationMap horz = sobel_orientation(Tensor({8, 8}, h));
  for (std::size_t r = 1; r < 7; ++r) {
    CHECK(vert.bins[r * 8 + 3] == 0);
    CHECK(vert.bins[r * 8 + 4] == 0);
    CHECK(horz.bins[3 * 8 + r] == 9);
    CHECK(horz.bins[4 * 8 + r] == 9);
    CHECK(vert.bins[r * 8 + 0] == kNoEdge);
  }
  // Falling edge folds onto the same orientation.
  std::vector<double> f(8 * 8);
  for (std::size_t i = 0; i < 64; ++i) f[i] = 1.0 - h[i];
  CHECK(sobel_orientation(Tensor({8, 8}, f)).bins[3 * 8 + 3] == 9);
  CHECK_THROWS_AS(sobel_orientation(Tensor::zeros({2, 8})), DimensionError);
}

TEST_CASE("quantize color examples") {
  CHECK(quantize_color(0, 0, 0) == 0);
  CHECK(quantize_color(255, 255, 255) == 63);
  CHECK(quantize_color(70, 130, 200) == 27);
  CHECK_THROWS_AS(quantize_color(256, 0, 0), DomainError);
  CHECK_THROWS_AS(quantize_color(0, -1, 0), DomainError);
}

TEST_CASE("texton window examples") {
  CHECK(window_textons(5, 5, 3, 7) == kT1);
  CHECK(window_textons(2, 2, 2, 2) == kAllTextons);
  CHECK(window_textons(0, 1, 2, 3) == 0);
}

TEST_CASE("texton detection matches brute force on every 4-level window") {
  std::size_t mismatches = 0;
  for (int code = 0; code < 256; ++code) {
    const std::array<int, 4> px{code & 3, (code >> 2) & 3, (code >> 4) & 3, (code >> 6) & 3};
    const TextonMap map = detect_textons(px, 2, 2);
    if (map.windows.size() != 1 || map.windows[0].types != oracle_types(px)) ++mismatches;
  }
  CHECK(mismatches == 0);
}

TEST_CASE("texton detection matches brute force on every binary 4x4 map") {
  std::size_t mismatches = 0;
  std::vector<int> q(16);
  for (int code = 0; code < (1 << 16); ++code) {
    for (int i = 0; i < 16; ++i) q[i] = (code >> i) & 1;
    const TextonMap map = detect_textons(q, 4, 4);
    if (map.windows.size() != 4) {
      ++mismatches;
      continue;
    }
    for (const TextonWindow& w : map.windows) {
      const std::array<int, 4> px{q[w.y * 4 + w.x], q[w.y * 4 + w.x + 1], q[(w.y + 1) * 4 + w.x],
                                  q[(w.y + 1) * 4 + w.x + 1]};
      if (w.types != oracle_types(px)) ++mismatches;
    }
  }
  CHECK(mismatches == 0);
}

TEST_CASE("texton detection on odd extents replicates the edge") {
  const std::vector<int> q{1, 2, 3, 4, 5, 6, 7, 8, 9};
  const TextonMap map = detect_textons(q, 3, 3);
  REQUIRE(map.windows.size() == 4);
  CHECK(map.windows[3].types == kAllTextons);  // single pixel 9 replicated
  CHECK(map.windows[1].types == kT1);  // column 2 replicated
  CHECK(map.windows[2].types == kT2);  // row 2 replicated
}

TEST_CASE("mth features examples") {
  const Tensor uniform = Tensor::full({8, 8, 3}, 0.5);
  const TextonFeatures f = mth_features(uniform);
  double orient = 0.0;
  for (double v : f.orientation) orient += v;
  CHECK(orient == 0.0);
  int nonzero = 0;
  for (double v : f.color) nonzero += v > 0.0;
  CHECK(nonzero == 1);
  CHECK(f.mass() == doctest::Approx(1.0).epsilon(1e-12));

  const Tensor distinct = rgb_image(2, 2, {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  CHECK(mth_features(distinct).mass() == 0.0);
  const auto combined = mth_features(distinct).combined();
  for (double v : combined) CHECK(v == 0.0);
}

TEST_CASE("mth features match the window-by-window oracle") {
  std::vector<std::array<double, 3>> px;
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x)
      px.push_back((x / 2) % 2 == 0 ? std::array<double, 3>{1, 1, 0} : std::array<double, 3>{0, 0, 1});
  const Tensor stripes = rgb_image(8, 8, px);
  MthOptions raw;
  raw.normalize = false;
  const TextonFeatures got = mth_features(stripes, raw);
  const TextonFeatures want = mth_oracle(stripes, raw.edge_threshold);
  CHECK(got.color == want.color);
  CHECK(got.orientation == want.orientation);
  CHECK(got.mass() > 0.0);

  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> pick(0, 3);
  const std::array<std::array<double, 3>, 4> palette{{{0, 0, 0}, {1, 1, 1}, {1, 0, 0}, {0.3, 0.6, 0.9}}};
  for (int t = 0; t < 50; ++t) {
    std::vector<std::array<double, 3>> r;
    for (int i = 0; i < 10 * 12; ++i) r.push_back(palette[pick(rng)]);
    const Tensor img = rgb_image(10, 12, r);
    const TextonFeatures a = mth_features(img, raw), b = mth_oracle(img, raw.edge_threshold);
    CHECK(a.color == b.color);
    CHECK(a.orientation == b.orientation);
  }
}

TEST_CASE("per-window counting counts each pixel once") {
  const Tensor uniform = Tensor::full({4, 4, 3}, 0.2);
  MthOptions per_type, per_window;
  per_type.normalize = per_window.normalize = false;
  per_window.counting = TextonCounting::kPerWindow;
  CHECK(mth_features(uniform, per_type).mass() == 4 * 8);
  CHECK(mth_features(uniform, per_window).mass() == 4 * 4);
}

TEST_CASE("normalized histograms sum to one") {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 100; ++t) {
    const Tensor img = testing::random_tensor({6, 6, 3}, rng, 0.0, 1.0);
    const TextonFeatures f = mth_features(img);
    MthOptions raw;
    raw.normalize = false;
    if (mth_features(img, raw).mass() > 0.0) CHECK(f.mass() == doctest::Approx(1.0).epsilon(1e-9));
    for (double v : f.combined()) CHECK(v >= 0.0);
  }
}

TEST_CASE("diagonal textons are invariant under 180 degree rotation") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> pick(0, 2);
  const std::array<std::array<double, 3>, 3> palette{{{0, 0, 0}, {1, 1, 1}, {1, 0, 0}}};
  MthOptions diag;
  diag.enabled_types = kT3 | kT4;
  for (int t = 0; t < 200; ++t) {
    std::vector<std::array<double, 3>> px;
    for (int i = 0; i < 64; ++i) px.push_back(palette[pick(rng)]);
    const Tensor img = rgb_image(8, 8, px);
    const auto a = mth_features(img, diag).combined();
    const auto b = mth_features(rotate180(img), diag).combined();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-12);
  }
}

TEST_CASE("top-pair textons are not rotation invariant") {
  // [[A, A], [B, C]] fires T1 only; rotated it becomes [[C, B], [A, A]], which
  // fires nothing, so the full four-type histogram changes.
  const Tensor img = rgb_image(2, 2, {{1, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  CHECK(mth_features(img).mass() > 0.0);
  CHECK(mth_features(rotate180(img)).mass() == 0.0);
}

TEST_CASE("per-patch texton features") {
  const Tensor img = checkerboard(32, 32, 4);
  const PatchGrid grid = make_patch_grid(32, 32, 4, 0);
  const Tensor f = patch_texton_features(img, grid);
  CHECK(f.shape() == Shape{64, 82});
  for (std::size_t i = 0; i < 64; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 82; ++j) s += f.value(i * 82 + j);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}
