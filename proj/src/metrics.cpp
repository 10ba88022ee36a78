#include "texsyn/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "texsyn/descriptors.hpp"
#include "texsyn/gan.hpp"
#include "texsyn/image.hpp"

namespace texsyn::metrics {
namespace {

Tensor as_plane(const Tensor& image) {
  if (image.rank() == 2) return image;
  if (image.rank() == 3) return luminance(image);
  throw DimensionError("ssim: expected [H x W] or [H x W x C], got " + shape_str(image.shape()));
}

std::vector<std::size_t> offsets(std::size_t extent, std::size_t size, std::size_t stride) {
  std::vector<std::size_t> out;
  const std::size_t last = extent - size;
  for (std::size_t o = 0; o <= last; o += std::max<std::size_t>(stride, 1)) out.push_back(o);
  if (out.back() != last) out.push_back(last);
  return out;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const Eigen::VectorXd roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
}

std::vector<std::vector<double>> texton_rows(std::span<const Tensor> images) {
  std::vector<std::vector<double>> rows;
  for (const Tensor& img : images) {
    const auto f = descriptors::mth_features(img).combined();
    rows.emplace_back(f.begin(), f.end());
  }
  return rows;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b, std::size_t window, double dynamic_range) {
  if (a.shape() != b.shape()) {
    throw DimensionError("ssim: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  const Tensor pa = as_plane(a.detach());
  const Tensor pb = as_plane(b.detach());
  const std::size_t h = pa.dim(0), w = pa.dim(1);
  const std::size_t win = std::min({window, h, w});
  if (win == 0) throw DimensionError("ssim: empty image");
  const double c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
  const double c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
  const auto va = pa.values();
  const auto vb = pb.values();
  const double inv_n = 1.0 / static_cast<double>(win * win);

  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t y0 = 0; y0 + win <= h; ++y0) {
    for (std::size_t x0 = 0; x0 + win <= w; ++x0) {
      double ma = 0.0, mb = 0.0;
      for (std::size_t y = y0; y < y0 + win; ++y)
        for (std::size_t x = x0; x < x0 + win; ++x) {
          ma += va[y * w + x];
          mb += vb[y * w + x];
        }
      ma *= inv_n;
      mb *= inv_n;
      double saa = 0.0, sbb = 0.0, sab = 0.0;
      for (std::size_t y = y0; y < y0 + win; ++y)
        for (std::size_t x = x0; x < x0 + win; ++x) {
          const double da = va[y * w + x] - ma;
          const double db = vb[y * w + x] - mb;
          saa += da * da;
          sbb += db * db;
          sab += da * db;
        }
      saa *= inv_n;
      sbb *= inv_n;
      sab *= inv_n;
      total += ((2.0 * ma * mb + c1) * (2.0 * sab + c2)) /
               ((ma * ma + mb * mb + c1) * (saa + sbb + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

double best_crop_ssim(const Tensor& sample, const Tensor& exemplar, std::size_t stride) {
  if (sample.rank() != 3 || exemplar.rank() != 3) {
    throw DimensionError("best_crop_ssim: expected images");
  }
  const std::size_t h = sample.dim(0), w = sample.dim(1);
  if (exemplar.dim(0) < h || exemplar.dim(1) < w) {
    throw DimensionError("best_crop_ssim: exemplar " + shape_str(exemplar.shape()) +
                         " smaller than sample " + shape_str(sample.shape()));
  }
  const Tensor ex = exemplar.dim(2) == sample.dim(2) ? exemplar : to_rgb(exemplar);
  const Tensor s = sample.dim(2) == ex.dim(2) ? sample : to_rgb(sample);
  double best = -1.0;
  for (std::size_t top : offsets(ex.dim(0), h, stride))
    for (std::size_t left : offsets(ex.dim(1), w, stride))
      best = std::max(best, ssim(s, crop(ex, top, left, h, w)));
  return best;
}

GaussianFit fit_gaussian(std::span<const std::vector<double>> rows) {
  if (rows.empty()) throw ContractError("fit_gaussian: no samples");
  GaussianFit g;
  g.dim = rows[0].size();
  g.mean.assign(g.dim, 0.0);
  for (const auto& r : rows) {
    if (r.size() != g.dim) throw DimensionError("fit_gaussian: ragged samples");
    for (std::size_t i = 0; i < g.dim; ++i) g.mean[i] += r[i];
  }
  for (double& m : g.mean) m /= static_cast<double>(rows.size());
  g.cov.assign(g.dim * g.dim, 0.0);
  for (const auto& r : rows)
    for (std::size_t i = 0; i < g.dim; ++i)
      for (std::size_t j = 0; j < g.dim; ++j)
        g.cov[i * g.dim + j] += (r[i] - g.mean[i]) * (r[j] - g.mean[j]);
  for (double& c : g.cov) c /= static_cast<double>(rows.size());
  return g;
}

double frechet_distance(const GaussianFit& a, const GaussianFit& b, double regularization) {
  if (a.dim != b.dim || a.mean.size() != a.dim || b.mean.size() != b.dim ||
      a.cov.size() != a.dim * a.dim || b.cov.size() != b.dim * b.dim) {
    throw DimensionError("frechet_distance: dimension mismatch");
  }
  const auto n = static_cast<Eigen::Index>(a.dim);
  const Eigen::Map<const Eigen::VectorXd> m1(a.mean.data(), n), m2(b.mean.data(), n);
  Eigen::MatrixXd s1 = Eigen::Map<const Eigen::MatrixXd>(a.cov.data(), n, n);
  Eigen::MatrixXd s2 = Eigen::Map<const Eigen::MatrixXd>(b.cov.data(), n, n);
  s1 = 0.5 * (s1 + s1.transpose()) + regularization * Eigen::MatrixXd::Identity(n, n);
  s2 = 0.5 * (s2 + s2.transpose()) + regularization * Eigen::MatrixXd::Identity(n, n);

  // tr((S1 S2)^(1/2)) is the sum of singular values of S1^(1/2) S2^(1/2); this
  // avoids square roots of tiny, noisy eigenvalues and is symmetric in S1, S2.
  const Eigen::MatrixXd prod = psd_sqrt(s1) * psd_sqrt(s2);
  const double tr_sqrt = Eigen::BDCSVD<Eigen::MatrixXd>(prod).singularValues().sum();

  const double d = (m1 - m2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
  return std::max(d, 0.0);
}

double descriptor_frechet(std::span<const Tensor> real_samples,
                          std::span<const Tensor> gen_samples) {
  if (real_samples.size() < 2 || gen_samples.size() < 2) {
    throw ContractError("descriptor_frechet needs >= 2 samples per side (got " +
                        std::to_string(real_samples.size()) + " and " +
                        std::to_string(gen_samples.size()) + ")");
  }
  const auto real_rows = texton_rows(real_samples);
  const auto gen_rows = texton_rows(gen_samples);
  return frechet_distance(fit_gaussian(real_rows), fit_gaussian(gen_rows));
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["exemplar"] = exemplar;
  j["samples"] = samples;
  j["seed"] = seed;
  j["ssim"] = ssim;
  j["ssim_mean"] = ssim_mean;
  if (dfrechet) j["dfrechet"] = *dfrechet;
  else j["dfrechet"] = nullptr;
  return j.dump(2);
}

MetricReport evaluate(const gan::Generator& generator, const Tensor& exemplar,
                      const EvaluateOptions& options) {
  if (options.samples == 0) throw ContractError("evaluate: need at least one sample");
  if (options.with_dfrechet && options.samples < 2) {
    throw ContractError("evaluate: dfrechet needs >= 2 samples");
  }
  const auto& config = generator.config();
  const Tensor ex = to_rgb(exemplar.detach());
  const std::size_t res = config.resolution;
  if (ex.dim(0) < res || ex.dim(1) < res) {
    throw ContractError("evaluate: exemplar " + shape_str(ex.shape()) + " is smaller than the " +
                        std::to_string(res) + "x" + std::to_string(res) + " generator output");
  }
  nn::Rng rng(options.seed);
  const std::size_t grid = config.latent_grid();
  std::vector<Tensor> samples, crops;
  MetricReport report;
  report.ssim = -1.0;
  for (std::size_t i = 0; i < options.samples; ++i) {
    samples.push_back(generator.generate(generator.sample_latent(grid, grid, rng)));
    const double s = best_crop_ssim(samples.back(), ex, config.patch);
    report.ssim = std::max(report.ssim, s);
    report.ssim_mean += s / static_cast<double>(options.samples);
  }
  if (options.with_dfrechet) {
    std::uniform_int_distribution<std::size_t> dy(0, ex.dim(0) - res), dx(0, ex.dim(1) - res);
    for (std::size_t i = 0; i < options.samples; ++i) {
      const std::size_t top = dy(rng);
      const std::size_t left = dx(rng);
      crops.push_back(crop(ex, top, left, res, res));
    }
    report.dfrechet = descriptor_frechet(crops, samples);
  }
  report.samples = options.samples;
  report.exemplar = options.exemplar_id;
  report.seed = options.seed;
  return report;
}

}  // namespace texsyn::metrics
