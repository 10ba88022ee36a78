#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "texsyn/tensor.hpp"

namespace texsyn::gan {
class Generator;
}

namespace texsyn::metrics {

// Mean local SSIM over all window x window positions (stride 1) with a
// uniform window, C1 = (0.01 L)^2 and C2 = (0.03 L)^2. Color inputs are
// converted to luma first. The window shrinks to the image if it is smaller.
double ssim(const Tensor& a, const Tensor& b, std::size_t window = 8,
            double dynamic_range = 1.0);

// Maximum SSIM between `sample` and every exemplar crop of the sample's size
// taken at the given stride (the last row/column of offsets is always included).
double best_crop_ssim(const Tensor& sample, const Tensor& exemplar, std::size_t stride);

struct GaussianFit {
  std::size_t dim = 0;
  std::vector<double> mean;  // [dim]
  std::vector<double> cov;   // [dim x dim], population covariance
};

GaussianFit fit_gaussian(std::span<const std::vector<double>> rows);

// ||m1 - m2||^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2)) with S_i + regularization * I.
// The matrix square root comes from symmetric eigendecompositions with
// eigenvalues clamped at zero; the result is clamped at zero.
double frechet_distance(const GaussianFit& a, const GaussianFit& b,
                        double regularization = 1e-6);

// Frechet distance between Gaussians fitted to the 82-bin texton histograms
// of two image sets. Not comparable to Inception-based FID.
double descriptor_frechet(std::span<const Tensor> real_samples,
                          std::span<const Tensor> gen_samples);

struct MetricReport {
  double ssim = 0.0;                // best-of-n against exemplar crops
  double ssim_mean = 0.0;           // mean over samples of the per-sample best
  std::optional<double> dfrechet;   // absent when not requested
  std::size_t samples = 0;
  std::string exemplar;
  std::uint64_t seed = 0;

  std::string to_json() const;
};

struct EvaluateOptions {
  std::size_t samples = 16;
  std::uint64_t seed = 0;
  bool with_dfrechet = true;
  std::string exemplar_id;
};

// Samples `samples` images from the generator at its training grid, scores
// them against crops of `exemplar`. Deterministic in the seed.
MetricReport evaluate(const gan::Generator& generator, const Tensor& exemplar,
                      const EvaluateOptions& options);

}  // namespace texsyn::metrics
