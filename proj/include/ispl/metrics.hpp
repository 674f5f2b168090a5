#pragma once

#include <array>
#include <vector>

#include "ispl/image.hpp"
#include "ispl/losses.hpp"

namespace ispl {

// Pluggable landmark backend; the paper relies on a pretrained face detector,
// so the interface is injected and a deterministic stub keeps tests hermetic.
class LandmarkDetector {
public:
    virtual ~LandmarkDetector() = default;
    virtual int landmark_count() const = 0;
    // Coordinates (x, y) in pixels, inside the image bounds. May throw; the
    // caller records a per-image NaN and excludes it from aggregates.
    virtual std::vector<std::array<double, 2>> detect(const ImageBatch& single_image) const = 0;
};

// Brightness-weighted centroid per grid cell.
class CentroidLandmarkDetector : public LandmarkDetector {
public:
    explicit CentroidLandmarkDetector(int grid = 3) : grid_(grid) {}
    int landmark_count() const override { return grid_ * grid_; }
    std::vector<std::array<double, 2>> detect(const ImageBatch& single_image) const override;

private:
    int grid_;
};

namespace metrics {

// 10*log10(1 / MSE) in dB over the whole batch, capped at `cap` (default
// 100 dB) when MSE < 1e-10. Inputs must share shape and live in [0,1].
double psnr(const ImageBatch& a, const ImageBatch& b, double cap = 100.0);
std::vector<double> psnr_per_image(const ImageBatch& a, const ImageBatch& b, double cap = 100.0);

// Standard single-scale SSIM: 11x11 Gaussian window (sigma 1.5), k1=0.01,
// k2=0.03, valid-region mean over channels.
double ssim(const ImageBatch& a, const ImageBatch& b);
std::vector<double> ssim_per_image(const ImageBatch& a, const ImageBatch& b);

// Multi-scale SSIM with the standard 5-scale weights; images smaller than
// 161 px use fewer scales (weights renormalized) and report the count used.
double ms_ssim(const ImageBatch& a, const ImageBatch& b, int* scales_used = nullptr);
std::vector<double> ms_ssim_per_image(const ImageBatch& a, const ImageBatch& b,
                                      int* scales_used = nullptr);

// Euclidean distance between per-image embeddings.
double fed(const ImageBatch& a, const ImageBatch& b, const FeatureExtractor& extractor);
std::vector<double> fed_per_image(const ImageBatch& a, const ImageBatch& b,
                                  const FeatureExtractor& extractor);

// Mean Euclidean distance over corresponding landmarks, in pixels. Detector
// failures yield NaN entries.
double lle(const ImageBatch& a, const ImageBatch& b, const LandmarkDetector& detector,
           int* excluded = nullptr);
std::vector<double> lle_per_image(const ImageBatch& a, const ImageBatch& b,
                                  const LandmarkDetector& detector);

// Frechet distance between embedding statistics; covariance sqrt via
// eigendecomposition with negative eigenvalues clipped at -1e-6 tolerance.
// A ridge of 1e-6 is added (and flagged) when samples cannot support a
// full-rank covariance.
double fid_from_embeddings(const Tensor& real, const Tensor& gen, bool* ridged = nullptr);
double fid(const ImageBatch& real_images, const ImageBatch& gen_images,
           const FeatureExtractor& extractor, bool* ridged = nullptr);

// Mean over layers of the spatially-averaged squared distance between
// channel-unit-normalized feature maps. With a calibrated extractor this is
// LPIPS; with the stub it is a self-consistent proxy, reported as lpips_like.
double lpips_like(const ImageBatch& a, const ImageBatch& b, const FeatureExtractor& extractor);
std::vector<double> lpips_like_per_image(const ImageBatch& a, const ImageBatch& b,
                                         const FeatureExtractor& extractor);

}  // namespace metrics

}  // namespace ispl
