#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "ispl/image.hpp"
#include "ispl/tensor.hpp"

namespace ispl {

enum class Task {
    SuperResolution,
    Hallucination,
    Denoise,
    Deblur,
    Jpeg,
    DualBlind,
};

Task task_from_string(const std::string& s);
std::string task_to_string(Task t);

enum class NoiseModel { None, Gaussian, Poisson, Laplacian };

NoiseModel noise_model_from_string(const std::string& s);
std::string noise_model_to_string(NoiseModel m);

// Declarative degradation recipe: blur -> mosaic -> downsample -> noise ->
// jpeg, with stages individually disabled. Two specs with equal fields
// produce bit-identical degraded outputs.
struct DegradationSpec {
    Task task = Task::DualBlind;
    Tensor blur_kernel;                 // empty = disabled; odd square, unit sum
    int mosaic_block = 0;               // <=1 disables
    int scale = 1;                      // 1 disables
    NoiseModel noise_model = NoiseModel::None;
    double noise_level = 0.0;           // std-dev in value-range units
    std::optional<int> jpeg_quality;    // nullopt disables
    uint64_t seed = 0;

    void validate() const;

    std::string to_json() const;
    static DegradationSpec from_json(const std::string& text);
};

namespace degrade {

// Per-channel 2D convolution with reflect padding; kernel must be odd-sized
// square with non-negative entries summing to 1.
ImageBatch convolve_blur(const ImageBatch& img, const Tensor& kernel);

// Bicubic resampling (Keys kernel, a = -0.5) by an integer factor; dimensions
// must divide evenly. Output values are clamped to the declared range.
ImageBatch downsample_bicubic(const ImageBatch& img, int scale);

// General bicubic resampling to an arbitrary size (same kernel); used for
// re-expanding low-resolution inputs to the model resolution.
ImageBatch resample_bicubic(const ImageBatch& img, int64_t out_h, int64_t out_w);

// Replaces each block x block tile with its per-channel mean.
ImageBatch mosaic(const ImageBatch& img, int block);

// Adds zero-mean i.i.d. noise of the given standard deviation (gaussian /
// laplacian) or Poisson counting noise at peak 1/level^2; clamps to range.
// Deterministic given seed; per-image streams derive from (seed, index).
ImageBatch add_noise(const ImageBatch& img, NoiseModel model, double level, uint64_t seed);

// Baseline JPEG encode/decode round trip at the given quality.
ImageBatch jpeg_roundtrip(const ImageBatch& img, int quality);

// Composes the enabled stages in the fixed order above.
ImageBatch apply(const ImageBatch& img, const DegradationSpec& spec);

// Draws a spec for one of the six tasks. Deterministic given rng_seed.
DegradationSpec sample_spec(Task task, uint64_t rng_seed);

// Kernel constructors used by sample_spec (exposed for tests and tooling).
Tensor gaussian_kernel(double sigma);
Tensor motion_blur_kernel(int length, double angle);
Tensor identity_kernel();

}  // namespace degrade

}  // namespace ispl
