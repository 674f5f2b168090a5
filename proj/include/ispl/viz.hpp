#pragma once

#include <string>
#include <vector>

#include "ispl/losses.hpp"
#include "ispl/model.hpp"
#include "ispl/train.hpp"

namespace ispl {

// One point on the perception-distortion plane.
struct PDPoint {
    double distortion = 0.0;  // PSNR, dB
    double perception = 0.0;  // FID
    std::string label;
    int scale_factor = 1;
};

namespace viz {

// 2 x n panel grid for one input image: top row isolates each subspace (all
// other guidance held at the constant), bottom row enables levels 0..i
// progressively. The final accumulative cell is bit-identical to
// restore_dynamic.
ImageBatch subspace_panels(const ImageBatch& input, const IsplModel& model,
                           double constant = 0.5);
void write_subspace_panels(const std::string& png_path, const ImageBatch& input,
                           const IsplModel& model, double constant = 0.5);

// For each scale: bicubic down, bicubic back up, restore with the frozen
// model, then measure PSNR (distortion) and FID (perception) against the
// originals. Model parameters are never mutated.
std::vector<PDPoint> pd_sweep(const IsplModel& model, const PairProvider& hq_set,
                              const std::vector<int>& scales, const FeatureExtractor& extractor);

// Scatter plot with the PSNR axis inverted (larger PSNR further left) and
// labeled markers. Writes SVG when the path ends in .svg, otherwise a raster
// PNG with a built-in 5x7 font. Deterministic bytes for fixed inputs.
void pd_plot(const std::vector<PDPoint>& points, const std::string& out_path);

}  // namespace viz

}  // namespace ispl
