#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ispl/common.hpp"
#include "ispl/tensor.hpp"

namespace ispl {

// A batch of images: rank-4 (N, C, H, W) with a declared value interval.
// The whole pipeline runs on 3-channel images in the canonical [0,1] range.
struct ImageBatch {
    Tensor data;  // (N, C, H, W)
    ValueRange range;

    ImageBatch() = default;
    explicit ImageBatch(Tensor t, ValueRange r = {})
        : data(std::move(t)), range(r) {
        check(data.rank() == 4, "ImageBatch: tensor must be rank-4 (N,C,H,W)");
    }

    int64_t count() const { return data.dim(0); }
    int64_t channels() const { return data.dim(1); }
    int64_t height() const { return data.dim(2); }
    int64_t width() const { return data.dim(3); }

    // Clamps every entry into the declared range.
    void clamp_to_range() {
        for (int64_t i = 0; i < data.numel(); ++i)
            data[i] = clamp(data[i], range.lo, range.hi);
    }

    bool in_range(double tol = 0.0) const {
        for (int64_t i = 0; i < data.numel(); ++i)
            if (data[i] < range.lo - tol || data[i] > range.hi + tol) return false;
        return true;
    }

    // Single-image view copy.
    ImageBatch slice(int64_t index) const {
        check(index >= 0 && index < count(), "ImageBatch::slice: index out of range");
        const int64_t sz = channels() * height() * width();
        Tensor t({1, channels(), height(), width()});
        std::copy(data.data() + index * sz, data.data() + (index + 1) * sz, t.data());
        return ImageBatch(std::move(t), range);
    }

    static ImageBatch concat(const std::vector<ImageBatch>& items);
};

namespace io {

// 8-bit RGB PNG file I/O. Values map linearly between [0,255] and the
// canonical [0,1] range; reading promotes gray/palette to RGB and drops alpha.
ImageBatch read_png(const std::string& path);
void write_png(const std::string& path, const ImageBatch& img, int64_t index = 0);

// Reads PNG or JPEG based on file magic.
ImageBatch read_image(const std::string& path);

// Peeks image dimensions without decoding pixel data. Returns {height, width}.
std::pair<int64_t, int64_t> read_image_size(const std::string& path);

// In-memory baseline JPEG round trip of a single RGB image plane (H,W,3 u8).
std::vector<uint8_t> jpeg_encode(const std::vector<uint8_t>& rgb, int64_t h, int64_t w,
                                 int quality);
std::vector<uint8_t> jpeg_decode(const std::vector<uint8_t>& bytes, int64_t& h, int64_t& w);

}  // namespace io

}  // namespace ispl
