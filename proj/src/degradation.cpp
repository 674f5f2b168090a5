#include "ispl/degradation.hpp"

#include <cmath>

#include "ispl/rng.hpp"
#include "json.hpp"

namespace ispl {

Task task_from_string(const std::string& s) {
    if (s == "super_resolution") return Task::SuperResolution;
    if (s == "hallucination") return Task::Hallucination;
    if (s == "denoise") return Task::Denoise;
    if (s == "deblur") return Task::Deblur;
    if (s == "jpeg") return Task::Jpeg;
    if (s == "dual_blind") return Task::DualBlind;
    throw ValidationError("unknown task: " + s);
}

std::string task_to_string(Task t) {
    switch (t) {
        case Task::SuperResolution: return "super_resolution";
        case Task::Hallucination: return "hallucination";
        case Task::Denoise: return "denoise";
        case Task::Deblur: return "deblur";
        case Task::Jpeg: return "jpeg";
        case Task::DualBlind: return "dual_blind";
    }
    throw ValidationError("invalid task enum");
}

NoiseModel noise_model_from_string(const std::string& s) {
    if (s == "none") return NoiseModel::None;
    if (s == "gaussian") return NoiseModel::Gaussian;
    if (s == "poisson") return NoiseModel::Poisson;
    if (s == "laplacian") return NoiseModel::Laplacian;
    throw ValidationError("unknown noise model: " + s);
}

std::string noise_model_to_string(NoiseModel m) {
    switch (m) {
        case NoiseModel::None: return "none";
        case NoiseModel::Gaussian: return "gaussian";
        case NoiseModel::Poisson: return "poisson";
        case NoiseModel::Laplacian: return "laplacian";
    }
    throw ValidationError("invalid noise model enum");
}

namespace {

void validate_kernel(const Tensor& k) {
    check(k.rank() == 2, "blur kernel must be a 2D array");
    check(k.dim(0) == k.dim(1), "blur kernel must be square");
    check(k.dim(0) % 2 == 1, "blur kernel must be odd-sized");
    double sum = 0.0;
    for (int64_t i = 0; i < k.numel(); ++i) {
        check(k[i] >= 0.0, "blur kernel entries must be non-negative");
        sum += k[i];
    }
    check(std::abs(sum - 1.0) < 1e-9, "blur kernel must be normalized to unit sum");
}

}  // namespace

void DegradationSpec::validate() const {
    if (blur_kernel.numel() > 0) validate_kernel(blur_kernel);
    check(mosaic_block >= 0, "mosaic block must be >= 0");
    check(scale >= 1, "scale must be >= 1");
    check(noise_level >= 0.0, "noise level must be >= 0");
    if (jpeg_quality) check(*jpeg_quality >= 0 && *jpeg_quality <= 100,
                            "jpeg quality must lie in [0,100]");
}

std::string DegradationSpec::to_json() const {
    nlohmann::json j;
    j["task"] = task_to_string(task);
    if (blur_kernel.numel() > 0) {
        const int64_t k = blur_kernel.dim(0);
        nlohmann::json rows = nlohmann::json::array();
        for (int64_t r = 0; r < k; ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (int64_t c = 0; c < k; ++c) row.push_back(blur_kernel[r * k + c]);
            rows.push_back(row);
        }
        j["blur_kernel"] = rows;
    } else {
        j["blur_kernel"] = nullptr;
    }
    j["mosaic_block"] = mosaic_block;
    j["scale"] = scale;
    j["noise_model"] = noise_model_to_string(noise_model);
    j["noise_level"] = noise_level;
    if (jpeg_quality)
        j["jpeg_quality"] = *jpeg_quality;
    else
        j["jpeg_quality"] = nullptr;
    j["seed"] = seed;
    return j.dump(2);
}

DegradationSpec DegradationSpec::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw ValidationError(std::string("degradation spec parse error: ") + e.what());
    }
    DegradationSpec spec;
    static const char* known[] = {"task",        "blur_kernel", "mosaic_block", "scale",
                                  "noise_model", "noise_level", "jpeg_quality", "seed"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || (it.key() == k);
        if (!ok) throw ValidationError("degradation spec: unknown key '" + it.key() + "'");
    }
    if (j.contains("task")) spec.task = task_from_string(j["task"].get<std::string>());
    if (j.contains("blur_kernel") && !j["blur_kernel"].is_null()) {
        const auto rows = j["blur_kernel"];
        const int64_t k = static_cast<int64_t>(rows.size());
        Tensor t({k, k});
        for (int64_t r = 0; r < k; ++r) {
            check(static_cast<int64_t>(rows[r].size()) == k, "blur kernel rows must be square");
            for (int64_t c = 0; c < k; ++c) t[r * k + c] = rows[r][c].get<double>();
        }
        spec.blur_kernel = std::move(t);
    }
    if (j.contains("mosaic_block")) spec.mosaic_block = j["mosaic_block"].get<int>();
    if (j.contains("scale")) spec.scale = j["scale"].get<int>();
    if (j.contains("noise_model"))
        spec.noise_model = noise_model_from_string(j["noise_model"].get<std::string>());
    if (j.contains("noise_level")) spec.noise_level = j["noise_level"].get<double>();
    if (j.contains("jpeg_quality") && !j["jpeg_quality"].is_null())
        spec.jpeg_quality = j["jpeg_quality"].get<int>();
    if (j.contains("seed")) spec.seed = j["seed"].get<uint64_t>();
    spec.validate();
    return spec;
}

namespace degrade {

ImageBatch convolve_blur(const ImageBatch& img, const Tensor& kernel) {
    validate_kernel(kernel);
    const int64_t N = img.count(), C = img.channels(), H = img.height(), W = img.width();
    const int64_t K = kernel.dim(0), r = K / 2;
    Tensor out({N, C, H, W});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t i = 0; i < H; ++i)
                for (int64_t j = 0; j < W; ++j) {
                    double acc = 0.0;
                    for (int64_t a = 0; a < K; ++a) {
                        const int64_t ii = reflect_index(i + a - r, H);
                        for (int64_t b = 0; b < K; ++b)
                            acc += kernel[a * K + b] *
                                   img.data.at(n, c, ii, reflect_index(j + b - r, W));
                    }
                    out.at(n, c, i, j) = acc;
                }
    return ImageBatch(std::move(out), img.range);
}

namespace {

// Keys cubic convolution kernel with a = -0.5.
double keys_weight(double x) {
    constexpr double a = -0.5;
    x = std::abs(x);
    if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
}

// Separable bicubic pass over one axis.
void bicubic_axis(const double* src, double* dst, int64_t lines, int64_t in_len,
                  int64_t out_len, int64_t src_stride, int64_t dst_stride,
                  int64_t line_stride_src, int64_t line_stride_dst) {
    std::vector<std::array<int64_t, 4>> idx(out_len);
    std::vector<std::array<double, 4>> wts(out_len);
    const double ratio = static_cast<double>(in_len) / static_cast<double>(out_len);
    for (int64_t o = 0; o < out_len; ++o) {
        const double srcpos = (o + 0.5) * ratio - 0.5;
        const int64_t base = static_cast<int64_t>(std::floor(srcpos));
        for (int t = 0; t < 4; ++t) {
            const int64_t k = base - 1 + t;
            idx[o][t] = reflect_index(k, in_len);
            wts[o][t] = keys_weight(srcpos - static_cast<double>(k));
        }
    }
    for (int64_t l = 0; l < lines; ++l) {
        const double* s = src + l * line_stride_src;
        double* d = dst + l * line_stride_dst;
        for (int64_t o = 0; o < out_len; ++o) {
            double acc = 0.0;
            for (int t = 0; t < 4; ++t) acc += wts[o][t] * s[idx[o][t] * src_stride];
            d[o * dst_stride] = acc;
        }
    }
}

}  // namespace

ImageBatch resample_bicubic(const ImageBatch& img, int64_t out_h, int64_t out_w) {
    check(out_h >= 1 && out_w >= 1, "resample_bicubic: output size must be positive");
    const int64_t N = img.count(), C = img.channels(), H = img.height(), W = img.width();
    // Rows first, then columns.
    Tensor mid({N, C, H, out_w});
    bicubic_axis(img.data.data(), mid.data(), N * C * H, W, out_w, 1, 1, W, out_w);
    Tensor out({N, C, out_h, out_w});
    for (int64_t nc = 0; nc < N * C; ++nc)
        for (int64_t col = 0; col < out_w; ++col)
            bicubic_axis(mid.data() + nc * H * out_w + col, out.data() + nc * out_h * out_w + col,
                         1, H, out_h, out_w, out_w, 0, 0);
    ImageBatch res(std::move(out), img.range);
    res.clamp_to_range();
    return res;
}

ImageBatch downsample_bicubic(const ImageBatch& img, int scale) {
    check(scale >= 1, "downsample_bicubic: scale must be >= 1");
    if (scale == 1) return img;
    check(img.height() % scale == 0 && img.width() % scale == 0,
          "downsample_bicubic: dimensions must be divisible by scale");
    return resample_bicubic(img, img.height() / scale, img.width() / scale);
}

ImageBatch mosaic(const ImageBatch& img, int block) {
    check(block >= 1, "mosaic: block must be >= 1");
    if (block == 1) return img;
    check(img.height() % block == 0 && img.width() % block == 0,
          "mosaic: block must divide image dimensions");
    const int64_t N = img.count(), C = img.channels(), H = img.height(), W = img.width();
    Tensor out({N, C, H, W});
    const double inv = 1.0 / (static_cast<double>(block) * block);
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t bi = 0; bi < H; bi += block)
                for (int64_t bj = 0; bj < W; bj += block) {
                    // Offset-compensated mean: exact on constant tiles, which
                    // makes repeated mosaicking bit-identical.
                    const double base = img.data.at(n, c, bi, bj);
                    double acc = 0.0;
                    for (int64_t i = 0; i < block; ++i)
                        for (int64_t j = 0; j < block; ++j)
                            acc += img.data.at(n, c, bi + i, bj + j) - base;
                    const double mean = base + acc * inv;
                    for (int64_t i = 0; i < block; ++i)
                        for (int64_t j = 0; j < block; ++j) out.at(n, c, bi + i, bj + j) = mean;
                }
    return ImageBatch(std::move(out), img.range);
}

ImageBatch add_noise(const ImageBatch& img, NoiseModel model, double level, uint64_t seed) {
    check(level >= 0.0, "add_noise: level must be >= 0");
    check(model == NoiseModel::Gaussian || model == NoiseModel::Poisson ||
              model == NoiseModel::Laplacian,
          "add_noise: model must be gaussian, poisson or laplacian");
    if (level == 0.0) return img;

    const int64_t N = img.count(), plane = img.channels() * img.height() * img.width();
    ImageBatch out = img;
    for (int64_t n = 0; n < N; ++n) {
        auto rng = make_rng(derive_seed(seed, static_cast<uint64_t>(n)));
        double* d = out.data.data() + n * plane;
        switch (model) {
            case NoiseModel::Gaussian:
                for (int64_t i = 0; i < plane; ++i) d[i] += normal(rng, 0.0, level);
                break;
            case NoiseModel::Laplacian: {
                const double b = level / std::sqrt(2.0);
                for (int64_t i = 0; i < plane; ++i) {
                    const double u = uniform(rng, -0.5, 0.5);
                    const double mag = -b * std::log(1.0 - 2.0 * std::abs(u));
                    d[i] += u < 0.0 ? -mag : mag;
                }
                break;
            }
            case NoiseModel::Poisson: {
                // peak = 1/level^2 makes `level` the RMS noise at unit intensity.
                const double peak = 1.0 / (level * level);
                const double lo = img.range.lo, span = img.range.span();
                for (int64_t i = 0; i < plane; ++i) {
                    const double unit = (d[i] - lo) / span;
                    const double rate = std::max(0.0, unit) * peak;
                    std::poisson_distribution<int64_t> pois(rate);
                    d[i] = lo + span * (static_cast<double>(pois(rng)) / peak);
                }
                break;
            }
            case NoiseModel::None: break;
        }
    }
    out.clamp_to_range();
    return out;
}

ImageBatch jpeg_roundtrip(const ImageBatch& img, int quality) {
    check(quality >= 0 && quality <= 100, "jpeg_roundtrip: quality must lie in [0,100]");
    check(img.channels() == 3, "jpeg_roundtrip: expects 3-channel images");
    const int64_t N = img.count(), H = img.height(), W = img.width();
    Tensor out({N, 3, H, W});
    for (int64_t n = 0; n < N; ++n) {
        std::vector<uint8_t> rgb(static_cast<size_t>(H * W * 3));
        const double lo = img.range.lo, span = img.range.span();
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x)
                for (int64_t c = 0; c < 3; ++c) {
                    const double v = (img.data.at(n, c, y, x) - lo) / span;
                    rgb[(y * W + x) * 3 + c] =
                        static_cast<uint8_t>(std::lround(clamp(v, 0.0, 1.0) * 255.0));
                }
        const auto bytes = io::jpeg_encode(rgb, H, W, quality);
        int64_t dh = 0, dw = 0;
        const auto dec = io::jpeg_decode(bytes, dh, dw);
        check(dh == H && dw == W, "jpeg_roundtrip: decoded size mismatch");
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x)
                for (int64_t c = 0; c < 3; ++c)
                    out.at(n, c, y, x) = lo + span * (dec[(y * W + x) * 3 + c] / 255.0);
    }
    return ImageBatch(std::move(out), img.range);
}

namespace {

template <typename F>
ImageBatch run_stage(const char* name, F&& f) {
    try {
        return f();
    } catch (const ValidationError& e) {
        throw ValidationError(std::string("degradation stage '") + name + "': " + e.what());
    } catch (const IoError& e) {
        throw IoError(std::string("degradation stage '") + name + "': " + e.what());
    }
}

}  // namespace

ImageBatch apply(const ImageBatch& img, const DegradationSpec& spec) {
    spec.validate();
    ImageBatch x = img;
    if (spec.blur_kernel.numel() > 0)
        x = run_stage("blur", [&] { return convolve_blur(x, spec.blur_kernel); });
    if (spec.mosaic_block > 1)
        x = run_stage("mosaic", [&] { return mosaic(x, spec.mosaic_block); });
    if (spec.scale > 1)
        x = run_stage("downsample", [&] { return downsample_bicubic(x, spec.scale); });
    if (spec.noise_model != NoiseModel::None && spec.noise_level > 0.0)
        x = run_stage("noise", [&] {
            return add_noise(x, spec.noise_model, spec.noise_level, spec.seed);
        });
    if (spec.jpeg_quality)
        x = run_stage("jpeg", [&] { return jpeg_roundtrip(x, *spec.jpeg_quality); });
    return x;
}

Tensor identity_kernel() {
    Tensor k({1, 1});
    k[0] = 1.0;
    return k;
}

Tensor gaussian_kernel(double sigma) {
    check(sigma > 0.0, "gaussian_kernel: sigma must be positive");
    const int64_t r = static_cast<int64_t>(std::ceil(2.0 * sigma));
    const int64_t K = 2 * r + 1;
    Tensor k({K, K});
    double sum = 0.0;
    for (int64_t i = 0; i < K; ++i)
        for (int64_t j = 0; j < K; ++j) {
            const double dy = static_cast<double>(i - r), dx = static_cast<double>(j - r);
            const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            k[i * K + j] = v;
            sum += v;
        }
    for (int64_t i = 0; i < k.numel(); ++i) k[i] /= sum;
    return k;
}

Tensor motion_blur_kernel(int length, double angle) {
    check(length >= 1, "motion_blur_kernel: length must be >= 1");
    const int64_t K = (length % 2 == 1) ? length : length + 1;
    const int64_t r = K / 2;
    Tensor k({K, K});
    const double dx = std::cos(angle), dy = std::sin(angle);
    const double half = (static_cast<double>(length) - 1.0) / 2.0;
    double sum = 0.0;
    for (int64_t i = 0; i < K; ++i)
        for (int64_t j = 0; j < K; ++j) {
            const double py = static_cast<double>(i - r), px = static_cast<double>(j - r);
            // Distance from the cell center to the blur segment.
            double t = px * dx + py * dy;
            t = clamp(t, -half, half);
            const double ddx = px - t * dx, ddy = py - t * dy;
            const double dist = std::sqrt(ddx * ddx + ddy * ddy);
            const double v = std::max(0.0, 1.0 - dist);  // anti-aliased line profile
            k[i * K + j] = v;
            sum += v;
        }
    for (int64_t i = 0; i < k.numel(); ++i) k[i] /= sum;
    return k;
}

DegradationSpec sample_spec(Task task, uint64_t rng_seed) {
    auto rng = make_rng(derive_seed(rng_seed, 0xD5ACULL));
    DegradationSpec spec;
    spec.task = task;
    spec.seed = rng_seed;

    auto draw_noise = [&] {
        const int pick = static_cast<int>(uniform_int(rng, 0, 2));
        spec.noise_model = pick == 0   ? NoiseModel::Gaussian
                           : pick == 1 ? NoiseModel::Poisson
                                       : NoiseModel::Laplacian;
        spec.noise_level = uniform(rng, 0.02, 0.1);
    };
    auto draw_blur = [&] {
        if (uniform_int(rng, 0, 1) == 0) {
            spec.blur_kernel = gaussian_kernel(uniform(rng, 1.0, 3.0));
        } else {
            const int length = static_cast<int>(uniform_int(rng, 5, 15));
            spec.blur_kernel = motion_blur_kernel(length, uniform(rng, 0.0, 3.14159265358979323846));
        }
    };
    auto draw_jpeg = [&] { spec.jpeg_quality = static_cast<int>(uniform_int(rng, 50, 85)); };

    switch (task) {
        case Task::SuperResolution:
            spec.scale = 4;
            break;
        case Task::Hallucination:
            spec.mosaic_block = 16;
            break;
        case Task::Denoise:
            draw_noise();
            break;
        case Task::Deblur:
            draw_blur();
            break;
        case Task::Jpeg:
            draw_jpeg();
            break;
        case Task::DualBlind:
            // Every subtype except the 16x mosaic.
            draw_blur();
            spec.scale = 4;
            draw_noise();
            draw_jpeg();
            break;
    }
    spec.validate();
    return spec;
}

}  // namespace degrade

}  // namespace ispl
