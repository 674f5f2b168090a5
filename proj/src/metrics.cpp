#include "ispl/metrics.hpp"

#include <cmath>

#include <Eigen/Dense>

namespace ispl {

std::vector<std::array<double, 2>> CentroidLandmarkDetector::detect(
    const ImageBatch& img) const {
    check(img.count() == 1, "landmark detector: expects a single image");
    const int64_t H = img.height(), W = img.width(), C = img.channels();
    std::vector<std::array<double, 2>> pts;
    pts.reserve(static_cast<size_t>(grid_) * grid_);
    for (int gy = 0; gy < grid_; ++gy)
        for (int gx = 0; gx < grid_; ++gx) {
            const int64_t y0 = H * gy / grid_, y1 = H * (gy + 1) / grid_;
            const int64_t x0 = W * gx / grid_, x1 = W * (gx + 1) / grid_;
            double wsum = 0.0, xs = 0.0, ys = 0.0;
            for (int64_t y = y0; y < y1; ++y)
                for (int64_t x = x0; x < x1; ++x) {
                    double lum = 0.0;
                    for (int64_t c = 0; c < C; ++c) lum += img.data.at(0, c, y, x);
                    lum = lum / static_cast<double>(C) + 1e-9;  // keep weights positive
                    wsum += lum;
                    xs += lum * static_cast<double>(x);
                    ys += lum * static_cast<double>(y);
                }
            pts.push_back({xs / wsum, ys / wsum});
        }
    return pts;
}

namespace metrics {

namespace {

void check_pair(const ImageBatch& a, const ImageBatch& b) {
    check(a.data.same_shape(b.data), "metric: image shapes must match");
    check(a.range == b.range, "metric: value ranges must match");
    check(a.range.lo == 0.0 && a.range.hi == 1.0, "metric: expects the canonical [0,1] range");
}

double mse_range(const ImageBatch& a, const ImageBatch& b, int64_t n0, int64_t n1) {
    const int64_t plane = a.channels() * a.height() * a.width();
    double acc = 0.0;
    for (int64_t i = n0 * plane; i < n1 * plane; ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>((n1 - n0) * plane);
}

double psnr_of_mse(double mse, double cap) {
    if (mse < 1e-10) return cap;
    return std::min(cap, 10.0 * std::log10(1.0 / mse));
}

}  // namespace

double psnr(const ImageBatch& a, const ImageBatch& b, double cap) {
    check_pair(a, b);
    return psnr_of_mse(mse_range(a, b, 0, a.count()), cap);
}

std::vector<double> psnr_per_image(const ImageBatch& a, const ImageBatch& b, double cap) {
    check_pair(a, b);
    std::vector<double> out;
    out.reserve(a.count());
    for (int64_t n = 0; n < a.count(); ++n)
        out.push_back(psnr_of_mse(mse_range(a, b, n, n + 1), cap));
    return out;
}

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;  // (k1 L)^2, L = 1
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kSsimWindow>& ssim_window() {
    static const std::array<double, kSsimWindow> w = [] {
        std::array<double, kSsimWindow> v{};
        double sum = 0.0;
        for (int i = 0; i < kSsimWindow; ++i) {
            const double d = i - (kSsimWindow - 1) / 2.0;
            v[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
            sum += v[i];
        }
        for (auto& x : v) x /= sum;
        return v;
    }();
    return w;
}

// Separable valid-region Gaussian blur of one plane.
std::vector<double> gauss_valid(const std::vector<double>& plane, int64_t h, int64_t w,
                                int64_t& oh, int64_t& ow) {
    const auto& win = ssim_window();
    const int64_t k = kSsimWindow;
    ow = w - k + 1;
    oh = h - k + 1;
    std::vector<double> rows(static_cast<size_t>(h * ow));
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int64_t t = 0; t < k; ++t) acc += win[t] * plane[y * w + x + t];
            rows[y * ow + x] = acc;
        }
    std::vector<double> out(static_cast<size_t>(oh * ow));
    for (int64_t y = 0; y < oh; ++y)
        for (int64_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int64_t t = 0; t < k; ++t) acc += win[t] * rows[(y + t) * ow + x];
            out[y * ow + x] = acc;
        }
    return out;
}

struct SsimTerms {
    double luminance = 0.0;  // mean of (2 mu_x mu_y + C1)/(mu_x^2 + mu_y^2 + C1)
    double cs = 0.0;         // mean of (2 sigma_xy + C2)/(sigma_x^2 + sigma_y^2 + C2)
    double full = 0.0;       // mean of the product form
};

SsimTerms ssim_terms_single(const ImageBatch& a, const ImageBatch& b, int64_t n) {
    const int64_t C = a.channels(), H = a.height(), W = a.width();
    check(H >= kSsimWindow && W >= kSsimWindow,
          "ssim: image smaller than the 11x11 window");
    SsimTerms total;
    for (int64_t c = 0; c < C; ++c) {
        const int64_t hw = H * W;
        std::vector<double> x(hw), y(hw), xx(hw), yy(hw), xy(hw);
        for (int64_t i = 0; i < hw; ++i) {
            const double xv = a.data[(n * C + c) * hw + i];
            const double yv = b.data[(n * C + c) * hw + i];
            x[i] = xv;
            y[i] = yv;
            xx[i] = xv * xv;
            yy[i] = yv * yv;
            xy[i] = xv * yv;
        }
        int64_t oh = 0, ow = 0;
        auto mx = gauss_valid(x, H, W, oh, ow);
        auto my = gauss_valid(y, H, W, oh, ow);
        auto mxx = gauss_valid(xx, H, W, oh, ow);
        auto myy = gauss_valid(yy, H, W, oh, ow);
        auto mxy = gauss_valid(xy, H, W, oh, ow);
        double lsum = 0.0, csum = 0.0, fsum = 0.0;
        for (int64_t i = 0; i < oh * ow; ++i) {
            const double vx = mxx[i] - mx[i] * mx[i];
            const double vy = myy[i] - my[i] * my[i];
            const double cov = mxy[i] - mx[i] * my[i];
            const double l = (2.0 * mx[i] * my[i] + kC1) / (mx[i] * mx[i] + my[i] * my[i] + kC1);
            const double cs = (2.0 * cov + kC2) / (vx + vy + kC2);
            lsum += l;
            csum += cs;
            fsum += l * cs;
        }
        // Plain division keeps ssim(a, a) exactly 1.
        const auto count = static_cast<double>(oh * ow);
        total.luminance += lsum / count;
        total.cs += csum / count;
        total.full += fsum / count;
    }
    total.luminance /= static_cast<double>(C);
    total.cs /= static_cast<double>(C);
    total.full /= static_cast<double>(C);
    return total;
}

// 2x average pooling with replicated edge for odd sizes (ceil semantics).
ImageBatch halve(const ImageBatch& img) {
    const int64_t N = img.count(), C = img.channels(), H = img.height(), W = img.width();
    const int64_t oh = (H + 1) / 2, ow = (W + 1) / 2;
    Tensor out({N, C, oh, ow});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t y = 0; y < oh; ++y)
                for (int64_t x = 0; x < ow; ++x) {
                    const int64_t y0 = 2 * y, y1 = std::min(2 * y + 1, H - 1);
                    const int64_t x0 = 2 * x, x1 = std::min(2 * x + 1, W - 1);
                    out.at(n, c, y, x) = 0.25 * (img.data.at(n, c, y0, x0) +
                                                 img.data.at(n, c, y0, x1) +
                                                 img.data.at(n, c, y1, x0) +
                                                 img.data.at(n, c, y1, x1));
                }
    return ImageBatch(std::move(out), img.range);
}

constexpr std::array<double, 5> kMsWeights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

int ms_scale_count(int64_t h, int64_t w) {
    int scales = 0;
    int64_t side = std::min(h, w);
    while (scales < 5 && side >= kSsimWindow) {
        ++scales;
        side = (side + 1) / 2;
    }
    check(scales >= 1, "ms_ssim: image smaller than the 11x11 window");
    return scales;
}

double ms_ssim_single(ImageBatch a, ImageBatch b, int64_t n, int scales) {
    std::array<double, 5> weights{};
    double wsum = 0.0;
    for (int s = 0; s < scales; ++s) wsum += kMsWeights[s];
    for (int s = 0; s < scales; ++s) weights[s] = kMsWeights[s] / wsum;

    ImageBatch xa = a.slice(n), xb = b.slice(n);
    double value = 1.0;
    for (int s = 0; s < scales; ++s) {
        const auto terms = ssim_terms_single(xa, xb, 0);
        // Negative contrast terms are clipped before the fractional powers.
        if (s + 1 < scales) {
            value *= std::pow(std::max(terms.cs, 0.0), weights[s]);
            xa = halve(xa);
            xb = halve(xb);
        } else {
            value *= std::pow(std::max(terms.full, 0.0), weights[s]);
        }
    }
    return value;
}

}  // namespace

double ssim(const ImageBatch& a, const ImageBatch& b) {
    check_pair(a, b);
    double acc = 0.0;
    for (int64_t n = 0; n < a.count(); ++n) acc += ssim_terms_single(a, b, n).full;
    return acc / static_cast<double>(a.count());
}

std::vector<double> ssim_per_image(const ImageBatch& a, const ImageBatch& b) {
    check_pair(a, b);
    std::vector<double> out;
    for (int64_t n = 0; n < a.count(); ++n) out.push_back(ssim_terms_single(a, b, n).full);
    return out;
}

double ms_ssim(const ImageBatch& a, const ImageBatch& b, int* scales_used) {
    check_pair(a, b);
    const int scales = ms_scale_count(a.height(), a.width());
    if (scales_used) *scales_used = scales;
    double acc = 0.0;
    for (int64_t n = 0; n < a.count(); ++n) acc += ms_ssim_single(a, b, n, scales);
    return acc / static_cast<double>(a.count());
}

std::vector<double> ms_ssim_per_image(const ImageBatch& a, const ImageBatch& b,
                                      int* scales_used) {
    check_pair(a, b);
    const int scales = ms_scale_count(a.height(), a.width());
    if (scales_used) *scales_used = scales;
    std::vector<double> out;
    for (int64_t n = 0; n < a.count(); ++n) out.push_back(ms_ssim_single(a, b, n, scales));
    return out;
}

std::vector<double> fed_per_image(const ImageBatch& a, const ImageBatch& b,
                                  const FeatureExtractor& extractor) {
    check(a.count() == b.count(), "fed: image counts must match");
    const Tensor ea = extractor.embed(a);
    const Tensor eb = extractor.embed(b);
    const int64_t dim = ea.dim(1);
    std::vector<double> out;
    for (int64_t n = 0; n < a.count(); ++n) {
        double acc = 0.0;
        for (int64_t d = 0; d < dim; ++d) {
            const double diff = ea[n * dim + d] - eb[n * dim + d];
            acc += diff * diff;
        }
        out.push_back(std::sqrt(acc));
    }
    return out;
}

double fed(const ImageBatch& a, const ImageBatch& b, const FeatureExtractor& extractor) {
    const auto per = fed_per_image(a, b, extractor);
    double acc = 0.0;
    for (double v : per) acc += v;
    return acc / static_cast<double>(per.size());
}

std::vector<double> lle_per_image(const ImageBatch& a, const ImageBatch& b,
                                  const LandmarkDetector& detector) {
    check(a.count() == b.count(), "lle: image counts must match");
    std::vector<double> out;
    for (int64_t n = 0; n < a.count(); ++n) {
        try {
            const auto pa = detector.detect(a.slice(n));
            const auto pb = detector.detect(b.slice(n));
            check(pa.size() == pb.size() &&
                      pa.size() == static_cast<size_t>(detector.landmark_count()),
                  "lle: landmark count mismatch");
            double acc = 0.0;
            for (size_t k = 0; k < pa.size(); ++k) {
                const double dx = pa[k][0] - pb[k][0];
                const double dy = pa[k][1] - pb[k][1];
                acc += std::sqrt(dx * dx + dy * dy);
            }
            out.push_back(acc / static_cast<double>(pa.size()));
        } catch (const std::exception&) {
            out.push_back(std::numeric_limits<double>::quiet_NaN());
        }
    }
    return out;
}

double lle(const ImageBatch& a, const ImageBatch& b, const LandmarkDetector& detector,
           int* excluded) {
    const auto per = lle_per_image(a, b, detector);
    double acc = 0.0;
    int used = 0, skipped = 0;
    for (double v : per) {
        if (std::isnan(v)) {
            ++skipped;
        } else {
            acc += v;
            ++used;
        }
    }
    if (excluded) *excluded = skipped;
    check(used > 0, "lle: detector failed on every image");
    return acc / static_cast<double>(used);
}

double fid_from_embeddings(const Tensor& real, const Tensor& gen, bool* ridged) {
    check(real.rank() == 2 && gen.rank() == 2, "fid: embeddings must be rank-2 (N, dim)");
    check(real.dim(1) == gen.dim(1), "fid: embedding dimensions must match");
    const int64_t nr = real.dim(0), ng = gen.dim(0), d = real.dim(1);
    check(nr >= 2 && ng >= 2, "fid: need at least 2 samples per side");

    using Mat = Eigen::MatrixXd;
    using Vec = Eigen::VectorXd;
    auto stats = [&](const Tensor& e, int64_t n) {
        Vec mu = Vec::Zero(d);
        for (int64_t i = 0; i < n; ++i)
            for (int64_t k = 0; k < d; ++k) mu[k] += e[i * d + k];
        mu /= static_cast<double>(n);
        Mat cov = Mat::Zero(d, d);
        for (int64_t i = 0; i < n; ++i) {
            Vec row(d);
            for (int64_t k = 0; k < d; ++k) row[k] = e[i * d + k] - mu[k];
            cov += row * row.transpose();
        }
        cov /= static_cast<double>(n - 1);
        return std::make_pair(mu, cov);
    };
    auto [mu_r, cov_r] = stats(real, nr);
    auto [mu_g, cov_g] = stats(gen, ng);

    bool used_ridge = false;
    if (nr - 1 < d || ng - 1 < d) {
        // Covariance cannot be full rank; regularize and flag it.
        cov_r += 1e-6 * Mat::Identity(d, d);
        cov_g += 1e-6 * Mat::Identity(d, d);
        used_ridge = true;
    }
    if (ridged) *ridged = used_ridge;

    auto clipped_sqrt = [](const Mat& sym) {
        Eigen::SelfAdjointEigenSolver<Mat> es(sym);
        Vec ev = es.eigenvalues();
        for (int i = 0; i < ev.size(); ++i) ev[i] = ev[i] > 0.0 ? std::sqrt(ev[i]) : 0.0;
        return Mat(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
    };
    // tr((cov_r cov_g)^(1/2)) via the symmetric product
    // cov_g^(1/2) cov_r cov_g^(1/2); eigenvalues below the -1e-6 tolerance
    // are numerical noise and clip to zero.
    const Mat g_half = clipped_sqrt(0.5 * (cov_g + cov_g.transpose()));
    const Mat prod = g_half * cov_r * g_half;
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (prod + prod.transpose()));
    double tr_sqrt = 0.0;
    for (int i = 0; i < es.eigenvalues().size(); ++i) {
        const double ev = es.eigenvalues()[i];
        check(ev > -1e-6 * std::max(1.0, std::abs(es.eigenvalues().maxCoeff())),
              "fid: matrix square root failed (large negative eigenvalue)");
        if (ev > 0.0) tr_sqrt += std::sqrt(ev);
    }

    const double mean_term = (mu_r - mu_g).squaredNorm();
    const double value = mean_term + cov_r.trace() + cov_g.trace() - 2.0 * tr_sqrt;
    return std::max(value, 0.0);
}

double fid(const ImageBatch& real_images, const ImageBatch& gen_images,
           const FeatureExtractor& extractor, bool* ridged) {
    return fid_from_embeddings(extractor.embed(real_images), extractor.embed(gen_images),
                               ridged);
}

namespace {

// Unit-normalize across channels at every pixel, then average the squared
// difference spatially and sum over channels.
double lpips_layer(const Tensor& fa, const Tensor& fb, int64_t n) {
    const int64_t C = fa.dim(1), H = fa.dim(2), W = fa.dim(3), HW = H * W;
    double acc = 0.0;
    for (int64_t i = 0; i < HW; ++i) {
        double na = 1e-10, nb = 1e-10;
        for (int64_t c = 0; c < C; ++c) {
            const double va = fa[(n * C + c) * HW + i];
            const double vb = fb[(n * C + c) * HW + i];
            na += va * va;
            nb += vb * vb;
        }
        na = std::sqrt(na);
        nb = std::sqrt(nb);
        for (int64_t c = 0; c < C; ++c) {
            const double va = fa[(n * C + c) * HW + i] / na;
            const double vb = fb[(n * C + c) * HW + i] / nb;
            acc += (va - vb) * (va - vb);
        }
    }
    return acc / static_cast<double>(HW);
}

}  // namespace

std::vector<double> lpips_like_per_image(const ImageBatch& a, const ImageBatch& b,
                                         const FeatureExtractor& extractor) {
    check(a.data.same_shape(b.data), "lpips_like: shapes must match");
    auto fa = extractor.layers(ad::constant(a.data));
    auto fb = extractor.layers(ad::constant(b.data));
    check(fa.size() == fb.size() && !fa.empty(), "lpips_like: layer mismatch");
    std::vector<double> out;
    for (int64_t n = 0; n < a.count(); ++n) {
        double acc = 0.0;
        for (size_t l = 0; l < fa.size(); ++l)
            acc += lpips_layer(fa[l]->value, fb[l]->value, n);
        out.push_back(acc / static_cast<double>(fa.size()));
    }
    return out;
}

double lpips_like(const ImageBatch& a, const ImageBatch& b, const FeatureExtractor& extractor) {
    const auto per = lpips_like_per_image(a, b, extractor);
    double acc = 0.0;
    for (double v : per) acc += v;
    return acc / static_cast<double>(per.size());
}

}  // namespace metrics

}  // namespace ispl
