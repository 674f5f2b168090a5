#include "ispl/viz.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "ispl/degradation.hpp"
#include "ispl/metrics.hpp"

namespace ispl::viz {

ImageBatch subspace_panels(const ImageBatch& input, const IsplModel& model, double constant) {
    check(input.count() >= 1, "subspace_panels: empty input");
    const auto single = input.count() == 1 ? input : input.slice(0);
    const int n = model.config().n_layers;
    const int64_t H = single.height(), W = single.width();

    Tensor grid({1, 3, 2 * H, static_cast<int64_t>(n) * W});
    auto paste = [&](const ImageBatch& img, int row, int col) {
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t y = 0; y < H; ++y)
                for (int64_t x = 0; x < W; ++x)
                    grid.at(0, c, row * H + y, col * W + x) = img.data.at(0, c, y, x);
    };
    for (int i = 0; i < n; ++i) {
        paste(model.isolate_subspace(single, i, constant), 0, i);
        paste(model.restore_accumulative(single, i, constant), 1, i);
    }
    return ImageBatch(std::move(grid), single.range);
}

void write_subspace_panels(const std::string& png_path, const ImageBatch& input,
                           const IsplModel& model, double constant) {
    io::write_png(png_path, subspace_panels(input, model, constant));
}

std::vector<PDPoint> pd_sweep(const IsplModel& model, const PairProvider& hq_set,
                              const std::vector<int>& scales,
                              const FeatureExtractor& extractor) {
    check(!scales.empty(), "pd_sweep: no scales given");
    check(hq_set.size() > 0, "pd_sweep: empty image set");
    const int image_size = model.config().image_size;

    std::vector<ImageBatch> hq_list;
    for (int64_t i = 0; i < hq_set.size(); ++i) {
        auto [lq, hq] = hq_set.get(i);
        (void)lq;
        check(hq.height() == image_size && hq.width() == image_size,
              "pd_sweep: images must match the model resolution");
        hq_list.push_back(std::move(hq));
    }
    const auto hq = ImageBatch::concat(hq_list);

    std::vector<PDPoint> points;
    for (int scale : scales) {
        check(scale >= 1 && image_size % scale == 0, "pd_sweep: scale must divide image size");
        auto degraded = degrade::downsample_bicubic(hq, scale);
        if (scale > 1) degraded = degrade::resample_bicubic(degraded, image_size, image_size);
        auto restored = model.restore_dynamic(degraded);
        PDPoint p;
        p.distortion = metrics::psnr(restored, hq);
        p.perception = metrics::fid(hq, restored, extractor);
        p.scale_factor = scale;
        p.label = "x" + std::to_string(scale);
        points.push_back(std::move(p));
    }
    return points;
}

namespace {

// 5x7 bitmap glyphs; labels are uppercased before rasterization.
struct Glyph {
    char ch;
    const char* rows[7];
};

const Glyph kFont[] = {
    {'0', {"01110", "10001", "10011", "10101", "11001", "10001", "01110"}},
    {'1', {"00100", "01100", "00100", "00100", "00100", "00100", "01110"}},
    {'2', {"01110", "10001", "00001", "00010", "00100", "01000", "11111"}},
    {'3', {"11111", "00010", "00100", "00010", "00001", "10001", "01110"}},
    {'4', {"00010", "00110", "01010", "10010", "11111", "00010", "00010"}},
    {'5', {"11111", "10000", "11110", "00001", "00001", "10001", "01110"}},
    {'6', {"00110", "01000", "10000", "11110", "10001", "10001", "01110"}},
    {'7', {"11111", "00001", "00010", "00100", "01000", "01000", "01000"}},
    {'8', {"01110", "10001", "10001", "01110", "10001", "10001", "01110"}},
    {'9', {"01110", "10001", "10001", "01111", "00001", "00010", "01100"}},
    {'A', {"01110", "10001", "10001", "11111", "10001", "10001", "10001"}},
    {'B', {"11110", "10001", "10001", "11110", "10001", "10001", "11110"}},
    {'C', {"01110", "10001", "10000", "10000", "10000", "10001", "01110"}},
    {'D', {"11100", "10010", "10001", "10001", "10001", "10010", "11100"}},
    {'E', {"11111", "10000", "10000", "11110", "10000", "10000", "11111"}},
    {'F', {"11111", "10000", "10000", "11110", "10000", "10000", "10000"}},
    {'G', {"01110", "10001", "10000", "10111", "10001", "10001", "01111"}},
    {'H', {"10001", "10001", "10001", "11111", "10001", "10001", "10001"}},
    {'I', {"01110", "00100", "00100", "00100", "00100", "00100", "01110"}},
    {'J', {"00111", "00010", "00010", "00010", "00010", "10010", "01100"}},
    {'K', {"10001", "10010", "10100", "11000", "10100", "10010", "10001"}},
    {'L', {"10000", "10000", "10000", "10000", "10000", "10000", "11111"}},
    {'M', {"10001", "11011", "10101", "10101", "10001", "10001", "10001"}},
    {'N', {"10001", "10001", "11001", "10101", "10011", "10001", "10001"}},
    {'O', {"01110", "10001", "10001", "10001", "10001", "10001", "01110"}},
    {'P', {"11110", "10001", "10001", "11110", "10000", "10000", "10000"}},
    {'Q', {"01110", "10001", "10001", "10001", "10101", "10010", "01101"}},
    {'R', {"11110", "10001", "10001", "11110", "10100", "10010", "10001"}},
    {'S', {"01111", "10000", "10000", "01110", "00001", "00001", "11110"}},
    {'T', {"11111", "00100", "00100", "00100", "00100", "00100", "00100"}},
    {'U', {"10001", "10001", "10001", "10001", "10001", "10001", "01110"}},
    {'V', {"10001", "10001", "10001", "10001", "10001", "01010", "00100"}},
    {'W', {"10001", "10001", "10001", "10101", "10101", "10101", "01010"}},
    {'X', {"10001", "10001", "01010", "00100", "01010", "10001", "10001"}},
    {'Y', {"10001", "10001", "01010", "00100", "00100", "00100", "00100"}},
    {'Z', {"11111", "00001", "00010", "00100", "01000", "10000", "11111"}},
    {'.', {"00000", "00000", "00000", "00000", "00000", "01100", "01100"}},
    {'-', {"00000", "00000", "00000", "01110", "00000", "00000", "00000"}},
    {'+', {"00000", "00100", "00100", "11111", "00100", "00100", "00000"}},
    {'_', {"00000", "00000", "00000", "00000", "00000", "00000", "11111"}},
    {':', {"00000", "01100", "01100", "00000", "01100", "01100", "00000"}},
    {' ', {"00000", "00000", "00000", "00000", "00000", "00000", "00000"}},
};

const Glyph* find_glyph(char c) {
    if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
    for (const auto& g : kFont)
        if (g.ch == c) return &g;
    return nullptr;
}

struct Rgb {
    uint8_t r, g, b;
};

struct Canvas {
    int64_t w, h;
    std::vector<uint8_t> px;  // rgb rows

    Canvas(int64_t width, int64_t height) : w(width), h(height) {
        px.assign(static_cast<size_t>(w * h * 3), 255);
    }
    void set(int64_t x, int64_t y, Rgb c) {
        if (x < 0 || y < 0 || x >= w || y >= h) return;
        auto* p = px.data() + (y * w + x) * 3;
        p[0] = c.r;
        p[1] = c.g;
        p[2] = c.b;
    }
    void hline(int64_t x0, int64_t x1, int64_t y, Rgb c) {
        for (int64_t x = std::min(x0, x1); x <= std::max(x0, x1); ++x) set(x, y, c);
    }
    void vline(int64_t x, int64_t y0, int64_t y1, Rgb c) {
        for (int64_t y = std::min(y0, y1); y <= std::max(y0, y1); ++y) set(x, y, c);
    }
    void box(int64_t x, int64_t y, int64_t size, Rgb c) {
        for (int64_t dy = 0; dy < size; ++dy)
            for (int64_t dx = 0; dx < size; ++dx) set(x + dx, y + dy, c);
    }
    void text(int64_t x, int64_t y, const std::string& s, Rgb c) {
        int64_t cx = x;
        for (char ch : s) {
            if (const Glyph* g = find_glyph(ch)) {
                for (int row = 0; row < 7; ++row)
                    for (int col = 0; col < 5; ++col)
                        if (g->rows[row][col] == '1') set(cx + col, y + row, c);
            }
            cx += 6;
        }
    }
    ImageBatch to_image() const {
        Tensor t({1, 3, h, w});
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x)
                for (int64_t c = 0; c < 3; ++c)
                    t.at(0, c, y, x) = px[(y * w + x) * 3 + c] / 255.0;
        return ImageBatch(std::move(t));
    }
};

const Rgb kPalette[] = {{198, 45, 35}, {31, 97, 168}, {38, 128, 62},
                        {158, 96, 17}, {104, 48, 146}, {0, 0, 0}};

std::string fmt_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

struct PlotLayout {
    double psnr_min, psnr_max, fid_min, fid_max;
    int64_t left = 70, right = 620, top = 20, bottom = 420;

    // PSNR axis is inverted: larger PSNR plots further left.
    double x_of(double psnr) const {
        return left + (psnr_max - psnr) / (psnr_max - psnr_min) * (right - left);
    }
    double y_of(double fid) const {
        return bottom - (fid - fid_min) / (fid_max - fid_min) * (bottom - top);
    }
};

PlotLayout layout_for(const std::vector<PDPoint>& points) {
    PlotLayout l{};
    l.psnr_min = l.psnr_max = points[0].distortion;
    l.fid_min = l.fid_max = points[0].perception;
    for (const auto& p : points) {
        l.psnr_min = std::min(l.psnr_min, p.distortion);
        l.psnr_max = std::max(l.psnr_max, p.distortion);
        l.fid_min = std::min(l.fid_min, p.perception);
        l.fid_max = std::max(l.fid_max, p.perception);
    }
    const double ppad = std::max(0.5, 0.08 * (l.psnr_max - l.psnr_min));
    const double fpad = std::max(0.5, 0.08 * (l.fid_max - l.fid_min));
    l.psnr_min -= ppad;
    l.psnr_max += ppad;
    l.fid_min = std::max(0.0, l.fid_min - fpad);
    l.fid_max += fpad;
    return l;
}

void write_svg(const std::vector<PDPoint>& points, const std::string& path) {
    const auto l = layout_for(points);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
           "viewBox=\"0 0 640 480\">\n";
    out << "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
    out << "<line x1=\"" << l.left << "\" y1=\"" << l.bottom << "\" x2=\"" << l.right
        << "\" y2=\"" << l.bottom << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << l.left << "\" y1=\"" << l.top << "\" x2=\"" << l.left << "\" y2=\""
        << l.bottom << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double psnr = l.psnr_min + (l.psnr_max - l.psnr_min) * t / 4.0;
        const double x = l.x_of(psnr);
        out << "<line x1=\"" << x << "\" y1=\"" << l.bottom << "\" x2=\"" << x << "\" y2=\""
            << l.bottom + 5 << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << x - 14 << "\" y=\"" << l.bottom + 18
            << "\" font-family=\"monospace\" font-size=\"11\">" << fmt_num(psnr) << "</text>\n";
        const double fid = l.fid_min + (l.fid_max - l.fid_min) * t / 4.0;
        const double y = l.y_of(fid);
        out << "<line x1=\"" << l.left - 5 << "\" y1=\"" << y << "\" x2=\"" << l.left
            << "\" y2=\"" << y << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << 8 << "\" y=\"" << y + 4
            << "\" font-family=\"monospace\" font-size=\"11\">" << fmt_num(fid) << "</text>\n";
    }
    out << "<text x=\"270\" y=\"450\" font-family=\"monospace\" font-size=\"12\">"
        << "PSNR (dB, inverted)</text>\n";
    out << "<text x=\"8\" y=\"14\" font-family=\"monospace\" font-size=\"12\">FID</text>\n";
    for (size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        const auto& c = kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))];
        char color[16];
        std::snprintf(color, sizeof(color), "#%02x%02x%02x", c.r, c.g, c.b);
        out << "<circle cx=\"" << l.x_of(p.distortion) << "\" cy=\"" << l.y_of(p.perception)
            << "\" r=\"4\" fill=\"" << color << "\"/>\n";
        out << "<text x=\"" << l.x_of(p.distortion) + 7 << "\" y=\"" << l.y_of(p.perception) + 4
            << "\" font-family=\"monospace\" font-size=\"11\">" << p.label << "</text>\n";
    }
    out << "</svg>\n";
}

void write_raster(const std::vector<PDPoint>& points, const std::string& path) {
    const auto l = layout_for(points);
    Canvas canvas(640, 480);
    const Rgb black{0, 0, 0};
    canvas.hline(l.left, l.right, l.bottom, black);
    canvas.vline(l.left, l.top, l.bottom, black);
    for (int t = 0; t <= 4; ++t) {
        const double psnr = l.psnr_min + (l.psnr_max - l.psnr_min) * t / 4.0;
        const auto x = static_cast<int64_t>(std::lround(l.x_of(psnr)));
        canvas.vline(x, l.bottom, l.bottom + 4, black);
        canvas.text(x - 14, l.bottom + 8, fmt_num(psnr), black);
        const double fid = l.fid_min + (l.fid_max - l.fid_min) * t / 4.0;
        const auto y = static_cast<int64_t>(std::lround(l.y_of(fid)));
        canvas.hline(l.left - 4, l.left, y, black);
        canvas.text(4, y - 3, fmt_num(fid), black);
    }
    canvas.text(250, l.bottom + 25, "PSNR DB INVERTED", black);
    canvas.text(4, 6, "FID", black);
    for (size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        const auto& c = kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))];
        const auto x = static_cast<int64_t>(std::lround(l.x_of(p.distortion)));
        const auto y = static_cast<int64_t>(std::lround(l.y_of(p.perception)));
        canvas.box(x - 2, y - 2, 5, c);
        canvas.text(x + 6, y - 3, p.label, c);
    }
    io::write_png(path, canvas.to_image());
}

}  // namespace

void pd_plot(const std::vector<PDPoint>& points, const std::string& out_path) {
    check(!points.empty(), "pd_plot: empty point list");
    for (const auto& p : points) {
        check(std::isfinite(p.distortion), "pd_plot: non-finite distortion");
        check(p.perception >= 0.0, "pd_plot: perception must be >= 0");
    }
    const bool svg = out_path.size() >= 4 && out_path.substr(out_path.size() - 4) == ".svg";
    if (svg)
        write_svg(points, out_path);
    else
        write_raster(points, out_path);
}

}  // namespace ispl::viz
