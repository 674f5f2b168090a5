#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "ispl/degradation.hpp"
#include "ispl/viz.hpp"
#include "test_util.hpp"

using namespace ispl;

namespace {

ModelConfig smoke_config() {
    ModelConfig cfg;
    cfg.n_layers = 3;
    cfg.base_channels = 4;
    cfg.image_size = 64;
    cfg.correlation_dim = 4;
    return cfg;
}

ImageBatch random_batch(int64_t n, uint64_t seed) {
    auto rng = make_rng(seed);
    return ImageBatch(testutil::random_image({n, 3, 64, 64}, rng));
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("subspace panels form a 2 x n grid with an exact accumulative corner") {
    IsplModel model(smoke_config(), 401);
    auto img = random_batch(1, 403);
    auto grid = viz::subspace_panels(img, model);

    CHECK(grid.height() == 2 * 64);
    CHECK(grid.width() == 3 * 64);

    // Final accumulative cell (bottom-right) is bit-identical to restore_dynamic.
    auto full = model.restore_dynamic(img);
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < 64; ++y)
            for (int64_t x = 0; x < 64; ++x)
                CHECK(grid.data.at(0, c, 64 + y, 2 * 64 + x) == full.data.at(0, c, y, x));

    // Top row cells reproduce the per-level isolations.
    auto iso1 = model.isolate_subspace(img, 1, 0.5);
    for (int64_t y = 0; y < 8; ++y)
        CHECK(grid.data.at(0, 0, y, 64 + y) == iso1.data.at(0, 0, y, y));

    const std::string path = "/tmp/ispl_panels_test.png";
    viz::write_subspace_panels(path, img, model);
    auto reread = io::read_png(path);
    CHECK(reread.height() == 128);
    CHECK(reread.width() == 192);
    std::filesystem::remove(path);
}

TEST_CASE("pd_sweep measures every scale and never mutates the model") {
    IsplModel model(smoke_config(), 405);
    auto hq = random_batch(3, 407);
    InMemoryPairs pairs(hq, hq);
    RandomProjectionExtractor ex(31);

    std::vector<Tensor> before;
    for (const auto& [name, v] : model.generator_params().items()) before.push_back(v->value);

    auto points = viz::pd_sweep(model, pairs, {1, 2, 4, 8, 16}, ex);
    REQUIRE(points.size() == 5);
    CHECK(points[0].scale_factor == 1);
    CHECK(points[0].label == "x1");
    CHECK(points[4].label == "x16");
    for (const auto& p : points) {
        CHECK(std::isfinite(p.distortion));
        CHECK(p.perception >= 0.0);
    }

    size_t i = 0;
    for (const auto& [name, v] : model.generator_params().items()) {
        for (int64_t k = 0; k < v->value.numel(); ++k) CHECK(v->value[k] == before[i][k]);
        ++i;
    }

    CHECK_THROWS_AS(viz::pd_sweep(model, pairs, {7}, ex), ValidationError);
}

TEST_CASE("pd_plot writes labeled deterministic figures with an inverted PSNR axis") {
    std::vector<PDPoint> pts;
    pts.push_back({20.0, 15.0, "low", 16});
    pts.push_back({30.0, 5.0, "high", 2});

    const std::string svg = "/tmp/ispl_pd_test.svg";
    viz::pd_plot(pts, svg);
    const auto body = read_file(svg);
    CHECK(body.find("low") != std::string::npos);
    CHECK(body.find("high") != std::string::npos);

    // Larger PSNR plots further left: the second circle's cx < first's.
    auto cx_at = [&](size_t from) {
        const auto pos = body.find("<circle cx=\"", from);
        REQUIRE(pos != std::string::npos);
        return std::make_pair(std::stod(body.substr(pos + 12)), pos + 12);
    };
    auto [x_low, after_first] = cx_at(0);
    auto [x_high, ignored] = cx_at(after_first);
    (void)ignored;
    CHECK(x_high < x_low);

    viz::pd_plot(pts, "/tmp/ispl_pd_test2.svg");
    CHECK(read_file("/tmp/ispl_pd_test2.svg") == body);  // deterministic bytes

    const std::string png = "/tmp/ispl_pd_test.png";
    viz::pd_plot(pts, png);
    auto img = io::read_png(png);
    CHECK(img.width() == 640);
    CHECK(img.height() == 480);
    viz::pd_plot(pts, "/tmp/ispl_pd_test2.png");
    CHECK(read_file("/tmp/ispl_pd_test2.png") == read_file(png));

    CHECK_THROWS_AS(viz::pd_plot({}, svg), ValidationError);
    for (const char* f : {"/tmp/ispl_pd_test.svg", "/tmp/ispl_pd_test2.svg",
                          "/tmp/ispl_pd_test.png", "/tmp/ispl_pd_test2.png"})
        std::filesystem::remove(f);
}

TEST_CASE("single-point plot renders") {
    std::vector<PDPoint> pts;
    pts.push_back({25.0, 10.0, "only", 4});
    const std::string svg = "/tmp/ispl_pd_single.svg";
    viz::pd_plot(pts, svg);
    CHECK(read_file(svg).find("only") != std::string::npos);
    std::filesystem::remove(svg);
}
