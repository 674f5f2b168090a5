#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "ispl/config.hpp"
#include "test_util.hpp"

using namespace ispl;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::path("/tmp") / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

ImageBatch make_image(int64_t h, int64_t w, uint64_t seed) {
    auto rng = make_rng(seed);
    return ImageBatch(testutil::random_image({1, 3, h, w}, rng));
}

void write_file(const fs::path& p, const std::string& body) {
    std::ofstream out(p);
    out << body;
}

}  // namespace

TEST_CASE("png round trip is 8-bit exact") {
    TempDir dir("ispl_io_test");
    auto img = make_image(24, 16, 501);
    // Snap to the 8-bit grid so the round trip is lossless.
    for (int64_t i = 0; i < img.data.numel(); ++i)
        img.data[i] = std::round(img.data[i] * 255.0) / 255.0;
    const std::string path = dir.str() + "/img.png";
    io::write_png(path, img);
    auto back = io::read_png(path);
    CHECK(back.height() == 24);
    CHECK(back.width() == 16);
    for (int64_t i = 0; i < img.data.numel(); ++i)
        CHECK(std::abs(back.data[i] - img.data[i]) < 1e-9);

    auto [h, w] = io::read_image_size(path);
    CHECK(h == 24);
    CHECK(w == 16);
}

TEST_CASE("jpeg files are readable through read_image") {
    TempDir dir("ispl_io_jpeg_test");
    auto img = make_image(32, 32, 503);
    const auto rgb = [&] {
        std::vector<uint8_t> v(32 * 32 * 3);
        for (int64_t y = 0; y < 32; ++y)
            for (int64_t x = 0; x < 32; ++x)
                for (int64_t c = 0; c < 3; ++c)
                    v[(y * 32 + x) * 3 + c] =
                        static_cast<uint8_t>(std::lround(img.data.at(0, c, y, x) * 255.0));
        return v;
    }();
    const auto bytes = io::jpeg_encode(rgb, 32, 32, 90);
    const std::string path = dir.str() + "/img.jpg";
    std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                                static_cast<std::streamsize>(bytes.size()));
    auto back = io::read_image(path);
    CHECK(back.height() == 32);
    auto [h, w] = io::read_image_size(path);
    CHECK(h == 32);
    CHECK(w == 32);
}

TEST_CASE("minimal config gets the paper defaults") {
    TempDir dir("ispl_cfg_test");
    fs::create_directories(dir.path / "hq");
    io::write_png((dir.path / "hq" / "a.png").string(), make_image(64, 64, 505));
    write_file(dir.path / "cfg.json",
               "{\"data\": {\"hq_dir\": \"" + dir.str() + "/hq\"}}");

    auto cfg = load_config(dir.str() + "/cfg.json");
    CHECK(cfg.model.n_layers == 5);
    CHECK(cfg.model.base_channels == 64);
    CHECK(cfg.model.max_channels == 1024);
    CHECK(cfg.model.image_size == 512);
    CHECK(cfg.schedule.lr == doctest::Approx(2e-4));
    CHECK(cfg.schedule.epochs_constant == 30);
    CHECK(cfg.schedule.epochs_decay == 20);
    CHECK(cfg.weights.lambda_fm == 10.0);
    CHECK(cfg.weights.lambda_perc == 10.0);
    CHECK(cfg.train_domain == "synthetic");
}

TEST_CASE("unknown config keys are hard errors naming every offender") {
    const std::string body =
        "{\"data\": {\"hq_dir\": \"/tmp\"}, \"weights\": {\"lambda_l1\": 1.0}, "
        "\"bogus_top\": 3}";
    try {
        ExperimentConfig::from_json(body);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("lambda_l1") != std::string::npos);
        CHECK(msg.find("bogus_top") != std::string::npos);
    }
}

TEST_CASE("config round trip parses to an equal config") {
    TempDir dir("ispl_cfg_rt_test");
    fs::create_directories(dir.path / "hq");
    io::write_png((dir.path / "hq" / "a.png").string(), make_image(64, 64, 507));

    ExperimentConfig cfg;
    cfg.model.n_layers = 3;
    cfg.model.base_channels = 8;
    cfg.model.image_size = 64;
    cfg.task = Task::Deblur;
    cfg.hq_dir = dir.str() + "/hq";
    cfg.seed = 99;
    cfg.schedule.batch_size = 2;
    save_config(cfg, dir.str() + "/cfg.json");
    auto round = load_config(dir.str() + "/cfg.json");
    CHECK(round.model.n_layers == 3);
    CHECK(round.model.base_channels == 8);
    CHECK(round.task == Task::Deblur);
    CHECK(round.seed == 99);
    CHECK(round.schedule.batch_size == 2);
    CHECK(round.to_json() == cfg.to_json());
}

TEST_CASE("config validation requires existing paths") {
    ExperimentConfig cfg;
    cfg.model.n_layers = 3;
    cfg.model.base_channels = 8;
    cfg.model.image_size = 64;
    cfg.hq_dir = "/tmp/ispl_definitely_missing_dir";
    CHECK_THROWS_AS(cfg.validate(true), ValidationError);
    cfg.validate(false);  // without path checking only the values matter
}

TEST_CASE("paired ingestion pairs by stem and keeps lexicographic order") {
    TempDir dir("ispl_ingest_test");
    fs::create_directories(dir.path / "lq");
    fs::create_directories(dir.path / "hq");
    // Write in non-lexicographic creation order.
    for (const char* stem : {"c", "a", "b"}) {
        io::write_png((dir.path / "lq" / (std::string(stem) + ".png")).string(),
                      make_image(16, 16, 509));
        io::write_png((dir.path / "hq" / (std::string(stem) + ".png")).string(),
                      make_image(32, 32, 511));
    }
    auto ds = PairedDataset::ingest(dir.str() + "/lq", dir.str() + "/hq");
    CHECK(ds.size() == 3);
    CHECK(ds.stems() == std::vector<std::string>({"a", "b", "c"}));
    CHECK(ds.id(0) == "a");
    auto [lq, hq] = ds.get(0);
    CHECK(lq.height() == 16);
    CHECK(hq.height() == 32);
}

TEST_CASE("ingestion rejects orphans and size mismatches with file lists") {
    TempDir dir("ispl_ingest_err_test");
    fs::create_directories(dir.path / "lq");
    fs::create_directories(dir.path / "hq");
    io::write_png((dir.path / "lq" / "a.png").string(), make_image(16, 16, 513));
    io::write_png((dir.path / "lq" / "orphan.png").string(), make_image(16, 16, 515));
    io::write_png((dir.path / "hq" / "a.png").string(), make_image(32, 32, 517));
    try {
        PairedDataset::ingest(dir.str() + "/lq", dir.str() + "/hq");
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("orphan.png") != std::string::npos);
    }

    fs::remove(dir.path / "lq" / "orphan.png");
    io::write_png((dir.path / "hq" / "b.png").string(), make_image(48, 32, 519));
    io::write_png((dir.path / "lq" / "b.png").string(), make_image(16, 16, 521));
    CHECK_THROWS_AS(PairedDataset::ingest(dir.str() + "/lq", dir.str() + "/hq"),
                    ValidationError);
}

TEST_CASE("hq-only ingestion degrades deterministically per image") {
    TempDir dir("ispl_ingest_hq_test");
    fs::create_directories(dir.path / "hq");
    for (const char* stem : {"x", "y"})
        io::write_png((dir.path / "hq" / (std::string(stem) + ".png")).string(),
                      make_image(64, 64, 523));

    auto ds1 = PairedDataset::ingest_hq(dir.str() + "/hq", Task::Denoise, 42);
    auto ds2 = PairedDataset::ingest_hq(dir.str() + "/hq", Task::Denoise, 42);
    auto [lq1, hq1] = ds1.get(0);
    auto [lq2, hq2] = ds2.get(0);
    REQUIRE(lq1.data.same_shape(lq2.data));
    for (int64_t i = 0; i < lq1.data.numel(); ++i) CHECK(lq1.data[i] == lq2.data[i]);

    // Different images draw different degradation parameters.
    auto [lq_other, hq_other] = ds1.get(1);
    CHECK(lq_other.data.same_shape(lq1.data));

    auto ds3 = PairedDataset::ingest_hq(dir.str() + "/hq", Task::Denoise, 43);
    auto [lq3, hq3] = ds3.get(0);
    double diff = 0.0;
    for (int64_t i = 0; i < lq1.data.numel(); ++i) diff += std::abs(lq1.data[i] - lq3.data[i]);
    CHECK(diff > 0.0);
}

TEST_CASE("manifests embed config echo and input hashes, no timestamps") {
    TempDir dir("ispl_manifest_test");
    const std::string input = dir.str() + "/input.png";
    io::write_png(input, make_image(16, 16, 525));

    write_manifest(dir.str(), "degrade", "{\"task\": \"denoise\"}", 7, {input});
    std::ifstream in(dir.str() + "/manifest.json");
    std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(body.find("\"command\": \"degrade\"") != std::string::npos);
    CHECK(body.find("fnv1a:") != std::string::npos);
    CHECK(body.find("\"seed\": 7") != std::string::npos);

    // Byte-stable across reruns.
    write_manifest(dir.str(), "degrade", "{\"task\": \"denoise\"}", 7, {input});
    std::ifstream in2(dir.str() + "/manifest.json");
    std::string body2((std::istreambuf_iterator<char>(in2)), std::istreambuf_iterator<char>());
    CHECK(body == body2);
}
