#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "ispl/config.hpp"
#include "ispl/report.hpp"
#include "ispl/rng.hpp"
#include "ispl/viz.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace ispl;

namespace {

std::vector<std::string> list_input_images(const std::string& dir) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        auto ext = e.path().extension().string();
        for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg")
            files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    return files;
}

int cmd_degrade(const std::string& task_name, const std::string& input_dir,
                const std::string& output_dir, uint64_t seed, const std::string& spec_file) {
    const Task task = task_from_string(task_name);
    const auto files = list_input_images(input_dir);
    check(!files.empty(), "degrade: no images in " + input_dir);
    fs::create_directories(output_dir);

    std::optional<DegradationSpec> fixed;
    if (!spec_file.empty()) {
        std::ifstream in(spec_file);
        if (!in) throw IoError("cannot open spec file " + spec_file);
        std::string body((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
        fixed = DegradationSpec::from_json(body);
    }

    nlohmann::json echo;
    echo["task"] = task_name;
    echo["spec_file"] = spec_file.empty() ? nlohmann::json(nullptr) : nlohmann::json(spec_file);
    for (size_t i = 0; i < files.size(); ++i) {
        const auto img = io::read_image(files[i]);
        DegradationSpec spec =
            fixed ? *fixed : degrade::sample_spec(task, derive_seed(seed, i));
        if (fixed) spec.seed = derive_seed(seed, i);  // fresh noise per image
        const auto out = degrade::apply(img, spec);
        const auto stem = fs::path(files[i]).stem().string();
        io::write_png(output_dir + "/" + stem + ".png", out);
    }
    write_manifest(output_dir, "degrade", echo.dump(), seed, files);
    std::cout << "degraded " << files.size() << " images -> " << output_dir << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir) {
    auto cfg = load_config(config_path, false);
    if (!data_dir.empty()) {
        cfg.hq_dir = data_dir;
        cfg.lq_dir.clear();
    }
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    check(!cfg.out_dir.empty(), "train: out_dir is required (config or --out)");
    cfg.validate(true);
    fs::create_directories(cfg.out_dir);

    std::unique_ptr<PairedDataset> dataset;
    if (cfg.lq_dir.empty())
        dataset = std::make_unique<PairedDataset>(
            PairedDataset::ingest_hq(cfg.hq_dir, cfg.task, cfg.seed));
    else
        dataset = std::make_unique<PairedDataset>(PairedDataset::ingest(cfg.lq_dir, cfg.hq_dir));

    IsplModel model(cfg.model, cfg.seed);
    RandomProjectionExtractor extractor(cfg.extractor_seed);

    nlohmann::json meta;
    meta["task"] = task_to_string(cfg.task);
    meta["train_domain"] = cfg.train_domain;
    meta["extractor_seed"] = cfg.extractor_seed;

    TrainOptions opt;
    opt.out_dir = cfg.out_dir;
    opt.seed = cfg.seed;
    opt.run_meta_json = meta.dump();
    opt.on_log = [](const std::string& line) { std::cout << line << "\n"; };

    write_manifest(cfg.out_dir, "train", cfg.to_json(), cfg.seed, {config_path});
    auto result = train(*dataset, model, cfg.schedule, cfg.weights, extractor, opt);
    std::cout << "final checkpoint: " << result.final_checkpoint << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir,
             const std::string& protocol_name, const std::string& report_path,
             const std::string& niqe_csv) {
    auto ckpt = Checkpoint::load(ckpt_path);
    auto model = IsplModel::from_checkpoint(ckpt);
    const auto meta = nlohmann::json::parse(ckpt.meta_json);
    const std::string domain = meta.value("train_domain", "synthetic");
    const uint64_t ex_seed = meta.value("extractor_seed", uint64_t{1234});
    const uint64_t seed = meta.value("seed", uint64_t{0});

    // --data expects lq/ + hq/ subdirectories, or hq/ alone for on-the-fly
    // degradation with the checkpoint's training task.
    std::unique_ptr<PairedDataset> dataset;
    const std::string lq_dir = data_dir + "/lq", hq_dir = data_dir + "/hq";
    if (fs::is_directory(lq_dir)) {
        dataset = std::make_unique<PairedDataset>(PairedDataset::ingest(lq_dir, hq_dir));
    } else {
        check(fs::is_directory(hq_dir),
              "eval: " + data_dir + " must contain hq/ (and optionally lq/)");
        const Task task = task_from_string(meta.value("task", std::string("denoise")));
        dataset = std::make_unique<PairedDataset>(PairedDataset::ingest_hq(hq_dir, task, seed));
    }

    RandomProjectionExtractor extractor(ex_seed);
    CentroidLandmarkDetector detector;
    ProtocolOptions opt;
    opt.model_id = fs::path(ckpt_path).stem().string();
    opt.dataset_id = fs::path(data_dir).filename().string();
    if (!niqe_csv.empty()) opt.niqe_csv = niqe_csv;

    auto report = run_protocol(model, domain, *dataset, protocol_from_string(protocol_name),
                               extractor, detector, opt);
    report.save(report_path);
    const auto csv_path = fs::path(report_path).replace_extension(".csv").string();
    report.write_csv(csv_path);
    write_manifest(fs::path(report_path).parent_path().string(), "eval", ckpt.config_json,
                   seed, {ckpt_path});
    std::cout << "report: " << report_path << "\n"
              << "psnr " << report.aggregate.psnr << " ssim " << report.aggregate.ssim
              << " fid " << report.aggregate.fid << " lpips_like "
              << report.aggregate.lpips_like << "\n";
    return 0;
}

int cmd_viz_subspaces(const std::string& ckpt_path, const std::string& input_path,
                      const std::string& out_png) {
    auto ckpt = Checkpoint::load(ckpt_path);
    auto model = IsplModel::from_checkpoint(ckpt);
    auto img = io::read_image(input_path);
    const int sz = model.config().image_size;
    if (img.height() != sz || img.width() != sz)
        img = degrade::resample_bicubic(img, sz, sz);
    viz::write_subspace_panels(out_png, img, model);
    write_manifest(fs::path(out_png).parent_path().string(), "viz-subspaces",
                   ckpt.config_json, 0, {ckpt_path, input_path});
    std::cout << "panels: " << out_png << "\n";
    return 0;
}

int cmd_pd_sweep(const std::string& ckpt_path, const std::string& data_dir,
                 const std::string& scales_csv, const std::string& out_dir) {
    auto ckpt = Checkpoint::load(ckpt_path);
    auto model = IsplModel::from_checkpoint(ckpt);
    const auto meta = nlohmann::json::parse(ckpt.meta_json);
    const uint64_t ex_seed = meta.value("extractor_seed", uint64_t{1234});

    std::vector<int> scales;
    std::stringstream ss(scales_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) scales.push_back(std::stoi(tok));
    check(!scales.empty(), "pd-sweep: no scales given");

    // The sweep degrades the HQ set itself, so ingest hq-only with any task.
    auto dataset = PairedDataset::ingest_hq(data_dir, Task::SuperResolution, 0);
    RandomProjectionExtractor extractor(ex_seed);
    fs::create_directories(out_dir);

    const auto points = viz::pd_sweep(model, dataset, scales, extractor);
    nlohmann::json j = nlohmann::json::array();
    std::ofstream csv(out_dir + "/pd_points.csv", std::ios::trunc);
    csv << "scale,psnr,fid,label\n";
    for (const auto& p : points) {
        j.push_back({{"scale", p.scale_factor},
                     {"psnr", p.distortion},
                     {"fid", p.perception},
                     {"label", p.label}});
        csv << p.scale_factor << "," << p.distortion << "," << p.perception << "," << p.label
            << "\n";
    }
    std::ofstream(out_dir + "/pd_points.json", std::ios::trunc) << j.dump(2) << "\n";
    viz::pd_plot(points, out_dir + "/pd_plot.svg");
    viz::pd_plot(points, out_dir + "/pd_plot.png");
    write_manifest(out_dir, "pd-sweep", ckpt.config_json, 0, {ckpt_path});
    std::cout << "sweep points: " << points.size() << " -> " << out_dir << "\n";
    return 0;
}

int cmd_report(const std::string& s2s, const std::string& s2r, const std::string& r2r,
               const std::string& niqe_csv, const std::string& attach_to,
               const std::string& out_path) {
    nlohmann::json j;
    bool acted = false;
    if (!niqe_csv.empty() && !attach_to.empty()) {
        auto rep = MetricReport::load(attach_to);
        rep.attach_niqe(read_niqe_csv(niqe_csv));
        rep.save(out_path.empty() ? attach_to : out_path);
        j["niqe_attached_to"] = out_path.empty() ? attach_to : out_path;
        acted = true;
    }
    if (!s2s.empty() && !s2r.empty()) {
        j["domain_gap"] = domain_gap(MetricReport::load(s2s), MetricReport::load(s2r));
        acted = true;
    }
    if (!s2r.empty() && !r2r.empty()) {
        j["r2r_gain_percent"] = r2r_gain(MetricReport::load(s2r), MetricReport::load(r2r));
        acted = true;
    }
    check(acted, "report: nothing to do (need --s2s/--s2r, --s2r/--r2r, or --niqe/--attach)");
    const std::string body = j.dump(2);
    if (!out_path.empty() && (j.contains("domain_gap") || j.contains("r2r_gain_percent")))
        std::ofstream(out_path, std::ios::trunc) << body << "\n";
    std::cout << body << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ISPL dual-blind restoration toolkit"};
    app.require_subcommand(1);

    std::string task, input_dir, output_dir, spec_file;
    uint64_t seed = 0;
    auto* degrade_cmd = app.add_subcommand("degrade", "Synthesize LQ images from HQ images");
    degrade_cmd->add_option("--task", task, "one of the six degradation tasks")->required();
    degrade_cmd->add_option("--input", input_dir, "directory of HQ images")->required();
    degrade_cmd->add_option("--output", output_dir, "destination directory")->required();
    degrade_cmd->add_option("--seed", seed, "base RNG seed");
    degrade_cmd->add_option("--spec", spec_file, "fixed degradation spec file (JSON)");

    std::string config_path, data_dir, out_dir;
    auto* train_cmd = app.add_subcommand("train", "Train a model from a config");
    train_cmd->add_option("--config", config_path, "experiment config (JSON)")->required();
    train_cmd->add_option("--data", data_dir, "override: HQ directory");
    train_cmd->add_option("--out", out_dir, "override: output directory");

    std::string ckpt_path, protocol, report_path, niqe_csv;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a paired set");
    eval_cmd->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
    eval_cmd->add_option("--data", data_dir, "directory with hq/ (and optional lq/)")
        ->required();
    eval_cmd->add_option("--protocol", protocol, "s2s, s2r or r2r")->required();
    eval_cmd->add_option("--report", report_path, "output report (JSON)")->required();
    eval_cmd->add_option("--niqe", niqe_csv, "external NIQE scores (image_id,score CSV)");

    std::string viz_input, viz_out;
    auto* viz_cmd = app.add_subcommand("viz-subspaces", "Emit the 2 x n subspace panel grid");
    viz_cmd->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
    viz_cmd->add_option("--input", viz_input, "input image")->required();
    viz_cmd->add_option("--out", viz_out, "output PNG")->required();

    std::string scales = "2,4,8,16";
    auto* sweep_cmd = app.add_subcommand("pd-sweep", "Perception-distortion sweep");
    sweep_cmd->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
    sweep_cmd->add_option("--data", data_dir, "directory of HQ images")->required();
    sweep_cmd->add_option("--scales", scales, "comma-separated scale list");
    sweep_cmd->add_option("--out", out_dir, "output directory")->required();

    std::string s2s_path, s2r_path, r2r_path, attach_to;
    auto* report_cmd =
        app.add_subcommand("report", "Domain gap / generalization gain and NIQE merge");
    report_cmd->add_option("--s2s", s2s_path, "S2S report (JSON)");
    report_cmd->add_option("--s2r", s2r_path, "S2R report (JSON)");
    report_cmd->add_option("--r2r", r2r_path, "R2R report (JSON)");
    report_cmd->add_option("--niqe", niqe_csv, "external NIQE scores to merge");
    report_cmd->add_option("--attach", attach_to, "report to merge NIQE scores into");
    report_cmd->add_option("--out", report_path, "output file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*degrade_cmd) return cmd_degrade(task, input_dir, output_dir, seed, spec_file);
        if (*train_cmd) return cmd_train(config_path, data_dir, out_dir);
        if (*eval_cmd) return cmd_eval(ckpt_path, data_dir, protocol, report_path, niqe_csv);
        if (*viz_cmd) return cmd_viz_subspaces(ckpt_path, viz_input, viz_out);
        if (*sweep_cmd) return cmd_pd_sweep(ckpt_path, data_dir, scales, out_dir);
        if (*report_cmd)
            return cmd_report(s2s_path, s2r_path, r2r_path, niqe_csv, attach_to, report_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
