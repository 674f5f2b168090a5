#include "ispl/config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ispl/rng.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace ispl {

void ExperimentConfig::validate(bool check_paths) const {
    model.validate();
    schedule.validate();
    weights.validate();
    check(train_domain == "synthetic" || train_domain == "real",
          "config: train_domain must be 'synthetic' or 'real'");
    check(!hq_dir.empty(), "config: data.hq_dir is required");
    if (check_paths) {
        std::vector<std::string> missing;
        if (!fs::is_directory(hq_dir)) missing.push_back(hq_dir);
        if (!lq_dir.empty() && !fs::is_directory(lq_dir)) missing.push_back(lq_dir);
        if (!missing.empty()) {
            std::string msg = "config: referenced paths do not exist:";
            for (const auto& m : missing) msg += " " + m;
            throw ValidationError(msg);
        }
    }
}

std::string ExperimentConfig::to_json() const {
    nlohmann::json j;
    j["model"] = nlohmann::json::parse(model.to_json());
    nlohmann::json sched;
    sched["lr"] = schedule.lr;
    sched["beta1"] = schedule.beta1;
    sched["beta2"] = schedule.beta2;
    sched["epochs_constant"] = schedule.epochs_constant;
    sched["epochs_decay"] = schedule.epochs_decay;
    sched["batch_size"] = schedule.batch_size;
    sched["max_steps"] = schedule.max_steps;
    sched["checkpoint_every"] = schedule.checkpoint_every;
    sched["log_every"] = schedule.log_every;
    j["schedule"] = sched;
    j["weights"] = {{"lambda_fm", weights.lambda_fm}, {"lambda_perc", weights.lambda_perc}};
    j["task"] = task_to_string(task);
    nlohmann::json data;
    data["hq_dir"] = hq_dir;
    if (lq_dir.empty())
        data["lq_dir"] = nullptr;
    else
        data["lq_dir"] = lq_dir;
    j["data"] = data;
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    j["train_domain"] = train_domain;
    j["extractor_seed"] = extractor_seed;
    return j.dump(2);
}

namespace {

void collect_unknown(const nlohmann::json& obj, const std::vector<std::string>& known,
                     const std::string& prefix, std::vector<std::string>& offending) {
    if (!obj.is_object()) return;
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            offending.push_back(prefix + it.key());
    }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw ValidationError(std::string("config parse error: ") + e.what());
    }
    check(j.is_object(), "config: top level must be an object");

    std::vector<std::string> offending;
    collect_unknown(j,
                    {"model", "schedule", "weights", "task", "data", "seed", "out_dir",
                     "train_domain", "extractor_seed"},
                    "", offending);
    if (j.contains("model"))
        collect_unknown(j["model"],
                        {"n_layers", "shared_k", "base_channels", "max_channels",
                         "correlation_dim", "fusion_variant", "image_size", "in_channels",
                         "out_channels", "aligned_channels", "d_scales", "d_layers"},
                        "model.", offending);
    if (j.contains("schedule"))
        collect_unknown(j["schedule"],
                        {"lr", "beta1", "beta2", "epochs_constant", "epochs_decay",
                         "batch_size", "max_steps", "checkpoint_every", "log_every"},
                        "schedule.", offending);
    if (j.contains("weights"))
        collect_unknown(j["weights"], {"lambda_fm", "lambda_perc"}, "weights.", offending);
    if (j.contains("data")) collect_unknown(j["data"], {"hq_dir", "lq_dir"}, "data.", offending);
    if (!offending.empty()) {
        std::string msg = "config: unknown keys:";
        for (const auto& k : offending) msg += " '" + k + "'";
        throw ValidationError(msg);
    }

    ExperimentConfig cfg;
    try {
        if (j.contains("model")) cfg.model = ModelConfig::from_json(j["model"].dump());
        if (j.contains("schedule")) {
            const auto& s = j["schedule"];
            if (s.contains("lr")) cfg.schedule.lr = s["lr"].get<double>();
            if (s.contains("beta1")) cfg.schedule.beta1 = s["beta1"].get<double>();
            if (s.contains("beta2")) cfg.schedule.beta2 = s["beta2"].get<double>();
            if (s.contains("epochs_constant"))
                cfg.schedule.epochs_constant = s["epochs_constant"].get<int>();
            if (s.contains("epochs_decay"))
                cfg.schedule.epochs_decay = s["epochs_decay"].get<int>();
            if (s.contains("batch_size")) cfg.schedule.batch_size = s["batch_size"].get<int>();
            if (s.contains("max_steps")) cfg.schedule.max_steps = s["max_steps"].get<int>();
            if (s.contains("checkpoint_every"))
                cfg.schedule.checkpoint_every = s["checkpoint_every"].get<int>();
            if (s.contains("log_every")) cfg.schedule.log_every = s["log_every"].get<int>();
        }
        if (j.contains("weights")) {
            const auto& w = j["weights"];
            if (w.contains("lambda_fm")) cfg.weights.lambda_fm = w["lambda_fm"].get<double>();
            if (w.contains("lambda_perc"))
                cfg.weights.lambda_perc = w["lambda_perc"].get<double>();
        }
        if (j.contains("task")) cfg.task = task_from_string(j["task"].get<std::string>());
        if (j.contains("data")) {
            const auto& d = j["data"];
            if (d.contains("hq_dir") && !d["hq_dir"].is_null())
                cfg.hq_dir = d["hq_dir"].get<std::string>();
            if (d.contains("lq_dir") && !d["lq_dir"].is_null())
                cfg.lq_dir = d["lq_dir"].get<std::string>();
        }
        if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
        if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();
        if (j.contains("train_domain"))
            cfg.train_domain = j["train_domain"].get<std::string>();
        if (j.contains("extractor_seed"))
            cfg.extractor_seed = j["extractor_seed"].get<uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("config: bad value type: ") + e.what());
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path, bool check_paths) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    auto cfg = ExperimentConfig::from_json(ss.str());
    cfg.validate(check_paths);
    return cfg;
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << cfg.to_json() << "\n";
}

namespace {

struct DirListing {
    std::vector<std::string> stems;
    std::vector<std::string> paths;
};

bool is_image_file(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

DirListing list_images(const std::string& dir) {
    check(fs::is_directory(dir), "ingest: not a directory: " + dir);
    std::vector<std::pair<std::string, std::string>> entries;  // (filename, path)
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file() || !is_image_file(e.path())) continue;
        entries.emplace_back(e.path().filename().string(), e.path().string());
    }
    std::sort(entries.begin(), entries.end());
    DirListing out;
    for (auto& [name, path] : entries) {
        out.stems.push_back(fs::path(name).stem().string());
        out.paths.push_back(path);
    }
    for (size_t i = 1; i < out.stems.size(); ++i)
        check(out.stems[i] != out.stems[i - 1],
              "ingest: duplicate stem '" + out.stems[i] + "' in " + dir);
    return out;
}

void check_uniform_sizes(const std::vector<std::string>& paths, const char* side) {
    check(!paths.empty(), std::string("ingest: no images found for ") + side);
    auto [h0, w0] = io::read_image_size(paths[0]);
    for (const auto& p : paths) {
        auto [h, w] = io::read_image_size(p);
        check(h == h0 && w == w0, std::string("ingest: ") + side + " image size mismatch at " +
                                      p + " (" + std::to_string(h) + "x" + std::to_string(w) +
                                      " vs " + std::to_string(h0) + "x" + std::to_string(w0) +
                                      ")");
    }
}

}  // namespace

PairedDataset PairedDataset::ingest(const std::string& lq_dir, const std::string& hq_dir) {
    auto lq = list_images(lq_dir);
    auto hq = list_images(hq_dir);

    std::vector<std::string> orphans;
    size_t li = 0, hi = 0;
    while (li < lq.stems.size() || hi < hq.stems.size()) {
        if (li < lq.stems.size() &&
            (hi == hq.stems.size() || lq.stems[li] < hq.stems[hi])) {
            orphans.push_back(lq.paths[li++]);
        } else if (hi < hq.stems.size() &&
                   (li == lq.stems.size() || hq.stems[hi] < lq.stems[li])) {
            orphans.push_back(hq.paths[hi++]);
        } else {
            ++li;
            ++hi;
        }
    }
    if (!orphans.empty()) {
        std::string msg = "ingest: unpaired files:";
        for (const auto& o : orphans) msg += " " + o;
        throw ValidationError(msg);
    }
    check_uniform_sizes(lq.paths, "LQ");
    check_uniform_sizes(hq.paths, "HQ");

    PairedDataset ds;
    ds.stems_ = hq.stems;
    ds.hq_paths_ = hq.paths;
    ds.lq_paths_ = lq.paths;
    auto [h, w] = io::read_image_size(hq.paths[0]);
    ds.hq_h_ = h;
    ds.hq_w_ = w;
    return ds;
}

PairedDataset PairedDataset::ingest_hq(const std::string& hq_dir, Task task, uint64_t seed) {
    auto hq = list_images(hq_dir);
    check_uniform_sizes(hq.paths, "HQ");
    PairedDataset ds;
    ds.stems_ = hq.stems;
    ds.hq_paths_ = hq.paths;
    ds.on_the_fly_ = true;
    ds.task_ = task;
    ds.seed_ = seed;
    auto [h, w] = io::read_image_size(hq.paths[0]);
    ds.hq_h_ = h;
    ds.hq_w_ = w;
    return ds;
}

std::pair<ImageBatch, ImageBatch> PairedDataset::get(int64_t index) const {
    check(index >= 0 && index < size(), "dataset: index out of range");
    auto hq = io::read_image(hq_paths_[index]);
    if (on_the_fly_) {
        const auto spec =
            degrade::sample_spec(task_, derive_seed(seed_, static_cast<uint64_t>(index)));
        return {degrade::apply(hq, spec), std::move(hq)};
    }
    return {io::read_image(lq_paths_[index]), std::move(hq)};
}

uint64_t fnv1a_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[8192];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const auto n = in.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<uint8_t>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (!in) break;
    }
    return h;
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::string& config_echo_json, uint64_t seed,
                    const std::vector<std::string>& input_files) {
    fs::create_directories(out_dir);
    nlohmann::json j;
    j["command"] = command;
    j["seed"] = seed;
    try {
        j["config"] = nlohmann::json::parse(config_echo_json);
    } catch (const std::exception&) {
        j["config"] = config_echo_json;
    }
    nlohmann::json inputs;
    for (const auto& f : input_files) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "fnv1a:%016llx",
                      static_cast<unsigned long long>(fnv1a_file(f)));
        inputs[f] = buf;
    }
    j["inputs"] = inputs;
    j["versions"] = {{"ispl", "0.1.0"}, {"checkpoint_format", 1}};
    std::ofstream out(out_dir + "/manifest.json", std::ios::trunc);
    if (!out) throw IoError("cannot write manifest in " + out_dir);
    out << j.dump(2) << "\n";
}

}  // namespace ispl
