#pragma once

#include <map>
#include <string>
#include <vector>

#include "ispl/degradation.hpp"
#include "ispl/model.hpp"
#include "ispl/train.hpp"

namespace ispl {

// Top-level experiment description; the file format is strict JSON where any
// unknown key is a hard error (silent typos in lambda or n would invalidate
// a run).
struct ExperimentConfig {
    ModelConfig model;
    TrainSchedule schedule;
    LossWeights weights;
    Task task = Task::Denoise;
    std::string hq_dir;
    std::string lq_dir;  // empty = degrade on the fly from hq_dir + task
    uint64_t seed = 0;
    std::string out_dir;
    std::string train_domain = "synthetic";  // or "real"
    uint64_t extractor_seed = 1234;          // stub perceptual backbone

    // check_paths also requires every referenced directory to exist.
    void validate(bool check_paths) const;

    std::string to_json() const;
    static ExperimentConfig from_json(const std::string& text);
};

ExperimentConfig load_config(const std::string& path, bool check_paths = true);
void save_config(const ExperimentConfig& cfg, const std::string& path);

// Directory-backed paired dataset. Pairing is by filename stem and must be
// total; sizes are uniform per side; iteration order is lexicographic by
// filename regardless of filesystem order.
class PairedDataset : public PairProvider {
public:
    // Paired mode: explicit LQ and HQ directories.
    static PairedDataset ingest(const std::string& lq_dir, const std::string& hq_dir);
    // HQ-only mode: LQ is synthesized per image with sample_spec(task, s_i)
    // where s_i derives from (seed, image index).
    static PairedDataset ingest_hq(const std::string& hq_dir, Task task, uint64_t seed);

    int64_t size() const override { return static_cast<int64_t>(hq_paths_.size()); }
    std::pair<ImageBatch, ImageBatch> get(int64_t index) const override;
    std::string id(int64_t index) const override { return stems_.at(index); }

    int64_t hq_height() const { return hq_h_; }
    int64_t hq_width() const { return hq_w_; }
    const std::vector<std::string>& stems() const { return stems_; }

private:
    std::vector<std::string> stems_;
    std::vector<std::string> hq_paths_;
    std::vector<std::string> lq_paths_;  // empty in hq-only mode
    bool on_the_fly_ = false;
    Task task_ = Task::Denoise;
    uint64_t seed_ = 0;
    int64_t hq_h_ = 0, hq_w_ = 0;
};

// FNV-1a content hash used to fingerprint inputs in run manifests.
uint64_t fnv1a_file(const std::string& path);

// Every run drops a manifest beside its artifacts: command, config echo,
// seed and input content hashes. No timestamps, so reruns are byte-stable.
void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::string& config_echo_json, uint64_t seed,
                    const std::vector<std::string>& input_files);

}  // namespace ispl
