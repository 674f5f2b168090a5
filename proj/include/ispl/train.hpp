#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ispl/losses.hpp"
#include "ispl/model.hpp"

namespace ispl {

struct TrainSchedule {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    int epochs_constant = 30;
    int epochs_decay = 20;
    int batch_size = 4;
    int max_steps = 0;        // 0 = run the full epoch schedule
    int checkpoint_every = 0; // in steps; 0 = final checkpoint only
    int log_every = 1;

    void validate() const;
};

// Constant for the first epochs_constant epochs, then linear decay to zero
// over epochs_decay epochs.
double lr_at(int epoch, const TrainSchedule& schedule);

// Standard Adam over a parameter store; state ordering follows registration.
class Adam {
public:
    Adam(ParamStore& params, double beta1, double beta2, double eps = 1e-8);
    void step(double lr);
    int64_t step_count() const { return t_; }

    // Checkpoint round trip (arrays named <prefix><param>.m / .v, plus
    // <prefix>t for the step counter).
    std::vector<std::pair<std::string, Tensor>> state_arrays(const std::string& prefix) const;
    void load_state(const std::string& prefix,
                    const std::vector<std::pair<std::string, Tensor>>& arrays);

private:
    ParamStore* params_;
    double beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

// Deterministic source of paired (LQ, HQ) samples.
class PairProvider {
public:
    virtual ~PairProvider() = default;
    virtual int64_t size() const = 0;
    virtual std::pair<ImageBatch, ImageBatch> get(int64_t index) const = 0;  // (lq, hq)
    virtual std::string id(int64_t index) const;  // default: zero-padded index
};

// Trivial provider over in-memory batches (tests, smoke runs).
class InMemoryPairs : public PairProvider {
public:
    InMemoryPairs(ImageBatch lq, ImageBatch hq);
    int64_t size() const override { return lq_.count(); }
    std::pair<ImageBatch, ImageBatch> get(int64_t index) const override;

private:
    ImageBatch lq_, hq_;
};

struct TrainOptions {
    std::string out_dir;              // log + checkpoints; must exist
    uint64_t seed = 0;
    std::string run_meta_json = "{}"; // merged into checkpoint metadata
    std::string resume_from;          // optional checkpoint path
    std::function<void(const std::string&)> on_log;  // optional line sink
};

struct StepRecord {
    int64_t step = 0;
    double lr = 0.0;
    double gan_g = 0.0, gan_d = 0.0, fm = 0.0, perc = 0.0, g_total = 0.0;
    std::string to_json() const;
};

struct TrainResult {
    std::string final_checkpoint;
    int64_t steps_run = 0;
    std::vector<StepRecord> records;
};

// Alternating discriminator/generator loop (one step each per batch),
// deterministic given the seed. Aborts with a diagnostic snapshot on
// non-finite losses.
TrainResult train(const PairProvider& data, IsplModel& model, const TrainSchedule& schedule,
                  const LossWeights& weights, const FeatureExtractor& extractor,
                  const TrainOptions& options);

}  // namespace ispl
