#include "ispl/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ispl/rng.hpp"
#include "json.hpp"

namespace ispl {

void TrainSchedule::validate() const {
    check(lr > 0.0, "schedule: lr must be positive");
    check(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
          "schedule: betas must lie in [0,1)");
    check(epochs_constant >= 0 && epochs_decay >= 0, "schedule: epoch counts must be >= 0");
    check(batch_size >= 1, "schedule: batch_size must be >= 1");
    check(max_steps >= 0 && checkpoint_every >= 0 && log_every >= 1,
          "schedule: step knobs must be non-negative");
}

double lr_at(int epoch, const TrainSchedule& schedule) {
    schedule.validate();
    const int total = schedule.epochs_constant + schedule.epochs_decay;
    check(epoch >= 0 && epoch < total, "lr_at: epoch out of range");
    if (epoch < schedule.epochs_constant) return schedule.lr;
    const int into_decay = epoch - schedule.epochs_constant + 1;
    return schedule.lr *
           (1.0 - static_cast<double>(into_decay) / static_cast<double>(schedule.epochs_decay));
}

Adam::Adam(ParamStore& params, double beta1, double beta2, double eps)
    : params_(&params), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& [name, v] : params.items()) {
        m_.emplace_back(Tensor::zeros(v->value.shape()));
        v_.emplace_back(Tensor::zeros(v->value.shape()));
    }
}

void Adam::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const auto& items = params_->items();
    for (size_t p = 0; p < items.size(); ++p) {
        auto& node = *items[p].second;
        const int64_t n = node.value.numel();
        const bool has_grad = !node.grad.empty();
        for (int64_t i = 0; i < n; ++i) {
            const double g = has_grad ? node.grad[i] : 0.0;
            m_[p][i] = beta1_ * m_[p][i] + (1.0 - beta1_) * g;
            v_[p][i] = beta2_ * v_[p][i] + (1.0 - beta2_) * g * g;
            const double mhat = m_[p][i] / bc1;
            const double vhat = v_[p][i] / bc2;
            node.value[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

std::vector<std::pair<std::string, Tensor>> Adam::state_arrays(const std::string& prefix) const {
    std::vector<std::pair<std::string, Tensor>> arrays;
    const auto& items = params_->items();
    for (size_t p = 0; p < items.size(); ++p) {
        arrays.emplace_back(prefix + items[p].first + ".m", m_[p]);
        arrays.emplace_back(prefix + items[p].first + ".v", v_[p]);
    }
    arrays.emplace_back(prefix + "t", Tensor::scalar(static_cast<double>(t_)));
    return arrays;
}

void Adam::load_state(const std::string& prefix,
                      const std::vector<std::pair<std::string, Tensor>>& arrays) {
    const auto& items = params_->items();
    auto find = [&](const std::string& name) -> const Tensor* {
        for (const auto& [n, t] : arrays)
            if (n == name) return &t;
        return nullptr;
    };
    for (size_t p = 0; p < items.size(); ++p) {
        const Tensor* m = find(prefix + items[p].first + ".m");
        const Tensor* v = find(prefix + items[p].first + ".v");
        check(m && v, "optimizer state missing for '" + items[p].first + "'");
        check(m->same_shape(m_[p]) && v->same_shape(v_[p]),
              "optimizer state shape mismatch for '" + items[p].first + "'");
        m_[p] = *m;
        v_[p] = *v;
    }
    const Tensor* t = find(prefix + "t");
    check(t && t->numel() == 1, "optimizer step counter missing");
    t_ = static_cast<int64_t>((*t)[0]);
}

std::string PairProvider::id(int64_t index) const {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%06lld", static_cast<long long>(index));
    return buf;
}

InMemoryPairs::InMemoryPairs(ImageBatch lq, ImageBatch hq)
    : lq_(std::move(lq)), hq_(std::move(hq)) {
    check(lq_.count() == hq_.count(), "paired data: LQ/HQ counts differ");
}

std::pair<ImageBatch, ImageBatch> InMemoryPairs::get(int64_t index) const {
    return {lq_.slice(index), hq_.slice(index)};
}

std::string StepRecord::to_json() const {
    nlohmann::json j;
    j["step"] = step;
    j["lr"] = lr;
    j["gan_g"] = gan_g;
    j["gan_d"] = gan_d;
    j["fm"] = fm;
    j["perc"] = perc;
    j["g_total"] = g_total;
    return j.dump();
}

namespace {

ImageBatch gather_batch(const PairProvider& data, const std::vector<int64_t>& order,
                        int64_t start, int batch, bool lq) {
    std::vector<ImageBatch> items;
    items.reserve(batch);
    for (int b = 0; b < batch; ++b) {
        auto [l, h] = data.get(order[start + b]);
        items.push_back(lq ? std::move(l) : std::move(h));
    }
    return ImageBatch::concat(items);
}

std::vector<int64_t> epoch_order(int64_t size, uint64_t seed, int64_t epoch) {
    std::vector<int64_t> order(size);
    for (int64_t i = 0; i < size; ++i) order[i] = i;
    auto rng = make_rng(derive_seed(seed, 0xE90CULL, static_cast<uint64_t>(epoch)));
    // Fisher-Yates with our own draws so the stream is stable.
    for (int64_t i = size - 1; i > 0; --i) {
        const int64_t j = uniform_int(rng, 0, i);
        std::swap(order[i], order[j]);
    }
    return order;
}

}  // namespace

TrainResult train(const PairProvider& data, IsplModel& model, const TrainSchedule& schedule,
                  const LossWeights& weights, const FeatureExtractor& extractor,
                  const TrainOptions& options) {
    schedule.validate();
    weights.validate();
    check(!options.out_dir.empty(), "train: out_dir is required");
    std::filesystem::create_directories(options.out_dir);
    check(data.size() >= schedule.batch_size,
          "train: dataset smaller than one batch (" + std::to_string(data.size()) + " < " +
              std::to_string(schedule.batch_size) + ")");

    const int64_t steps_per_epoch = data.size() / schedule.batch_size;
    const int64_t total_epochs = schedule.epochs_constant + schedule.epochs_decay;
    int64_t total_steps = steps_per_epoch * total_epochs;
    if (schedule.max_steps > 0) total_steps = std::min<int64_t>(total_steps, schedule.max_steps);

    Adam adam_g(model.generator_params(), schedule.beta1, schedule.beta2);
    Adam adam_d(model.discriminator_params(), schedule.beta1, schedule.beta2);

    int64_t step = 0;
    if (!options.resume_from.empty()) {
        auto ckpt = Checkpoint::load(options.resume_from);
        auto restored = IsplModel::from_checkpoint(ckpt);
        check(restored.config() == model.config(), "train: resume config mismatch");
        // Transplant weights into the caller's model instance.
        for (const auto& [name, v] : restored.generator_params().items())
            model.generator_params().get(name)->value = v->value;
        for (const auto& [name, v] : restored.discriminator_params().items())
            model.discriminator_params().get(name)->value = v->value;
        adam_g.load_state("opt_g/", ckpt.arrays);
        adam_d.load_state("opt_d/", ckpt.arrays);
        const auto meta = nlohmann::json::parse(ckpt.meta_json);
        step = meta.value("step", int64_t{0});
    }

    auto meta_for = [&](int64_t at_step) {
        nlohmann::json meta = nlohmann::json::parse(options.run_meta_json);
        meta["step"] = at_step;
        meta["seed"] = options.seed;
        return meta.dump();
    };
    auto save_at = [&](const std::string& path, int64_t at_step) {
        auto extra = adam_g.state_arrays("opt_g/");
        auto dstate = adam_d.state_arrays("opt_d/");
        extra.insert(extra.end(), dstate.begin(), dstate.end());
        model.save_checkpoint(path, meta_for(at_step), extra);
    };

    const std::string log_path = options.out_dir + "/train_log.jsonl";
    std::ofstream log(log_path, step > 0 ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot open " + log_path);

    TrainResult result;
    const double eps_floor = 1e-12;
    (void)eps_floor;
    while (step < total_steps) {
        const int64_t epoch = step / steps_per_epoch;
        const int64_t batch_index = step % steps_per_epoch;
        const double lr = lr_at(static_cast<int>(epoch), schedule);
        const auto order = epoch_order(data.size(), options.seed, epoch);
        const int64_t start = batch_index * schedule.batch_size;

        auto lq = gather_batch(data, order, start, schedule.batch_size, true);
        auto hq = gather_batch(data, order, start, schedule.batch_size, false);
        auto lq_leaf = ad::constant(lq.data);
        auto hq_leaf = ad::constant(hq.data);

        // Generator forward once; the detached copy feeds the discriminator step.
        auto fake = model.restore_graph(lq_leaf);

        // Discriminator update.
        auto real_out_d = model.discriminate_graph(hq_leaf);
        auto fake_out_d = model.discriminate_graph(ad::detach(fake));
        auto d_loss = adversarial_loss(real_out_d, fake_out_d, GanSide::Discriminator);
        model.discriminator_params().zero_grads();
        model.generator_params().zero_grads();
        ad::backward(d_loss);
        adam_d.step(lr);

        // Generator update against the refreshed discriminator.
        auto real_out_g = model.discriminate_graph(hq_leaf);
        auto fake_out_g = model.discriminate_graph(fake);
        auto gan_g = adversarial_loss(real_out_g, fake_out_g, GanSide::Generator);
        auto fm = feature_matching_loss(real_out_g, fake_out_g);
        auto perc = perceptual_loss(hq_leaf, fake, extractor);
        auto g_total = ad::add(gan_g, ad::add(ad::scale(fm, weights.lambda_fm),
                                              ad::scale(perc, weights.lambda_perc)));
        model.generator_params().zero_grads();
        model.discriminator_params().zero_grads();
        ad::backward(g_total);
        adam_g.step(lr);

        StepRecord rec;
        rec.step = step + 1;
        rec.lr = lr;
        rec.gan_g = gan_g->value[0];
        rec.gan_d = d_loss->value[0];
        rec.fm = fm->value[0];
        rec.perc = perc->value[0];
        rec.g_total = g_total->value[0];

        if (!std::isfinite(rec.g_total) || !std::isfinite(rec.gan_d)) {
            // Snapshot the offending batch for post-mortem before aborting.
            Checkpoint snap;
            snap.config_json = model.config().to_json();
            snap.meta_json = meta_for(step);
            snap.arrays.emplace_back("diagnostic/lq", lq.data);
            snap.arrays.emplace_back("diagnostic/hq", hq.data);
            const std::string snap_path = options.out_dir + "/diagnostic_batch.ckpt";
            snap.save(snap_path);
            throw TrainError("non-finite loss at step " + std::to_string(step + 1) +
                             "; offending batch saved to " + snap_path);
        }

        ++step;
        ++result.steps_run;
        result.records.push_back(rec);
        if (rec.step % schedule.log_every == 0 || rec.step == total_steps) {
            const std::string line = rec.to_json();
            log << line << "\n";
            if (options.on_log) options.on_log(line);
        }
        if (schedule.checkpoint_every > 0 && rec.step % schedule.checkpoint_every == 0 &&
            rec.step < total_steps) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "step_%06lld", static_cast<long long>(rec.step));
            save_at(options.out_dir + "/" + buf + ".ckpt", rec.step);
        }
    }
    log.flush();

    const std::string final_path = options.out_dir + "/final.ckpt";
    save_at(final_path, step);
    result.final_checkpoint = final_path;
    return result;
}

}  // namespace ispl
