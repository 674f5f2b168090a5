#include "ispl/losses.hpp"

#include "ispl/rng.hpp"

namespace ispl {

Tensor FeatureExtractor::embed(const ImageBatch& img) const {
    auto feats = layers(ad::constant(img.data));
    check(!feats.empty(), "extractor produced no layers");
    const auto& deep = feats.back()->value;
    const int64_t N = deep.dim(0), C = deep.dim(1), HW = deep.dim(2) * deep.dim(3);
    Tensor emb({N, C});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            double acc = 0.0;
            const double* plane = deep.data() + (n * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) acc += plane[i];
            emb[n * C + c] = acc / static_cast<double>(HW);
        }
    return emb;
}

RandomProjectionExtractor::RandomProjectionExtractor(uint64_t seed, int in_channels)
    : seed_(seed) {
    auto rng = make_rng(derive_seed(seed, 0xFEA7ULL));
    // Mirrors the shallow end of a classifier backbone: the first projection
    // keeps full resolution, the deeper ones stride down. Per-layer gains are
    // calibrated so every layer's activations sit near std 2 on [0,1] images,
    // matching the equal-layer-weight convention of the production backbone.
    const int widths[3] = {32, 16, 32};
    const double gains[3] = {6.9, 1.26, 1.54};
    int cin = in_channels;
    for (int l = 0; l < 3; ++l) {
        Tensor w({widths[l], cin, 3, 3});
        const double sd = gains[l] / std::sqrt(static_cast<double>(cin * 9));
        for (int64_t i = 0; i < w.numel(); ++i) w[i] = normal(rng, 0.0, sd);
        weights_.push_back(ad::constant(std::move(w)));
        Tensor b({widths[l]});
        for (int64_t i = 0; i < b.numel(); ++i) b[i] = normal(rng, 0.0, 0.3);
        biases_.push_back(ad::constant(std::move(b)));
        cin = widths[l];
    }
}

std::string RandomProjectionExtractor::id() const {
    return "randproj-" + std::to_string(seed_) + "-d32";
}

std::vector<ad::Var> RandomProjectionExtractor::layers(const ad::Var& img) const {
    check(img->value.rank() == 4, "extractor: expects rank-4 input");
    std::vector<ad::Var> feats;
    ad::Var x = img;
    for (size_t l = 0; l < weights_.size(); ++l) {
        x = ad::add_bias(ad::conv2d(x, weights_[l], l == 0 ? 1 : 2, 1, ad::Pad::Zero),
                         biases_[l]);
        x = ad::leaky_relu(x, 0.2);
        feats.push_back(x);
    }
    return feats;
}

namespace {

ad::Var squared_mean(const ad::Var& x) { return ad::mean_all(ad::mul(x, x)); }

}  // namespace

ad::Var adversarial_loss(const std::vector<DiscOutput>& real_scores,
                         const std::vector<DiscOutput>& fake_scores, GanSide side) {
    check(!fake_scores.empty(), "adversarial_loss: empty score list");
    if (side == GanSide::Discriminator)
        check(real_scores.size() == fake_scores.size(),
              "adversarial_loss: scale count mismatch");
    ad::Var total;
    const size_t scales = fake_scores.size();
    for (size_t s = 0; s < scales; ++s) {
        ad::Var term;
        if (side == GanSide::Discriminator) {
            auto real_term = squared_mean(ad::add_const(real_scores[s].score, -1.0));
            auto fake_term = squared_mean(fake_scores[s].score);
            term = ad::add(real_term, fake_term);
        } else {
            term = squared_mean(ad::add_const(fake_scores[s].score, -1.0));
        }
        total = total ? ad::add(total, term) : term;
    }
    return ad::scale(total, 1.0 / static_cast<double>(scales));
}

ad::Var feature_matching_loss(const std::vector<DiscOutput>& feats_gt,
                              const std::vector<DiscOutput>& feats_gen) {
    check(!feats_gt.empty() && feats_gt.size() == feats_gen.size(),
          "feature_matching_loss: scale list mismatch");
    ad::Var total;
    for (size_t s = 0; s < feats_gt.size(); ++s) {
        check(feats_gt[s].features.size() == feats_gen[s].features.size(),
              "feature_matching_loss: layer count mismatch at scale " + std::to_string(s));
        ad::Var scale_term;
        for (size_t l = 0; l < feats_gt[s].features.size(); ++l) {
            auto diff = ad::sub(ad::detach(feats_gt[s].features[l]), feats_gen[s].features[l]);
            auto term = squared_mean(diff);  // == ||.||^2 / (N H W C)
            scale_term = scale_term ? ad::add(scale_term, term) : term;
        }
        total = total ? ad::add(total, scale_term) : scale_term;
    }
    return ad::scale(total, 1.0 / static_cast<double>(feats_gt.size()));
}

ad::Var perceptual_loss(const ad::Var& x, const ad::Var& x_tilde,
                        const FeatureExtractor& extractor) {
    check(x->value.same_shape(x_tilde->value), "perceptual_loss: shape mismatch");
    auto fx = extractor.layers(ad::detach(x));
    auto fg = extractor.layers(x_tilde);
    check(fx.size() == fg.size() && !fx.empty(), "perceptual_loss: layer mismatch");
    ad::Var total;
    for (size_t l = 0; l < fx.size(); ++l) {
        auto term = squared_mean(ad::sub(fx[l], fg[l]));
        total = total ? ad::add(total, term) : term;
    }
    return total;
}

ObjectiveResult full_objective(const ImageBatch& lq, const ImageBatch& hq,
                               const IsplModel& model, const LossWeights& weights,
                               const FeatureExtractor& extractor) {
    weights.validate();
    check(lq.data.same_shape(hq.data), "full_objective: paired batch shape mismatch");
    auto lq_leaf = ad::constant(lq.data);
    auto hq_leaf = ad::constant(hq.data);

    auto fake = model.restore_graph(lq_leaf);
    auto real_out = model.discriminate_graph(hq_leaf);
    auto fake_out = model.discriminate_graph(fake);

    auto gan_d = adversarial_loss(real_out, fake_out, GanSide::Discriminator);
    auto gan_g = adversarial_loss(real_out, fake_out, GanSide::Generator);
    auto fm = feature_matching_loss(real_out, fake_out);
    auto perc = perceptual_loss(hq_leaf, fake, extractor);

    ObjectiveResult res;
    res.components["gan_g"] = gan_g->value[0];
    res.components["gan_d"] = gan_d->value[0];
    res.components["fm"] = fm->value[0];
    res.components["perc"] = perc->value[0];
    res.generator_loss = res.components["gan_g"] + weights.lambda_fm * res.components["fm"] +
                         weights.lambda_perc * res.components["perc"];
    res.discriminator_loss = res.components["gan_d"];
    return res;
}

}  // namespace ispl
