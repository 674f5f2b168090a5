#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ispl/model.hpp"

namespace ispl {

struct LossWeights {
    double lambda_fm = 10.0;
    double lambda_perc = 10.0;

    void validate() const {
        check(lambda_fm >= 0.0 && lambda_perc >= 0.0, "loss weights must be >= 0");
    }
};

// Pluggable feature backbone. `layers` feeds the perceptual / LPIPS-style
// losses (gradients flow through it); `embed` yields one vector per image for
// FED / FID. Implementations must be deterministic per instance.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual std::string id() const = 0;
    virtual int embedding_dim() const = 0;
    virtual std::vector<ad::Var> layers(const ad::Var& img) const = 0;

    // Default embedding: global average pool of the deepest layer.
    virtual Tensor embed(const ImageBatch& img) const;
};

// Fixed seeded convolution stack; keeps the whole suite hermetic while a
// pretrained backbone can be injected for production evaluation.
class RandomProjectionExtractor : public FeatureExtractor {
public:
    explicit RandomProjectionExtractor(uint64_t seed, int in_channels = 3);
    std::string id() const override;
    int embedding_dim() const override { return 32; }
    std::vector<ad::Var> layers(const ad::Var& img) const override;

private:
    uint64_t seed_;
    std::vector<ad::Var> weights_;
    std::vector<ad::Var> biases_;
};

enum class GanSide { Generator, Discriminator };

// Least-squares GAN objective, averaged over scales and spatial positions.
// Discriminator side: E[(D(x)-1)^2] + E[D(x~)^2]; generator: E[(D(x~)-1)^2].
ad::Var adversarial_loss(const std::vector<DiscOutput>& real_scores,
                         const std::vector<DiscOutput>& fake_scores, GanSide side);

// sum_i 1/(H_i W_i C_i) ||Phi_i(x) - Phi_i(x~)||^2 over discriminator layers,
// averaged over scales; ground-truth features are treated as constants.
ad::Var feature_matching_loss(const std::vector<DiscOutput>& feats_gt,
                              const std::vector<DiscOutput>& feats_gen);

// Same functional form with the injected extractor's layers.
ad::Var perceptual_loss(const ad::Var& x, const ad::Var& x_tilde,
                        const FeatureExtractor& extractor);

struct ObjectiveResult {
    double generator_loss = 0.0;
    double discriminator_loss = 0.0;
    std::map<std::string, double> components;  // gan_g, gan_d, fm, perc
};

// Full Eq.-style objective L = L_GAN + lambda_FM L_FM + lambda_perc L_perc;
// deliberately contains no pixel-space reconstruction term.
ObjectiveResult full_objective(const ImageBatch& lq, const ImageBatch& hq,
                               const IsplModel& model, const LossWeights& weights,
                               const FeatureExtractor& extractor);

}  // namespace ispl
