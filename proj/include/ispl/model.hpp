#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ispl/autodiff.hpp"
#include "ispl/image.hpp"

namespace ispl {

enum class FusionVariant { Y0, Unet, Concat, Matrix };

FusionVariant fusion_variant_from_string(const std::string& s);
std::string fusion_variant_to_string(FusionVariant v);

struct ModelConfig {
    int n_layers = 5;
    int shared_k = 0;
    int base_channels = 64;
    int max_channels = 1024;
    int correlation_dim = 16;
    FusionVariant fusion_variant = FusionVariant::Unet;
    int image_size = 512;
    int in_channels = 3;
    int out_channels = 3;
    int aligned_channels = 128;  // matrix-fusion projection width
    int d_scales = 2;            // discriminator input pyramid copies
    int d_layers = 4;            // strided conv layers per copy

    void validate() const;

    // Channel width at pyramid level i (innermost embedding is widest).
    int width(int level) const;
    // Spatial side of pyramid level i: image_size / 2^(n_layers - i).
    int level_size(int level) const;
    // Channel count of the fused guidance map at level i.
    int guidance_channels(int level) const;

    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
    bool operator==(const ModelConfig&) const = default;
};

// Encoder output: embeddings ordered coarsest first, y_0 innermost.
struct SubspacePyramid {
    std::vector<Tensor> levels;

    int64_t size() const { return static_cast<int64_t>(levels.size()); }
    void validate_against(const ModelConfig& cfg) const;
};

// Describes every fusion function F_i: a variant tag plus the linear weights.
struct FusionPlan {
    FusionVariant variant = FusionVariant::Unet;
    Tensor weight_matrix;  // n x n; meaningful for the matrix variant
    int aligned_channels = 128;

    // Row i of the bipartite fusion graph: which pyramid levels feed F_i.
    // unet -> identity rows, y0 -> column-0 selector, matrix -> weight_matrix.
    Tensor effective_weights(int n) const;
};

// Named trainable tensors in registration order (ordering fixes both the
// checkpoint layout and the optimizer update order).
class ParamStore {
public:
    ad::Var create(const std::string& name, Tensor init);
    ad::Var get(const std::string& name) const;
    bool has(const std::string& name) const;
    const std::vector<std::pair<std::string, ad::Var>>& items() const { return items_; }
    void zero_grads();
    int64_t total_elements() const;

private:
    std::vector<std::pair<std::string, ad::Var>> items_;
    std::map<std::string, size_t> index_;
};

struct DiscOutput {
    ad::Var score;                 // patch score map
    std::vector<ad::Var> features; // one per discriminator layer
};

// Per-level guidance override used by fixed-k restoration, subspace isolation
// and the accumulative visualization. Normal = learned fusion pathway.
struct GuidanceOverride {
    enum class Mode { Normal, Zero, Constant };
    std::vector<Mode> modes;
    double constant = 0.5;

    static GuidanceOverride none(int n) { return {std::vector<Mode>(n, Mode::Normal), 0.5}; }
};

// gamma * (x - mean)/std + beta with per-(sample, channel) spatial statistics
// and the deviation floored at eps. Exposed for the normalization contracts.
ad::Var spade_modulate(const ad::Var& x, const ad::Var& gamma, const ad::Var& beta, double eps);

// Checkpoint container: config echo + free-form metadata + named arrays.
struct Checkpoint {
    std::string config_json;
    std::string meta_json;
    std::vector<std::pair<std::string, Tensor>> arrays;

    void save(const std::string& path) const;  // atomic (tmp + rename)
    static Checkpoint load(const std::string& path);
};

// The ISP(k,n) model: pixel-adaptive embedding encoder, dynamic prior fusion,
// SPADE-modulated restoration generator and a multi-scale patch discriminator.
class IsplModel {
public:
    IsplModel(ModelConfig cfg, uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    ParamStore& generator_params() { return gen_; }
    ParamStore& discriminator_params() { return disc_; }
    const ParamStore& generator_params() const { return gen_; }
    const ParamStore& discriminator_params() const { return disc_; }
    FusionPlan fusion_plan() const;

    // Graph builders (gradients flow through all of these).
    std::vector<ad::Var> encode_graph(const ad::Var& input) const;
    ad::Var fuse_graph(const std::vector<ad::Var>& pyramid, int level) const;
    ad::Var restore_graph(const ad::Var& input,
                          const GuidanceOverride* override_modes = nullptr) const;
    std::vector<DiscOutput> discriminate_graph(const ad::Var& img) const;

    // Evaluation-mode wrappers over the graph builders.
    SubspacePyramid encode(const ImageBatch& img) const;
    Tensor fuse(const SubspacePyramid& pyramid, int level) const;
    ImageBatch restore_dynamic(const ImageBatch& img) const;
    // Guidance truncated below level k (encoder always runs in full); k = n
    // leaves the generator guided by nothing but the x_0 pathway.
    ImageBatch restore_fixed_k(const ImageBatch& img, int k) const;
    ImageBatch isolate_subspace(const ImageBatch& img, int level, double constant = 0.5) const;
    ImageBatch isolate_all_subspaces(const ImageBatch& img, double constant = 0.5) const;
    ImageBatch restore_accumulative(const ImageBatch& img, int enabled_upto,
                                    double constant = 0.5) const;
    std::vector<std::pair<Tensor, std::vector<Tensor>>> discriminate(const ImageBatch& img) const;

    // Checkpoint round trip. `meta` is embedded verbatim; extra arrays (e.g.
    // optimizer state) ride along and are returned untouched on load.
    Checkpoint to_checkpoint(const std::string& meta_json,
                             const std::vector<std::pair<std::string, Tensor>>& extra = {}) const;
    void save_checkpoint(const std::string& path, const std::string& meta_json,
                         const std::vector<std::pair<std::string, Tensor>>& extra = {}) const;
    // Fails loudly when the stored config is incompatible.
    static IsplModel from_checkpoint(const Checkpoint& ckpt);
    static IsplModel load_checkpoint_file(const std::string& path);

    ImageBatch to_image(const Tensor& t) const;

private:
    void init_params(uint64_t seed);
    ad::Var input_leaf(const ImageBatch& img) const;
    ad::Var guidance_for(const std::vector<ad::Var>& pyramid, int level,
                         const GuidanceOverride* ov) const;

    ModelConfig cfg_;
    ParamStore gen_;
    ParamStore disc_;
};

}  // namespace ispl
