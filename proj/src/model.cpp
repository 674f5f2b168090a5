#include "ispl/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "ispl/rng.hpp"
#include "json.hpp"

namespace ispl {

FusionVariant fusion_variant_from_string(const std::string& s) {
    if (s == "y0") return FusionVariant::Y0;
    if (s == "unet") return FusionVariant::Unet;
    if (s == "concat") return FusionVariant::Concat;
    if (s == "matrix") return FusionVariant::Matrix;
    throw ValidationError("unknown fusion variant: " + s);
}

std::string fusion_variant_to_string(FusionVariant v) {
    switch (v) {
        case FusionVariant::Y0: return "y0";
        case FusionVariant::Unet: return "unet";
        case FusionVariant::Concat: return "concat";
        case FusionVariant::Matrix: return "matrix";
    }
    throw ValidationError("invalid fusion variant enum");
}

void ModelConfig::validate() const {
    check(n_layers >= 1, "model: n_layers must be >= 1");
    check(shared_k >= 0 && shared_k <= n_layers, "model: shared_k must lie in [0, n_layers]");
    check(base_channels >= 1 && max_channels >= base_channels,
          "model: channel bounds invalid");
    check(correlation_dim >= 1, "model: correlation_dim must be >= 1");
    check(image_size >= 1 && (image_size % (1 << n_layers)) == 0,
          "model: image_size must be divisible by 2^n_layers");
    check((image_size >> n_layers) >= 4,
          "model: innermost embedding must be at least 4x4 (image_size / 2^n_layers >= 4)");
    check(in_channels >= 1 && out_channels >= 1, "model: channel counts must be positive");
    check(aligned_channels >= 1, "model: aligned_channels must be >= 1");
    check(d_scales >= 1 && d_layers >= 1, "model: discriminator dimensions must be positive");
    check(image_size >= (1 << (d_scales - 1 + d_layers + 1)),
          "model: image too small for the discriminator pyramid");
}

int ModelConfig::width(int level) const {
    check(level >= 0 && level < n_layers, "model: level out of range");
    const long long w = static_cast<long long>(base_channels) << (n_layers - 1 - level);
    return static_cast<int>(std::min<long long>(w, max_channels));
}

int ModelConfig::level_size(int level) const {
    check(level >= 0 && level <= n_layers, "model: level out of range");
    return image_size >> (n_layers - level);
}

int ModelConfig::guidance_channels(int level) const {
    switch (fusion_variant) {
        case FusionVariant::Unet: return width(level);
        case FusionVariant::Y0: return width(0);
        case FusionVariant::Concat: {
            int total = 0;
            for (int j = 0; j < n_layers; ++j) total += width(j);
            return total;
        }
        case FusionVariant::Matrix: return aligned_channels;
    }
    throw ValidationError("invalid fusion variant enum");
}

std::string ModelConfig::to_json() const {
    nlohmann::json j;
    j["n_layers"] = n_layers;
    j["shared_k"] = shared_k;
    j["base_channels"] = base_channels;
    j["max_channels"] = max_channels;
    j["correlation_dim"] = correlation_dim;
    j["fusion_variant"] = fusion_variant_to_string(fusion_variant);
    j["image_size"] = image_size;
    j["in_channels"] = in_channels;
    j["out_channels"] = out_channels;
    j["aligned_channels"] = aligned_channels;
    j["d_scales"] = d_scales;
    j["d_layers"] = d_layers;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw ValidationError(std::string("model config parse error: ") + e.what());
    }
    ModelConfig c;
    static const char* known[] = {"n_layers",       "shared_k",     "base_channels",
                                  "max_channels",   "correlation_dim", "fusion_variant",
                                  "image_size",     "in_channels",  "out_channels",
                                  "aligned_channels", "d_scales",   "d_layers"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || (it.key() == k);
        if (!ok) throw ValidationError("model config: unknown key '" + it.key() + "'");
    }
    if (j.contains("n_layers")) c.n_layers = j["n_layers"].get<int>();
    if (j.contains("shared_k")) c.shared_k = j["shared_k"].get<int>();
    if (j.contains("base_channels")) c.base_channels = j["base_channels"].get<int>();
    if (j.contains("max_channels")) c.max_channels = j["max_channels"].get<int>();
    if (j.contains("correlation_dim")) c.correlation_dim = j["correlation_dim"].get<int>();
    if (j.contains("fusion_variant"))
        c.fusion_variant = fusion_variant_from_string(j["fusion_variant"].get<std::string>());
    if (j.contains("image_size")) c.image_size = j["image_size"].get<int>();
    if (j.contains("in_channels")) c.in_channels = j["in_channels"].get<int>();
    if (j.contains("out_channels")) c.out_channels = j["out_channels"].get<int>();
    if (j.contains("aligned_channels")) c.aligned_channels = j["aligned_channels"].get<int>();
    if (j.contains("d_scales")) c.d_scales = j["d_scales"].get<int>();
    if (j.contains("d_layers")) c.d_layers = j["d_layers"].get<int>();
    c.validate();
    return c;
}

void SubspacePyramid::validate_against(const ModelConfig& cfg) const {
    check(size() == cfg.n_layers, "pyramid: level count must equal n_layers");
    for (int i = 0; i < cfg.n_layers; ++i) {
        const auto& t = levels[i];
        check(t.rank() == 4, "pyramid: levels must be rank-4");
        check(t.dim(2) == cfg.level_size(i) && t.dim(3) == cfg.level_size(i),
              "pyramid: level " + std::to_string(i) + " has wrong spatial size");
        check(t.dim(1) == cfg.width(i), "pyramid: level channel width mismatch");
        for (int64_t k = 0; k < t.numel(); ++k)
            check(std::isfinite(t[k]), "pyramid: non-finite embedding value");
    }
}

Tensor FusionPlan::effective_weights(int n) const {
    Tensor w({n, n});
    switch (variant) {
        case FusionVariant::Unet:
            for (int i = 0; i < n; ++i) w[i * n + i] = 1.0;
            break;
        case FusionVariant::Y0:
            for (int i = 0; i < n; ++i) w[i * n + 0] = 1.0;
            break;
        case FusionVariant::Concat:
            for (int64_t i = 0; i < w.numel(); ++i) w[i] = 1.0;
            break;
        case FusionVariant::Matrix:
            check(weight_matrix.rank() == 2 && weight_matrix.dim(0) == n &&
                      weight_matrix.dim(1) == n,
                  "fusion plan: weight matrix must be n x n");
            w = weight_matrix;
            break;
    }
    for (int64_t i = 0; i < w.numel(); ++i)
        check(std::isfinite(w[i]), "fusion plan: non-finite weight");
    return w;
}

ad::Var ParamStore::create(const std::string& name, Tensor init) {
    check(!index_.count(name), "param store: duplicate parameter '" + name + "'");
    auto v = ad::leaf(std::move(init), true);
    index_[name] = items_.size();
    items_.emplace_back(name, v);
    return v;
}

ad::Var ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    check(it != index_.end(), "param store: unknown parameter '" + name + "'");
    return items_[it->second].second;
}

bool ParamStore::has(const std::string& name) const { return index_.count(name) > 0; }

void ParamStore::zero_grads() {
    for (auto& [name, v] : items_) v->zero_grad();
}

int64_t ParamStore::total_elements() const {
    int64_t n = 0;
    for (const auto& [name, v] : items_) n += v->value.numel();
    return n;
}

ad::Var spade_modulate(const ad::Var& x, const ad::Var& gamma, const ad::Var& beta, double eps) {
    check(x->value.same_shape(gamma->value) && x->value.same_shape(beta->value),
          "spade_modulate: gamma/beta must match the input shape");
    return ad::add(ad::mul(gamma, ad::instance_norm(x, eps)), beta);
}

// ---------------------------------------------------------------------------
// Checkpoint serialization
// ---------------------------------------------------------------------------

namespace {

constexpr char kCkptMagic[8] = {'I', 'S', 'P', 'L', 'C', 'K', 'P', '1'};

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError("checkpoint: truncated file");
    return v;
}

void write_string(std::ofstream& out, const std::string& s) {
    write_pod<uint64_t>(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& in) {
    const auto len = read_pod<uint64_t>(in);
    std::string s(len, '\0');
    in.read(s.data(), static_cast<std::streamsize>(len));
    if (!in) throw IoError("checkpoint: truncated string");
    return s;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp + " for writing");
        out.write(kCkptMagic, sizeof(kCkptMagic));
        write_pod<uint32_t>(out, 1);
        write_string(out, config_json);
        write_string(out, meta_json);
        write_pod<uint64_t>(out, arrays.size());
        for (const auto& [name, t] : arrays) {
            write_string(out, name);
            write_pod<uint32_t>(out, static_cast<uint32_t>(t.rank()));
            for (size_t d = 0; d < t.rank(); ++d) write_pod<int64_t>(out, t.dim(d));
            out.write(reinterpret_cast<const char*>(t.data()),
                      static_cast<std::streamsize>(t.numel() * sizeof(double)));
        }
        if (!out) throw IoError("checkpoint write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw IoError("cannot rename " + tmp + " to " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCkptMagic, 8) != 0)
        throw IoError("not an ISPL checkpoint: " + path);
    const auto version = read_pod<uint32_t>(in);
    if (version != 1) throw IoError("unsupported checkpoint version in " + path);
    Checkpoint ckpt;
    ckpt.config_json = read_string(in);
    ckpt.meta_json = read_string(in);
    const auto count = read_pod<uint64_t>(in);
    ckpt.arrays.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        std::string name = read_string(in);
        const auto rank = read_pod<uint32_t>(in);
        std::vector<int64_t> dims(rank);
        for (uint32_t d = 0; d < rank; ++d) dims[d] = read_pod<int64_t>(in);
        Tensor t(dims);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
        if (!in) throw IoError("checkpoint: truncated array data in " + path);
        ckpt.arrays.emplace_back(std::move(name), std::move(t));
    }
    return ckpt;
}

// ---------------------------------------------------------------------------
// IsplModel
// ---------------------------------------------------------------------------

IsplModel::IsplModel(ModelConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    init_params(seed);
}

void IsplModel::init_params(uint64_t seed) {
    auto rng = make_rng(derive_seed(seed, 0x15B1ULL));
    auto conv_init = [&](std::vector<int64_t> shape) {
        Tensor t(std::move(shape));
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = normal(rng, 0.0, 0.02);
        return t;
    };
    // The normalization-free encoder needs fan-in scaling: with tiny weights
    // the correlation tanh(<g,g>) vanishes and activations underflow with
    // depth, so these stages cannot use the flat 0.02 initialization.
    auto fanin_init = [&](std::vector<int64_t> shape, double gain) {
        Tensor t(shape);
        const double fan_in = static_cast<double>(shape[1] * shape[2] * shape[3]);
        const double sd = gain / std::sqrt(fan_in);
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = normal(rng, 0.0, sd);
        return t;
    };
    const int n = cfg_.n_layers;
    const int D = cfg_.correlation_dim;

    // Encoder stages run fine-to-coarse: stage s produces pyramid level n-1-s.
    for (int s = 0; s < n; ++s) {
        const int level = n - 1 - s;
        const int cin = (s == 0) ? cfg_.in_channels : cfg_.width(n - s);
        const int cout = cfg_.width(level);
        const std::string p = "enc" + std::to_string(s) + ".";
        gen_.create(p + "g1_w", fanin_init({D, cin, 1, 1}, 1.0));
        gen_.create(p + "g1_b", Tensor({D}));
        gen_.create(p + "g2_w", fanin_init({D, D, 1, 1}, 1.0));
        gen_.create(p + "g2_b", Tensor({D}));
        gen_.create(p + "pac_w", fanin_init({cout, cin, 3, 3}, 2.0));
        gen_.create(p + "pac_b", Tensor({cout}));
    }

    if (cfg_.fusion_variant == FusionVariant::Matrix) {
        Tensor w({n, n});
        for (int i = 0; i < n; ++i) w[i * n + i] = 1.0;  // start from the unet rows
        gen_.create("fusion.weight", std::move(w));
        for (int j = 0; j < n; ++j) {
            const std::string p = "fusion.proj" + std::to_string(j) + "_";
            gen_.create(p + "w", conv_init({cfg_.aligned_channels, cfg_.width(j), 1, 1}));
            gen_.create(p + "b", Tensor({cfg_.aligned_channels}));
        }
    }

    for (int i = 0; i < n; ++i) {
        const int cx = cfg_.width(i);
        const int cf = cfg_.guidance_channels(i);
        const int cnext = (i + 1 < n) ? cfg_.width(i + 1) : cfg_.width(n - 1);
        const std::string p = "gen" + std::to_string(i) + ".";
        gen_.create(p + "head_w", conv_init({cx, cf, 3, 3}));
        gen_.create(p + "head_b", Tensor({cx}));
        gen_.create(p + "gamma_w", conv_init({cx, cx, 3, 3}));
        gen_.create(p + "gamma_b", Tensor::full({cx}, 1.0));  // identity-leaning start
        gen_.create(p + "beta_w", conv_init({cx, cx, 3, 3}));
        gen_.create(p + "beta_b", Tensor({cx}));
        gen_.create(p + "conv_w", conv_init({cnext, cx, 3, 3}));
        gen_.create(p + "conv_b", Tensor({cnext}));
    }
    gen_.create("out.head_w", conv_init({cfg_.out_channels, cfg_.width(n - 1), 3, 3}));
    gen_.create("out.head_b", Tensor({cfg_.out_channels}));

    // The discriminator stack is also normalization-free, so its features
    // need fan-in scaling as well: with flat 0.02 weights the deep features
    // (and with them the feature-matching loss) vanish.
    for (int s = 0; s < cfg_.d_scales; ++s) {
        int cin = cfg_.in_channels;
        const std::string sp = "d" + std::to_string(s) + ".";
        for (int l = 0; l < cfg_.d_layers; ++l) {
            const int cout = std::min(cfg_.base_channels << l, 512);
            disc_.create(sp + "l" + std::to_string(l) + "_w",
                         fanin_init({cout, cin, 4, 4}, 1.4));
            disc_.create(sp + "l" + std::to_string(l) + "_b", Tensor({cout}));
            cin = cout;
        }
        // Score head starts small so the adversarial gradient ramps up only
        // as the discriminator learns; the feature stack stays well-scaled
        // for the matching loss either way.
        disc_.create(sp + "score_w", conv_init({1, cin, 4, 4}));
        disc_.create(sp + "score_b", Tensor({1}));
    }
}

FusionPlan IsplModel::fusion_plan() const {
    FusionPlan plan;
    plan.variant = cfg_.fusion_variant;
    plan.aligned_channels = cfg_.aligned_channels;
    if (cfg_.fusion_variant == FusionVariant::Matrix)
        plan.weight_matrix = gen_.get("fusion.weight")->value;
    return plan;
}

ad::Var IsplModel::input_leaf(const ImageBatch& img) const {
    check(img.channels() == cfg_.in_channels, "model: input channel mismatch");
    check(img.height() == cfg_.image_size && img.width() == cfg_.image_size,
          "model: input must be " + std::to_string(cfg_.image_size) + "x" +
              std::to_string(cfg_.image_size) + ", got " + std::to_string(img.height()) + "x" +
              std::to_string(img.width()));
    return ad::constant(img.data);
}

std::vector<ad::Var> IsplModel::encode_graph(const ad::Var& input) const {
    const auto& s0 = input->value.shape();
    check(s0.size() == 4 && s0[1] == cfg_.in_channels, "encode: bad input shape");
    check(s0[2] == cfg_.image_size && s0[3] == cfg_.image_size,
          "encode: input spatial size must equal config.image_size");
    const int n = cfg_.n_layers;
    std::vector<ad::Var> levels(n);
    ad::Var x = input;
    for (int s = 0; s < n; ++s) {
        const std::string p = "enc" + std::to_string(s) + ".";
        // Per-pixel low-dimensional projection g(y) drives the correlation.
        auto e = ad::add_bias(ad::conv2d(x, gen_.get(p + "g1_w"), 1, 0, ad::Pad::Zero),
                              gen_.get(p + "g1_b"));
        e = ad::leaky_relu(e, 0.2);
        e = ad::add_bias(ad::conv2d(e, gen_.get(p + "g2_w"), 1, 0, ad::Pad::Zero),
                         gen_.get(p + "g2_b"));
        auto h = ad::pac_conv(x, gen_.get(p + "pac_w"), e);
        h = ad::add_bias(h, gen_.get(p + "pac_b"));
        h = ad::leaky_relu(h, 0.2);
        x = ad::bilinear_resize(h, h->value.dim(2) / 2, h->value.dim(3) / 2);
        levels[n - 1 - s] = x;
    }
    return levels;
}

ad::Var IsplModel::fuse_graph(const std::vector<ad::Var>& pyramid, int level) const {
    const int n = cfg_.n_layers;
    check(static_cast<int>(pyramid.size()) == n, "fuse: pyramid level count mismatch");
    check(level >= 0 && level < n, "fuse: level out of range");
    const int64_t target = cfg_.level_size(level);
    switch (cfg_.fusion_variant) {
        case FusionVariant::Unet:
            return pyramid[level];
        case FusionVariant::Y0:
            return ad::bilinear_resize(pyramid[0], target, target);
        case FusionVariant::Concat: {
            std::vector<ad::Var> parts;
            parts.reserve(n);
            for (int j = 0; j < n; ++j)
                parts.push_back(ad::bilinear_resize(pyramid[j], target, target));
            return ad::concat_channels(parts);
        }
        case FusionVariant::Matrix: {
            std::vector<ad::Var> aligned;
            aligned.reserve(n);
            for (int j = 0; j < n; ++j) {
                const std::string p = "fusion.proj" + std::to_string(j) + "_";
                auto a = ad::add_bias(
                    ad::conv2d(pyramid[j], gen_.get(p + "w"), 1, 0, ad::Pad::Zero),
                    gen_.get(p + "b"));
                aligned.push_back(ad::bilinear_resize(a, target, target));
            }
            return ad::weighted_sum(aligned, gen_.get("fusion.weight"), level);
        }
    }
    throw ValidationError("invalid fusion variant enum");
}

ad::Var IsplModel::guidance_for(const std::vector<ad::Var>& pyramid, int level,
                                const GuidanceOverride* ov) const {
    const auto mode = ov ? ov->modes.at(level) : GuidanceOverride::Mode::Normal;
    if (mode == GuidanceOverride::Mode::Normal) return fuse_graph(pyramid, level);
    const int64_t N = pyramid[0]->value.dim(0);
    const int64_t c = cfg_.guidance_channels(level);
    const int64_t s = cfg_.level_size(level);
    const double v = mode == GuidanceOverride::Mode::Zero ? 0.0 : ov->constant;
    return ad::constant(Tensor::full({N, c, s, s}, v));
}

ad::Var IsplModel::restore_graph(const ad::Var& input, const GuidanceOverride* ov) const {
    const int n = cfg_.n_layers;
    if (ov) check(static_cast<int>(ov->modes.size()) == n, "restore: override size mismatch");
    auto pyramid = encode_graph(input);
    ad::Var x = pyramid[0];  // x_0 is the raw innermost embedding
    for (int i = 0; i < n; ++i) {
        const std::string p = "gen" + std::to_string(i) + ".";
        auto f = guidance_for(pyramid, i, ov);
        auto h = ad::add_bias(ad::conv2d(f, gen_.get(p + "head_w"), 1, 1, ad::Pad::Reflect),
                              gen_.get(p + "head_b"));
        h = ad::leaky_relu(h, 0.2);
        auto gamma = ad::add_bias(
            ad::conv2d(h, gen_.get(p + "gamma_w"), 1, 1, ad::Pad::Reflect),
            gen_.get(p + "gamma_b"));
        auto beta = ad::add_bias(ad::conv2d(h, gen_.get(p + "beta_w"), 1, 1, ad::Pad::Reflect),
                                 gen_.get(p + "beta_b"));
        auto m = spade_modulate(x, gamma, beta, 1e-5);
        auto a = ad::leaky_relu(m, 0.2);
        const int64_t target = cfg_.level_size(i + 1);
        auto u = ad::bilinear_resize(a, target, target);
        x = ad::add_bias(ad::conv2d(u, gen_.get(p + "conv_w"), 1, 1, ad::Pad::Reflect),
                         gen_.get(p + "conv_b"));
        x = ad::leaky_relu(x, 0.2);
    }
    auto out = ad::add_bias(ad::conv2d(x, gen_.get("out.head_w"), 1, 1, ad::Pad::Reflect),
                            gen_.get("out.head_b"));
    return ad::sigmoid(out);  // maps into the canonical [0,1] range
}

std::vector<DiscOutput> IsplModel::discriminate_graph(const ad::Var& img) const {
    check(img->value.rank() == 4 && img->value.dim(1) == cfg_.in_channels,
          "discriminate: bad input shape");
    std::vector<DiscOutput> outs;
    ad::Var input = img;
    for (int s = 0; s < cfg_.d_scales; ++s) {
        if (s > 0)
            input = ad::bilinear_resize(input, input->value.dim(2) / 2, input->value.dim(3) / 2);
        const std::string sp = "d" + std::to_string(s) + ".";
        DiscOutput out;
        ad::Var x = input;
        for (int l = 0; l < cfg_.d_layers; ++l) {
            const std::string lp = sp + "l" + std::to_string(l);
            x = ad::add_bias(ad::conv2d(x, disc_.get(lp + "_w"), 2, 1, ad::Pad::Zero),
                             disc_.get(lp + "_b"));
            x = ad::leaky_relu(x, 0.2);
            out.features.push_back(x);
        }
        out.score = ad::add_bias(ad::conv2d(x, disc_.get(sp + "score_w"), 1, 1, ad::Pad::Zero),
                                 disc_.get(sp + "score_b"));
        outs.push_back(std::move(out));
    }
    return outs;
}

SubspacePyramid IsplModel::encode(const ImageBatch& img) const {
    auto levels = encode_graph(input_leaf(img));
    SubspacePyramid pyr;
    for (auto& l : levels) pyr.levels.push_back(l->value);
    pyr.validate_against(cfg_);
    return pyr;
}

Tensor IsplModel::fuse(const SubspacePyramid& pyramid, int level) const {
    std::vector<ad::Var> vars;
    vars.reserve(pyramid.levels.size());
    for (const auto& t : pyramid.levels) vars.push_back(ad::constant(t));
    return fuse_graph(vars, level)->value;
}

ImageBatch IsplModel::to_image(const Tensor& t) const { return ImageBatch(t, ValueRange{}); }

ImageBatch IsplModel::restore_dynamic(const ImageBatch& img) const {
    return to_image(restore_graph(input_leaf(img))->value);
}

ImageBatch IsplModel::restore_fixed_k(const ImageBatch& img, int k) const {
    check(k >= 0 && k <= cfg_.n_layers, "restore_fixed_k: k must lie in [0, n_layers]");
    auto ov = GuidanceOverride::none(cfg_.n_layers);
    for (int i = 0; i < k; ++i) ov.modes[i] = GuidanceOverride::Mode::Zero;
    return to_image(restore_graph(input_leaf(img), &ov)->value);
}

ImageBatch IsplModel::isolate_subspace(const ImageBatch& img, int level, double constant) const {
    check(level >= 0 && level < cfg_.n_layers, "isolate_subspace: level out of range");
    auto ov = GuidanceOverride::none(cfg_.n_layers);
    ov.constant = constant;
    for (int i = 0; i < cfg_.n_layers; ++i)
        if (i != level) ov.modes[i] = GuidanceOverride::Mode::Constant;
    return to_image(restore_graph(input_leaf(img), &ov)->value);
}

ImageBatch IsplModel::isolate_all_subspaces(const ImageBatch& img, double constant) const {
    auto ov = GuidanceOverride::none(cfg_.n_layers);
    ov.constant = constant;
    for (auto& m : ov.modes) m = GuidanceOverride::Mode::Constant;
    return to_image(restore_graph(input_leaf(img), &ov)->value);
}

ImageBatch IsplModel::restore_accumulative(const ImageBatch& img, int enabled_upto,
                                           double constant) const {
    check(enabled_upto >= 0 && enabled_upto < cfg_.n_layers,
          "restore_accumulative: level out of range");
    auto ov = GuidanceOverride::none(cfg_.n_layers);
    ov.constant = constant;
    for (int i = enabled_upto + 1; i < cfg_.n_layers; ++i)
        ov.modes[i] = GuidanceOverride::Mode::Constant;
    return to_image(restore_graph(input_leaf(img), &ov)->value);
}

std::vector<std::pair<Tensor, std::vector<Tensor>>> IsplModel::discriminate(
    const ImageBatch& img) const {
    check(img.in_range(1e-9), "discriminate: input outside its declared value range");
    auto outs = discriminate_graph(ad::constant(img.data));
    std::vector<std::pair<Tensor, std::vector<Tensor>>> res;
    for (auto& o : outs) {
        std::vector<Tensor> feats;
        for (auto& f : o.features) feats.push_back(f->value);
        res.emplace_back(o.score->value, std::move(feats));
    }
    return res;
}

Checkpoint IsplModel::to_checkpoint(const std::string& meta_json,
                                    const std::vector<std::pair<std::string, Tensor>>& extra)
    const {
    Checkpoint ckpt;
    ckpt.config_json = cfg_.to_json();
    ckpt.meta_json = meta_json.empty() ? "{}" : meta_json;
    for (const auto& [name, v] : gen_.items()) ckpt.arrays.emplace_back("gen/" + name, v->value);
    for (const auto& [name, v] : disc_.items())
        ckpt.arrays.emplace_back("disc/" + name, v->value);
    for (const auto& [name, t] : extra) ckpt.arrays.emplace_back(name, t);
    return ckpt;
}

void IsplModel::save_checkpoint(const std::string& path, const std::string& meta_json,
                                const std::vector<std::pair<std::string, Tensor>>& extra) const {
    to_checkpoint(meta_json, extra).save(path);
}

IsplModel IsplModel::from_checkpoint(const Checkpoint& ckpt) {
    IsplModel model(ModelConfig::from_json(ckpt.config_json), 0);
    size_t loaded = 0;
    for (const auto& [name, t] : ckpt.arrays) {
        ParamStore* store = nullptr;
        std::string local;
        if (name.rfind("gen/", 0) == 0) {
            store = &model.gen_;
            local = name.substr(4);
        } else if (name.rfind("disc/", 0) == 0) {
            store = &model.disc_;
            local = name.substr(5);
        } else {
            continue;  // optimizer state or other extras
        }
        check(store->has(local), "checkpoint: unexpected parameter '" + name + "'");
        auto v = store->get(local);
        check(v->value.same_shape(t), "checkpoint: shape mismatch for '" + name + "' (stored " +
                                          Tensor::shape_str(t.shape()) + ", model " +
                                          Tensor::shape_str(v->value.shape()) + ")");
        v->value = t;
        ++loaded;
    }
    const size_t expected = model.gen_.items().size() + model.disc_.items().size();
    check(loaded == expected, "checkpoint: missing parameters (" + std::to_string(loaded) +
                                  " of " + std::to_string(expected) + ")");
    return model;
}

IsplModel IsplModel::load_checkpoint_file(const std::string& path) {
    return from_checkpoint(Checkpoint::load(path));
}

}  // namespace ispl
