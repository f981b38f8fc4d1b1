#pragma once

#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "longtrack/featmap.hpp"

#include "json.hpp"

namespace longtrack {

// Template/search fusion method. CC slides the cropped template over the
// search map, DW does it per channel, HP broadcasts the pooled template
// vector, DC convolves with kernels generated from the template.
enum class CorrelationMethod { CC, DW, HP, DC };

inline std::string to_string(CorrelationMethod m) {
    switch (m) {
        case CorrelationMethod::CC: return "cc";
        case CorrelationMethod::DW: return "dw";
        case CorrelationMethod::HP: return "hp";
        case CorrelationMethod::DC: return "dc";
    }
    return "dc";
}

inline CorrelationMethod correlation_from_string(const std::string& s) {
    if (s == "cc") return CorrelationMethod::CC;
    if (s == "dw") return CorrelationMethod::DW;
    if (s == "hp") return CorrelationMethod::HP;
    if (s == "dc") return CorrelationMethod::DC;
    throw ConfigError("unknown correlation method '" + s + "'");
}

// Which head layers receive generated convolutions. The reference head has
// six layers per branch: four stacked convs, an encoder, and the predictor.
struct IntegrationConfig {
    std::vector<int> cls_layers;  // ascending indices in [1..p]
    std::vector<int> reg_layers;  // ascending indices in [1..q]
    int p = 6;
    int q = 6;

    void validate() const {
        if (p < 1 || q < 1) throw ConfigError("integration: p and q must be >= 1");
        int prev = 0;
        for (int u : cls_layers) {
            if (u < 1 || u > p)
                throw ConfigError("integration: cls layer index out of [1..p]");
            if (u <= prev)
                throw ConfigError("integration: cls layers must be ascending");
            prev = u;
        }
        prev = 0;
        for (int v : reg_layers) {
            if (v < 1 || v > q)
                throw ConfigError("integration: reg layer index out of [1..q]");
            if (v <= prev)
                throw ConfigError("integration: reg layers must be ascending");
            prev = v;
        }
    }
};

struct LayerChannels {
    int in = 0;
    int out = 0;
};

// In/out channel counts for every head layer, both branches.
struct ChannelPlan {
    std::vector<LayerChannels> cls;  // size p
    std::vector<LayerChannels> reg;  // size q

    const LayerChannels& cls_layer(int u) const {
        if (u < 1 || u > static_cast<int>(cls.size()))
            throw ConfigError("channel plan: no cls entry for layer " +
                              std::to_string(u));
        return cls[u - 1];
    }
    const LayerChannels& reg_layer(int v) const {
        if (v < 1 || v > static_cast<int>(reg.size()))
            throw ConfigError("channel plan: no reg entry for layer " +
                              std::to_string(v));
        return reg[v - 1];
    }
};

enum class HeadBranch { Cls, Reg };

// One generated 1x1 convolution: weights [out][in] plus bias [out].
struct DynLayerKernel {
    HeadBranch branch = HeadBranch::Cls;
    int layer = 1;
    KernelSpec spec;
    std::vector<double> weights;
    std::vector<double> bias;
};

struct DynKernelSet {
    IntegrationConfig config;
    ChannelPlan plan;
    std::vector<DynLayerKernel> layers;  // cls ascending, then reg ascending
    std::size_t total_params = 0;

    bool empty() const { return layers.empty(); }
};

// Total parameter count of the generated convolutions:
// sum over integrated layers of (C_in * K_w * K_h + 1) * C_out, with
// K_w = K_h = 1 for engine-generated kernels.
inline std::size_t param_count(const IntegrationConfig& config,
                               const ChannelPlan& plan) {
    config.validate();
    std::size_t total = 0;
    for (int u : config.cls_layers) {
        const LayerChannels& lc = plan.cls_layer(u);
        total += KernelSpec{lc.in, lc.out, 1, 1}.param_count();
    }
    for (int v : config.reg_layers) {
        const LayerChannels& lc = plan.reg_layer(v);
        total += KernelSpec{lc.in, lc.out, 1, 1}.param_count();
    }
    return total;
}

// Slices a flat parameter vector into per-layer kernels. Order is fixed: cls
// layers ascending, then reg layers ascending; within a layer all weights
// ([out][in]) first, then the biases.
inline DynKernelSet slice_params(const IntegrationConfig& config,
                                 const ChannelPlan& plan,
                                 std::span<const double> params) {
    const std::size_t expected = param_count(config, plan);
    if (params.size() != expected)
        throw ShapeError("slice_params: vector length " +
                         std::to_string(params.size()) + " != required " +
                         std::to_string(expected));
    DynKernelSet set;
    set.config = config;
    set.plan = plan;
    set.total_params = expected;
    std::size_t pos = 0;
    auto take = [&](HeadBranch branch, int layer, const LayerChannels& lc) {
        DynLayerKernel k;
        k.branch = branch;
        k.layer = layer;
        k.spec = KernelSpec{lc.in, lc.out, 1, 1};
        std::size_t nw = k.spec.weight_count();
        k.weights.assign(params.begin() + pos, params.begin() + pos + nw);
        pos += nw;
        k.bias.assign(params.begin() + pos, params.begin() + pos + lc.out);
        pos += lc.out;
        set.layers.push_back(std::move(k));
    };
    for (int u : config.cls_layers) take(HeadBranch::Cls, u, plan.cls_layer(u));
    for (int v : config.reg_layers) take(HeadBranch::Reg, v, plan.reg_layer(v));
    return set;
}

inline std::vector<double> flatten_params(const DynKernelSet& set) {
    std::vector<double> out;
    out.reserve(set.total_params);
    for (const DynLayerKernel& k : set.layers) {
        out.insert(out.end(), k.weights.begin(), k.weights.end());
        out.insert(out.end(), k.bias.begin(), k.bias.end());
    }
    return out;
}

// The controller encoder: a 1x1 conv taking the cropped template feature to
// C^g channels. Weights may be loaded from file or seeded randomly; there is
// no training loop in this engine.
struct ControllerWeights {
    int in_channels = 0;
    int out_channels = 0;           // C^g
    std::vector<double> weights;    // [out][in]
    std::vector<double> bias;       // [out]

    static ControllerWeights seeded(int in_channels, int out_channels,
                                    std::uint64_t seed) {
        ControllerWeights w;
        w.in_channels = in_channels;
        w.out_channels = out_channels;
        w.weights.resize(static_cast<std::size_t>(in_channels) * out_channels);
        w.bias.resize(out_channels);
        Rng rng = Rng::derive(seed, 0x4352544cULL);
        double scale = 1.0 / std::sqrt(static_cast<double>(in_channels));
        for (double& v : w.weights) v = rng.normal(0.0, scale);
        for (double& v : w.bias) v = rng.normal(0.0, 0.01);
        return w;
    }
};

// Controller heads: ROI-align a 7x7 crop of the template at the target box,
// adjust channels to C^g with the 1x1 encoder, then global-average-pool into
// the flat parameter vector and slice it per layer.
inline DynKernelSet generate_kernels(const FeatureMap& template_map,
                                     const Box& target_box,
                                     const IntegrationConfig& config,
                                     const ChannelPlan& plan,
                                     const ControllerWeights& controller,
                                     int crop_size = 7) {
    const std::size_t cg = param_count(config, plan);
    if (cg == 0) {
        DynKernelSet set;
        set.config = config;
        set.plan = plan;
        set.total_params = 0;
        return set;
    }
    if (controller.in_channels != template_map.channels)
        throw ShapeError("generate_kernels: controller expects " +
                         std::to_string(controller.in_channels) +
                         " input channels");
    if (static_cast<std::size_t>(controller.out_channels) != cg)
        throw ShapeError("generate_kernels: controller emits " +
                         std::to_string(controller.out_channels) +
                         " channels, config needs " + std::to_string(cg));

    FeatureMap crop = roi_align(template_map, target_box, crop_size);
    KernelSpec enc{controller.in_channels, controller.out_channels, 1, 1};
    FeatureMap encoded = conv(crop, controller.weights, controller.bias, enc);
    std::vector<double> params = global_avg_pool(encoded);
    return slice_params(config, plan, params);
}

inline FeatureMap apply_layer(const FeatureMap& map, const DynLayerKernel& k) {
    return conv(map, k.weights, k.bias, k.spec);
}

// Everything detect() needs from the template: the aligned crop, its pooled
// vector, and (for DC) the generated kernels.
struct TemplateContext {
    FeatureMap crop;
    std::vector<double> pooled;
    DynKernelSet kernels;
};

inline FeatureMap cross_correlation(const FeatureMap& search,
                                    const FeatureMap& crop) {
    if (search.channels != crop.channels)
        throw ShapeError("cross_correlation: channel mismatch");
    // The crop's CHW data is exactly the [1][in][ky][kx] weight block.
    KernelSpec spec{crop.channels, 1, crop.width, crop.height};
    std::vector<double> bias{0.0};
    FeatureMap out = conv(search, crop.data, bias, spec);
    double inv = 1.0 / (static_cast<double>(crop.width) * crop.height);
    for (double& v : out.data) v *= inv;
    return out;
}

inline FeatureMap depthwise_correlation(const FeatureMap& search,
                                        const FeatureMap& crop) {
    if (search.channels != crop.channels)
        throw ShapeError("depthwise_correlation: channel mismatch");
    const int kw = crop.width, kh = crop.height;
    if (kw % 2 == 0 || kh % 2 == 0)
        throw ShapeError("depthwise_correlation: even kernel sizes unsupported");
    const int px = kw / 2, py = kh / 2;
    const double inv = 1.0 / (static_cast<double>(kw) * kh);
    FeatureMap out(search.channels, search.height, search.width, search.stride);
    for (int c = 0; c < search.channels; ++c) {
        for (int y = 0; y < search.height; ++y) {
            for (int x = 0; x < search.width; ++x) {
                double acc = 0.0;
                for (int ky = 0; ky < kh; ++ky) {
                    int sy = y + ky - py;
                    if (sy < 0 || sy >= search.height) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        int sx = x + kx - px;
                        if (sx < 0 || sx >= search.width) continue;
                        acc += crop.at(c, ky, kx) * search.at(c, sy, sx);
                    }
                }
                out.at(c, y, x) = acc * inv;
            }
        }
    }
    return out;
}

inline FeatureMap hadamard_product(const FeatureMap& search,
                                   std::span<const double> pooled) {
    if (pooled.size() != static_cast<std::size_t>(search.channels))
        throw ShapeError("hadamard_product: pooled vector length mismatch");
    FeatureMap out = search;
    for (int c = 0; c < search.channels; ++c)
        for (int y = 0; y < search.height; ++y)
            for (int x = 0; x < search.width; ++x) out.at(c, y, x) *= pooled[c];
    return out;
}

// Fuse template information into the search map. For DC the generated cls
// chain is applied in order; the other methods use the crop or pooled vector.
inline FeatureMap apply_correlation(const FeatureMap& search,
                                    CorrelationMethod method,
                                    const TemplateContext& ctx) {
    switch (method) {
        case CorrelationMethod::CC:
            return cross_correlation(search, ctx.crop);
        case CorrelationMethod::DW:
            return depthwise_correlation(search, ctx.crop);
        case CorrelationMethod::HP:
            return hadamard_product(search, ctx.pooled);
        case CorrelationMethod::DC: {
            if (ctx.kernels.empty())
                throw ShapeError("apply_correlation: DC requires generated kernels");
            FeatureMap cur = search;
            for (const DynLayerKernel& k : ctx.kernels.layers) {
                if (k.branch != HeadBranch::Cls) continue;
                cur = apply_layer(cur, k);
            }
            return cur;
        }
    }
    throw ConfigError("apply_correlation: bad method");
}

// --- serialization -------------------------------------------------------

inline nlohmann::json to_json(const DynKernelSet& set) {
    nlohmann::json j;
    j["integration"] = {{"cls_layers", set.config.cls_layers},
                        {"reg_layers", set.config.reg_layers},
                        {"p", set.config.p},
                        {"q", set.config.q}};
    auto plan_json = [](const std::vector<LayerChannels>& v) {
        nlohmann::json arr = nlohmann::json::array();
        for (const LayerChannels& lc : v) arr.push_back({lc.in, lc.out});
        return arr;
    };
    j["channel_plan"] = {{"cls", plan_json(set.plan.cls)},
                         {"reg", plan_json(set.plan.reg)}};
    j["params"] = flatten_params(set);
    return j;
}

inline DynKernelSet kernel_set_from_json(const nlohmann::json& j) {
    IntegrationConfig config;
    config.cls_layers = j.at("integration").at("cls_layers").get<std::vector<int>>();
    config.reg_layers = j.at("integration").at("reg_layers").get<std::vector<int>>();
    config.p = j.at("integration").at("p").get<int>();
    config.q = j.at("integration").at("q").get<int>();
    ChannelPlan plan;
    for (const auto& e : j.at("channel_plan").at("cls"))
        plan.cls.push_back(LayerChannels{e.at(0).get<int>(), e.at(1).get<int>()});
    for (const auto& e : j.at("channel_plan").at("reg"))
        plan.reg.push_back(LayerChannels{e.at(0).get<int>(), e.at(1).get<int>()});
    std::vector<double> params = j.at("params").get<std::vector<double>>();
    return slice_params(config, plan, params);
}

inline void save_kernel_set(const DynKernelSet& set, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << to_json(set).dump(2) << "\n";
}

inline DynKernelSet load_kernel_set(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    nlohmann::json j;
    in >> j;
    return kernel_set_from_json(j);
}

}  // namespace longtrack
