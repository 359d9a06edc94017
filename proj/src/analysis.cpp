#include "tei/analysis.hpp"

#include <cstdio>
#include <sstream>

namespace tei {

namespace {

int64_t reduced(int64_t c, int r) { return std::max<int64_t>(1, c / r); }

const char* kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::conv3d: return "conv3d";
        case LayerKind::temporal1d_full: return "temporal1d_full";
        case LayerKind::tim: return "tim";
        case LayerKind::mem: return "mem";
        case LayerKind::se: return "se";
        case LayerKind::bn: return "bn";
        case LayerKind::linear: return "linear";
        case LayerKind::max_pool: return "max_pool";
        case LayerKind::global_pool: return "global_pool";
        case LayerKind::add: return "add";
    }
    return "?";
}

}  // namespace

int64_t layer_params(const LayerSpec& l) {
    switch (l.kind) {
        case LayerKind::conv2d:
            return l.c_out * l.c_in * l.kd * l.kd + (l.bias ? l.c_out : 0);
        case LayerKind::conv3d:
            return l.c_out * l.c_in * l.kt * l.kd * l.kd + (l.bias ? l.c_out : 0);
        case LayerKind::temporal1d_full:
            return l.c_out * l.c_in * l.kt + (l.bias ? l.c_out : 0);
        case LayerKind::tim:
            return l.c_out * 1 * l.kt;  // no bias by construction
        case LayerKind::mem: {
            int64_t cr = reduced(l.c_in, l.r);
            return 2 * l.c_in * cr + cr * l.c_in + (2 * cr + l.c_in);
        }
        case LayerKind::se: {
            int64_t cr = reduced(l.c_in, l.r);
            return 2 * l.c_in * cr + (cr + l.c_in);
        }
        case LayerKind::bn:
            return 2 * l.c_in;
        case LayerKind::linear:
            return l.c_out * l.c_in + l.c_out;
        case LayerKind::max_pool:
        case LayerKind::global_pool:
        case LayerKind::add:
            return 0;
    }
    throw ContractError("unknown layer kind");
}

int64_t count_params(const GraphSpec& g) {
    int64_t total = 0;
    for (const auto& l : g.layers) total += layer_params(l);
    return total;
}

CostReport count_macs(const GraphSpec& g, int64_t frames, int64_t height,
                      int64_t width) {
    CostReport report;
    int64_t h = height, w = width;
    int64_t t = frames;
    for (const auto& l : g.layers) {
        int64_t macs = 0;
        switch (l.kind) {
            case LayerKind::conv2d: {
                int64_t ho = (h + 2 * l.pad - l.kd) / l.stride + 1;
                int64_t wo = (w + 2 * l.pad - l.kd) / l.stride + 1;
                macs = t * l.c_out * l.c_in * l.kd * l.kd * ho * wo;
                if (!l.branch) {
                    h = ho;
                    w = wo;
                }
                break;
            }
            case LayerKind::conv3d: {
                int64_t ho = (h + 2 * l.pad - l.kd) / l.stride + 1;
                int64_t wo = (w + 2 * l.pad - l.kd) / l.stride + 1;
                macs = t * l.c_out * l.c_in * l.kt * l.kd * l.kd * ho * wo;
                h = ho;
                w = wo;
                break;
            }
            case LayerKind::temporal1d_full:
                macs = t * l.c_out * l.c_in * l.kt * h * w;
                break;
            case LayerKind::tim:
                macs = t * l.c_in * l.kt * h * w;
                break;
            case LayerKind::mem: {
                int64_t cr = reduced(l.c_in, l.r);
                // GAP + two reductions and one expansion + channel gating
                macs = t * h * w * l.c_in + (t - 1) * 3 * l.c_in * cr +
                       (t - 1) * l.c_in * h * w;
                break;
            }
            case LayerKind::se: {
                int64_t cr = reduced(l.c_in, l.r);
                macs = t * h * w * l.c_in + t * 2 * l.c_in * cr + t * l.c_in * h * w;
                break;
            }
            case LayerKind::bn:
            case LayerKind::add:
                macs = 0;
                break;
            case LayerKind::max_pool: {
                int64_t ho = (h + 2 * l.pad - l.kd) / l.stride + 1;
                int64_t wo = (w + 2 * l.pad - l.kd) / l.stride + 1;
                h = ho;
                w = wo;
                macs = 0;
                break;
            }
            case LayerKind::global_pool:
                h = 1;
                w = 1;
                macs = 0;
                break;
            case LayerKind::linear:
                macs = t * l.c_out * l.c_in;  // per-frame logits convention
                break;
        }
        report.layers.push_back({l.name, layer_params(l), macs});
        report.params += layer_params(l);
        report.macs += macs;
    }
    return report;
}

std::string CostReport::to_csv() const {
    std::ostringstream os;
    os << "layer,params,flops\n";
    for (const auto& l : layers) os << l.name << "," << l.params << "," << l.macs << "\n";
    os << "total," << params << "," << macs << "\n";
    return os.str();
}

std::string CostReport::to_table() const {
    std::ostringstream os;
    os << "FLOPs counted as multiply-accumulates (one MAC per weight application)\n";
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-40s %14s %16s\n", "layer", "params", "FLOPs");
    os << buf;
    for (const auto& l : layers) {
        std::snprintf(buf, sizeof(buf), "%-40s %14lld %16lld\n", l.name.c_str(),
                      static_cast<long long>(l.params), static_cast<long long>(l.macs));
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "%-40s %14lld %16lld\n", "total",
                  static_cast<long long>(params), static_cast<long long>(macs));
    os << buf;
    return os.str();
}

namespace {

void push_temporal(GraphSpec& g, const std::string& prefix, Variant variant,
                   int64_t c_in, int reduction) {
    switch (variant) {
        case Variant::none:
            break;
        case Variant::tsm:
            // fixed one-hot kernels, zero learnable parameters; modeled as a
            // tim layer with kt=0 params would be wrong, so it contributes a
            // shift with no params and no MACs
            break;
        case Variant::se_tim:
            g.layers.push_back({LayerKind::se, prefix + ".se", c_in, c_in, 1, 1, 1, 0,
                                false, reduction});
            g.layers.push_back({LayerKind::tim, prefix + ".tim", c_in, c_in, 3, 1});
            break;
        case Variant::mem_only:
            g.layers.push_back({LayerKind::mem, prefix + ".mem", c_in, c_in, 1, 1, 1, 0,
                                false, reduction});
            break;
        case Variant::tim_only:
            g.layers.push_back({LayerKind::tim, prefix + ".tim", c_in, c_in, 3, 1});
            break;
        case Variant::mem_tim:
            g.layers.push_back({LayerKind::mem, prefix + ".mem", c_in, c_in, 1, 1, 1, 0,
                                false, reduction});
            g.layers.push_back({LayerKind::tim, prefix + ".tim", c_in, c_in, 3, 1});
            break;
    }
}

}  // namespace

GraphSpec resnet50_teinet_spec(int64_t frames, int64_t spatial, int num_classes,
                               const std::set<int>& insertion_stages, Variant variant,
                               int reduction) {
    (void)frames;
    (void)spatial;
    for (int s : insertion_stages)
        if (s < 0 || s > 3) throw ContractError("resnet50 spec: stage index must be 0..3");
    GraphSpec g;
    g.layers.push_back({LayerKind::conv2d, "stem.conv", 3, 64, 1, 7, 2, 3});
    g.layers.push_back({LayerKind::bn, "stem.bn", 64, 64});
    g.layers.push_back({LayerKind::max_pool, "stem.pool", 64, 64, 1, 3, 2, 1});

    const int blocks_per_stage[4] = {3, 4, 6, 3};
    const int64_t mid_channels[4] = {64, 128, 256, 512};
    int64_t c_in = 64;
    for (int s = 0; s < 4; ++s) {
        int64_t mid = mid_channels[s];
        int64_t c_out = mid * 4;
        for (int b = 0; b < blocks_per_stage[s]; ++b) {
            std::string prefix = "res" + std::to_string(s + 2) + "." + std::to_string(b);
            int64_t stride = (s > 0 && b == 0) ? 2 : 1;
            if (insertion_stages.count(s))
                push_temporal(g, prefix, variant, c_in, reduction);
            if (b == 0) {
                // projection shortcut branches off the block input
                g.layers.push_back({LayerKind::conv2d, prefix + ".down", c_in, c_out, 1,
                                    1, stride, 0, false, 8, true});
                g.layers.push_back({LayerKind::bn, prefix + ".down_bn", c_out, c_out});
            }
            g.layers.push_back({LayerKind::conv2d, prefix + ".conv1", c_in, mid, 1, 1, 1, 0});
            g.layers.push_back({LayerKind::bn, prefix + ".bn1", mid, mid});
            g.layers.push_back({LayerKind::conv2d, prefix + ".conv2", mid, mid, 1, 3, stride, 1});
            g.layers.push_back({LayerKind::bn, prefix + ".bn2", mid, mid});
            g.layers.push_back({LayerKind::conv2d, prefix + ".conv3", mid, c_out, 1, 1, 1, 0});
            g.layers.push_back({LayerKind::bn, prefix + ".bn3", c_out, c_out});
            g.layers.push_back({LayerKind::add, prefix + ".add", c_out, c_out});
            c_in = c_out;
        }
    }
    g.layers.push_back({LayerKind::global_pool, "head.pool", c_in, c_in});
    g.layers.push_back({LayerKind::linear, "head.fc", c_in, num_classes});
    return g;
}

GraphSpec mini_graph_spec(const NetworkSpec& spec) {
    validate_network_spec(spec);
    GraphSpec g;
    g.layers.push_back({LayerKind::conv2d, "stem.conv", 3, spec.stages[0].channels, 1, 3, 1, 1});
    g.layers.push_back({LayerKind::bn, "stem.bn", spec.stages[0].channels,
                        spec.stages[0].channels});
    int64_t c_in = spec.stages[0].channels;
    for (size_t s = 0; s < spec.stages.size(); ++s) {
        const auto& st = spec.stages[s];
        for (int b = 0; b < st.blocks; ++b) {
            std::string prefix = "stage" + std::to_string(s) + ".block" + std::to_string(b);
            int64_t stride = (s > 0 && b == 0) ? 2 : 1;
            int64_t c_out = st.channels;
            if (spec.insertion.count(static_cast<int>(s)))
                push_temporal(g, prefix, spec.variant, c_in, spec.reduction);
            if (stride != 1 || c_in != c_out) {
                g.layers.push_back({LayerKind::conv2d, prefix + ".down", c_in, c_out, 1,
                                    1, stride, 0, false, 8, true});
                g.layers.push_back({LayerKind::bn, prefix + ".down_bn", c_out, c_out});
            }
            g.layers.push_back({LayerKind::conv2d, prefix + ".conv1", c_in, c_out, 1, 3, stride, 1});
            g.layers.push_back({LayerKind::bn, prefix + ".bn1", c_out, c_out});
            g.layers.push_back({LayerKind::conv2d, prefix + ".conv2", c_out, c_out, 1, 3, 1, 1});
            g.layers.push_back({LayerKind::bn, prefix + ".bn2", c_out, c_out});
            g.layers.push_back({LayerKind::add, prefix + ".add", c_out, c_out});
            c_in = c_out;
        }
    }
    g.layers.push_back({LayerKind::global_pool, "head.pool", c_in, c_in});
    g.layers.push_back({LayerKind::linear, "head.fc", c_in, spec.num_classes});
    return g;
}

}  // namespace tei
