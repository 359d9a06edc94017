#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "tei/backbone.hpp"

namespace tei {

enum class LayerKind {
    conv2d,
    conv3d,
    temporal1d_full,
    tim,
    mem,
    se,
    bn,
    linear,
    max_pool,
    global_pool,
    add
};

struct LayerSpec {
    LayerKind kind;
    std::string name;
    int64_t c_in = 0;
    int64_t c_out = 0;
    int64_t kt = 1;      // temporal kernel extent
    int64_t kd = 1;      // spatial kernel extent
    int64_t stride = 1;
    int64_t pad = 0;
    bool bias = false;
    int r = 8;           // reduction for mem/se
    // branch layers (projection shortcuts) read the running spatial size but
    // do not advance it; the main path's strided conv does that
    bool branch = false;
};

struct GraphSpec {
    std::vector<LayerSpec> layers;
};

// Exact parameter formulas per layer kind:
//   conv2d  C_out*C_in*d*d      conv3d  C_out*C_in*t*d*d
//   temporal1d_full  C_out*C_in*t       tim  C_out*1*t
//   mem  2*C*floor(C/r) + floor(C/r)*C (+ biases)
//   se   2*C*floor(C/r) (+ biases)     bn  2C
//   linear  C_out*C_in (+ C_out)
int64_t layer_params(const LayerSpec& l);
int64_t count_params(const GraphSpec& g);

struct LayerCost {
    std::string name;
    int64_t params = 0;
    int64_t macs = 0;
};

// One multiply-accumulate per weight application; reported under the
// "FLOPs" label to match the common convention for these figures.
struct CostReport {
    int64_t params = 0;
    int64_t macs = 0;
    std::vector<LayerCost> layers;

    std::string to_csv() const;
    std::string to_table() const;
};

CostReport count_macs(const GraphSpec& g, int64_t frames, int64_t height,
                      int64_t width);

// Symbolic ResNet-50 with bottleneck stages (3,4,6,3) and optional
// temporal modules on block inputs at the chosen stages.
GraphSpec resnet50_teinet_spec(int64_t frames, int64_t spatial, int num_classes,
                               const std::set<int>& insertion_stages, Variant variant,
                               int reduction = 8);

// Mirror of build_network's layer sequence for the runnable mini model.
GraphSpec mini_graph_spec(const NetworkSpec& spec);

}  // namespace tei
