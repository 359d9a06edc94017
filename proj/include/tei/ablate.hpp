#pragma once

#include <string>
#include <vector>

#include "tei/backbone.hpp"
#include "tei/synthetic.hpp"

namespace tei {

struct AblationRow {
    std::string variant;
    uint64_t seed = 0;
    double train_acc = 0;
    double eval_acc = 0;
    double final_loss = 0;
};

struct AblationConfig {
    std::vector<std::string> variants{"tsn", "tsm", "se+tim", "mem", "tim", "mem+tim"};
    std::vector<uint64_t> seeds{1, 2, 3};
    int epochs = 30;
    int batch_size = 25;
    double lr = 0.02;
    int64_t frames = 8;
};

// Desk-scale backbone used by the ablation matrix; temporal modules are
// inserted in every stage.
NetworkSpec ablation_network_spec(Variant variant, int num_classes, int64_t frames,
                                  int64_t spatial);

// Runs every variant with the identical seed and budget.
std::vector<AblationRow> run_ablation(const ClipDataset& train_set,
                                      const ClipDataset& eval_set,
                                      const AblationConfig& cfg);

std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace tei
