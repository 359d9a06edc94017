#include "tei/ablate.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace tei {

NetworkSpec ablation_network_spec(Variant variant, int num_classes, int64_t frames,
                                  int64_t spatial) {
    NetworkSpec spec;
    spec.stages = {{1, 8}, {1, 16}, {1, 32}};
    spec.spatial = spatial;
    spec.frames = frames;
    spec.num_classes = num_classes;
    spec.variant = variant;
    spec.insertion = {0, 1, 2};
    spec.reduction = 8;
    spec.shift = {0.25, 0.25};
    return spec;
}

std::vector<AblationRow> run_ablation(const ClipDataset& train_set,
                                      const ClipDataset& eval_set,
                                      const AblationConfig& cfg) {
    if (train_set.videos.empty() || eval_set.videos.empty())
        throw ContractError("ablation needs non-empty train and eval splits");
    int64_t spatial = train_set.videos[0].frames.shape[2];
    NormStats stats = compute_norm_stats(train_set);

    std::vector<AblationRow> rows;
    for (const auto& vname : cfg.variants) {
        Variant variant = variant_from_string(vname);
        for (uint64_t seed : cfg.seeds) {
            NetworkSpec spec = ablation_network_spec(variant, train_set.num_classes,
                                                     cfg.frames, spatial);
            auto model = build_network<float>(spec, seed);
            TrainConfig tc;
            tc.epochs = cfg.epochs;
            tc.batch_size = cfg.batch_size;
            tc.lr = cfg.lr;
            tc.seed = seed;
            auto log = train(*model, train_set, eval_set, tc, stats);
            const auto& last = log.back();
            if (std::isnan(last.train_loss))
                throw std::runtime_error("training diverged (NaN loss) for variant " +
                                         vname);
            rows.push_back({vname, seed, last.train_acc, last.eval_acc, last.train_loss});
        }
    }
    return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    os << "variant,seed,train_acc,eval_acc\n";
    for (const auto& r : rows) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%s,%llu,%.9g,%.9g\n", r.variant.c_str(),
                      static_cast<unsigned long long>(r.seed), r.train_acc, r.eval_acc);
        os << buf;
    }
    return os.str();
}

}  // namespace tei
