#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tei/tensor.hpp"

namespace tei {

enum class Task { direction4, appearance2, combined8 };

Task task_from_string(const std::string& s);
std::string task_to_string(Task t);
int task_num_classes(Task t);

struct SyntheticVideoConfig {
    Task task = Task::direction4;
    int raw_frames = 32;
    int spatial = 32;
    double sprite_size = 5.0;   // px
    double speed = 0.8;         // px/frame
    double noise_std = 0.05;    // on [0,1] scale
    uint64_t background_seed = 9001;
    uint64_t seed = 1;
};

void validate_config(const SyntheticVideoConfig& cfg);

struct Video {
    Tensor32 frames;  // [T_raw, 3, H, W]
    int label = 0;
};

struct ClipDataset {
    std::string split;
    int num_classes = 0;
    std::vector<Video> videos;
};

// Deterministic given (cfg.seed, split_seed); exactly n_per_class per class.
ClipDataset generate_dataset(const SyntheticVideoConfig& cfg, int n_per_class,
                             uint64_t split_seed);

// TSN segment sampling: T equal segments of [0,T_raw); train picks a random
// index per segment, eval the floor midpoint. Indices strictly increase.
std::vector<int64_t> uniform_sample_frame_indices(int64_t t_raw, int64_t t,
                                                  bool train_mode, uint64_t seed);

Tensor32 uniform_sample_frames(const Tensor32& video, int64_t t, bool train_mode,
                               uint64_t seed);

// Per-channel normalization statistics from a training split.
struct NormStats {
    float mean[3] = {0, 0, 0};
    float stdev[3] = {1, 1, 1};
};

NormStats compute_norm_stats(const ClipDataset& train);

}  // namespace tei
