#include "tei/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace tei {

Task task_from_string(const std::string& s) {
    if (s == "direction4") return Task::direction4;
    if (s == "appearance2") return Task::appearance2;
    if (s == "combined8") return Task::combined8;
    throw ContractError("unknown task '" + s +
                        "', valid tasks: direction4, appearance2, combined8");
}

std::string task_to_string(Task t) {
    switch (t) {
        case Task::direction4: return "direction4";
        case Task::appearance2: return "appearance2";
        case Task::combined8: return "combined8";
    }
    return "?";
}

int task_num_classes(Task t) {
    switch (t) {
        case Task::direction4: return 4;
        case Task::appearance2: return 2;
        case Task::combined8: return 8;
    }
    return 0;
}

void validate_config(const SyntheticVideoConfig& cfg) {
    if (cfg.raw_frames < 2) throw ContractError("raw_frames must be >= 2");
    if (cfg.spatial < 4) throw ContractError("spatial size must be >= 4");
    if (cfg.sprite_size < 1) throw ContractError("sprite size must be >= 1 px");
    if (cfg.speed < 0) throw ContractError("speed must be nonnegative");
    double travel = cfg.speed * (cfg.raw_frames - 1) + cfg.sprite_size;
    if (travel > cfg.spatial)
        throw ContractError("sprite leaves frame bounds: speed*(frames-1)+size = " +
                            std::to_string(travel) + " > spatial " +
                            std::to_string(cfg.spatial));
}

namespace {

uint64_t mix64(uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

enum class SpriteShape { square, disc };

// Direction unit vectors: 0=left 1=right 2=up 3=down
void direction_vec(int dir, double& vx, double& vy) {
    vx = vy = 0;
    switch (dir) {
        case 0: vx = -1; break;
        case 1: vx = 1; break;
        case 2: vy = -1; break;
        case 3: vy = 1; break;
    }
}

// Antialiased coverage of pixel (px,py) by a sprite at float position
// (x0,y0) (top-left for square, center derived for disc).
double coverage(SpriteShape shape, double size, double x0, double y0, int px, int py) {
    if (shape == SpriteShape::square) {
        double ox = std::min<double>(px + 1.0, x0 + size) - std::max<double>(px, x0);
        double oy = std::min<double>(py + 1.0, y0 + size) - std::max<double>(py, y0);
        if (ox <= 0 || oy <= 0) return 0;
        return std::min(1.0, ox) * std::min(1.0, oy);
    }
    double r = size / 2.0;
    double cx = x0 + r, cy = y0 + r;
    double d = std::hypot(px + 0.5 - cx, py + 0.5 - cy);
    return std::clamp(r - d + 0.5, 0.0, 1.0);
}

Video render_video(const SyntheticVideoConfig& cfg, SpriteShape shape, int dir,
                   int label, uint64_t video_seed) {
    int hS = cfg.spatial, wS = cfg.spatial, tr = cfg.raw_frames;
    std::mt19937_64 rng(video_seed);

    // static background texture, fixed across frames
    std::mt19937_64 bg_rng(mix64(cfg.background_seed ^ video_seed));
    std::vector<float> bg(static_cast<size_t>(3 * hS * wS));
    std::uniform_real_distribution<double> bg_dist(0.0, 0.3);
    for (auto& v : bg) v = static_cast<float>(bg_dist(bg_rng));

    double vx, vy;
    direction_vec(dir, vx, vy);
    vx *= cfg.speed;
    vy *= cfg.speed;

    // start so that the full trajectory stays inside the frame
    double span = cfg.speed * (tr - 1);
    double free_main = cfg.spatial - cfg.sprite_size - span;  // >= 0 by validation
    double free_perp = cfg.spatial - cfg.sprite_size;
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    double a = u01(rng) * free_main;  // along motion axis
    double b = u01(rng) * free_perp;  // perpendicular
    double x0, y0;
    if (vx < 0) { x0 = a + span; y0 = b; }
    else if (vx > 0) { x0 = a; y0 = b; }
    else if (vy < 0) { x0 = b; y0 = a + span; }
    else { x0 = b; y0 = a; }

    std::normal_distribution<double> noise(0.0, cfg.noise_std);
    Video video;
    video.label = label;
    video.frames = Tensor32({tr, 3, hS, wS});
    const float sprite_val = 0.9f;
    for (int t = 0; t < tr; ++t) {
        double sx = x0 + vx * t, sy = y0 + vy * t;
        for (int c = 0; c < 3; ++c)
            for (int py = 0; py < hS; ++py)
                for (int px = 0; px < wS; ++px) {
                    double cov = coverage(shape, cfg.sprite_size, sx, sy, px, py);
                    float base = bg[static_cast<size_t>((c * hS + py) * wS + px)];
                    float val = static_cast<float>(base * (1.0 - cov) + sprite_val * cov);
                    val += static_cast<float>(noise(rng));
                    video.frames.at({t, c, py, px}) = val;
                }
    }
    return video;
}

}  // namespace

ClipDataset generate_dataset(const SyntheticVideoConfig& cfg, int n_per_class,
                             uint64_t split_seed) {
    if (n_per_class < 1) throw ContractError("n_per_class must be >= 1");
    validate_config(cfg);
    int k = task_num_classes(cfg.task);
    ClipDataset ds;
    ds.num_classes = k;
    ds.videos.reserve(static_cast<size_t>(k * n_per_class));
    for (int i = 0; i < n_per_class; ++i)
        for (int cls = 0; cls < k; ++cls) {
            uint64_t vseed = mix64(cfg.seed ^ mix64(split_seed ^ mix64(
                                       static_cast<uint64_t>(cls) * 1000003ULL +
                                       static_cast<uint64_t>(i))));
            std::mt19937_64 pick(vseed);
            SpriteShape shape = SpriteShape::square;
            int dir = 0;
            switch (cfg.task) {
                case Task::direction4:
                    dir = cls;
                    break;
                case Task::appearance2:
                    shape = cls == 0 ? SpriteShape::square : SpriteShape::disc;
                    dir = static_cast<int>(pick() % 4);
                    break;
                case Task::combined8:
                    shape = (cls / 4) == 0 ? SpriteShape::square : SpriteShape::disc;
                    dir = cls % 4;
                    break;
            }
            ds.videos.push_back(render_video(cfg, shape, dir, cls, mix64(vseed)));
        }
    return ds;
}

std::vector<int64_t> uniform_sample_frame_indices(int64_t t_raw, int64_t t,
                                                  bool train_mode, uint64_t seed) {
    if (t > t_raw)
        throw ContractError("cannot sample " + std::to_string(t) + " frames from " +
                            std::to_string(t_raw));
    std::vector<int64_t> idx(static_cast<size_t>(t));
    std::mt19937_64 rng(seed);
    for (int64_t i = 0; i < t; ++i) {
        int64_t lo = i * t_raw / t;
        int64_t hi = (i + 1) * t_raw / t;  // exclusive
        if (train_mode) {
            std::uniform_int_distribution<int64_t> d(lo, hi - 1);
            idx[static_cast<size_t>(i)] = d(rng);
        } else {
            idx[static_cast<size_t>(i)] = lo + (hi - lo) / 2;
        }
    }
    return idx;
}

Tensor32 uniform_sample_frames(const Tensor32& video, int64_t t, bool train_mode,
                               uint64_t seed) {
    if (video.rank() < 1) throw ShapeError("uniform_sample_frames: empty tensor");
    int64_t t_raw = video.shape[0];
    auto idx = uniform_sample_frame_indices(t_raw, t, train_mode, seed);
    int64_t frame_sz = video.numel() / t_raw;
    std::vector<int64_t> out_shape = video.shape;
    out_shape[0] = t;
    Tensor32 out(out_shape);
    for (int64_t i = 0; i < t; ++i)
        std::copy(video.data.begin() + idx[static_cast<size_t>(i)] * frame_sz,
                  video.data.begin() + (idx[static_cast<size_t>(i)] + 1) * frame_sz,
                  out.data.begin() + i * frame_sz);
    return out;
}

NormStats compute_norm_stats(const ClipDataset& train) {
    if (train.videos.empty()) throw ContractError("empty dataset");
    NormStats st;
    double sum[3] = {0, 0, 0}, sq[3] = {0, 0, 0};
    int64_t count = 0;
    for (const auto& v : train.videos) {
        int64_t tr = v.frames.shape[0];
        int64_t hw = v.frames.shape[2] * v.frames.shape[3];
        for (int64_t t = 0; t < tr; ++t)
            for (int c = 0; c < 3; ++c) {
                const float* p = v.frames.data.data() + (t * 3 + c) * hw;
                for (int64_t j = 0; j < hw; ++j) {
                    sum[c] += p[j];
                    sq[c] += static_cast<double>(p[j]) * p[j];
                }
            }
        count += tr * hw;
    }
    for (int c = 0; c < 3; ++c) {
        double mu = sum[c] / static_cast<double>(count);
        double var = sq[c] / static_cast<double>(count) - mu * mu;
        st.mean[c] = static_cast<float>(mu);
        st.stdev[c] = static_cast<float>(std::sqrt(std::max(var, 1e-12)));
    }
    return st;
}

}  // namespace tei
