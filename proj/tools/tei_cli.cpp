// tei: data generation, training, evaluation, ablation, gradient checks,
// cost analysis, and benchmarks in one binary.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "tei/ablate.hpp"
#include "tei/analysis.hpp"
#include "tei/backbone.hpp"
#include "tei/bench.hpp"
#include "tei/gradcheck_suite.hpp"
#include "tei/io.hpp"
#include "tei/run_config.hpp"
#include "tei/synthetic.hpp"

extern "C" void openblas_set_num_threads(int);

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitDiverged = 4;
constexpr int kExitGradcheck = 5;

struct DataFile {
    tei::ClipDataset train;
    tei::ClipDataset eval;
};

DataFile load_data_file(const std::string& path) {
    auto splits = tei::load_datasets(path);
    DataFile df;
    for (auto& s : splits) {
        if (s.split == "train") df.train = std::move(s);
        else if (s.split == "eval") df.eval = std::move(s);
    }
    if (df.train.videos.empty())
        throw tei::ContractError("data file has no 'train' split: " + path);
    return df;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw tei::IoError("cannot open for writing: " + path);
    out << text;
    if (!out) throw tei::IoError("write failed: " + path);
}

std::vector<std::string> split_csv_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

int cmd_gen_data(const std::string& task, int n_per_class, const std::string& out,
                 uint64_t seed, int raw_frames, int spatial, double speed,
                 double sprite_size, double noise_std) {
    tei::SyntheticVideoConfig cfg;
    cfg.task = tei::task_from_string(task);
    cfg.raw_frames = raw_frames;
    cfg.spatial = spatial;
    cfg.speed = speed;
    cfg.sprite_size = sprite_size;
    cfg.noise_std = noise_std;
    cfg.seed = seed;
    auto train = tei::generate_dataset(cfg, n_per_class, 1);
    train.split = "train";
    auto eval = tei::generate_dataset(cfg, n_per_class, 2);
    eval.split = "eval";
    tei::save_datasets({train, eval}, out);

    for (const auto* ds : {&train, &eval}) {
        std::map<int, int> hist;
        for (const auto& v : ds->videos) hist[v.label]++;
        std::printf("%s: %zu clips, %d classes |", ds->split.c_str(), ds->videos.size(),
                    ds->num_classes);
        for (const auto& [cls, count] : hist) std::printf(" class%d=%d", cls, count);
        std::printf("\n");
    }
    std::printf("wrote %s\n", out.c_str());
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& ckpt_path, const std::string& csv_path) {
    tei::RunConfig cfg = tei::load_run_config(config_path);
    DataFile df = load_data_file(data_path);
    if (df.train.num_classes != cfg.network.num_classes)
        throw tei::ContractError("config num_classes " +
                                 std::to_string(cfg.network.num_classes) +
                                 " != dataset classes " +
                                 std::to_string(df.train.num_classes));
    auto model = tei::build_network<float>(cfg.network, cfg.train.seed);
    tei::NormStats stats = tei::compute_norm_stats(df.train);
    auto log = tei::train(*model, df.train, df.eval, cfg.train, stats);
    for (const auto& e : log) {
        if (std::isnan(e.train_loss)) {
            std::fprintf(stderr, "training diverged: NaN loss at epoch %d\n", e.epoch);
            return kExitDiverged;
        }
    }
    if (!csv_path.empty()) write_text(csv_path, tei::format_log_csv(log));
    if (!ckpt_path.empty())
        tei::save_checkpoint(model->store, ckpt_path,
                             {tei::encode_spec_entry(cfg.network),
                              tei::encode_norm_entry(stats)});
    const auto& last = log.back();
    std::printf("trained %d epochs: train_loss=%.6g train_acc=%.4f eval_acc=%.4f\n",
                cfg.train.epochs, last.train_loss, last.train_acc, last.eval_acc);
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path) {
    auto entries = tei::load_checkpoint(ckpt_path);
    tei::NetworkSpec spec;
    tei::NormStats stats;
    bool have_spec = false, have_norm = false;
    for (const auto& e : entries) {
        if (e.name == "meta.spec") {
            spec = tei::decode_spec_entry(e.value);
            have_spec = true;
        } else if (e.name == "meta.norm") {
            stats = tei::decode_norm_entry(e.value);
            have_norm = true;
        }
    }
    if (!have_spec || !have_norm)
        throw tei::FormatError("checkpoint lacks meta.spec/meta.norm entries", 0);
    auto model = tei::build_network<float>(spec, 0);
    tei::load_checkpoint_into(model->store, ckpt_path);
    DataFile df = load_data_file(data_path);
    const auto& ds = df.eval.videos.empty() ? df.train : df.eval;
    auto res = tei::evaluate(*model, ds, stats);
    std::printf("eval_acc=%.9g\n", res.accuracy);
    for (size_t c = 0; c < res.per_class.size(); ++c)
        std::printf("class%zu_acc=%.9g\n", c, res.per_class[c]);
    return 0;
}

int cmd_ablate(const std::string& data_path, const std::string& variants_arg,
               const std::string& out_csv, int epochs, int batch, double lr,
               const std::string& seeds_arg, int frames) {
    DataFile df = load_data_file(data_path);
    tei::AblationConfig cfg;
    cfg.variants = split_csv_list(variants_arg);
    if (cfg.variants.empty()) throw tei::ContractError("no variants given");
    for (const auto& v : cfg.variants) tei::variant_from_string(v);  // validate early
    cfg.seeds.clear();
    for (const auto& s : split_csv_list(seeds_arg)) cfg.seeds.push_back(std::stoull(s));
    if (cfg.seeds.empty()) throw tei::ContractError("no seeds given");
    cfg.epochs = epochs;
    cfg.batch_size = batch;
    cfg.lr = lr;
    cfg.frames = frames;
    std::vector<tei::AblationRow> rows;
    try {
        rows = tei::run_ablation(df.train, df.eval, cfg);
    } catch (const std::runtime_error& e) {
        if (std::string(e.what()).find("NaN") != std::string::npos) {
            std::fprintf(stderr, "%s\n", e.what());
            return kExitDiverged;
        }
        throw;
    }
    std::string csv = tei::ablation_csv(rows);
    if (!out_csv.empty()) write_text(out_csv, csv);
    std::fputs(csv.c_str(), stdout);
    return 0;
}

int cmd_gradcheck(const std::string& op, int seeds) {
    auto results = tei::run_gradcheck_suite(op, seeds);
    bool all_pass = true;
    for (const auto& r : results) {
        std::printf("%-18s max_rel_err=%.3e %s\n", r.name.c_str(), r.max_rel_err,
                    r.pass ? "PASS" : "FAIL");
        all_pass = all_pass && r.pass;
    }
    return all_pass ? 0 : kExitGradcheck;
}

int cmd_flops(const std::string& arch, int frames, int spatial, int classes,
              const std::string& variant_name, bool csv) {
    tei::Variant variant = tei::variant_from_string(variant_name);
    tei::GraphSpec graph;
    if (arch == "resnet50") {
        if (spatial <= 0) spatial = 224;
        if (classes <= 0) classes = 174;
        std::set<int> stages;
        if (variant != tei::Variant::none) stages = {0, 1, 2, 3};
        graph = tei::resnet50_teinet_spec(frames, spatial, classes, stages, variant);
    } else if (arch == "mini") {
        if (spatial <= 0) spatial = 32;
        if (classes <= 0) classes = 4;
        tei::NetworkSpec spec = tei::ablation_network_spec(variant, classes, frames, spatial);
        graph = tei::mini_graph_spec(spec);
    } else {
        throw tei::ContractError("unknown arch '" + arch + "', valid: mini, resnet50");
    }
    auto report = tei::count_macs(graph, frames, spatial, spatial);
    if (csv) {
        std::fputs(report.to_csv().c_str(), stdout);
    } else {
        std::fputs(report.to_table().c_str(), stdout);
        std::printf("params: %.4g M (%lld)\n", report.params / 1e6,
                    static_cast<long long>(report.params));
        std::printf("FLOPs (MACs) at %d frames: %.4g G (%lld)\n", frames,
                    report.macs / 1e9, static_cast<long long>(report.macs));
    }
    return 0;
}

int cmd_bench(const std::string& config_path, int iters) {
    tei::RunConfig cfg = config_path.empty() ? tei::RunConfig{}
                                             : tei::load_run_config(config_path);
    auto model = tei::build_network<float>(cfg.network, cfg.train.seed);
    auto lat = tei::bench_latency(*model, 1, 3, iters);
    std::printf("latency batch=1: median=%.3f ms iqr=%.3f ms over %d iters\n",
                lat.median_ms, lat.iqr_ms, lat.iters);
    auto thr = tei::bench_throughput(*model, 16, std::max(3, iters / 2));
    std::printf("throughput batch=16: %.2f clips/s (median batch %.3f ms, %d iters)\n",
                thr.clips_per_s, thr.median_batch_ms, thr.iters);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    if (const char* threads = std::getenv("TEI_THREADS")) {
        char* end = nullptr;
        long n = std::strtol(threads, &end, 10);
        if (end == threads || *end != '\0' || n < 1) {
            std::fprintf(stderr, "TEI_THREADS must be a positive integer\n");
            return kExitConfig;
        }
        openblas_set_num_threads(static_cast<int>(n));
    }

    CLI::App app{"temporal enhancement-and-interaction experiments"};
    app.require_subcommand(1);

    // gen-data
    std::string gd_task = "direction4", gd_out = "data.teid";
    int gd_n = 50, gd_frames = 32, gd_spatial = 32;
    uint64_t gd_seed = 1;
    double gd_speed = 0.8, gd_size = 5.0, gd_noise = 0.05;
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic video dataset");
    gen->add_option("--task", gd_task, "direction4|appearance2|combined8");
    gen->add_option("--n-per-class", gd_n, "clips per class per split");
    gen->add_option("--out", gd_out, "output .teid file")->required();
    gen->add_option("--seed", gd_seed, "generator seed");
    gen->add_option("--frames", gd_frames, "raw frames per video");
    gen->add_option("--spatial", gd_spatial, "frame height/width");
    gen->add_option("--speed", gd_speed, "sprite speed px/frame");
    gen->add_option("--sprite-size", gd_size, "sprite size px");
    gen->add_option("--noise-std", gd_noise, "pixel noise sigma");

    // train
    std::string tr_config, tr_data, tr_ckpt, tr_csv;
    auto* trn = app.add_subcommand("train", "train a model from a JSON config");
    trn->add_option("--config", tr_config)->required();
    trn->add_option("--data", tr_data)->required();
    trn->add_option("--out-checkpoint", tr_ckpt);
    trn->add_option("--log-csv", tr_csv);

    // eval
    std::string ev_ckpt, ev_data;
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    ev->add_option("--checkpoint", ev_ckpt)->required();
    ev->add_option("--data", ev_data)->required();

    // ablate
    std::string ab_data, ab_variants = "tsn,tsm,se+tim,mem,tim,mem+tim", ab_csv;
    std::string ab_seeds = "1,2,3";
    int ab_epochs = 30, ab_batch = 25, ab_frames = 8;
    double ab_lr = 0.02;
    auto* ab = app.add_subcommand("ablate", "run the variant ablation matrix");
    ab->add_option("--data", ab_data)->required();
    ab->add_option("--variants", ab_variants);
    ab->add_option("--out-csv", ab_csv);
    ab->add_option("--epochs", ab_epochs);
    ab->add_option("--batch", ab_batch);
    ab->add_option("--lr", ab_lr);
    ab->add_option("--seeds", ab_seeds, "comma-separated seed list");
    ab->add_option("--frames", ab_frames);

    // gradcheck
    std::string gc_op = "all";
    int gc_seeds = 20;
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    gc->add_option("--op", gc_op, "op name or 'all'");
    gc->add_option("--seeds", gc_seeds, "random draws per op");

    // flops
    std::string fl_arch = "mini", fl_variant = "tsn";
    int fl_frames = 8, fl_spatial = 0, fl_classes = 0;
    bool fl_csv = false;
    auto* fl = app.add_subcommand("flops", "parameter and FLOP accounting");
    fl->add_option("--arch", fl_arch, "mini|resnet50");
    fl->add_option("--frames", fl_frames);
    fl->add_option("--spatial", fl_spatial);
    fl->add_option("--classes", fl_classes);
    fl->add_option("--variant", fl_variant);
    fl->add_flag("--csv", fl_csv, "emit CSV instead of a table");

    // bench
    std::string be_config;
    int be_iters = 11;
    auto* be = app.add_subcommand("bench", "latency/throughput microbenchmark");
    be->add_option("--config", be_config);
    be->add_option("--iters", be_iters);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitConfig;
    }

    try {
        if (gen->parsed())
            return cmd_gen_data(gd_task, gd_n, gd_out, gd_seed, gd_frames, gd_spatial,
                                gd_speed, gd_size, gd_noise);
        if (trn->parsed()) return cmd_train(tr_config, tr_data, tr_ckpt, tr_csv);
        if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data);
        if (ab->parsed())
            return cmd_ablate(ab_data, ab_variants, ab_csv, ab_epochs, ab_batch, ab_lr,
                              ab_seeds, ab_frames);
        if (gc->parsed()) return cmd_gradcheck(gc_op, gc_seeds);
        if (fl->parsed())
            return cmd_flops(fl_arch, fl_frames, fl_spatial, fl_classes, fl_variant,
                             fl_csv);
        if (be->parsed()) return cmd_bench(be_config, be_iters);
    } catch (const tei::FormatError& e) {
        std::fprintf(stderr, "format error: %s\n", e.what());
        return kExitIo;
    } catch (const tei::IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return kExitIo;
    } catch (const std::invalid_argument& e) {  // ContractError, ShapeError
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
