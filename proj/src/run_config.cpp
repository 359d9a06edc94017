#include "tei/run_config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace tei {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw ContractError("unknown config key '" + it.key() + "' in " + where);
}

void parse_network(const json& j, NetworkSpec& spec) {
    reject_unknown(j,
                   {"stages", "spatial", "frames", "num_classes", "insertion", "variant",
                    "reduction", "shift_backward", "shift_forward"},
                   "network");
    if (j.contains("stages")) {
        spec.stages.clear();
        for (const auto& s : j.at("stages")) {
            if (!s.is_array() || s.size() != 2)
                throw ContractError("network.stages entries must be [blocks, channels]");
            spec.stages.push_back({s[0].get<int>(), s[1].get<int64_t>()});
        }
    }
    if (j.contains("spatial")) spec.spatial = j.at("spatial").get<int64_t>();
    if (j.contains("frames")) spec.frames = j.at("frames").get<int64_t>();
    if (j.contains("num_classes")) spec.num_classes = j.at("num_classes").get<int>();
    if (j.contains("insertion")) {
        spec.insertion.clear();
        for (const auto& idx : j.at("insertion")) spec.insertion.insert(idx.get<int>());
    }
    if (j.contains("variant")) spec.variant = variant_from_string(j.at("variant").get<std::string>());
    if (j.contains("reduction")) spec.reduction = j.at("reduction").get<int>();
    if (j.contains("shift_backward"))
        spec.shift.fraction_backward = j.at("shift_backward").get<double>();
    if (j.contains("shift_forward"))
        spec.shift.fraction_forward = j.at("shift_forward").get<double>();
}

void parse_train(const json& j, TrainConfig& cfg) {
    reject_unknown(j,
                   {"epochs", "batch_size", "lr", "momentum", "weight_decay",
                    "lr_drop_fracs", "lr_decay", "seed"},
                   "train");
    if (j.contains("epochs")) cfg.epochs = j.at("epochs").get<int>();
    if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<int>();
    if (j.contains("lr")) cfg.lr = j.at("lr").get<double>();
    if (j.contains("momentum")) cfg.momentum = j.at("momentum").get<double>();
    if (j.contains("weight_decay")) cfg.weight_decay = j.at("weight_decay").get<double>();
    if (j.contains("lr_drop_fracs"))
        cfg.lr_drop_fracs = j.at("lr_drop_fracs").get<std::vector<double>>();
    if (j.contains("lr_decay")) cfg.lr_decay = j.at("lr_decay").get<double>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<uint64_t>();
}

void parse_data(const json& j, SyntheticVideoConfig& cfg) {
    reject_unknown(j,
                   {"task", "raw_frames", "spatial", "sprite_size", "speed", "noise_std",
                    "background_seed", "seed"},
                   "data");
    if (j.contains("task")) cfg.task = task_from_string(j.at("task").get<std::string>());
    if (j.contains("raw_frames")) cfg.raw_frames = j.at("raw_frames").get<int>();
    if (j.contains("spatial")) cfg.spatial = j.at("spatial").get<int>();
    if (j.contains("sprite_size")) cfg.sprite_size = j.at("sprite_size").get<double>();
    if (j.contains("speed")) cfg.speed = j.at("speed").get<double>();
    if (j.contains("noise_std")) cfg.noise_std = j.at("noise_std").get<double>();
    if (j.contains("background_seed"))
        cfg.background_seed = j.at("background_seed").get<uint64_t>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<uint64_t>();
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ContractError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ContractError("config root must be an object");
    reject_unknown(j, {"network", "train", "data"}, "config root");
    RunConfig cfg;
    try {
        if (j.contains("network")) parse_network(j.at("network"), cfg.network);
        if (j.contains("train")) parse_train(j.at("train"), cfg.train);
        if (j.contains("data")) parse_data(j.at("data"), cfg.data);
    } catch (const json::exception& e) {
        throw ContractError(std::string("bad config value: ") + e.what());
    }
    validate_network_spec(cfg.network);
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

CheckpointEntry encode_spec_entry(const NetworkSpec& spec) {
    std::vector<float> v;
    v.push_back(1);  // encoding version
    v.push_back(static_cast<float>(spec.stages.size()));
    for (const auto& st : spec.stages) {
        v.push_back(static_cast<float>(st.blocks));
        v.push_back(static_cast<float>(st.channels));
    }
    v.push_back(static_cast<float>(spec.spatial));
    v.push_back(static_cast<float>(spec.frames));
    v.push_back(static_cast<float>(spec.num_classes));
    v.push_back(static_cast<float>(static_cast<int>(spec.variant)));
    v.push_back(static_cast<float>(spec.reduction));
    v.push_back(static_cast<float>(spec.insertion.size()));
    for (int idx : spec.insertion) v.push_back(static_cast<float>(idx));
    v.push_back(static_cast<float>(spec.shift.fraction_backward));
    v.push_back(static_cast<float>(spec.shift.fraction_forward));
    return {"meta.spec", Tensor32({static_cast<int64_t>(v.size())}, v)};
}

NetworkSpec decode_spec_entry(const Tensor32& blob) {
    size_t i = 0;
    auto next = [&]() -> float {
        if (i >= blob.data.size()) throw FormatError("truncated meta.spec entry", 0);
        return blob.data[i++];
    };
    if (next() != 1) throw FormatError("unsupported meta.spec encoding version", 0);
    NetworkSpec spec;
    spec.stages.clear();
    int nstages = static_cast<int>(next());
    for (int s = 0; s < nstages; ++s) {
        StageSpec st;
        st.blocks = static_cast<int>(next());
        st.channels = static_cast<int64_t>(next());
        spec.stages.push_back(st);
    }
    spec.spatial = static_cast<int64_t>(next());
    spec.frames = static_cast<int64_t>(next());
    spec.num_classes = static_cast<int>(next());
    spec.variant = static_cast<Variant>(static_cast<int>(next()));
    spec.reduction = static_cast<int>(next());
    int nins = static_cast<int>(next());
    for (int s = 0; s < nins; ++s) spec.insertion.insert(static_cast<int>(next()));
    spec.shift.fraction_backward = next();
    spec.shift.fraction_forward = next();
    validate_network_spec(spec);
    return spec;
}

CheckpointEntry encode_norm_entry(const NormStats& stats) {
    std::vector<float> v{stats.mean[0], stats.mean[1], stats.mean[2],
                         stats.stdev[0], stats.stdev[1], stats.stdev[2]};
    return {"meta.norm", Tensor32({6}, v)};
}

NormStats decode_norm_entry(const Tensor32& blob) {
    if (blob.data.size() != 6) throw FormatError("bad meta.norm entry", 0);
    NormStats st;
    for (int c = 0; c < 3; ++c) {
        st.mean[c] = blob.data[static_cast<size_t>(c)];
        st.stdev[c] = blob.data[static_cast<size_t>(3 + c)];
    }
    return st;
}

}  // namespace tei
