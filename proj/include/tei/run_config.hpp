#pragma once

#include <string>

#include "tei/backbone.hpp"
#include "tei/io.hpp"
#include "tei/synthetic.hpp"

namespace tei {

// JSON run configuration: sections "network", "train", "data", all optional,
// unknown keys rejected everywhere.
struct RunConfig {
    NetworkSpec network;
    TrainConfig train;
    SyntheticVideoConfig data;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Network spec and normalization stats travel inside checkpoints as
// "meta.*" tensor entries so `eval` needs no side files.
CheckpointEntry encode_spec_entry(const NetworkSpec& spec);
NetworkSpec decode_spec_entry(const Tensor32& blob);
CheckpointEntry encode_norm_entry(const NormStats& stats);
NormStats decode_norm_entry(const Tensor32& blob);

}  // namespace tei
