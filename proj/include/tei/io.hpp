#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tei/synthetic.hpp"
#include "tei/tape.hpp"

namespace tei {

// Malformed or truncated file; offset is the byte position of the problem.
struct FormatError : std::runtime_error {
    uint64_t offset;
    FormatError(const std::string& what, uint64_t off)
        : std::runtime_error(what + " (byte offset " + std::to_string(off) + ")"),
          offset(off) {}
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dataset file: magic "TEID", version u32, split count u32, then per split:
// tag (u32 length + bytes), num_classes u32, video count u32, and per video
// label u32 + tensor record (rank u32, extents u64, f32 LE values).
void save_datasets(const std::vector<ClipDataset>& splits, const std::string& path);
std::vector<ClipDataset> load_datasets(const std::string& path);

void save_dataset(const ClipDataset& ds, const std::string& path);
ClipDataset load_dataset(const std::string& path);

// Expected on-disk size in bytes for the given splits.
uint64_t dataset_file_size(const std::vector<ClipDataset>& splits);

// Checkpoint: magic "TEIC", version u32, param count u32, then per parameter
// name (u32 length + bytes) + tensor record as above.
struct CheckpointEntry {
    std::string name;
    Tensor32 value;
};

void save_checkpoint(const std::vector<CheckpointEntry>& entries,
                     const std::string& path);
std::vector<CheckpointEntry> load_checkpoint(const std::string& path);

void save_checkpoint(const ParamStore<float>& store, const std::string& path,
                     const std::vector<CheckpointEntry>& extra = {});
// Loads values into an existing store by name; extra entries are returned.
std::vector<CheckpointEntry> load_checkpoint_into(ParamStore<float>& store,
                                                  const std::string& path);

}  // namespace tei
