#include "tei/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace tei {

namespace {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts unsupported");

constexpr uint32_t kDatasetVersion = 1;
constexpr uint32_t kCheckpointVersion = 1;

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw IoError("cannot open for writing: " + path);
        path_ = path;
    }
    void bytes(const void* p, size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        if (!out_) throw IoError("write failed: " + path_);
    }
    void u32(uint32_t v) { bytes(&v, 4); }
    void u64(uint64_t v) { bytes(&v, 8); }
    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void tensor(const Tensor32& t) {
        u32(static_cast<uint32_t>(t.rank()));
        for (int64_t e : t.shape) u64(static_cast<uint64_t>(e));
        bytes(t.data.data(), t.data.size() * 4);
    }

private:
    std::ofstream out_;
    std::string path_;
};

class Reader {
public:
    explicit Reader(const std::string& path) {
        std::ifstream in(path, std::ios::binary | std::ios::ate);
        if (!in) throw IoError("cannot open for reading: " + path);
        buf_.resize(static_cast<size_t>(in.tellg()));
        in.seekg(0);
        in.read(reinterpret_cast<char*>(buf_.data()),
                static_cast<std::streamsize>(buf_.size()));
        if (!in) throw IoError("read failed: " + path);
    }
    uint64_t offset() const { return pos_; }
    void bytes(void* p, size_t n) {
        if (pos_ + n > buf_.size())
            throw FormatError("truncated file: need " + std::to_string(n) + " bytes", pos_);
        std::memcpy(p, buf_.data() + pos_, n);
        pos_ += n;
    }
    uint32_t u32() {
        uint32_t v;
        bytes(&v, 4);
        return v;
    }
    uint64_t u64() {
        uint64_t v;
        bytes(&v, 8);
        return v;
    }
    std::string str() {
        uint32_t n = u32();
        if (n > 1u << 20) throw FormatError("unreasonable string length", pos_ - 4);
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    Tensor32 tensor() {
        uint32_t rank = u32();
        if (rank == 0 || rank > 8) throw FormatError("bad tensor rank", pos_ - 4);
        std::vector<int64_t> shape(rank);
        int64_t numel = 1;
        for (auto& e : shape) {
            e = static_cast<int64_t>(u64());
            if (e < 1 || e > (1LL << 32)) throw FormatError("bad tensor extent", pos_ - 8);
            numel *= e;
        }
        Tensor32 t(shape);
        bytes(t.data.data(), static_cast<size_t>(numel) * 4);
        return t;
    }
    void expect_end() const {
        if (pos_ != buf_.size())
            throw FormatError("trailing bytes: expected file to end", pos_);
    }
    void expect_magic(const char* magic) {
        char got[4];
        bytes(got, 4);
        if (std::memcmp(got, magic, 4) != 0)
            throw FormatError(std::string("bad magic, expected '") + magic + "'", 0);
    }

private:
    std::vector<uint8_t> buf_;
    uint64_t pos_ = 0;
};

}  // namespace

void save_datasets(const std::vector<ClipDataset>& splits, const std::string& path) {
    Writer w(path);
    w.bytes("TEID", 4);
    w.u32(kDatasetVersion);
    w.u32(static_cast<uint32_t>(splits.size()));
    for (const auto& ds : splits) {
        w.str(ds.split);
        w.u32(static_cast<uint32_t>(ds.num_classes));
        w.u32(static_cast<uint32_t>(ds.videos.size()));
        for (const auto& v : ds.videos) {
            w.u32(static_cast<uint32_t>(v.label));
            w.tensor(v.frames);
        }
    }
}

std::vector<ClipDataset> load_datasets(const std::string& path) {
    Reader r(path);
    r.expect_magic("TEID");
    uint32_t version = r.u32();
    if (version != kDatasetVersion)
        throw FormatError("unsupported dataset version " + std::to_string(version), 4);
    uint32_t nsplits = r.u32();
    std::vector<ClipDataset> splits;
    for (uint32_t s = 0; s < nsplits; ++s) {
        ClipDataset ds;
        ds.split = r.str();
        ds.num_classes = static_cast<int>(r.u32());
        uint32_t count = r.u32();
        ds.videos.reserve(count);
        for (uint32_t i = 0; i < count; ++i) {
            Video v;
            v.label = static_cast<int>(r.u32());
            if (v.label < 0 || v.label >= ds.num_classes)
                throw FormatError("label out of range", r.offset() - 4);
            v.frames = r.tensor();
            ds.videos.push_back(std::move(v));
        }
        splits.push_back(std::move(ds));
    }
    r.expect_end();
    return splits;
}

void save_dataset(const ClipDataset& ds, const std::string& path) {
    save_datasets({ds}, path);
}

ClipDataset load_dataset(const std::string& path) {
    auto splits = load_datasets(path);
    if (splits.empty()) throw FormatError("file contains no splits", 12);
    return splits.front();
}

uint64_t dataset_file_size(const std::vector<ClipDataset>& splits) {
    uint64_t size = 4 + 4 + 4;  // magic, version, split count
    for (const auto& ds : splits) {
        size += 4 + ds.split.size() + 4 + 4;
        for (const auto& v : ds.videos) {
            size += 4;  // label
            size += 4 + 8 * static_cast<uint64_t>(v.frames.rank());
            size += 4 * static_cast<uint64_t>(v.frames.numel());
        }
    }
    return size;
}

void save_checkpoint(const std::vector<CheckpointEntry>& entries,
                     const std::string& path) {
    Writer w(path);
    w.bytes("TEIC", 4);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<uint32_t>(entries.size()));
    for (const auto& e : entries) {
        w.str(e.name);
        w.tensor(e.value);
    }
}

std::vector<CheckpointEntry> load_checkpoint(const std::string& path) {
    Reader r(path);
    r.expect_magic("TEIC");
    uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
    uint32_t count = r.u32();
    std::vector<CheckpointEntry> entries;
    entries.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        CheckpointEntry e;
        e.name = r.str();
        e.value = r.tensor();
        entries.push_back(std::move(e));
    }
    r.expect_end();
    return entries;
}

void save_checkpoint(const ParamStore<float>& store, const std::string& path,
                     const std::vector<CheckpointEntry>& extra) {
    std::vector<CheckpointEntry> entries;
    for (const auto& p : store.all()) entries.push_back({p.name, p.node->value});
    for (const auto& e : extra) entries.push_back(e);
    save_checkpoint(entries, path);
}

std::vector<CheckpointEntry> load_checkpoint_into(ParamStore<float>& store,
                                                  const std::string& path) {
    auto entries = load_checkpoint(path);
    std::vector<CheckpointEntry> extra;
    for (auto& e : entries) {
        if (e.name.rfind("meta.", 0) == 0) {
            extra.push_back(std::move(e));
            continue;
        }
        auto& p = store.find(e.name);
        if (p.node->value.shape != e.value.shape)
            throw FormatError("parameter shape mismatch for " + e.name, 0);
        p.node->value = std::move(e.value);
    }
    return extra;
}

}  // namespace tei
