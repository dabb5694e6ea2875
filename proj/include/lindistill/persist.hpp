#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lindistill/model.hpp"

namespace lindistill {

// Checkpoint file layout (all integers little-endian):
//   "LDCKPT01" | u32 version | i64 step | str spec_text | str metadata |
//   u32 tensor_count | tensor_count x (str name, u8 dtype, u32 rank,
//   rank x u64 dim, u64 offset, u64 nbytes) | u64 payload_bytes | payload
// where str = u32 length + bytes, and offsets are relative to the payload.
// Tensors named "state.*" carry training state (optimizer moments) and are
// not model parameters.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    Model model;
    std::int64_t step = 0;
    std::string metadata;
    std::vector<std::pair<std::string, Tensor>> state;
};

void save_checkpoint(const std::filesystem::path& path, const Model& model, std::int64_t step,
                     const std::string& metadata = {},
                     const std::vector<std::pair<std::string, Tensor>>& state = {});

// Validates magic, version, and every tensor's name and shape against the
// embedded spec. Throws FormatError and never returns a partial model.
Checkpoint load_checkpoint(const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

std::string content_hash(const std::string& bytes);
std::string file_hash(const std::filesystem::path& path);

struct WaypointEntry {
    std::size_t index = 0;          // 1-based, contiguous
    std::int64_t teacher_step = 0;  // teacher fine-tuning clock
    std::string file;
    std::string hash;
};

// Directory of teacher checkpoints plus a line-delimited JSON manifest
// (manifest.jsonl). Entries are appended only after their file is fully
// written, so a crashed run can resume from the last manifest entry.
class WaypointStore {
public:
    static WaypointStore open(const std::filesystem::path& dir);
    static WaypointStore create(const std::filesystem::path& dir, std::int64_t interval);

    const std::filesystem::path& dir() const { return dir_; }
    std::int64_t interval() const { return interval_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::vector<WaypointEntry>& entries() const { return entries_; }
    const WaypointEntry& entry(std::size_t index) const;  // 1-based
    Model load(std::size_t index) const;                  // 1-based
    std::optional<std::int64_t> last_teacher_step() const;

    void append(const Model& teacher, std::int64_t teacher_step);
    // Rehashes every file against the manifest.
    bool verify() const;

private:
    std::filesystem::path dir_;
    std::int64_t interval_ = 0;
    std::vector<WaypointEntry> entries_;
};

// Steps at which a run of `total` steps records waypoints every `interval`
// steps: interval, 2 interval, ..., plus `total` itself.
std::vector<std::int64_t> waypoint_steps(std::int64_t total, std::int64_t interval);

}  // namespace lindistill
