#pragma once

// Binary checkpoints.
//
//   "ACTVOCAB"  u32 version  u64 metadata_length  metadata (JSON)
//   f64 arrays in directory order  u64 FNV-1a of all preceding bytes
//
// Integers and reals are little-endian. Optimizer moments are stored next to
// their parameter as "<name>.adam_m" and "<name>.adam_v".

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include "actvocab/json.hpp"
#include "actvocab/model.hpp"
#include "actvocab/optim.hpp"

namespace actvocab {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RngState {
    std::uint64_t seed = 0;
    std::uint64_t next_step = 0;
};

struct Checkpoint {
    explicit Checkpoint(Model m) : model(std::move(m)) {}

    Model model;
    std::uint64_t step = 0;
    RngState rng;
    std::map<std::string, grad::Moments> moments;
    nlohmann::json train_config = nlohmann::json::object();
    /// Free-form provenance (adaptation runs and so on).
    nlohmann::json notes = nlohmann::json::object();
};

std::string encode_checkpoint(const Checkpoint& ckpt);
/// Throws CheckpointError on bad magic, version mismatch, truncation,
/// checksum mismatch, or arrays that do not fit the described model.
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// All named arrays (parameters and moments), for diffing checkpoints.
std::map<std::string, std::vector<double>> checkpoint_arrays(const Checkpoint& ckpt);

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t hash = 0xcbf29ce484222325ULL);

}  // namespace actvocab
