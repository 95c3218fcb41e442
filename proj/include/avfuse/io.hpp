#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "avfuse/synth.hpp"
#include "avfuse/training.hpp"

namespace avfuse {

// Binary matrix file: 8-byte magic "AVFMTX01", rows and cols as 64-bit
// little-endian unsigned, then row-major 32-bit little-endian IEEE floats.
Matrix read_matrix(const std::filesystem::path& path);
void write_matrix(const std::filesystem::path& path, const Matrix& m);

// Checkpoint: magic "AVFCKP01", a 64-bit little-endian JSON header length,
// the JSON header (version, dims, seed, epoch, named shape list), then one
// contiguous little-endian float32 payload in declared shape order.
struct Checkpoint {
    ModelParams params;
    std::uint64_t seed = 0;
    int epoch = 0;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Rejects checkpoints whose dims do not match the expected configuration.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const ModelDims& expected_dims);

// Line-delimited JSON manifest; feature paths are resolved relative to the
// manifest's directory. Onset-kind records get their planted steps as the
// sample's onset set.
void write_manifest(const std::filesystem::path& path,
                    const std::vector<Sample>& samples,
                    const std::filesystem::path& feature_dir);
std::vector<Sample> read_manifest(const std::filesystem::path& path);

// Writes the three splits plus feature files under out_dir.
void write_dataset(const std::filesystem::path& out_dir, const SynthDataset& ds);

// Write-temp-then-rename so interrupted runs never leave partial files.
void atomic_write(const std::filesystem::path& path,
                  const std::function<void(std::ostream&)>& writer);

// 8-bit PGM of a response map, max-normalized; for quick visual checks.
void write_pgm(const std::filesystem::path& path, const Matrix& map);

}  // namespace avfuse
