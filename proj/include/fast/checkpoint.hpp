#pragma once

#include <filesystem>
#include <string>

#include "fast/data.hpp"
#include "fast/model.hpp"

namespace fast {

inline constexpr int kCheckpointFormatVersion = 1;

// Everything needed to run a trained model on raw data.
struct Checkpoint {
    ModelConfig config;
    ModelParams params;
    Normalizer normalizer;
    TimeAnchor time_anchor = TimeAnchor::kLastInput;
    double train_ratio = 0.6;
    double val_ratio = 0.2;
};

// Layout: "FSTCKPT\n", "format_version=<int>\n", one "key=value" line per
// config entry, "tensors=<count>\n", then for each tensor a line
// "<dotted name> <d0>x<d1>...\n" followed by its row-major values as
// little-endian 64-bit floats. The normalizer is stored as the tensors
// "normalizer.mean" and "normalizer.std".
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fast
