#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hufu/tensor.hpp"

namespace hufu {

struct Dataset {
    std::vector<Tensor> images;    // uniform shape, pixels in [0, 1]
    std::vector<std::size_t> labels;
    std::size_t class_count = 0;

    std::size_t size() const { return images.size(); }
    void validate() const;
};

/// Two unrelated procedural pattern families so carrier and host tasks do
/// not share structure: Bars renders oriented gratings, Blobs renders
/// off-center bumps.
enum class PatternFamily : std::uint8_t { Bars = 0, Blobs = 1 };

/// Class-dependent pattern plus Gaussian noise (sigma 0.1), clamped to
/// [0, 1]. Deterministic per seed.
Dataset synth_generate(std::size_t classes, std::size_t per_class, Shape3 shape,
                       std::uint64_t seed, PatternFamily family = PatternFamily::Bars);

/// Seeded shuffle then split; first part holds floor(fraction * size) samples.
std::pair<Dataset, Dataset> split(const Dataset& d, float fraction, std::uint64_t seed);

/// IDX image/label pair reader (magic 0x00000803 / 0x00000801, big-endian
/// dimensions, unsigned byte payload). Pixels are scaled to [0, 1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Inverse of load_idx for byte-quantized pixels.
void save_idx(const Dataset& d, const std::string& images_path, const std::string& labels_path);

} // namespace hufu
