#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hufu/nn.hpp"

namespace hufu {

/// What a restore pass did, and how well the result lines up with the
/// reference model.
struct RestoreReport {
    // gather per layer: restored channel r came from suspect channel perm[r]
    std::vector<std::vector<std::size_t>> permutations;
    // per reference kernel (canonical order), the factor divided out
    std::vector<float> kernel_scale_factors;
    // kernels whose reference singular values were all ~0; factor forced to 1
    std::vector<std::size_t> scale_skipped;
    std::vector<std::pair<std::size_t, std::size_t>> zero_filled; // (layer, reference channel)
    std::vector<std::pair<std::size_t, std::size_t>> removed;     // (layer, suspect channel)
    float restored_rate = 1.0f;
};

/// a.b / (|a||b|) clamped to [-1, 1]; zero if either vector is all-zero.
float cosine_similarity(const std::vector<float>& a, const std::vector<float>& b);

/// Undo structure adjustment: per layer, maximum-total-cosine assignment
/// between suspect and reference output channels, applied front to back so
/// each layer is matched with its input side already aligned.
std::pair<Model, RestoreReport> reorder_restore(const Model& suspect, const Model& reference);

/// Undo power-of-two parameter adjustment: per kernel, the scale factor is
/// the mean ratio of suspect to reference singular values; biases are
/// divided by the running product of per-layer median factors.
std::pair<Model, RestoreReport> scale_restore(const Model& suspect, const Model& reference);

/// Undo kernels cutoff/supplement: assignment-match channels, zero-fill
/// reference channels whose best match falls below 0.85 similarity, drop
/// unmatched suspect channels. Output has exactly the reference shape.
std::pair<Model, RestoreReport> cutoff_restore(const Model& suspect, const Model& reference);

/// cutoff_restore, then reorder_restore, then scale_restore; restored_rate
/// is the fraction of reference kernels whose restored counterpart reaches
/// 0.9473 cosine similarity.
std::pair<Model, RestoreReport> full_restore(const Model& suspect, const Model& reference);

void save_restore_report(const RestoreReport& report, const std::string& path);
RestoreReport load_restore_report(const std::string& path);

} // namespace hufu
