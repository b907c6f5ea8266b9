#pragma once

#include <cstdint>
#include <vector>

#include "hufu/dataset.hpp"
#include "hufu/nn.hpp"
#include "hufu/watermark.hpp"

namespace hufu {

struct MatchReport {
    float range_pct = 0.0f;
    float small_value_cutoff = 0.0f;
    float found_fraction = 0.0f;
    float forged_combined_accuracy = 0.0f;
};

/// Forgery simulation: for each kernel of a forged carrier, scan the host
/// for a kernel whose every parameter above the cutoff lies within
/// +-range_pct of the forged value, positionally. The forged carrier is
/// rebuilt from the best matches and scored on the public test set.
/// A negative cutoff selects the default: the 10th-percentile magnitude of
/// the forged piece's parameters.
MatchReport match_search(const Model& host, const HufuNet& forged, const Dataset& d_s_test,
                         float range_pct, float small_value_cutoff = -1.0f);

struct KeySearchReport {
    std::size_t keys_tried = 0;
    Digest best_key_hash{};
    std::size_t max_satisfying_kernels = 0;
};

/// Number of host kernels sitting exactly where the keyed position hash
/// puts them for some claimed index in 1..max_index.
std::size_t correlation_count(const Model& host, const EmbeddingKey& key, std::size_t max_index);

/// Tries `trial_keys` random keys and reports the best correlation count.
/// max_index is the per-kernel index budget granted to the adversary; 1
/// reproduces the one-test-per-kernel statistics of a blind key search.
KeySearchReport correlation_key_search(const Model& host, std::size_t trial_keys,
                                       std::uint64_t seed, std::size_t max_index = 1);

/// L1 distance between normalized parameter-value histograms binned over
/// the two models' shared value range. 0 for identical models, 2 for
/// disjoint distributions.
float param_histogram_distance(const Model& a, const Model& b, std::size_t bins);

/// Same distance over per-parameter mean loss gradients on a dataset.
float gradient_histogram_distance(const Model& a, const Model& b, const Dataset& data,
                                  std::size_t bins);

} // namespace hufu
