#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hufu/dataset.hpp"
#include "hufu/nn.hpp"
#include "hufu/surgery.hpp"

namespace hufu {

enum class AttackKind : std::uint8_t {
    FineTune = 1,
    Prune = 2,
    StructureAdjust = 3,
    ParameterAdjust = 4,
    ChannelExpand = 5,
    KernelsCutoff = 6,
    KernelsSupplement = 7,
    Synthetic = 8,
};

enum class ExpandStrategy : std::uint8_t {
    ZeroB = 0,          // random new channels, all-zero consumer columns
    DuplicateSplit = 1, // copy an existing channel, split its consumer column
};

/// Ground truth of an applied transform; enough to verify or invert it on
/// a copy of the pre-attack model.
struct AttackRecord {
    AttackKind kind = AttackKind::FineTune;

    // fine-tune
    TrainConfig finetune_config;
    float holdout_fraction = 0.2f;
    std::uint64_t split_seed = 0;

    // prune
    float prune_fraction = 0.0f;
    std::vector<std::uint64_t> zeroed; // canonical parameter indices

    // structure adjustment: gather per layer, attacked[o] = original[perm[o]]
    std::vector<std::vector<std::size_t>> permutations;

    // parameter adjustment: exponent for each consecutive layer pair
    std::vector<std::int32_t> pair_exponents;

    // channel expansion / supplement; the appended channel values are part
    // of the record so the transform replays without the original seed
    std::size_t layer = 0;
    std::size_t added = 0;
    ExpandStrategy strategy = ExpandStrategy::ZeroB;
    std::vector<NewChannel> expansion_channels;
    std::vector<std::size_t> duplicated_sources;
    float split_alpha = 0.5f;

    // kernels cutoff
    std::vector<std::size_t> cut_channels;

    // synthetic
    std::vector<AttackRecord> stages;
};

TrainConfig finetune_preset();

/// Plain SGD over all parameters on 80% of the attacker-held data.
std::pair<Model, AttackRecord> finetune(const Model& model, const Dataset& data, const TrainConfig& cfg);

/// Zeroes the floor(fraction * P) smallest-magnitude parameters across the
/// whole model; ties break by canonical parameter order.
std::pair<Model, AttackRecord> prune_magnitude(const Model& model, float fraction);

/// Seeded random permutation of every layer's output channels with the
/// compensating input-side reorder (function preserved up to reassociation).
std::pair<Model, AttackRecord> structure_adjust(const Model& model, std::uint64_t seed);
std::pair<Model, AttackRecord> structure_adjust_layers(const Model& model, std::uint64_t seed,
                                                       const std::vector<std::size_t>& layers);

/// Power-of-two rescaling of consecutive ReLU layer pairs; logits are
/// bit-identical to the pre-attack model.
std::pair<Model, AttackRecord> parameter_adjust(const Model& model, std::uint64_t seed);
std::pair<Model, AttackRecord> parameter_adjust_pairs(const Model& model, std::uint64_t seed,
                                                      const std::vector<std::size_t>& pair_anchors,
                                                      int exponent_range = 18);

/// Appends k output channels to `layer` and matching input columns to its
/// consumer so the network function is preserved under ReLU.
std::pair<Model, AttackRecord> channel_expand(const Model& model, std::size_t layer, std::size_t k,
                                              ExpandStrategy strategy, std::uint64_t seed);

std::pair<Model, AttackRecord> kernels_cutoff(const Model& model, std::size_t layer,
                                              const std::vector<std::size_t>& channels);

/// Appends k random channels wired with zero consumer columns.
std::pair<Model, AttackRecord> kernels_supplement(const Model& model, std::size_t layer,
                                                  std::size_t k, std::uint64_t seed);

struct SyntheticConfig {
    bool do_expand = false;
    std::size_t expand_layer = 0;
    std::size_t expand_k = 0;
    ExpandStrategy expand_strategy = ExpandStrategy::ZeroB;

    bool do_finetune = false;
    TrainConfig finetune_config;

    std::vector<std::size_t> shuffle_layers;
    std::vector<std::size_t> scale_pairs; // anchors of consecutive layer pairs
    // pruning after scaling would otherwise zero whole down-scaled layers,
    // so the staged attacker keeps its exponents modest
    int scale_exponent_range = 3;

    float prune_fraction = 0.0f;
    std::uint64_t seed = 0;
};

/// Staged composition: channel expansion, fine-tuning, structure and/or
/// parameter adjustment on selected layers, then magnitude pruning.
std::pair<Model, AttackRecord> synthetic_attack(const Model& model, const Dataset& attacker_data,
                                                const SyntheticConfig& cfg);

/// Re-applies a recorded transform to a copy of the pre-attack model; for
/// every attack kind the result is bit-identical to the original attack.
/// `attacker_data` is needed only to replay fine-tuning stages.
Model replay_attack(const Model& pre_attack, const AttackRecord& record,
                    const Dataset* attacker_data = nullptr);

void save_attack_record(const AttackRecord& record, const std::string& path);
AttackRecord load_attack_record(const std::string& path);

} // namespace hufu
