#include "hufu/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hufu/binary_io.hpp"
#include "hufu/model_io.hpp"

namespace hufu {

namespace {

constexpr std::uint16_t kRecordVersion = 1;
constexpr std::uint8_t kRecordAttack = 2;

std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
    std::vector<std::size_t> perm = identity_permutation(n);
    rng.shuffle(perm);
    return perm;
}

void require_all_relu(const Model& model) {
    for (const ConvLayer& layer : model.conv_layers)
        if (layer.activation != Activation::ReLU)
            fail(ErrorKind::InvalidArgument,
                 "parameter adjustment requires ReLU activations (scaling does not commute otherwise)");
}

} // namespace

TrainConfig finetune_preset() {
    TrainConfig cfg;
    cfg.learning_rate = 1e-3f;
    cfg.weight_decay = 5e-4f;
    cfg.epochs = 10;
    cfg.batch_size = 16;
    cfg.seed = 0x66696E65; // fixed so replays are exact
    return cfg;
}

std::pair<Model, AttackRecord> finetune(const Model& model, const Dataset& data, const TrainConfig& cfg) {
    AttackRecord record;
    record.kind = AttackKind::FineTune;
    record.finetune_config = cfg;
    record.holdout_fraction = 0.2f;
    record.split_seed = cfg.seed ^ 0x73706C69ULL;

    auto [train_part, holdout] = split(data, 1.0f - record.holdout_fraction, record.split_seed);
    (void)holdout;
    if (cfg.epochs == 0) return {model, record};
    auto [tuned, report] = train(model, train_part, cfg, FreezeMask::none_for(model));
    (void)report;
    return {std::move(tuned), record};
}

std::pair<Model, AttackRecord> prune_magnitude(const Model& model, float fraction) {
    if (!(fraction >= 0.0f && fraction <= 1.0f))
        fail(ErrorKind::InvalidArgument, "prune fraction must be in [0, 1]");

    std::vector<float> params = flatten_parameters(model);
    const std::size_t target = static_cast<std::size_t>(
        std::floor(static_cast<double>(fraction) * static_cast<double>(params.size())));

    std::vector<std::size_t> order(params.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::fabs(params[a]) < std::fabs(params[b]);
    });

    AttackRecord record;
    record.kind = AttackKind::Prune;
    record.prune_fraction = fraction;
    for (std::size_t r = 0; r < target; ++r) {
        params[order[r]] = 0.0f;
        record.zeroed.push_back(order[r]);
    }
    std::sort(record.zeroed.begin(), record.zeroed.end());

    Model pruned = model;
    unflatten_parameters(pruned, params);
    return {std::move(pruned), record};
}

std::pair<Model, AttackRecord> structure_adjust(const Model& model, std::uint64_t seed) {
    std::vector<std::size_t> all(model.conv_layers.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return structure_adjust_layers(model, seed, all);
}

std::pair<Model, AttackRecord> structure_adjust_layers(const Model& model, std::uint64_t seed,
                                                       const std::vector<std::size_t>& layers) {
    if (model.conv_layers.empty()) fail(ErrorKind::Structural, "model has no conv layers to shuffle");
    Rng rng(seed ^ 0x7368756666ULL);
    Model adjusted = model;
    AttackRecord record;
    record.kind = AttackKind::StructureAdjust;
    record.permutations.assign(model.conv_layers.size(), {});
    for (std::size_t l = 0; l < model.conv_layers.size(); ++l)
        record.permutations[l] = identity_permutation(model.conv_layers[l].out_channels);
    for (std::size_t l : layers) {
        if (l >= model.conv_layers.size()) fail(ErrorKind::InvalidArgument, "shuffle layer out of range");
        record.permutations[l] = random_permutation(model.conv_layers[l].out_channels, rng);
        permute_output_channels(adjusted, l, record.permutations[l]);
    }
    return {std::move(adjusted), record};
}

std::pair<Model, AttackRecord> parameter_adjust(const Model& model, std::uint64_t seed) {
    std::vector<std::size_t> anchors;
    for (std::size_t l = 0; l + 1 < model.conv_layers.size(); ++l) anchors.push_back(l);
    return parameter_adjust_pairs(model, seed, anchors);
}

std::pair<Model, AttackRecord> parameter_adjust_pairs(const Model& model, std::uint64_t seed,
                                                      const std::vector<std::size_t>& pair_anchors,
                                                      int exponent_range) {
    require_all_relu(model);
    if (model.conv_layers.size() < 2)
        fail(ErrorKind::Structural, "parameter adjustment needs at least two conv layers");
    if (exponent_range < 1 || exponent_range > 18)
        fail(ErrorKind::InvalidArgument, "exponent range must be in [1, 18]");

    Rng rng(seed ^ 0x7363616C65ULL);
    Model adjusted = model;
    AttackRecord record;
    record.kind = AttackKind::ParameterAdjust;
    record.pair_exponents.assign(model.conv_layers.size() - 1, 0);
    for (std::size_t l : pair_anchors) {
        if (l + 1 >= model.conv_layers.size())
            fail(ErrorKind::InvalidArgument, "pair anchor out of range");
        const int n = static_cast<int>(rng.range(-exponent_range, exponent_range));
        record.pair_exponents[l] = n;
        scale_layer_kernels(adjusted, l, n);
        scale_layer_bias(adjusted, l, n);
        scale_layer_kernels(adjusted, l + 1, -n);
    }
    return {std::move(adjusted), record};
}

std::pair<Model, AttackRecord> channel_expand(const Model& model, std::size_t layer, std::size_t k,
                                              ExpandStrategy strategy, std::uint64_t seed) {
    if (layer + 1 >= model.conv_layers.size())
        fail(ErrorKind::InvalidArgument, "channel expansion needs a conv layer pair");
    if (k == 0) fail(ErrorKind::InvalidArgument, "expansion count must be positive");

    const ConvLayer& src = model.conv_layers[layer];
    const ConvLayer& next = model.conv_layers[layer + 1];
    Rng rng(seed ^ 0x657870616EULL);

    AttackRecord record;
    record.kind = AttackKind::ChannelExpand;
    record.layer = layer;
    record.added = k;
    record.strategy = strategy;

    std::vector<NewChannel> channels;
    if (strategy == ExpandStrategy::ZeroB) {
        for (std::size_t j = 0; j < k; ++j) {
            NewChannel nc;
            nc.kernels.resize(src.in_channels);
            for (ConvKernel& kk : nc.kernels)
                for (float& v : kk.values) v = static_cast<float>(rng.normal()) * 0.2f;
            nc.bias = static_cast<float>(rng.normal()) * 0.05f;
            nc.next_columns.assign(next.out_channels, ConvKernel{});
            channels.push_back(std::move(nc));
        }
        record.expansion_channels = channels;
    } else {
        if (k > src.out_channels)
            fail(ErrorKind::InvalidArgument, "duplicate-split cannot add more channels than exist");
        std::vector<std::size_t> sources = identity_permutation(src.out_channels);
        rng.shuffle(sources);
        sources.resize(k);
        record.duplicated_sources = sources;
        record.split_alpha = 0.5f;

        Model working = model;
        for (std::size_t r : sources) {
            NewChannel nc;
            nc.kernels.resize(src.in_channels);
            for (std::size_t i = 0; i < src.in_channels; ++i) nc.kernels[i] = src.kernel(r, i);
            nc.bias = src.bias[r];
            nc.next_columns.resize(next.out_channels);
            for (std::size_t o = 0; o < next.out_channels; ++o) {
                ConvKernel col = next.kernel(o, r);
                for (float& v : col.values) v *= record.split_alpha;
                nc.next_columns[o] = col;
            }
            channels.push_back(std::move(nc));
        }
        record.expansion_channels = channels;
        // shrink the duplicated sources' original consumer columns
        append_output_channels(working, layer, channels);
        ConvLayer& wnext = working.conv_layers[layer + 1];
        for (std::size_t r : sources)
            for (std::size_t o = 0; o < wnext.out_channels; ++o)
                for (float& v : wnext.kernel(o, r).values) v *= 1.0f - record.split_alpha;
        return {std::move(working), record};
    }

    Model expanded = model;
    append_output_channels(expanded, layer, channels);
    return {std::move(expanded), record};
}

std::pair<Model, AttackRecord> kernels_cutoff(const Model& model, std::size_t layer,
                                              const std::vector<std::size_t>& channels) {
    if (layer >= model.conv_layers.size()) fail(ErrorKind::InvalidArgument, "layer index out of range");
    AttackRecord record;
    record.kind = AttackKind::KernelsCutoff;
    record.layer = layer;
    record.cut_channels = channels;
    Model cut = model;
    if (!channels.empty()) remove_output_channels(cut, layer, channels);
    return {std::move(cut), record};
}

std::pair<Model, AttackRecord> kernels_supplement(const Model& model, std::size_t layer,
                                                  std::size_t k, std::uint64_t seed) {
    if (layer >= model.conv_layers.size()) fail(ErrorKind::InvalidArgument, "layer index out of range");
    Rng rng(seed ^ 0x737570706CULL);
    const ConvLayer& src = model.conv_layers[layer];
    const bool feeds_head = layer + 1 == model.conv_layers.size();

    AttackRecord record;
    record.kind = AttackKind::KernelsSupplement;
    record.layer = layer;
    record.added = k;

    std::vector<NewChannel> channels;
    for (std::size_t j = 0; j < k; ++j) {
        NewChannel nc;
        nc.kernels.resize(src.in_channels);
        for (ConvKernel& kk : nc.kernels)
            for (float& v : kk.values) v = static_cast<float>(rng.normal()) * 0.2f;
        nc.bias = static_cast<float>(rng.normal()) * 0.05f;
        if (feeds_head)
            nc.head_columns.assign(model.head.out, 0.0f);
        else
            nc.next_columns.assign(model.conv_layers[layer + 1].out_channels, ConvKernel{});
        channels.push_back(std::move(nc));
    }
    record.expansion_channels = channels;
    Model widened = model;
    append_output_channels(widened, layer, channels);
    return {std::move(widened), record};
}

std::pair<Model, AttackRecord> synthetic_attack(const Model& model, const Dataset& attacker_data,
                                                const SyntheticConfig& cfg) {
    Model current = model;
    AttackRecord record;
    record.kind = AttackKind::Synthetic;

    if (cfg.do_expand) {
        auto [expanded, stage] = channel_expand(current, cfg.expand_layer, cfg.expand_k,
                                                cfg.expand_strategy, cfg.seed);
        current = std::move(expanded);
        record.stages.push_back(std::move(stage));
    }
    if (cfg.do_finetune) {
        auto [tuned, stage] = finetune(current, attacker_data, cfg.finetune_config);
        current = std::move(tuned);
        record.stages.push_back(std::move(stage));
    }
    if (!cfg.shuffle_layers.empty()) {
        auto [shuffled, stage] = structure_adjust_layers(current, cfg.seed ^ 1, cfg.shuffle_layers);
        current = std::move(shuffled);
        record.stages.push_back(std::move(stage));
    }
    if (!cfg.scale_pairs.empty()) {
        auto [scaled, stage] = parameter_adjust_pairs(current, cfg.seed ^ 2, cfg.scale_pairs,
                                                      cfg.scale_exponent_range);
        current = std::move(scaled);
        record.stages.push_back(std::move(stage));
    }
    if (cfg.prune_fraction > 0.0f) {
        auto [pruned, stage] = prune_magnitude(current, cfg.prune_fraction);
        current = std::move(pruned);
        record.stages.push_back(std::move(stage));
    }
    return {std::move(current), record};
}

Model replay_attack(const Model& pre_attack, const AttackRecord& record,
                    const Dataset* attacker_data) {
    switch (record.kind) {
        case AttackKind::FineTune: {
            if (record.finetune_config.epochs == 0) return pre_attack;
            if (attacker_data == nullptr)
                fail(ErrorKind::InvalidArgument, "replaying a fine-tune stage needs the dataset");
            auto [train_part, holdout] =
                split(*attacker_data, 1.0f - record.holdout_fraction, record.split_seed);
            (void)holdout;
            return train(pre_attack, train_part, record.finetune_config,
                         FreezeMask::none_for(pre_attack))
                .first;
        }
        case AttackKind::Prune: {
            Model out = pre_attack;
            std::vector<float> params = flatten_parameters(out);
            for (std::uint64_t z : record.zeroed) {
                if (z >= params.size()) fail(ErrorKind::Structural, "pruned address out of range");
                params[z] = 0.0f;
            }
            unflatten_parameters(out, params);
            return out;
        }
        case AttackKind::StructureAdjust: {
            Model out = pre_attack;
            for (std::size_t l = 0; l < record.permutations.size(); ++l)
                permute_output_channels(out, l, record.permutations[l]);
            return out;
        }
        case AttackKind::ParameterAdjust: {
            Model out = pre_attack;
            for (std::size_t l = 0; l < record.pair_exponents.size(); ++l) {
                const int n = record.pair_exponents[l];
                if (n == 0) continue;
                scale_layer_kernels(out, l, n);
                scale_layer_bias(out, l, n);
                scale_layer_kernels(out, l + 1, -n);
            }
            return out;
        }
        case AttackKind::ChannelExpand: {
            Model out = pre_attack;
            append_output_channels(out, record.layer, record.expansion_channels);
            if (record.strategy == ExpandStrategy::DuplicateSplit) {
                ConvLayer& next = out.conv_layers[record.layer + 1];
                for (std::size_t r : record.duplicated_sources)
                    for (std::size_t o = 0; o < next.out_channels; ++o)
                        for (float& v : next.kernel(o, r).values) v *= 1.0f - record.split_alpha;
            }
            return out;
        }
        case AttackKind::KernelsCutoff: {
            Model out = pre_attack;
            if (!record.cut_channels.empty())
                remove_output_channels(out, record.layer, record.cut_channels);
            return out;
        }
        case AttackKind::KernelsSupplement: {
            Model out = pre_attack;
            append_output_channels(out, record.layer, record.expansion_channels);
            return out;
        }
        case AttackKind::Synthetic: {
            Model out = pre_attack;
            for (const AttackRecord& stage : record.stages)
                out = replay_attack(out, stage, attacker_data);
            return out;
        }
    }
    fail(ErrorKind::InvalidArgument, "unknown attack kind");
}

namespace {

void write_new_channel(ByteWriter& w, const NewChannel& nc) {
    w.u32(static_cast<std::uint32_t>(nc.kernels.size()));
    for (const ConvKernel& k : nc.kernels)
        for (float v : k.values) w.f32(v);
    w.f32(nc.bias);
    w.u32(static_cast<std::uint32_t>(nc.next_columns.size()));
    for (const ConvKernel& k : nc.next_columns)
        for (float v : k.values) w.f32(v);
    w.u32(static_cast<std::uint32_t>(nc.head_columns.size()));
    for (float v : nc.head_columns) w.f32(v);
}

NewChannel read_new_channel(ByteReader& rd) {
    NewChannel nc;
    nc.kernels.resize(rd.u32());
    for (ConvKernel& k : nc.kernels)
        for (float& v : k.values) v = rd.f32();
    nc.bias = rd.f32();
    nc.next_columns.resize(rd.u32());
    for (ConvKernel& k : nc.next_columns)
        for (float& v : k.values) v = rd.f32();
    nc.head_columns.resize(rd.u32());
    for (float& v : nc.head_columns) v = rd.f32();
    return nc;
}

void write_attack_payload(ByteWriter& w, const AttackRecord& r) {
    w.u8(static_cast<std::uint8_t>(r.kind));
    w.f32(r.finetune_config.learning_rate);
    w.u64(r.finetune_config.epochs);
    w.u64(r.finetune_config.batch_size);
    w.f32(r.finetune_config.weight_decay);
    w.u64(r.finetune_config.seed);
    w.f32(r.holdout_fraction);
    w.u64(r.split_seed);
    w.f32(r.prune_fraction);
    w.u64(r.zeroed.size());
    for (std::uint64_t z : r.zeroed) w.u64(z);
    w.u32(static_cast<std::uint32_t>(r.permutations.size()));
    for (const auto& perm : r.permutations) {
        w.u32(static_cast<std::uint32_t>(perm.size()));
        for (std::size_t p : perm) w.u32(static_cast<std::uint32_t>(p));
    }
    w.u32(static_cast<std::uint32_t>(r.pair_exponents.size()));
    for (std::int32_t e : r.pair_exponents) w.i32(e);
    w.u32(static_cast<std::uint32_t>(r.layer));
    w.u32(static_cast<std::uint32_t>(r.added));
    w.u8(static_cast<std::uint8_t>(r.strategy));
    w.u32(static_cast<std::uint32_t>(r.expansion_channels.size()));
    for (const NewChannel& nc : r.expansion_channels) write_new_channel(w, nc);
    w.u32(static_cast<std::uint32_t>(r.duplicated_sources.size()));
    for (std::size_t s : r.duplicated_sources) w.u32(static_cast<std::uint32_t>(s));
    w.f32(r.split_alpha);
    w.u32(static_cast<std::uint32_t>(r.cut_channels.size()));
    for (std::size_t c : r.cut_channels) w.u32(static_cast<std::uint32_t>(c));
    w.u32(static_cast<std::uint32_t>(r.stages.size()));
    for (const AttackRecord& stage : r.stages) write_attack_payload(w, stage);
}

AttackRecord read_attack_payload(ByteReader& rd) {
    AttackRecord r;
    const std::uint8_t kind = rd.u8();
    if (kind < 1 || kind > 8) fail(ErrorKind::Structural, "unknown attack kind code");
    r.kind = static_cast<AttackKind>(kind);
    r.finetune_config.learning_rate = rd.f32();
    r.finetune_config.epochs = rd.u64();
    r.finetune_config.batch_size = rd.u64();
    r.finetune_config.weight_decay = rd.f32();
    r.finetune_config.seed = rd.u64();
    r.holdout_fraction = rd.f32();
    r.split_seed = rd.u64();
    r.prune_fraction = rd.f32();
    r.zeroed.resize(rd.u64());
    for (std::uint64_t& z : r.zeroed) z = rd.u64();
    r.permutations.resize(rd.u32());
    for (auto& perm : r.permutations) {
        perm.resize(rd.u32());
        for (std::size_t& p : perm) p = rd.u32();
    }
    r.pair_exponents.resize(rd.u32());
    for (std::int32_t& e : r.pair_exponents) e = rd.i32();
    r.layer = rd.u32();
    r.added = rd.u32();
    r.strategy = static_cast<ExpandStrategy>(rd.u8());
    r.expansion_channels.resize(rd.u32());
    for (NewChannel& nc : r.expansion_channels) nc = read_new_channel(rd);
    r.duplicated_sources.resize(rd.u32());
    for (std::size_t& s : r.duplicated_sources) s = rd.u32();
    r.split_alpha = rd.f32();
    r.cut_channels.resize(rd.u32());
    for (std::size_t& c : r.cut_channels) c = rd.u32();
    const std::uint32_t stage_count = rd.u32();
    for (std::uint32_t s = 0; s < stage_count; ++s) r.stages.push_back(read_attack_payload(rd));
    return r;
}

} // namespace

void save_attack_record(const AttackRecord& record, const std::string& path) {
    ByteWriter w;
    w.tag("HFRC");
    w.u16(kRecordVersion);
    w.u8(kRecordAttack);
    write_attack_payload(w, record);
    write_file(path, w.buffer());
}

AttackRecord load_attack_record(const std::string& path) {
    const std::vector<std::uint8_t> data = read_file(path);
    ByteReader rd(data);
    if (!rd.expect_tag("HFRC")) fail(ErrorKind::BadMagic, "bad magic: not a record file");
    if (rd.u16() != kRecordVersion) fail(ErrorKind::UnsupportedVersion, "unsupported record version");
    if (rd.u8() != kRecordAttack) fail(ErrorKind::Structural, "record type mismatch");
    AttackRecord record = read_attack_payload(rd);
    if (!rd.done()) fail(ErrorKind::Structural, "trailing bytes after attack record");
    return record;
}

} // namespace hufu
