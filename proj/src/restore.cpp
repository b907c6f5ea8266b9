#include "hufu/restore.hpp"

#include <algorithm>
#include <cmath>

#include "hufu/binary_io.hpp"
#include "hufu/model_io.hpp"
#include "hufu/numeric.hpp"
#include "hufu/surgery.hpp"

namespace hufu {

namespace {

constexpr std::uint16_t kRecordVersion = 1;
constexpr std::uint8_t kRecordRestore = 5;
constexpr float kCutoffSimilarity = 0.85f;
constexpr float kRestoredSimilarity = 0.9473f;
constexpr double kSingularFloor = 1e-12;

double cosine_d(const float* a, const float* b, std::size_t n) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

void require_same_layer_count(const Model& suspect, const Model& reference) {
    if (suspect.conv_layers.size() != reference.conv_layers.size())
        fail(ErrorKind::Structural, "suspect and reference disagree on conv layer count");
}

// Matching vectors hold kernel values only: a functionality-equivalent
// rescaling multiplies a channel's kernels by one factor but its bias by a
// different one, and cosine similarity survives only the uniform part.
// Input channels listed in `skip_inputs` are excluded; they are the
// zero-filled slots of the previous layer, where the suspect carries no
// information.
std::vector<float> matching_vector(const Model& model, std::size_t layer, std::size_t channel,
                                   const std::vector<std::uint8_t>& skip_inputs) {
    const ConvLayer& l = model.conv_layers[layer];
    std::vector<float> v;
    v.reserve(l.in_channels * 9);
    for (std::size_t i = 0; i < l.in_channels; ++i) {
        if (i < skip_inputs.size() && skip_inputs[i]) continue;
        const ConvKernel& k = l.kernel(channel, i);
        v.insert(v.end(), k.values.begin(), k.values.end());
    }
    return v;
}

// similarity matrix rows = reference channels, cols = suspect channels
std::vector<double> channel_similarity(const Model& reference, const Model& suspect, std::size_t layer,
                                       const std::vector<std::uint8_t>& skip_inputs = {}) {
    const std::size_t rows = reference.conv_layers[layer].out_channels;
    const std::size_t cols = suspect.conv_layers[layer].out_channels;
    std::vector<double> sim(rows * cols);
    std::vector<std::vector<float>> ref_vec(rows), sus_vec(cols);
    for (std::size_t r = 0; r < rows; ++r) ref_vec[r] = matching_vector(reference, layer, r, skip_inputs);
    for (std::size_t s = 0; s < cols; ++s) sus_vec[s] = matching_vector(suspect, layer, s, skip_inputs);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t s = 0; s < cols; ++s)
            sim[r * cols + s] = cosine_d(ref_vec[r].data(), sus_vec[s].data(), ref_vec[r].size());
    return sim;
}

float kernel_cosine(const ConvKernel& a, const ConvKernel& b) {
    return static_cast<float>(cosine_d(a.values.data(), b.values.data(), 9));
}

} // namespace

float cosine_similarity(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size()) fail(ErrorKind::ShapeMismatch, "cosine similarity needs equal lengths");
    return static_cast<float>(cosine_d(a.data(), b.data(), a.size()));
}

std::pair<Model, RestoreReport> reorder_restore(const Model& suspect, const Model& reference) {
    require_same_layer_count(suspect, reference);
    for (std::size_t l = 0; l < suspect.conv_layers.size(); ++l) {
        if (suspect.conv_layers[l].out_channels != reference.conv_layers[l].out_channels ||
            suspect.conv_layers[l].in_channels != reference.conv_layers[l].in_channels)
            fail(ErrorKind::Structural,
                 "channel counts differ on layer " + std::to_string(l) + "; run cutoff restore first");
    }

    Model restored = suspect;
    RestoreReport report;
    for (std::size_t l = 0; l < restored.conv_layers.size(); ++l) {
        const std::size_t m = reference.conv_layers[l].out_channels;
        const std::vector<double> sim = channel_similarity(reference, restored, l);
        const std::vector<std::size_t> gather = assignment_max(sim, m, m);
        permute_output_channels(restored, l, gather);
        report.permutations.push_back(gather);
    }
    return {std::move(restored), report};
}

std::pair<Model, RestoreReport> scale_restore(const Model& suspect, const Model& reference) {
    require_same_layer_count(suspect, reference);
    Model restored = suspect;
    RestoreReport report;

    std::size_t flat = 0;
    double bias_divisor = 1.0;
    for (std::size_t l = 0; l < restored.conv_layers.size(); ++l) {
        ConvLayer& layer = restored.conv_layers[l];
        const ConvLayer& ref_layer = reference.conv_layers[l];
        if (layer.kernels.size() != ref_layer.kernels.size())
            fail(ErrorKind::Structural, "kernel counts differ; run cutoff restore first");

        std::vector<double> layer_factors;
        layer_factors.reserve(layer.kernels.size());
        for (std::size_t ki = 0; ki < layer.kernels.size(); ++ki, ++flat) {
            const std::array<double, 3> sv_sus = svd3_singular_values(layer.kernels[ki].values);
            const std::array<double, 3> sv_ref = svd3_singular_values(ref_layer.kernels[ki].values);
            double sum = 0.0;
            int used = 0;
            for (int j = 0; j < 3; ++j) {
                if (sv_ref[static_cast<std::size_t>(j)] < kSingularFloor) continue;
                sum += sv_sus[static_cast<std::size_t>(j)] / sv_ref[static_cast<std::size_t>(j)];
                ++used;
            }
            double factor = 1.0;
            if (used == 0) {
                report.scale_skipped.push_back(flat);
            } else {
                factor = sum / used;
                if (factor == 0.0 || !std::isfinite(factor)) {
                    factor = 1.0;
                    report.scale_skipped.push_back(flat);
                }
            }
            for (float& v : layer.kernels[ki].values)
                v = static_cast<float>(static_cast<double>(v) / factor);
            report.kernel_scale_factors.push_back(static_cast<float>(factor));
            layer_factors.push_back(factor);
        }

        // bias follows the layer's cumulative output scale: the product of
        // per-layer median kernel factors up to this layer
        std::vector<double> sorted = layer_factors;
        std::sort(sorted.begin(), sorted.end());
        const double median = sorted.empty() ? 1.0 : sorted[(sorted.size() - 1) / 2];
        bias_divisor *= median;
        for (float& b : layer.bias) b = static_cast<float>(static_cast<double>(b) / bias_divisor);
    }
    return {std::move(restored), report};
}

std::pair<Model, RestoreReport> cutoff_restore(const Model& suspect, const Model& reference) {
    require_same_layer_count(suspect, reference);

    // working copy whose already-processed layers have the reference shape
    Model working = suspect;
    RestoreReport report;

    // input channels of the current layer that were zero-filled one layer
    // back and must not vote in the similarity
    std::vector<std::uint8_t> missing_inputs;

    for (std::size_t l = 0; l < working.conv_layers.size(); ++l) {
        const std::size_t m_ref = reference.conv_layers[l].out_channels;
        const std::size_t m_sus = working.conv_layers[l].out_channels;
        if (working.conv_layers[l].in_channels != reference.conv_layers[l].in_channels)
            fail(ErrorKind::Structural, "input channel propagation out of sync");

        const std::vector<double> sim = channel_similarity(reference, working, l, missing_inputs);

        // matched[r] = suspect channel for reference slot r, or npos
        constexpr std::size_t npos = static_cast<std::size_t>(-1);
        std::vector<std::size_t> matched(m_ref, npos);
        if (m_ref <= m_sus) {
            const std::vector<std::size_t> gather = assignment_max(sim, m_ref, m_sus);
            for (std::size_t r = 0; r < m_ref; ++r) matched[r] = gather[r];
        } else {
            // fewer suspect channels: assign each of them a reference slot
            std::vector<double> tr(m_sus * m_ref);
            for (std::size_t s = 0; s < m_sus; ++s)
                for (std::size_t r = 0; r < m_ref; ++r) tr[s * m_ref + r] = sim[r * m_sus + s];
            const std::vector<std::size_t> to_ref = assignment_max(tr, m_sus, m_ref);
            for (std::size_t s = 0; s < m_sus; ++s) matched[to_ref[s]] = s;
        }
        for (std::size_t r = 0; r < m_ref; ++r) {
            if (matched[r] == npos) continue;
            if (sim[r * m_sus + matched[r]] < kCutoffSimilarity) matched[r] = npos; // treated as cut off
        }

        std::vector<std::uint8_t> used(m_sus, 0);
        for (std::size_t r = 0; r < m_ref; ++r)
            if (matched[r] != npos) used[matched[r]] = 1;
        for (std::size_t s = 0; s < m_sus; ++s)
            if (!used[s]) report.removed.emplace_back(l, s);

        // rebuild the layer in reference shape
        const ConvLayer& cur = working.conv_layers[l];
        ConvLayer rebuilt;
        rebuilt.activation = cur.activation;
        rebuilt.in_channels = cur.in_channels;
        rebuilt.out_channels = m_ref;
        rebuilt.bias.assign(m_ref, 0.0f);
        rebuilt.kernels.assign(m_ref * cur.in_channels, ConvKernel{});
        std::vector<std::size_t> gather(m_ref, npos);
        std::vector<std::uint8_t> zero_slots(m_ref, 0);
        for (std::size_t r = 0; r < m_ref; ++r) {
            gather[r] = matched[r];
            if (matched[r] == npos) {
                report.zero_filled.emplace_back(l, r);
                zero_slots[r] = 1;
                continue;
            }
            rebuilt.bias[r] = cur.bias[matched[r]];
            for (std::size_t i = 0; i < cur.in_channels; ++i)
                rebuilt.kernels[r * cur.in_channels + i] = cur.kernel(matched[r], i);
        }
        report.permutations.push_back(gather);

        // propagate to the consumer's input side
        const bool feeds_head = l + 1 == working.conv_layers.size();
        if (!feeds_head) {
            const ConvLayer& next = working.conv_layers[l + 1];
            ConvLayer next_rebuilt;
            next_rebuilt.activation = next.activation;
            next_rebuilt.out_channels = next.out_channels;
            next_rebuilt.in_channels = m_ref;
            next_rebuilt.bias = next.bias;
            next_rebuilt.kernels.assign(next.out_channels * m_ref, ConvKernel{});
            for (std::size_t o = 0; o < next.out_channels; ++o)
                for (std::size_t r = 0; r < m_ref; ++r)
                    if (matched[r] != npos)
                        next_rebuilt.kernels[o * m_ref + r] = next.kernel(o, matched[r]);
            working.conv_layers[l + 1] = std::move(next_rebuilt);
        } else {
            DenseLayer& head = working.head;
            DenseLayer head_rebuilt = head;
            head_rebuilt.in = m_ref;
            head_rebuilt.weights.assign(head.out * m_ref, 0.0f);
            for (std::size_t o = 0; o < head.out; ++o)
                for (std::size_t r = 0; r < m_ref; ++r)
                    if (matched[r] != npos)
                        head_rebuilt.weights[o * m_ref + r] = head.weights[o * head.in + matched[r]];
            head = std::move(head_rebuilt);
        }
        working.conv_layers[l] = std::move(rebuilt);
        missing_inputs = std::move(zero_slots);
    }
    working.validate();
    return {std::move(working), report};
}

std::pair<Model, RestoreReport> full_restore(const Model& suspect, const Model& reference) {
    auto [shaped, cut_report] = cutoff_restore(suspect, reference);
    auto [ordered, order_report] = reorder_restore(shaped, reference);
    auto [scaled, scale_report] = scale_restore(ordered, reference);

    RestoreReport report;
    report.permutations = order_report.permutations;
    report.kernel_scale_factors = scale_report.kernel_scale_factors;
    report.scale_skipped = scale_report.scale_skipped;
    report.zero_filled = cut_report.zero_filled;
    report.removed = cut_report.removed;

    std::size_t restored = 0, total = 0;
    for (std::size_t l = 0; l < reference.conv_layers.size(); ++l) {
        const ConvLayer& ref_layer = reference.conv_layers[l];
        const ConvLayer& out_layer = scaled.conv_layers[l];
        for (std::size_t ki = 0; ki < ref_layer.kernels.size(); ++ki, ++total)
            if (kernel_cosine(out_layer.kernels[ki], ref_layer.kernels[ki]) >= kRestoredSimilarity)
                ++restored;
    }
    report.restored_rate = total == 0 ? 1.0f : static_cast<float>(restored) / static_cast<float>(total);
    return {std::move(scaled), report};
}

void save_restore_report(const RestoreReport& report, const std::string& path) {
    ByteWriter w;
    w.tag("HFRC");
    w.u16(kRecordVersion);
    w.u8(kRecordRestore);
    w.u32(static_cast<std::uint32_t>(report.permutations.size()));
    for (const auto& perm : report.permutations) {
        w.u32(static_cast<std::uint32_t>(perm.size()));
        for (std::size_t p : perm) w.u64(p == static_cast<std::size_t>(-1) ? ~std::uint64_t{0} : p);
    }
    w.u64(report.kernel_scale_factors.size());
    for (float f : report.kernel_scale_factors) w.f32(f);
    w.u64(report.scale_skipped.size());
    for (std::size_t s : report.scale_skipped) w.u64(s);
    w.u64(report.zero_filled.size());
    for (auto [l, c] : report.zero_filled) {
        w.u32(static_cast<std::uint32_t>(l));
        w.u32(static_cast<std::uint32_t>(c));
    }
    w.u64(report.removed.size());
    for (auto [l, c] : report.removed) {
        w.u32(static_cast<std::uint32_t>(l));
        w.u32(static_cast<std::uint32_t>(c));
    }
    w.f32(report.restored_rate);
    write_file(path, w.buffer());
}

RestoreReport load_restore_report(const std::string& path) {
    const std::vector<std::uint8_t> data = read_file(path);
    ByteReader r(data);
    if (!r.expect_tag("HFRC")) fail(ErrorKind::BadMagic, "bad magic: not a record file");
    if (r.u16() != kRecordVersion) fail(ErrorKind::UnsupportedVersion, "unsupported record version");
    if (r.u8() != kRecordRestore) fail(ErrorKind::Structural, "record type mismatch");
    RestoreReport report;
    report.permutations.resize(r.u32());
    for (auto& perm : report.permutations) {
        perm.resize(r.u32());
        for (std::size_t& p : perm) {
            const std::uint64_t v = r.u64();
            p = v == ~std::uint64_t{0} ? static_cast<std::size_t>(-1) : static_cast<std::size_t>(v);
        }
    }
    report.kernel_scale_factors.resize(r.u64());
    for (float& f : report.kernel_scale_factors) f = r.f32();
    report.scale_skipped.resize(r.u64());
    for (std::size_t& s : report.scale_skipped) s = r.u64();
    report.zero_filled.resize(r.u64());
    for (auto& [l, c] : report.zero_filled) {
        l = r.u32();
        c = r.u32();
    }
    report.removed.resize(r.u64());
    for (auto& [l, c] : report.removed) {
        l = r.u32();
        c = r.u32();
    }
    report.restored_rate = r.f32();
    if (!r.done()) fail(ErrorKind::Structural, "trailing bytes after restore report");
    return report;
}

} // namespace hufu
