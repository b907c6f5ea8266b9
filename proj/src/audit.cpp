#include "hufu/audit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hufu/model_io.hpp"

namespace hufu {

namespace {

// max relative deviation over the positions that clear the cutoff;
// +inf when some such position is outside the range
double kernel_deviation(const ConvKernel& forged, const ConvKernel& host,
                        float cutoff, float range_pct) {
    double worst = 0.0;
    for (std::size_t t = 0; t < 9; ++t) {
        const float f = forged.values[t];
        if (std::fabs(f) <= cutoff) continue;
        const double rel = std::fabs(static_cast<double>(host.values[t]) - f) / std::fabs(f);
        if (rel > range_pct) return std::numeric_limits<double>::infinity();
        worst = std::max(worst, rel);
    }
    return worst;
}

std::vector<float> flatten_gradients(const Gradients& g) {
    std::vector<float> out;
    for (const auto& v : g.kernel) out.insert(out.end(), v.begin(), v.end());
    for (const auto& v : g.conv_bias) out.insert(out.end(), v.begin(), v.end());
    out.insert(out.end(), g.dense_w.begin(), g.dense_w.end());
    out.insert(out.end(), g.dense_b.begin(), g.dense_b.end());
    return out;
}

float histogram_l1(const std::vector<float>& a, const std::vector<float>& b, std::size_t bins) {
    if (bins < 2) fail(ErrorKind::InvalidArgument, "need at least two histogram bins");
    if (a.empty() || b.empty()) fail(ErrorKind::InvalidArgument, "empty value set for histogram");

    float lo = a[0], hi = a[0];
    for (float v : a) { lo = std::min(lo, v); hi = std::max(hi, v); }
    for (float v : b) { lo = std::min(lo, v); hi = std::max(hi, v); }
    if (lo == hi) return 0.0f; // all mass in one bin for both

    const double width = (static_cast<double>(hi) - lo) / static_cast<double>(bins);
    auto histogram = [&](const std::vector<float>& values) {
        std::vector<double> h(bins, 0.0);
        for (float v : values) {
            std::size_t idx = static_cast<std::size_t>((static_cast<double>(v) - lo) / width);
            if (idx >= bins) idx = bins - 1;
            h[idx] += 1.0;
        }
        for (double& x : h) x /= static_cast<double>(values.size());
        return h;
    };
    const std::vector<double> ha = histogram(a), hb = histogram(b);
    double dist = 0.0;
    for (std::size_t i = 0; i < bins; ++i) dist += std::fabs(ha[i] - hb[i]);
    return static_cast<float>(dist);
}

std::vector<float> mean_gradients(const Model& model, const Dataset& data) {
    if (data.size() == 0) fail(ErrorKind::EmptyDataset, "gradient histogram needs data");
    Gradients acc = Gradients::zeros_like(model);
    for (std::size_t s = 0; s < data.size(); ++s)
        acc.accumulate(backward(model, data.images[s], data.labels[s]), 1.0f);
    acc.scale(1.0f / static_cast<float>(data.size()));
    return flatten_gradients(acc);
}

} // namespace

MatchReport match_search(const Model& host, const HufuNet& forged, const Dataset& d_s_test,
                         float range_pct, float small_value_cutoff) {
    if (range_pct <= 0.0f) fail(ErrorKind::InvalidArgument, "match range must be positive");
    auto [eph, sph] = split_carrier(forged);

    float cutoff = small_value_cutoff;
    if (cutoff < 0.0f) {
        std::vector<float> mags;
        for (const ConvKernel& k : eph.kernels)
            for (float v : k.values) mags.push_back(std::fabs(v));
        std::sort(mags.begin(), mags.end());
        cutoff = mags[static_cast<std::size_t>(0.10 * static_cast<double>(mags.size() - 1))];
    }

    const std::size_t host_count = host.conv_kernel_count();
    EPH rebuilt = eph;
    std::size_t found = 0;
    for (std::size_t i = 0; i < eph.count(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_pos = 0;
        for (std::size_t p = 0; p < host_count; ++p) {
            const double dev = kernel_deviation(eph.kernels[i], kernel_ref(host, p), cutoff, range_pct);
            if (dev < best) {
                best = dev;
                best_pos = p;
            }
        }
        if (std::isfinite(best)) {
            ++found;
            rebuilt.kernels[i] = kernel_ref(host, best_pos);
        }
    }

    MatchReport report;
    report.range_pct = range_pct;
    report.small_value_cutoff = cutoff;
    report.found_fraction = static_cast<float>(found) / static_cast<float>(eph.count());
    report.forged_combined_accuracy = evaluate(combine(rebuilt, sph), d_s_test);
    return report;
}

std::size_t correlation_count(const Model& host, const EmbeddingKey& key, std::size_t max_index) {
    if (max_index == 0) fail(ErrorKind::InvalidArgument, "index budget must be positive");
    const std::uint64_t host_count = host.conv_kernel_count();
    std::size_t count = 0;
    for (std::uint64_t p = 0; p < host_count; ++p) {
        const ConvKernel& k = kernel_ref(host, p);
        for (std::uint64_t i = 1; i <= max_index; ++i) {
            if (compute_position(k, i, key, host_count) == p) {
                ++count;
                break;
            }
        }
    }
    return count;
}

KeySearchReport correlation_key_search(const Model& host, std::size_t trial_keys,
                                       std::uint64_t seed, std::size_t max_index) {
    if (trial_keys == 0) fail(ErrorKind::InvalidArgument, "need at least one trial key");
    Rng rng(seed ^ 0x6B657973656172ULL);
    KeySearchReport report;
    report.keys_tried = trial_keys;
    for (std::size_t t = 0; t < trial_keys; ++t) {
        EmbeddingKey key;
        for (auto& b : key.bytes) b = static_cast<std::uint8_t>(rng.next() >> 56);
        const std::size_t count = correlation_count(host, key, max_index);
        if (t == 0 || count > report.max_satisfying_kernels) {
            report.max_satisfying_kernels = count;
            report.best_key_hash = key_id(key);
        }
    }
    return report;
}

float param_histogram_distance(const Model& a, const Model& b, std::size_t bins) {
    return histogram_l1(flatten_parameters(a), flatten_parameters(b), bins);
}

float gradient_histogram_distance(const Model& a, const Model& b, const Dataset& data,
                                  std::size_t bins) {
    return histogram_l1(mean_gradients(a, data), mean_gradients(b, data), bins);
}

} // namespace hufu
