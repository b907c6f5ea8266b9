#include "hufu/surgery.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hufu {

namespace {

bool is_permutation_of(const std::vector<std::size_t>& perm, std::size_t n) {
    if (perm.size() != n) return false;
    std::vector<std::uint8_t> seen(n, 0);
    for (std::size_t p : perm) {
        if (p >= n || seen[p]) return false;
        seen[p] = 1;
    }
    return true;
}

} // namespace

std::vector<std::size_t> identity_permutation(std::size_t n) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    return perm;
}

std::vector<std::size_t> invert_permutation(const std::vector<std::size_t>& perm) {
    std::vector<std::size_t> inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
    return inv;
}

void permute_output_channels(Model& model, std::size_t layer, const std::vector<std::size_t>& gather) {
    if (layer >= model.conv_layers.size()) fail(ErrorKind::InvalidArgument, "layer index out of range");
    ConvLayer& l = model.conv_layers[layer];
    if (!is_permutation_of(gather, l.out_channels))
        fail(ErrorKind::InvalidArgument, "not a permutation of the layer's output channels");

    ConvLayer reordered = l;
    for (std::size_t o = 0; o < l.out_channels; ++o) {
        reordered.bias[o] = l.bias[gather[o]];
        for (std::size_t i = 0; i < l.in_channels; ++i)
            reordered.kernel(o, i) = l.kernel(gather[o], i);
    }
    l = std::move(reordered);

    if (layer + 1 < model.conv_layers.size()) {
        ConvLayer& next = model.conv_layers[layer + 1];
        ConvLayer shuffled = next;
        for (std::size_t o = 0; o < next.out_channels; ++o)
            for (std::size_t i = 0; i < next.in_channels; ++i)
                shuffled.kernel(o, i) = next.kernel(o, gather[i]);
        next = std::move(shuffled);
    } else {
        DenseLayer& head = model.head;
        DenseLayer shuffled = head;
        for (std::size_t o = 0; o < head.out; ++o)
            for (std::size_t i = 0; i < head.in; ++i)
                shuffled.weights[o * head.in + i] = head.weights[o * head.in + gather[i]];
        head = std::move(shuffled);
    }
}

std::vector<float> channel_vector(const Model& model, std::size_t layer, std::size_t channel) {
    const ConvLayer& l = model.conv_layers[layer];
    std::vector<float> v;
    v.reserve(l.in_channels * 9 + 1);
    for (std::size_t i = 0; i < l.in_channels; ++i) {
        const ConvKernel& k = l.kernel(channel, i);
        v.insert(v.end(), k.values.begin(), k.values.end());
    }
    v.push_back(l.bias[channel]);
    return v;
}

void remove_output_channels(Model& model, std::size_t layer, const std::vector<std::size_t>& channels) {
    if (layer >= model.conv_layers.size()) fail(ErrorKind::InvalidArgument, "layer index out of range");
    ConvLayer& l = model.conv_layers[layer];
    std::vector<std::uint8_t> drop(l.out_channels, 0);
    for (std::size_t c : channels) {
        if (c >= l.out_channels) fail(ErrorKind::InvalidArgument, "channel index out of range");
        drop[c] = 1;
    }
    const std::size_t keep = l.out_channels - channels.size();
    if (keep == 0) fail(ErrorKind::InvalidArgument, "cannot remove every channel of a layer");

    ConvLayer trimmed;
    trimmed.activation = l.activation;
    trimmed.in_channels = l.in_channels;
    trimmed.out_channels = keep;
    for (std::size_t o = 0; o < l.out_channels; ++o) {
        if (drop[o]) continue;
        trimmed.bias.push_back(l.bias[o]);
        for (std::size_t i = 0; i < l.in_channels; ++i) trimmed.kernels.push_back(l.kernel(o, i));
    }
    l = std::move(trimmed);

    if (layer + 1 < model.conv_layers.size()) {
        ConvLayer& next = model.conv_layers[layer + 1];
        ConvLayer trimmed_next;
        trimmed_next.activation = next.activation;
        trimmed_next.out_channels = next.out_channels;
        trimmed_next.in_channels = keep;
        trimmed_next.bias = next.bias;
        for (std::size_t o = 0; o < next.out_channels; ++o)
            for (std::size_t i = 0; i < next.in_channels; ++i)
                if (!drop[i]) trimmed_next.kernels.push_back(next.kernel(o, i));
        next = std::move(trimmed_next);
    } else {
        DenseLayer& head = model.head;
        DenseLayer trimmed_head = head;
        trimmed_head.in = keep;
        trimmed_head.weights.clear();
        for (std::size_t o = 0; o < head.out; ++o)
            for (std::size_t i = 0; i < head.in; ++i)
                if (!drop[i]) trimmed_head.weights.push_back(head.weights[o * head.in + i]);
        head = std::move(trimmed_head);
    }
}

void append_output_channels(Model& model, std::size_t layer, const std::vector<NewChannel>& channels) {
    if (layer >= model.conv_layers.size()) fail(ErrorKind::InvalidArgument, "layer index out of range");
    if (channels.empty()) return;
    ConvLayer& l = model.conv_layers[layer];
    const bool feeds_head = layer + 1 == model.conv_layers.size();

    for (const NewChannel& nc : channels) {
        if (nc.kernels.size() != l.in_channels)
            fail(ErrorKind::InvalidArgument, "new channel kernel count must match layer input channels");
        if (feeds_head ? nc.head_columns.size() != model.head.out
                       : nc.next_columns.size() != model.conv_layers[layer + 1].out_channels)
            fail(ErrorKind::InvalidArgument, "new channel consumer column size mismatch");
    }

    ConvLayer widened = l;
    widened.out_channels = l.out_channels + channels.size();
    for (const NewChannel& nc : channels) {
        widened.kernels.insert(widened.kernels.end(), nc.kernels.begin(), nc.kernels.end());
        widened.bias.push_back(nc.bias);
    }
    l = std::move(widened);

    if (!feeds_head) {
        ConvLayer& next = model.conv_layers[layer + 1];
        ConvLayer widened_next;
        widened_next.activation = next.activation;
        widened_next.out_channels = next.out_channels;
        widened_next.in_channels = next.in_channels + channels.size();
        widened_next.bias = next.bias;
        for (std::size_t o = 0; o < next.out_channels; ++o) {
            for (std::size_t i = 0; i < next.in_channels; ++i)
                widened_next.kernels.push_back(next.kernel(o, i));
            for (const NewChannel& nc : channels) widened_next.kernels.push_back(nc.next_columns[o]);
        }
        next = std::move(widened_next);
    } else {
        DenseLayer& head = model.head;
        DenseLayer widened_head = head;
        widened_head.in = head.in + channels.size();
        widened_head.weights.clear();
        for (std::size_t o = 0; o < head.out; ++o) {
            for (std::size_t i = 0; i < head.in; ++i)
                widened_head.weights.push_back(head.weights[o * head.in + i]);
            for (const NewChannel& nc : channels) widened_head.weights.push_back(nc.head_columns[o]);
        }
        head = std::move(widened_head);
    }
}

void scale_layer_kernels(Model& model, std::size_t layer, int exponent) {
    if (layer >= model.conv_layers.size()) fail(ErrorKind::InvalidArgument, "layer index out of range");
    for (ConvKernel& k : model.conv_layers[layer].kernels)
        for (float& v : k.values) v = std::ldexp(v, exponent);
}

void scale_layer_bias(Model& model, std::size_t layer, int exponent) {
    if (layer >= model.conv_layers.size()) fail(ErrorKind::InvalidArgument, "layer index out of range");
    for (float& b : model.conv_layers[layer].bias) b = std::ldexp(b, exponent);
}

} // namespace hufu
