#pragma once

#include <cstdint>
#include <vector>

#include "hufu/nn.hpp"

namespace hufu {

/// Gather-reorders the output channels of one conv layer:
/// new channel o = old channel `gather[o]`, and the consumer of that
/// layer (next conv layer or dense head) has its input side gathered the
/// same way, so the network function is preserved up to float
/// reassociation.
void permute_output_channels(Model& model, std::size_t layer, const std::vector<std::size_t>& gather);

/// Flattened parameters of one output channel (all its input kernels
/// row-major, then the bias); the similarity unit for restores.
std::vector<float> channel_vector(const Model& model, std::size_t layer, std::size_t channel);

/// Removes the named output channels (and the consumer's matching input
/// side). Indices refer to the pre-removal layout.
void remove_output_channels(Model& model, std::size_t layer, const std::vector<std::size_t>& channels);

/// Appends output channels to a layer; `columns` holds the consumer-side
/// input weights for each new channel (one ConvKernel per next-layer
/// output channel, or one float per head output when the layer is last).
struct NewChannel {
    std::vector<ConvKernel> kernels; // one per input channel of the layer
    float bias = 0.0f;
    std::vector<ConvKernel> next_columns; // next conv layer: one per its output channel
    std::vector<float> head_columns;      // when the layer feeds the head
};
void append_output_channels(Model& model, std::size_t layer, const std::vector<NewChannel>& channels);

/// Multiplies every kernel value of a layer by 2^exponent (exact).
void scale_layer_kernels(Model& model, std::size_t layer, int exponent);
void scale_layer_bias(Model& model, std::size_t layer, int exponent);

std::vector<std::size_t> identity_permutation(std::size_t n);
std::vector<std::size_t> invert_permutation(const std::vector<std::size_t>& perm);

} // namespace hufu
