#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hufu/binary_io.hpp"
#include "hufu/nn.hpp"

namespace hufu {

struct KernelAddress {
    std::size_t layer_index = 0;
    std::size_t out_channel = 0;
    std::size_t in_channel = 0;

    bool operator==(const KernelAddress&) const = default;
};

/// Canonical kernel enumeration: layer-major, then output channel, then
/// input channel. The flat index 0..N-1 is what embedding positions mean.
std::size_t flat_index(const Model& model, const KernelAddress& addr);
KernelAddress kernel_at(const Model& model, std::size_t index);

ConvKernel& kernel_ref(Model& model, std::size_t flat);
const ConvKernel& kernel_ref(const Model& model, std::size_t flat);

/// Model file: magic "HUFU", version u16 LE, architecture block, then one
/// parameter block of little-endian 32-bit floats in canonical order
/// (kernels row-major, then conv biases, then dense weights row-major,
/// then dense bias). Identical models serialize to identical bytes.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

std::vector<std::uint8_t> model_to_bytes(const Model& model);
Model model_from_bytes(ByteReader& reader);

/// Flat view of every parameter in canonical parameter order. Used by the
/// file format, magnitude pruning and the audit histograms.
std::vector<float> flatten_parameters(const Model& model);
void unflatten_parameters(Model& model, const std::vector<float>& params);

} // namespace hufu
