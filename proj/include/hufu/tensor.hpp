#pragma once

#include <cstddef>
#include <vector>

#include "hufu/common.hpp"

namespace hufu {

/// Dense row-major float tensor. For images the shape convention is
/// (channels, height, width).
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, float fill = 0.0f);

    std::size_t numel() const;

    float& at(std::size_t c, std::size_t y, std::size_t x);
    float at(std::size_t c, std::size_t y, std::size_t x) const;

    /// Throws if data length and shape disagree or any value is non-finite.
    void validate() const;

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

struct Shape3 {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    bool operator==(const Shape3&) const = default;
    std::size_t numel() const { return channels * height * width; }
};

} // namespace hufu
