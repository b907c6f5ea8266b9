#include "hufu/tensor.hpp"

#include <cmath>
#include <numeric>

namespace hufu {

Tensor::Tensor(std::vector<std::size_t> s, float fill) : shape(std::move(s)) {
    data.assign(numel(), fill);
}

std::size_t Tensor::numel() const {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return shape.empty() ? 0 : n;
}

float& Tensor::at(std::size_t c, std::size_t y, std::size_t x) {
    return data[(c * shape[1] + y) * shape[2] + x];
}

float Tensor::at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * shape[1] + y) * shape[2] + x];
}

void Tensor::validate() const {
    if (data.size() != numel())
        fail(ErrorKind::ShapeMismatch, "tensor data length does not match shape");
    for (float v : data)
        if (!std::isfinite(v)) fail(ErrorKind::NonFinite, "tensor contains non-finite value");
}

} // namespace hufu
