#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "hufu/tensor.hpp"

namespace hufu {

enum class Activation : std::uint8_t { None = 0, ReLU = 1, Sigmoid = 2 };

/// 3x3 convolution kernel, row-major.
struct ConvKernel {
    std::array<float, 9> values{};

    bool operator==(const ConvKernel&) const = default;
};

struct ConvLayer {
    std::size_t out_channels = 0;
    std::size_t in_channels = 0;
    std::vector<ConvKernel> kernels; // out-major: kernels[o * in_channels + i]
    std::vector<float> bias;         // one per output channel
    Activation activation = Activation::ReLU;

    ConvKernel& kernel(std::size_t o, std::size_t i) { return kernels[o * in_channels + i]; }
    const ConvKernel& kernel(std::size_t o, std::size_t i) const { return kernels[o * in_channels + i]; }

    bool operator==(const ConvLayer&) const = default;
};

struct DenseLayer {
    std::size_t out = 0;
    std::size_t in = 0;
    std::vector<float> weights; // row-major, out x in
    std::vector<float> bias;
    Activation activation = Activation::None;

    bool operator==(const DenseLayer&) const = default;
};

/// Stride-1, zero-padding-1 convolutional classifier: conv stack, global
/// average pool, dense head producing raw logits.
struct Model {
    Shape3 input_shape;
    std::vector<ConvLayer> conv_layers;
    DenseLayer head;
    std::size_t class_count = 0;

    /// Checks channel chaining, head coupling and parameter counts.
    void validate() const;

    std::size_t conv_kernel_count() const;
    std::size_t parameter_count() const;

    bool operator==(const Model&) const = default;
};

/// Architecture description used for deterministic initialization.
struct Architecture {
    Shape3 input_shape;
    std::vector<std::pair<std::size_t, Activation>> conv; // (out_channels, activation)
    std::size_t class_count = 0;

    bool operator==(const Architecture&) const = default;
};

Architecture architecture_of(const Model& model);

/// He-style random initialization, deterministic per seed.
Model make_model(const Architecture& arch, std::uint64_t seed);

/// Per-kernel freeze flags addressed by (layer, out_channel, in_channel).
/// Dense weights and all biases are never frozen.
struct FreezeMask {
    struct Layer {
        std::size_t out_channels = 0;
        std::size_t in_channels = 0;
        std::vector<std::uint8_t> flags; // out*in, kernel grid order
    };
    std::vector<Layer> layers;

    static FreezeMask none_for(const Model& model);
    bool is_frozen(std::size_t layer, std::size_t o, std::size_t i) const;
    void set(std::size_t layer, std::size_t o, std::size_t i, bool value = true);
    bool any() const;
    std::size_t frozen_count() const;
};

struct TrainConfig {
    float learning_rate = 0.05f;
    std::size_t epochs = 10;
    std::size_t batch_size = 16;
    float weight_decay = 0.0f;
    std::uint64_t seed = 0;
};

/// Gradients mirror the model's parameter layout.
struct Gradients {
    std::vector<std::vector<float>> kernel; // per layer, out*in*9
    std::vector<std::vector<float>> conv_bias;
    std::vector<float> dense_w;
    std::vector<float> dense_b;

    static Gradients zeros_like(const Model& model);
    void accumulate(const Gradients& other, float scale);
    void scale(float factor);
    float max_abs() const;
};

struct Dataset; // datasets.hpp

struct TrainReport {
    float final_loss = 0.0f;
    float final_accuracy = 0.0f;
};

Tensor forward(const Model& model, const Tensor& input);

/// Softmax cross-entropy loss of `input` against `target_class`.
float loss(const Model& model, const Tensor& input, std::size_t target_class);

/// Gradients of softmax cross-entropy w.r.t. every parameter. Freezing is
/// applied by sgd_step, not here.
Gradients backward(const Model& model, const Tensor& input, std::size_t target_class);

/// p <- p - lr * (grad + weight_decay * p) on unfrozen parameters; frozen
/// kernels keep their exact bit patterns.
Model sgd_step(const Model& model, const Gradients& grads, const TrainConfig& config,
               const FreezeMask& mask);

/// Mini-batch SGD, deterministic per seed (fixed shuffle and batching).
std::pair<Model, TrainReport> train(const Model& model, const Dataset& data,
                                    const TrainConfig& config, const FreezeMask& mask);

/// Fraction of samples whose argmax logit equals the label; argmax ties
/// break toward the lowest class index.
float evaluate(const Model& model, const Dataset& data);

std::size_t argmax_class(const Tensor& logits);

} // namespace hufu
