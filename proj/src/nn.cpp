#include "hufu/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hufu/dataset.hpp"

namespace hufu {

namespace {

float activate(float x, Activation act) {
    switch (act) {
        case Activation::ReLU: return x > 0.0f ? x : 0.0f;
        case Activation::Sigmoid: return 1.0f / (1.0f + std::exp(-x));
        case Activation::None: return x;
    }
    return x;
}

// derivative expressed through the activation output value
float activate_grad(float out, Activation act) {
    switch (act) {
        case Activation::ReLU: return out > 0.0f ? 1.0f : 0.0f;
        case Activation::Sigmoid: return out * (1.0f - out);
        case Activation::None: return 1.0f;
    }
    return 1.0f;
}

// stride 1, zero padding 1; spatial size preserved
void conv_forward(const ConvLayer& layer, const Tensor& in, Tensor& out) {
    const std::size_t h = in.shape[1], w = in.shape[2];
    const std::size_t area = h * w;
    for (std::size_t o = 0; o < layer.out_channels; ++o) {
        float* dst = &out.data[o * area];
        std::fill(dst, dst + area, layer.bias[o]);
        for (std::size_t i = 0; i < layer.in_channels; ++i) {
            const float* src = &in.data[i * area];
            const float* k = layer.kernel(o, i).values.data();
            for (std::size_t y = 0; y < h; ++y) {
                const float* r0 = y > 0 ? src + (y - 1) * w : nullptr;
                const float* r1 = src + y * w;
                const float* r2 = y + 1 < h ? src + (y + 1) * w : nullptr;
                float* d = dst + y * w;
                for (std::size_t x = 0; x < w; ++x) {
                    const bool left = x > 0, right = x + 1 < w;
                    float acc = d[x];
                    if (r0) {
                        if (left) acc += r0[x - 1] * k[0];
                        acc += r0[x] * k[1];
                        if (right) acc += r0[x + 1] * k[2];
                    }
                    if (left) acc += r1[x - 1] * k[3];
                    acc += r1[x] * k[4];
                    if (right) acc += r1[x + 1] * k[5];
                    if (r2) {
                        if (left) acc += r2[x - 1] * k[6];
                        acc += r2[x] * k[7];
                        if (right) acc += r2[x + 1] * k[8];
                    }
                    d[x] = acc;
                }
            }
        }
        if (layer.activation != Activation::None)
            for (std::size_t p = 0; p < area; ++p) dst[p] = activate(dst[p], layer.activation);
    }
}

std::vector<float> softmax(const Tensor& logits) {
    float max_logit = logits.data[0];
    for (float v : logits.data) max_logit = std::max(max_logit, v);
    std::vector<float> p(logits.data.size());
    float sum = 0.0f;
    for (std::size_t c = 0; c < p.size(); ++c) {
        p[c] = std::exp(logits.data[c] - max_logit);
        sum += p[c];
    }
    for (float& v : p) v /= sum;
    return p;
}

struct ForwardCache {
    std::vector<Tensor> activations; // input followed by each conv output
    std::vector<float> pooled;
    Tensor logits;
};

ForwardCache run_forward(const Model& model, const Tensor& input) {
    if (input.shape.size() != 3 || input.shape[0] != model.input_shape.channels ||
        input.shape[1] != model.input_shape.height || input.shape[2] != model.input_shape.width)
        fail(ErrorKind::ShapeMismatch, "input shape does not match model input shape");

    ForwardCache cache;
    cache.activations.reserve(model.conv_layers.size() + 1);
    cache.activations.push_back(input);
    for (const ConvLayer& layer : model.conv_layers) {
        Tensor out({layer.out_channels, input.shape[1], input.shape[2]});
        conv_forward(layer, cache.activations.back(), out);
        cache.activations.push_back(std::move(out));
    }

    const Tensor& last = cache.activations.back();
    const float inv_area = 1.0f / static_cast<float>(last.shape[1] * last.shape[2]);
    cache.pooled.resize(last.shape[0]);
    for (std::size_t c = 0; c < last.shape[0]; ++c) {
        float acc = 0.0f;
        for (std::size_t y = 0; y < last.shape[1]; ++y)
            for (std::size_t x = 0; x < last.shape[2]; ++x)
                acc += last.at(c, y, x);
        cache.pooled[c] = acc * inv_area;
    }

    cache.logits = Tensor({model.head.out});
    for (std::size_t o = 0; o < model.head.out; ++o) {
        float acc = model.head.bias[o];
        for (std::size_t i = 0; i < model.head.in; ++i)
            acc += model.head.weights[o * model.head.in + i] * cache.pooled[i];
        cache.logits.data[o] = activate(acc, model.head.activation);
    }
    return cache;
}

} // namespace

void Model::validate() const {
    std::size_t channels = input_shape.channels;
    if (input_shape.numel() == 0) fail(ErrorKind::Structural, "empty input shape");
    for (std::size_t l = 0; l < conv_layers.size(); ++l) {
        const ConvLayer& layer = conv_layers[l];
        if (layer.in_channels != channels)
            fail(ErrorKind::Structural, "conv layer " + std::to_string(l) + " input channels do not chain");
        if (layer.kernels.size() != layer.out_channels * layer.in_channels)
            fail(ErrorKind::Structural, "conv layer kernel grid does not match channel counts");
        if (layer.bias.size() != layer.out_channels)
            fail(ErrorKind::Structural, "conv layer bias length mismatch");
        channels = layer.out_channels;
    }
    if (head.in != channels) fail(ErrorKind::Structural, "head input size does not match last conv output");
    if (head.out != class_count) fail(ErrorKind::Structural, "head output size does not match class count");
    if (head.weights.size() != head.out * head.in || head.bias.size() != head.out)
        fail(ErrorKind::Structural, "head parameter sizes inconsistent");
}

std::size_t Model::conv_kernel_count() const {
    std::size_t n = 0;
    for (const ConvLayer& layer : conv_layers) n += layer.kernels.size();
    return n;
}

std::size_t Model::parameter_count() const {
    std::size_t n = conv_kernel_count() * 9;
    for (const ConvLayer& layer : conv_layers) n += layer.bias.size();
    return n + head.weights.size() + head.bias.size();
}

Architecture architecture_of(const Model& model) {
    Architecture arch;
    arch.input_shape = model.input_shape;
    for (const ConvLayer& layer : model.conv_layers)
        arch.conv.emplace_back(layer.out_channels, layer.activation);
    arch.class_count = model.class_count;
    return arch;
}

Model make_model(const Architecture& arch, std::uint64_t seed) {
    Rng rng(seed);
    Model model;
    model.input_shape = arch.input_shape;
    model.class_count = arch.class_count;
    std::size_t in_channels = arch.input_shape.channels;
    for (auto [out_channels, act] : arch.conv) {
        ConvLayer layer;
        layer.out_channels = out_channels;
        layer.in_channels = in_channels;
        layer.activation = act;
        layer.kernels.resize(out_channels * in_channels);
        layer.bias.assign(out_channels, 0.0f);
        const float scale = std::sqrt(2.0f / static_cast<float>(in_channels * 9));
        for (ConvKernel& k : layer.kernels)
            for (float& v : k.values) v = static_cast<float>(rng.normal()) * scale;
        model.conv_layers.push_back(std::move(layer));
        in_channels = out_channels;
    }
    model.head.out = arch.class_count;
    model.head.in = in_channels;
    model.head.activation = Activation::None;
    model.head.weights.resize(arch.class_count * in_channels);
    model.head.bias.assign(arch.class_count, 0.0f);
    const float head_scale = std::sqrt(2.0f / static_cast<float>(in_channels));
    for (float& v : model.head.weights) v = static_cast<float>(rng.normal()) * head_scale;
    model.validate();
    return model;
}

FreezeMask FreezeMask::none_for(const Model& model) {
    FreezeMask mask;
    for (const ConvLayer& layer : model.conv_layers) {
        Layer l;
        l.out_channels = layer.out_channels;
        l.in_channels = layer.in_channels;
        l.flags.assign(layer.kernels.size(), 0);
        mask.layers.push_back(std::move(l));
    }
    return mask;
}

bool FreezeMask::is_frozen(std::size_t layer, std::size_t o, std::size_t i) const {
    if (layer >= layers.size()) return false;
    const Layer& l = layers[layer];
    const std::size_t idx = o * l.in_channels + i;
    return idx < l.flags.size() && l.flags[idx] != 0;
}

void FreezeMask::set(std::size_t layer, std::size_t o, std::size_t i, bool value) {
    if (layer >= layers.size()) fail(ErrorKind::InvalidArgument, "freeze mask layer out of range");
    Layer& l = layers[layer];
    const std::size_t idx = o * l.in_channels + i;
    if (idx >= l.flags.size()) fail(ErrorKind::InvalidArgument, "freeze mask kernel out of range");
    l.flags[idx] = value ? 1 : 0;
}

bool FreezeMask::any() const {
    return frozen_count() > 0;
}

std::size_t FreezeMask::frozen_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers)
        for (std::uint8_t f : l.flags) n += f != 0;
    return n;
}

Gradients Gradients::zeros_like(const Model& model) {
    Gradients g;
    for (const ConvLayer& layer : model.conv_layers) {
        g.kernel.emplace_back(layer.kernels.size() * 9, 0.0f);
        g.conv_bias.emplace_back(layer.bias.size(), 0.0f);
    }
    g.dense_w.assign(model.head.weights.size(), 0.0f);
    g.dense_b.assign(model.head.bias.size(), 0.0f);
    return g;
}

void Gradients::accumulate(const Gradients& other, float scale) {
    for (std::size_t l = 0; l < kernel.size(); ++l) {
        for (std::size_t j = 0; j < kernel[l].size(); ++j) kernel[l][j] += other.kernel[l][j] * scale;
        for (std::size_t j = 0; j < conv_bias[l].size(); ++j) conv_bias[l][j] += other.conv_bias[l][j] * scale;
    }
    for (std::size_t j = 0; j < dense_w.size(); ++j) dense_w[j] += other.dense_w[j] * scale;
    for (std::size_t j = 0; j < dense_b.size(); ++j) dense_b[j] += other.dense_b[j] * scale;
}

void Gradients::scale(float factor) {
    for (auto& v : kernel)
        for (float& x : v) x *= factor;
    for (auto& v : conv_bias)
        for (float& x : v) x *= factor;
    for (float& x : dense_w) x *= factor;
    for (float& x : dense_b) x *= factor;
}

float Gradients::max_abs() const {
    float m = 0.0f;
    for (const auto& v : kernel)
        for (float x : v) m = std::max(m, std::fabs(x));
    for (const auto& v : conv_bias)
        for (float x : v) m = std::max(m, std::fabs(x));
    for (float x : dense_w) m = std::max(m, std::fabs(x));
    for (float x : dense_b) m = std::max(m, std::fabs(x));
    return m;
}

Tensor forward(const Model& model, const Tensor& input) {
    return run_forward(model, input).logits;
}

float loss(const Model& model, const Tensor& input, std::size_t target_class) {
    if (target_class >= model.class_count) fail(ErrorKind::InvalidArgument, "class index out of range");
    ForwardCache cache = run_forward(model, input);
    std::vector<float> p = softmax(cache.logits);
    return -std::log(std::max(p[target_class], 1e-30f));
}

Gradients backward(const Model& model, const Tensor& input, std::size_t target_class) {
    if (target_class >= model.class_count) fail(ErrorKind::InvalidArgument, "class index out of range");
    ForwardCache cache = run_forward(model, input);
    Gradients g = Gradients::zeros_like(model);

    // dL/dlogit = softmax - onehot
    std::vector<float> dlogits = softmax(cache.logits);
    dlogits[target_class] -= 1.0f;
    if (model.head.activation != Activation::None)
        for (std::size_t o = 0; o < dlogits.size(); ++o)
            dlogits[o] *= activate_grad(cache.logits.data[o], model.head.activation);

    const std::size_t hin = model.head.in;
    std::vector<float> dpooled(hin, 0.0f);
    for (std::size_t o = 0; o < model.head.out; ++o) {
        g.dense_b[o] = dlogits[o];
        for (std::size_t i = 0; i < hin; ++i) {
            g.dense_w[o * hin + i] = dlogits[o] * cache.pooled[i];
            dpooled[i] += model.head.weights[o * hin + i] * dlogits[o];
        }
    }

    // global average pool spreads the gradient uniformly
    const Tensor& last = cache.activations.back();
    const std::size_t h = last.shape[1], w = last.shape[2];
    const float inv_area = 1.0f / static_cast<float>(h * w);
    Tensor dout({last.shape[0], h, w});
    for (std::size_t c = 0; c < last.shape[0]; ++c) {
        const float v = dpooled[c] * inv_area;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) dout.at(c, y, x) = v;
    }

    for (std::size_t li = model.conv_layers.size(); li-- > 0;) {
        const ConvLayer& layer = model.conv_layers[li];
        const Tensor& out = cache.activations[li + 1];
        const Tensor& in = cache.activations[li];

        // fold the activation derivative into the output gradient
        for (std::size_t c = 0; c < layer.out_channels; ++c)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x)
                    dout.at(c, y, x) *= activate_grad(out.at(c, y, x), layer.activation);

        Tensor din({layer.in_channels, h, w});
        auto& gk = g.kernel[li];
        for (std::size_t o = 0; o < layer.out_channels; ++o) {
            float bias_acc = 0.0f;
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) bias_acc += dout.at(o, y, x);
            g.conv_bias[li][o] = bias_acc;

            const std::size_t area = h * w;
            const float* gout = &dout.data[o * area];
            for (std::size_t i = 0; i < layer.in_channels; ++i) {
                const float* k = layer.kernel(o, i).values.data();
                const float* src = &in.data[i * area];
                float* dsrc = &din.data[i * area];
                float* gkv = &gk[(o * layer.in_channels + i) * 9];
                for (std::size_t y = 0; y < h; ++y) {
                    const std::size_t up = y > 0 ? (y - 1) * w : 0;
                    const std::size_t down = (y + 1) * w;
                    const bool has_up = y > 0, has_down = y + 1 < h;
                    const std::size_t row = y * w;
                    for (std::size_t x = 0; x < w; ++x) {
                        const float go = gout[row + x];
                        if (go == 0.0f) continue;
                        const bool left = x > 0, right = x + 1 < w;
                        if (has_up) {
                            if (left) { gkv[0] += src[up + x - 1] * go; dsrc[up + x - 1] += k[0] * go; }
                            gkv[1] += src[up + x] * go; dsrc[up + x] += k[1] * go;
                            if (right) { gkv[2] += src[up + x + 1] * go; dsrc[up + x + 1] += k[2] * go; }
                        }
                        if (left) { gkv[3] += src[row + x - 1] * go; dsrc[row + x - 1] += k[3] * go; }
                        gkv[4] += src[row + x] * go; dsrc[row + x] += k[4] * go;
                        if (right) { gkv[5] += src[row + x + 1] * go; dsrc[row + x + 1] += k[5] * go; }
                        if (has_down) {
                            if (left) { gkv[6] += src[down + x - 1] * go; dsrc[down + x - 1] += k[6] * go; }
                            gkv[7] += src[down + x] * go; dsrc[down + x] += k[7] * go;
                            if (right) { gkv[8] += src[down + x + 1] * go; dsrc[down + x + 1] += k[8] * go; }
                        }
                    }
                }
            }
        }
        dout = std::move(din);
    }
    return g;
}

Model sgd_step(const Model& model, const Gradients& grads, const TrainConfig& config,
               const FreezeMask& mask) {
    Model next = model;
    const float lr = config.learning_rate;
    const float wd = config.weight_decay;
    for (std::size_t l = 0; l < next.conv_layers.size(); ++l) {
        ConvLayer& layer = next.conv_layers[l];
        static const std::vector<std::uint8_t> no_flags;
        const auto& flags = l < mask.layers.size() ? mask.layers[l].flags : no_flags;
        for (std::size_t ki = 0; ki < layer.kernels.size(); ++ki) {
            if (ki < flags.size() && flags[ki]) continue;
            float* v = layer.kernels[ki].values.data();
            const float* gv = &grads.kernel[l][ki * 9];
            for (std::size_t t = 0; t < 9; ++t) v[t] -= lr * (gv[t] + wd * v[t]);
        }
        for (std::size_t o = 0; o < layer.bias.size(); ++o)
            layer.bias[o] -= lr * (grads.conv_bias[l][o] + wd * layer.bias[o]);
    }
    for (std::size_t j = 0; j < next.head.weights.size(); ++j)
        next.head.weights[j] -= lr * (grads.dense_w[j] + wd * next.head.weights[j]);
    for (std::size_t j = 0; j < next.head.bias.size(); ++j)
        next.head.bias[j] -= lr * (grads.dense_b[j] + wd * next.head.bias[j]);
    return next;
}

std::pair<Model, TrainReport> train(const Model& model, const Dataset& data,
                                    const TrainConfig& config, const FreezeMask& mask) {
    if (data.size() == 0) fail(ErrorKind::EmptyDataset, "cannot train on an empty dataset");
    if (config.learning_rate <= 0.0f) fail(ErrorKind::InvalidArgument, "learning rate must be positive");

    Model current = model;
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    const std::size_t batch = std::max<std::size_t>(1, config.batch_size);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        Rng rng(config.seed ^ (0xA5A5A5A5ULL + epoch * 0x100000001B3ULL));
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            Gradients acc = Gradients::zeros_like(current);
            for (std::size_t s = start; s < end; ++s) {
                Gradients g = backward(current, data.images[order[s]], data.labels[order[s]]);
                acc.accumulate(g, 1.0f);
            }
            acc.scale(1.0f / static_cast<float>(end - start));
            current = sgd_step(current, acc, config, mask);
        }
    }

    TrainReport report;
    float total_loss = 0.0f;
    std::size_t correct = 0;
    for (std::size_t s = 0; s < data.size(); ++s) {
        Tensor logits = forward(current, data.images[s]);
        std::vector<float> p = softmax(logits);
        total_loss += -std::log(std::max(p[data.labels[s]], 1e-30f));
        if (argmax_class(logits) == data.labels[s]) ++correct;
    }
    if (!std::isfinite(total_loss)) fail(ErrorKind::NonFinite, "training diverged to non-finite loss");
    report.final_loss = total_loss / static_cast<float>(data.size());
    report.final_accuracy = static_cast<float>(correct) / static_cast<float>(data.size());
    return {std::move(current), report};
}

float evaluate(const Model& model, const Dataset& data) {
    if (data.size() == 0) fail(ErrorKind::EmptyDataset, "cannot evaluate on an empty dataset");
    std::size_t correct = 0;
    for (std::size_t s = 0; s < data.size(); ++s)
        if (argmax_class(forward(model, data.images[s])) == data.labels[s]) ++correct;
    return static_cast<float>(correct) / static_cast<float>(data.size());
}

std::size_t argmax_class(const Tensor& logits) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.data.size(); ++c)
        if (logits.data[c] > logits.data[best]) best = c;
    return best;
}

} // namespace hufu
