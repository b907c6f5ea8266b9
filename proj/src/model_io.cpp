#include "hufu/model_io.hpp"

#include <cmath>
#include <fstream>

namespace hufu {

namespace {

constexpr std::uint16_t kFormatVersion = 1;

} // namespace

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open file: " + path);
    std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write file: " + path);
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) fail(ErrorKind::Io, "write failed: " + path);
}

std::size_t flat_index(const Model& model, const KernelAddress& addr) {
    if (addr.layer_index >= model.conv_layers.size())
        fail(ErrorKind::InvalidArgument, "kernel address layer out of range");
    std::size_t index = 0;
    for (std::size_t l = 0; l < addr.layer_index; ++l) index += model.conv_layers[l].kernels.size();
    const ConvLayer& layer = model.conv_layers[addr.layer_index];
    if (addr.out_channel >= layer.out_channels || addr.in_channel >= layer.in_channels)
        fail(ErrorKind::InvalidArgument, "kernel address channel out of range");
    return index + addr.out_channel * layer.in_channels + addr.in_channel;
}

KernelAddress kernel_at(const Model& model, std::size_t index) {
    for (std::size_t l = 0; l < model.conv_layers.size(); ++l) {
        const ConvLayer& layer = model.conv_layers[l];
        if (index < layer.kernels.size()) {
            return KernelAddress{l, index / layer.in_channels, index % layer.in_channels};
        }
        index -= layer.kernels.size();
    }
    fail(ErrorKind::InvalidArgument, "flat kernel index out of range");
}

ConvKernel& kernel_ref(Model& model, std::size_t flat) {
    for (ConvLayer& layer : model.conv_layers) {
        if (flat < layer.kernels.size()) return layer.kernels[flat];
        flat -= layer.kernels.size();
    }
    fail(ErrorKind::InvalidArgument, "flat kernel index out of range");
}

const ConvKernel& kernel_ref(const Model& model, std::size_t flat) {
    return kernel_ref(const_cast<Model&>(model), flat);
}

std::vector<float> flatten_parameters(const Model& model) {
    std::vector<float> params;
    params.reserve(model.parameter_count());
    for (const ConvLayer& layer : model.conv_layers)
        for (const ConvKernel& k : layer.kernels)
            params.insert(params.end(), k.values.begin(), k.values.end());
    for (const ConvLayer& layer : model.conv_layers)
        params.insert(params.end(), layer.bias.begin(), layer.bias.end());
    params.insert(params.end(), model.head.weights.begin(), model.head.weights.end());
    params.insert(params.end(), model.head.bias.begin(), model.head.bias.end());
    return params;
}

void unflatten_parameters(Model& model, const std::vector<float>& params) {
    if (params.size() != model.parameter_count())
        fail(ErrorKind::ShapeMismatch, "parameter vector length does not match model");
    std::size_t p = 0;
    for (ConvLayer& layer : model.conv_layers)
        for (ConvKernel& k : layer.kernels)
            for (float& v : k.values) v = params[p++];
    for (ConvLayer& layer : model.conv_layers)
        for (float& v : layer.bias) v = params[p++];
    for (float& v : model.head.weights) v = params[p++];
    for (float& v : model.head.bias) v = params[p++];
}

std::vector<std::uint8_t> model_to_bytes(const Model& model) {
    model.validate();
    ByteWriter w;
    w.tag("HUFU");
    w.u16(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(model.input_shape.channels));
    w.u32(static_cast<std::uint32_t>(model.input_shape.height));
    w.u32(static_cast<std::uint32_t>(model.input_shape.width));
    w.u32(static_cast<std::uint32_t>(model.class_count));
    w.u32(static_cast<std::uint32_t>(model.conv_layers.size()));
    for (const ConvLayer& layer : model.conv_layers) {
        w.u32(static_cast<std::uint32_t>(layer.out_channels));
        w.u32(static_cast<std::uint32_t>(layer.in_channels));
        w.u8(static_cast<std::uint8_t>(layer.activation));
    }
    w.u32(static_cast<std::uint32_t>(model.head.out));
    w.u32(static_cast<std::uint32_t>(model.head.in));
    w.u8(static_cast<std::uint8_t>(model.head.activation));
    for (float v : flatten_parameters(model)) w.f32(v);
    return w.buffer();
}

Model model_from_bytes(ByteReader& r) {
    if (!r.expect_tag("HUFU")) fail(ErrorKind::BadMagic, "bad magic: not a model file");
    const std::uint16_t version = r.u16();
    if (version != kFormatVersion)
        fail(ErrorKind::UnsupportedVersion, "unsupported model format version " + std::to_string(version));

    Model model;
    model.input_shape.channels = r.u32();
    model.input_shape.height = r.u32();
    model.input_shape.width = r.u32();
    model.class_count = r.u32();
    const std::uint32_t layer_count = r.u32();
    if (layer_count > 1024) fail(ErrorKind::Structural, "implausible conv layer count");
    for (std::uint32_t l = 0; l < layer_count; ++l) {
        ConvLayer layer;
        layer.out_channels = r.u32();
        layer.in_channels = r.u32();
        const std::uint8_t act = r.u8();
        if (act > 2) fail(ErrorKind::Structural, "unknown activation code");
        layer.activation = static_cast<Activation>(act);
        layer.kernels.resize(layer.out_channels * layer.in_channels);
        layer.bias.resize(layer.out_channels);
        model.conv_layers.push_back(std::move(layer));
    }
    model.head.out = r.u32();
    model.head.in = r.u32();
    const std::uint8_t head_act = r.u8();
    if (head_act > 2) fail(ErrorKind::Structural, "unknown activation code");
    model.head.activation = static_cast<Activation>(head_act);
    model.head.weights.resize(model.head.out * model.head.in);
    model.head.bias.resize(model.head.out);
    model.validate();

    std::vector<float> params(model.parameter_count());
    for (float& v : params) {
        v = r.f32();
        if (!std::isfinite(v)) fail(ErrorKind::NonFinite, "non-finite parameter in model file");
    }
    unflatten_parameters(model, params);
    return model;
}

void save_model(const Model& model, const std::string& path) {
    write_file(path, model_to_bytes(model));
}

Model load_model(const std::string& path) {
    const std::vector<std::uint8_t> data = read_file(path);
    ByteReader r(data);
    Model model = model_from_bytes(r);
    if (!r.done()) fail(ErrorKind::Structural, "trailing bytes after model");
    return model;
}

} // namespace hufu
