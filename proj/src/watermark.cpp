#include "hufu/watermark.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "hufu/model_io.hpp"

namespace hufu {

namespace {

constexpr std::uint16_t kRecordVersion = 1;

// HFRC record type codes
constexpr std::uint8_t kRecordEmbedding = 1;
constexpr std::uint8_t kRecordFreezeMask = 3;
constexpr std::uint8_t kRecordCarrierMeta = 4;
constexpr std::uint8_t kRecordEPH = 6;
constexpr std::uint8_t kRecordSPH = 7;

void write_architecture(ByteWriter& w, const Architecture& arch) {
    w.u32(static_cast<std::uint32_t>(arch.input_shape.channels));
    w.u32(static_cast<std::uint32_t>(arch.input_shape.height));
    w.u32(static_cast<std::uint32_t>(arch.input_shape.width));
    w.u32(static_cast<std::uint32_t>(arch.class_count));
    w.u32(static_cast<std::uint32_t>(arch.conv.size()));
    for (auto [out, act] : arch.conv) {
        w.u32(static_cast<std::uint32_t>(out));
        w.u8(static_cast<std::uint8_t>(act));
    }
}

Architecture read_architecture(ByteReader& r) {
    Architecture arch;
    arch.input_shape.channels = r.u32();
    arch.input_shape.height = r.u32();
    arch.input_shape.width = r.u32();
    arch.class_count = r.u32();
    const std::uint32_t layers = r.u32();
    for (std::uint32_t l = 0; l < layers; ++l) {
        const std::uint32_t out = r.u32();
        const std::uint8_t act = r.u8();
        if (act > 2) fail(ErrorKind::Structural, "unknown activation code");
        arch.conv.emplace_back(out, static_cast<Activation>(act));
    }
    return arch;
}

void write_record_header(ByteWriter& w, std::uint8_t type) {
    w.tag("HFRC");
    w.u16(kRecordVersion);
    w.u8(type);
}

void read_record_header(ByteReader& r, std::uint8_t expected_type) {
    if (!r.expect_tag("HFRC")) fail(ErrorKind::BadMagic, "bad magic: not a record file");
    const std::uint16_t version = r.u16();
    if (version != kRecordVersion)
        fail(ErrorKind::UnsupportedVersion, "unsupported record version " + std::to_string(version));
    const std::uint8_t type = r.u8();
    if (type != expected_type)
        fail(ErrorKind::Structural, "record type mismatch (got " + std::to_string(type) + ")");
}

} // namespace

EmbeddingKey make_key(std::uint64_t seed) {
    Rng rng(seed ^ 0x8BADF00DDEADBEEFULL);
    EmbeddingKey key;
    for (auto& b : key.bytes) b = static_cast<std::uint8_t>(rng.next() >> 56);
    return key;
}

EmbeddingKey key_from_bytes(const std::vector<std::uint8_t>& raw) {
    if (raw.size() != 64) fail(ErrorKind::InvalidArgument, "embedding key must be exactly 64 bytes");
    EmbeddingKey key;
    std::copy(raw.begin(), raw.end(), key.bytes.begin());
    return key;
}

EmbeddingKey load_key_file(const std::string& path) {
    return key_from_bytes(read_file(path));
}

void save_key_file(const EmbeddingKey& key, const std::string& path) {
    write_file(path, std::vector<std::uint8_t>(key.bytes.begin(), key.bytes.end()));
}

Digest key_id(const EmbeddingKey& key) {
    return sha256(key.bytes.data(), key.bytes.size());
}

void EmbeddingRecord::validate() const {
    if (bitmap.size() != (host_kernel_count + 7) / 8)
        fail(ErrorKind::Structural, "embedding record bitmap size mismatch");
    std::vector<std::uint8_t> seen((host_kernel_count + 7) / 8, 0);
    for (std::uint64_t pos : positions) {
        if (pos >= host_kernel_count) fail(ErrorKind::Structural, "embedding position out of range");
        if ((seen[pos / 8] >> (pos % 8)) & 1) fail(ErrorKind::Structural, "duplicate embedding position");
        seen[pos / 8] |= static_cast<std::uint8_t>(1u << (pos % 8));
        if (!bit(pos)) fail(ErrorKind::Structural, "embedding bitmap does not cover position");
    }
    std::size_t set_bits = 0;
    for (std::uint64_t p = 0; p < host_kernel_count; ++p) set_bits += bit(p);
    if (set_bits != positions.size())
        fail(ErrorKind::Structural, "embedding bitmap has stray bits");
}

HufuNet generate_hufunet(const Architecture& arch, const TrainConfig& config,
                         const Dataset& d_s, const Dataset& d_s_test) {
    if (d_s.class_count != d_s_test.class_count)
        fail(ErrorKind::ShapeMismatch, "carrier train/test sets disagree on class count");
    if (!d_s.images.empty() && !d_s_test.images.empty() &&
        !d_s.images[0].same_shape(d_s_test.images[0]))
        fail(ErrorKind::ShapeMismatch, "carrier train/test sets disagree on image shape");
    Model init = make_model(arch, config.seed);
    auto [carrier, report] = train(init, d_s, config, FreezeMask::none_for(init));
    (void)report;
    HufuNet hufu;
    hufu.acc_ori = evaluate(carrier, d_s_test);
    hufu.carrier = std::move(carrier);
    return hufu;
}

std::pair<EPH, SPH> split_carrier(const HufuNet& hufu) {
    EPH eph;
    eph.carrier_arch = architecture_of(hufu.carrier);
    for (const ConvLayer& layer : hufu.carrier.conv_layers)
        eph.kernels.insert(eph.kernels.end(), layer.kernels.begin(), layer.kernels.end());

    SPH sph;
    sph.head = hufu.carrier.head;
    for (const ConvLayer& layer : hufu.carrier.conv_layers) sph.conv_biases.push_back(layer.bias);
    return {std::move(eph), std::move(sph)};
}

Model combine(const EPH& eph, const SPH& sph) {
    Model carrier = make_model(eph.carrier_arch, 0);
    if (sph.conv_biases.size() != carrier.conv_layers.size())
        fail(ErrorKind::Structural, "secret piece does not match carrier architecture");
    std::size_t next = 0;
    for (std::size_t l = 0; l < carrier.conv_layers.size(); ++l) {
        ConvLayer& layer = carrier.conv_layers[l];
        if (eph.kernels.size() < next + layer.kernels.size())
            fail(ErrorKind::Structural, "embedded piece has too few kernels for carrier");
        std::copy(eph.kernels.begin() + static_cast<std::ptrdiff_t>(next),
                  eph.kernels.begin() + static_cast<std::ptrdiff_t>(next + layer.kernels.size()),
                  layer.kernels.begin());
        next += layer.kernels.size();
        if (sph.conv_biases[l].size() != layer.bias.size())
            fail(ErrorKind::Structural, "secret piece bias length mismatch");
        layer.bias = sph.conv_biases[l];
    }
    if (next != eph.kernels.size())
        fail(ErrorKind::Structural, "embedded piece has extra kernels");
    carrier.head = sph.head;
    carrier.validate();
    return carrier;
}

std::uint32_t xorpmv(const ConvKernel& kernel) {
    std::uint32_t acc = 0;
    for (float v : kernel.values) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        acc ^= bits;
    }
    return acc;
}

std::uint64_t compute_position(const ConvKernel& kernel, std::uint64_t index,
                               const EmbeddingKey& key, std::uint64_t host_kernel_count) {
    if (host_kernel_count == 0) fail(ErrorKind::InvalidArgument, "host kernel count must be positive");
    const std::uint64_t message = static_cast<std::uint64_t>(xorpmv(kernel)) ^ index;
    std::uint8_t msg_bytes[8];
    for (int b = 0; b < 8; ++b) msg_bytes[b] = static_cast<std::uint8_t>(message >> (56 - b * 8));
    const Digest digest = hmac_sha256(key.bytes.data(), key.bytes.size(), msg_bytes, 8);
    std::uint64_t value = 0;
    for (int b = 0; b < 8; ++b) value = (value << 8) | digest[static_cast<std::size_t>(b)];
    return value % host_kernel_count;
}

EmbedResult embed(const Model& host, const EPH& eph, const EmbeddingKey& key) {
    const std::uint64_t host_count = host.conv_kernel_count();
    if (eph.count() > host_count)
        fail(ErrorKind::Capacity, "embedded piece has more kernels than the host can hold");

    EmbedResult result;
    result.model = host;
    result.record.key_hash = key_id(key);
    result.record.host_kernel_count = host_count;
    result.record.bitmap.assign((host_count + 7) / 8, 0);
    result.mask = FreezeMask::none_for(host);

    for (std::size_t i = 0; i < eph.count(); ++i) {
        std::uint64_t pos = compute_position(eph.kernels[i], i + 1, key, host_count);
        while (result.record.bit(pos)) pos = (pos + 1) % host_count;
        kernel_ref(result.model, pos) = eph.kernels[i];
        result.record.bitmap[pos / 8] |= static_cast<std::uint8_t>(1u << (pos % 8));
        result.record.positions.push_back(pos);
        const KernelAddress addr = kernel_at(host, pos);
        result.mask.set(addr.layer_index, addr.out_channel, addr.in_channel);
    }
    return result;
}

std::pair<Model, TrainReport> train_watermarked(const Model& host_wm, const FreezeMask& mask,
                                                const Dataset& d_t, const TrainConfig& config) {
    return train(host_wm, d_t, config, mask);
}

EPH extract(const Model& suspect, const EPH& eph_local, const EmbeddingKey& key) {
    const std::uint64_t host_count = suspect.conv_kernel_count();
    if (host_count < eph_local.count())
        fail(ErrorKind::Structural,
             "suspect has fewer kernels than the embedding expects; restore the model first");

    // Replay the embedding loop: collision probing depends on insertion
    // history, so positions cannot be recomputed kernel-by-kernel.
    std::vector<std::uint8_t> bitmap((host_count + 7) / 8, 0);
    EPH retrieved;
    retrieved.carrier_arch = eph_local.carrier_arch;
    for (std::size_t i = 0; i < eph_local.count(); ++i) {
        std::uint64_t pos = compute_position(eph_local.kernels[i], i + 1, key, host_count);
        while ((bitmap[pos / 8] >> (pos % 8)) & 1) pos = (pos + 1) % host_count;
        bitmap[pos / 8] |= static_cast<std::uint8_t>(1u << (pos % 8));
        retrieved.kernels.push_back(kernel_ref(suspect, pos));
    }
    return retrieved;
}

VerificationReport verify(const Model& suspect, const HufuNet& hufu_local, const EmbeddingKey& key,
                          const Dataset& d_s_test, float tau) {
    if (d_s_test.size() == 0) fail(ErrorKind::EmptyDataset, "verification test set is empty");
    if (hufu_local.acc_ori <= 0.0f)
        fail(ErrorKind::InvalidArgument, "recorded carrier accuracy must be positive");

    auto [eph, sph] = split_carrier(hufu_local);
    EPH retrieved = extract(suspect, eph, key);
    Model combined = combine(retrieved, sph);

    VerificationReport report;
    report.tau = tau;
    report.acc_ori = hufu_local.acc_ori;
    report.acc_combined = evaluate(combined, d_s_test);
    report.diff_acc = std::fabs(report.acc_ori - report.acc_combined) / report.acc_ori;
    report.verdict = report.diff_acc < tau;
    return report;
}

void save_hufunet(const HufuNet& hufu, const std::string& path) {
    std::vector<std::uint8_t> bytes = model_to_bytes(hufu.carrier);
    ByteWriter meta;
    write_record_header(meta, kRecordCarrierMeta);
    meta.f32(hufu.acc_ori);
    bytes.insert(bytes.end(), meta.buffer().begin(), meta.buffer().end());
    write_file(path, bytes);
}

HufuNet load_hufunet(const std::string& path) {
    const std::vector<std::uint8_t> data = read_file(path);
    ByteReader r(data);
    HufuNet hufu;
    hufu.carrier = model_from_bytes(r);
    read_record_header(r, kRecordCarrierMeta);
    hufu.acc_ori = r.f32();
    if (!std::isfinite(hufu.acc_ori)) fail(ErrorKind::NonFinite, "non-finite recorded accuracy");
    if (!r.done()) fail(ErrorKind::Structural, "trailing bytes after carrier file");
    return hufu;
}

void save_embedding_record(const EmbeddingRecord& record, const std::string& path) {
    ByteWriter w;
    write_record_header(w, kRecordEmbedding);
    w.bytes(record.key_hash.data(), record.key_hash.size());
    w.u64(record.host_kernel_count);
    w.u64(record.positions.size());
    for (std::uint64_t pos : record.positions) w.u64(pos);
    w.bytes(record.bitmap.data(), record.bitmap.size());
    write_file(path, w.buffer());
}

EmbeddingRecord load_embedding_record(const std::string& path) {
    const std::vector<std::uint8_t> data = read_file(path);
    ByteReader r(data);
    read_record_header(r, kRecordEmbedding);
    EmbeddingRecord record;
    r.bytes(record.key_hash.data(), record.key_hash.size());
    record.host_kernel_count = r.u64();
    record.positions.resize(r.u64());
    for (std::uint64_t& pos : record.positions) pos = r.u64();
    record.bitmap.resize((record.host_kernel_count + 7) / 8);
    r.bytes(record.bitmap.data(), record.bitmap.size());
    if (!r.done()) fail(ErrorKind::Structural, "trailing bytes after embedding record");
    record.validate();
    return record;
}

void save_eph(const EPH& eph, const std::string& path) {
    ByteWriter w;
    write_record_header(w, kRecordEPH);
    write_architecture(w, eph.carrier_arch);
    w.u64(eph.kernels.size());
    for (const ConvKernel& k : eph.kernels)
        for (float v : k.values) w.f32(v);
    write_file(path, w.buffer());
}

EPH load_eph(const std::string& path) {
    const std::vector<std::uint8_t> data = read_file(path);
    ByteReader r(data);
    read_record_header(r, kRecordEPH);
    EPH eph;
    eph.carrier_arch = read_architecture(r);
    eph.kernels.resize(r.u64());
    for (ConvKernel& k : eph.kernels)
        for (float& v : k.values) {
            v = r.f32();
            if (!std::isfinite(v)) fail(ErrorKind::NonFinite, "non-finite kernel value");
        }
    if (!r.done()) fail(ErrorKind::Structural, "trailing bytes after embedded piece");
    return eph;
}

void save_sph(const SPH& sph, const std::string& path) {
    ByteWriter w;
    write_record_header(w, kRecordSPH);
    w.u32(static_cast<std::uint32_t>(sph.head.out));
    w.u32(static_cast<std::uint32_t>(sph.head.in));
    w.u8(static_cast<std::uint8_t>(sph.head.activation));
    for (float v : sph.head.weights) w.f32(v);
    for (float v : sph.head.bias) w.f32(v);
    w.u32(static_cast<std::uint32_t>(sph.conv_biases.size()));
    for (const std::vector<float>& bias : sph.conv_biases) {
        w.u32(static_cast<std::uint32_t>(bias.size()));
        for (float v : bias) w.f32(v);
    }
    write_file(path, w.buffer());
}

SPH load_sph(const std::string& path) {
    const std::vector<std::uint8_t> data = read_file(path);
    ByteReader r(data);
    read_record_header(r, kRecordSPH);
    SPH sph;
    sph.head.out = r.u32();
    sph.head.in = r.u32();
    const std::uint8_t act = r.u8();
    if (act > 2) fail(ErrorKind::Structural, "unknown activation code");
    sph.head.activation = static_cast<Activation>(act);
    sph.head.weights.resize(sph.head.out * sph.head.in);
    for (float& v : sph.head.weights) {
        v = r.f32();
        if (!std::isfinite(v)) fail(ErrorKind::NonFinite, "non-finite head weight");
    }
    sph.head.bias.resize(sph.head.out);
    for (float& v : sph.head.bias) v = r.f32();
    sph.conv_biases.resize(r.u32());
    for (std::vector<float>& bias : sph.conv_biases) {
        bias.resize(r.u32());
        for (float& v : bias) v = r.f32();
    }
    if (!r.done()) fail(ErrorKind::Structural, "trailing bytes after secret piece");
    return sph;
}

void save_freeze_mask(const FreezeMask& mask, const std::string& path) {
    ByteWriter w;
    write_record_header(w, kRecordFreezeMask);
    w.u32(static_cast<std::uint32_t>(mask.layers.size()));
    for (const FreezeMask::Layer& layer : mask.layers) {
        w.u32(static_cast<std::uint32_t>(layer.out_channels));
        w.u32(static_cast<std::uint32_t>(layer.in_channels));
        for (std::uint8_t f : layer.flags) w.u8(f);
    }
    write_file(path, w.buffer());
}

FreezeMask load_freeze_mask(const std::string& path) {
    const std::vector<std::uint8_t> data = read_file(path);
    ByteReader r(data);
    read_record_header(r, kRecordFreezeMask);
    FreezeMask mask;
    const std::uint32_t layer_count = r.u32();
    for (std::uint32_t l = 0; l < layer_count; ++l) {
        FreezeMask::Layer layer;
        layer.out_channels = r.u32();
        layer.in_channels = r.u32();
        layer.flags.resize(layer.out_channels * layer.in_channels);
        for (std::uint8_t& f : layer.flags) f = r.u8();
        mask.layers.push_back(std::move(layer));
    }
    if (!r.done()) fail(ErrorKind::Structural, "trailing bytes after freeze mask");
    return mask;
}

} // namespace hufu
