#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hufu/crypto.hpp"
#include "hufu/dataset.hpp"
#include "hufu/nn.hpp"

namespace hufu {

/// Carrier network: a small conv stack plus dense head whose halves form
/// the embedded watermark and the locally kept secret. acc_ori is recorded
/// once on the public test set at generation time and reused verbatim
/// during verification.
struct HufuNet {
    Model carrier;
    float acc_ori = 0.0f;
};

/// Embedded piece: the carrier's conv kernels in canonical order, plus the
/// architecture needed to reassemble them.
struct EPH {
    std::vector<ConvKernel> kernels;
    Architecture carrier_arch;

    std::size_t count() const { return kernels.size(); }
    bool operator==(const EPH&) const = default;
};

/// Secret piece: the carrier's dense head and conv biases. Useless on its
/// own; only combine() with an EPH yields a runnable network.
struct SPH {
    DenseLayer head;
    std::vector<std::vector<float>> conv_biases;
};

struct EmbeddingKey {
    std::array<std::uint8_t, 64> bytes{};
};

EmbeddingKey make_key(std::uint64_t seed);
EmbeddingKey key_from_bytes(const std::vector<std::uint8_t>& raw);
EmbeddingKey load_key_file(const std::string& path);
void save_key_file(const EmbeddingKey& key, const std::string& path);
Digest key_id(const EmbeddingKey& key);

/// Owner's proof material: where each embedded kernel went. Holds only the
/// key's hash, never the key.
struct EmbeddingRecord {
    Digest key_hash{};
    std::uint64_t host_kernel_count = 0;     // N
    std::vector<std::uint64_t> positions;    // one flat index per EPH kernel, EPH order
    std::vector<std::uint8_t> bitmap;        // N bits, LSB-first per byte

    bool bit(std::uint64_t pos) const { return (bitmap[pos / 8] >> (pos % 8)) & 1; }
    void validate() const;
};

struct VerificationReport {
    float acc_ori = 0.0f;
    float acc_combined = 0.0f;
    float diff_acc = 0.0f;
    float tau = 0.15f;
    bool verdict = false;
    enum class Restore : std::uint8_t { None = 0, Reorder = 1, Scale = 2, Cutoff = 3, Full = 4 };
    Restore restore_applied = Restore::None;
};

/// Trains the carrier on the public set and records acc_ori on its test set.
HufuNet generate_hufunet(const Architecture& arch, const TrainConfig& config,
                         const Dataset& d_s, const Dataset& d_s_test);

std::pair<EPH, SPH> split_carrier(const HufuNet& hufu);
Model combine(const EPH& eph, const SPH& sph);

/// XOR-fold of the nine IEEE-754 bit patterns, row-major.
std::uint32_t xorpmv(const ConvKernel& kernel);

/// Keyed embedding position: HMAC-SHA256(key, big-endian 8 bytes of
/// (xorpmv zero-extended XOR 1-based index)); the first 8 digest bytes,
/// big-endian, taken mod N.
std::uint64_t compute_position(const ConvKernel& kernel, std::uint64_t index,
                               const EmbeddingKey& key, std::uint64_t host_kernel_count);

struct EmbedResult {
    Model model;
    EmbeddingRecord record;
    FreezeMask mask;
};

/// Writes each EPH kernel into the host at its keyed position, resolving
/// collisions by linear probing over the bitmap. Fails if the EPH has more
/// kernels than the host.
EmbedResult embed(const Model& host, const EPH& eph, const EmbeddingKey& key);

/// Host training with the embedded kernels frozen.
std::pair<Model, TrainReport> train_watermarked(const Model& host_wm, const FreezeMask& mask,
                                                const Dataset& d_t, const TrainConfig& config);

/// Replays the embedding loop with the locally preserved EPH (suspect
/// values are never hashed) and reads the suspect's kernels at the
/// resulting positions.
EPH extract(const Model& suspect, const EPH& eph_local, const EmbeddingKey& key);

VerificationReport verify(const Model& suspect, const HufuNet& hufu_local, const EmbeddingKey& key,
                          const Dataset& d_s_test, float tau = 0.15f);

void save_hufunet(const HufuNet& hufu, const std::string& path);
HufuNet load_hufunet(const std::string& path);

void save_embedding_record(const EmbeddingRecord& record, const std::string& path);
EmbeddingRecord load_embedding_record(const std::string& path);

void save_eph(const EPH& eph, const std::string& path);
EPH load_eph(const std::string& path);

void save_sph(const SPH& sph, const std::string& path);
SPH load_sph(const std::string& path);

void save_freeze_mask(const FreezeMask& mask, const std::string& path);
FreezeMask load_freeze_mask(const std::string& path);

} // namespace hufu
