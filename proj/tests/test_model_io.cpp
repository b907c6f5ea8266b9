#include "doctest.h"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <limits>

#include "hufu/attacks.hpp"
#include "hufu/model_io.hpp"
#include "hufu/restore.hpp"
#include "hufu/watermark.hpp"

using namespace hufu;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

Model sample_model(std::uint64_t seed) {
    Architecture arch;
    arch.input_shape = {1, 6, 6};
    arch.conv = {{3, Activation::ReLU}, {5, Activation::Sigmoid}};
    arch.class_count = 3;
    return make_model(arch, seed);
}

ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::Io;
}

} // namespace

TEST_CASE("model save/load round trip is bit-exact") {
    const Model model = sample_model(101);
    const std::string path = temp_path("hufu_model_roundtrip.hufu");
    save_model(model, path);
    const Model loaded = load_model(path);
    CHECK(model == loaded);

    // identical models produce identical bytes
    const std::string path2 = temp_path("hufu_model_roundtrip2.hufu");
    save_model(loaded, path2);
    CHECK(read_file(path) == read_file(path2));
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("a one-bit parameter difference changes the file bytes") {
    Model a = sample_model(7);
    Model b = a;
    std::uint32_t bits;
    std::memcpy(&bits, &b.conv_layers[0].kernels[0].values[0], 4);
    bits ^= 1u;
    std::memcpy(&b.conv_layers[0].kernels[0].values[0], &bits, 4);
    CHECK(model_to_bytes(a) != model_to_bytes(b));
}

TEST_CASE("load errors carry distinct categories") {
    const Model model = sample_model(13);
    const std::string path = temp_path("hufu_model_errors.hufu");

    SUBCASE("bad magic") {
        std::vector<std::uint8_t> bytes = model_to_bytes(model);
        bytes[0] = 'X';
        write_file(path, bytes);
        CHECK(kind_of([&] { load_model(path); }) == ErrorKind::BadMagic);
    }
    SUBCASE("unsupported version") {
        std::vector<std::uint8_t> bytes = model_to_bytes(model);
        bytes[4] = 0x0f; // version 9999 = 0x270f little-endian
        bytes[5] = 0x27;
        write_file(path, bytes);
        CHECK(kind_of([&] { load_model(path); }) == ErrorKind::UnsupportedVersion);
    }
    SUBCASE("truncation") {
        std::vector<std::uint8_t> bytes = model_to_bytes(model);
        bytes.resize(bytes.size() - 5);
        write_file(path, bytes);
        CHECK(kind_of([&] { load_model(path); }) == ErrorKind::Truncated);
    }
    SUBCASE("non-finite parameter") {
        Model nan_model = model;
        nan_model.conv_layers[0].kernels[0].values[0] = std::numeric_limits<float>::quiet_NaN();
        write_file(path, model_to_bytes(nan_model));
        CHECK(kind_of([&] { load_model(path); }) == ErrorKind::NonFinite);
    }
    std::remove(path.c_str());
}

TEST_CASE("canonical kernel order is a bijection") {
    const Model model = sample_model(21);
    const std::size_t n = model.conv_kernel_count();
    REQUIRE(n == 3 + 15);

    CHECK(flat_index(model, {0, 0, 0}) == 0);
    const KernelAddress last{1, 4, 2};
    CHECK(flat_index(model, last) == n - 1);

    std::vector<std::uint8_t> seen(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const KernelAddress addr = kernel_at(model, i);
        CHECK(flat_index(model, addr) == i);
        CHECK(!seen[i]);
        seen[i] = 1;
    }
    CHECK_THROWS_AS(kernel_at(model, n), Error);
    CHECK_THROWS_AS(flat_index(model, {2, 0, 0}), Error);
}

TEST_CASE("flatten/unflatten preserve every parameter") {
    Model model = sample_model(31);
    const std::vector<float> params = flatten_parameters(model);
    CHECK(params.size() == model.parameter_count());
    Model copy = sample_model(32);
    unflatten_parameters(copy, params);
    CHECK(copy == model);
}

TEST_CASE("embedding record round trip preserves proof material") {
    EmbeddingRecord record;
    record.key_hash = sha256(nullptr, 0);
    record.host_kernel_count = 20;
    record.positions = {3, 7, 19};
    record.bitmap.assign(3, 0);
    for (std::uint64_t p : record.positions)
        record.bitmap[p / 8] |= static_cast<std::uint8_t>(1u << (p % 8));

    const std::string path = temp_path("hufu_embed_record.hfrc");
    save_embedding_record(record, path);
    const EmbeddingRecord loaded = load_embedding_record(path);
    CHECK(loaded.key_hash == record.key_hash);
    CHECK(loaded.host_kernel_count == record.host_kernel_count);
    CHECK(loaded.positions == record.positions);
    CHECK(loaded.bitmap == record.bitmap);
    std::remove(path.c_str());
}

TEST_CASE("attack record round trip including nested stages") {
    AttackRecord inner;
    inner.kind = AttackKind::Prune;
    inner.prune_fraction = 0.25f;
    inner.zeroed = {1, 5, 9};

    AttackRecord outer;
    outer.kind = AttackKind::Synthetic;
    outer.permutations = {{2, 0, 1}, {0, 1}};
    outer.pair_exponents = {-3, 4};
    outer.layer = 1;
    outer.added = 2;
    outer.strategy = ExpandStrategy::DuplicateSplit;
    outer.duplicated_sources = {0, 3};
    outer.stages.push_back(inner);

    const std::string path = temp_path("hufu_attack_record.hfrc");
    save_attack_record(outer, path);
    const AttackRecord loaded = load_attack_record(path);
    CHECK(loaded.kind == AttackKind::Synthetic);
    CHECK(loaded.permutations == outer.permutations);
    CHECK(loaded.pair_exponents == outer.pair_exponents);
    CHECK(loaded.duplicated_sources == outer.duplicated_sources);
    REQUIRE(loaded.stages.size() == 1);
    CHECK(loaded.stages[0].kind == AttackKind::Prune);
    CHECK(loaded.stages[0].zeroed == inner.zeroed);
    std::remove(path.c_str());
}

TEST_CASE("restore report round trip") {
    RestoreReport report;
    report.permutations = {{1, 0, static_cast<std::size_t>(-1)}};
    report.kernel_scale_factors = {1.0f, 8.0f};
    report.scale_skipped = {4};
    report.zero_filled = {{0, 2}};
    report.removed = {{0, 3}};
    report.restored_rate = 0.75f;

    const std::string path = temp_path("hufu_restore_report.hfrc");
    save_restore_report(report, path);
    const RestoreReport loaded = load_restore_report(path);
    CHECK(loaded.permutations == report.permutations);
    CHECK(loaded.kernel_scale_factors == report.kernel_scale_factors);
    CHECK(loaded.scale_skipped == report.scale_skipped);
    CHECK(loaded.zero_filled == report.zero_filled);
    CHECK(loaded.removed == report.removed);
    CHECK(loaded.restored_rate == report.restored_rate);
    std::remove(path.c_str());
}

TEST_CASE("embedded and secret pieces round trip bit-exactly") {
    Architecture arch;
    arch.input_shape = {1, 6, 6};
    arch.conv = {{2, Activation::ReLU}, {3, Activation::ReLU}};
    arch.class_count = 3;
    HufuNet hufu;
    hufu.carrier = make_model(arch, 77);
    hufu.acc_ori = 0.93f;
    auto [eph, sph] = split_carrier(hufu);

    const std::string eph_path = temp_path("hufu_piece.hfrc");
    save_eph(eph, eph_path);
    const EPH eph_loaded = load_eph(eph_path);
    CHECK(eph_loaded == eph);
    std::remove(eph_path.c_str());

    const std::string sph_path = temp_path("hufu_secret.hfrc");
    save_sph(sph, sph_path);
    const SPH sph_loaded = load_sph(sph_path);
    CHECK(combine(eph_loaded, sph_loaded) == hufu.carrier);
    std::remove(sph_path.c_str());
}

TEST_CASE("record loaders reject wrong record types") {
    AttackRecord attack;
    attack.kind = AttackKind::Prune;
    const std::string path = temp_path("hufu_wrong_type.hfrc");
    save_attack_record(attack, path);
    CHECK_THROWS_AS(load_embedding_record(path), Error);
    std::remove(path.c_str());
}
