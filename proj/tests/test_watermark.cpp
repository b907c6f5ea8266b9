#include "doctest.h"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <set>

#include "hufu/model_io.hpp"
#include "hufu/watermark.hpp"
#include "support/fixtures.hpp"

using namespace hufu;

TEST_CASE("xorpmv folds the ieee bit patterns") {
    ConvKernel zero{};
    CHECK(xorpmv(zero) == 0x00000000u);

    ConvKernel cancel{};
    cancel.values[2] = 1.75f;
    cancel.values[6] = 1.75f; // identical patterns cancel
    CHECK(xorpmv(cancel) == 0x00000000u);

    ConvKernel one{};
    one.values[0] = 1.0f;
    CHECK(xorpmv(one) == 0x3F800000u);
}

TEST_CASE("compute_position is deterministic and respects the modulus") {
    const EmbeddingKey key = make_key(3);
    ConvKernel k{};
    k.values[4] = -0.25f;
    CHECK(compute_position(k, 1, key, 1) == 0);
    CHECK(compute_position(k, 5, key, 37) == compute_position(k, 5, key, 37));
    CHECK(compute_position(k, 5, key, 37) < 37);
    CHECK_THROWS_AS(compute_position(k, 1, key, 0), Error);
}

TEST_CASE("key helpers enforce the 64-byte contract") {
    CHECK_THROWS_AS(key_from_bytes(std::vector<std::uint8_t>(63, 1)), Error);
    const EmbeddingKey a = make_key(1), b = make_key(2);
    CHECK(a.bytes != b.bytes);
    CHECK(key_id(a) != key_id(b));
}

TEST_CASE("split then combine reproduces the carrier bit-exactly") {
    const auto& f = fixtures::pipeline();
    auto [eph, sph] = split_carrier(f.hufu);
    CHECK(eph.count() == f.hufu.carrier.conv_kernel_count());
    const Model rebuilt = combine(eph, sph);
    CHECK(rebuilt == f.hufu.carrier);
}

TEST_CASE("carrier generation is deterministic and accurate") {
    const auto& f = fixtures::pipeline();
    CHECK(f.hufu.acc_ori >= 0.90f);

    Architecture arch = architecture_of(f.hufu.carrier);
    TrainConfig cfg;
    cfg.learning_rate = 0.2f;
    cfg.epochs = 20;
    cfg.batch_size = 8;
    cfg.seed = 11;
    const HufuNet again = generate_hufunet(arch, cfg, f.d_s, f.d_s_test);
    CHECK(again.carrier == f.hufu.carrier);
    CHECK(again.acc_ori == f.hufu.acc_ori);
}

TEST_CASE("untrained carrier scores near chance") {
    const auto& f = fixtures::pipeline();
    Architecture arch = architecture_of(f.hufu.carrier);
    TrainConfig cfg;
    cfg.epochs = 0;
    const HufuNet raw = generate_hufunet(arch, cfg, f.d_s, f.d_s_test);
    CHECK(raw.acc_ori >= 0.15f - 1e-6f);
    CHECK(raw.acc_ori <= 0.35f + 1e-6f);
}

TEST_CASE("embedding records distinct in-range positions and a consistent bitmap") {
    const auto& f = fixtures::pipeline();
    f.record.validate();
    CHECK(f.record.host_kernel_count == f.host_init.conv_kernel_count());
    CHECK(f.record.positions.size() == f.eph.count());
    std::set<std::uint64_t> unique(f.record.positions.begin(), f.record.positions.end());
    CHECK(unique.size() == f.record.positions.size());
    CHECK(f.record.key_hash == key_id(f.key));

    // the freeze mask marks exactly the embedded kernels
    CHECK(f.mask.frozen_count() == f.eph.count());
    for (std::uint64_t pos : f.record.positions) {
        const KernelAddress addr = kernel_at(f.host_init, pos);
        CHECK(f.mask.is_frozen(addr.layer_index, addr.out_channel, addr.in_channel));
    }
}

TEST_CASE("embedding a piece as large as the host fills every position") {
    const auto& f = fixtures::pipeline();
    // host with exactly as many kernels as the carrier has
    Architecture arch = architecture_of(f.hufu.carrier);
    const Model host = make_model(arch, 777);
    EmbedResult r = embed(host, f.eph, f.key);
    REQUIRE(r.record.positions.size() == host.conv_kernel_count());
    std::vector<std::uint64_t> sorted = r.record.positions;
    std::sort(sorted.begin(), sorted.end());
    for (std::uint64_t p = 0; p < sorted.size(); ++p) CHECK(sorted[p] == p);
}

TEST_CASE("embedding rejects a piece larger than the host") {
    const auto& f = fixtures::pipeline();
    Architecture small;
    small.input_shape = f.shape;
    small.conv = {{2, Activation::ReLU}};
    small.class_count = 4;
    const Model tiny_host = make_model(small, 1);
    CHECK_THROWS_AS(embed(tiny_host, f.eph, f.key), Error);
}

TEST_CASE("colliding raw positions resolve by linear probing") {
    // two identical kernels and a tiny host make raw collisions easy to find
    EPH eph;
    eph.carrier_arch.input_shape = {1, 4, 4};
    eph.carrier_arch.conv = {{2, Activation::ReLU}};
    eph.carrier_arch.class_count = 2;
    ConvKernel k{};
    k.values = {0.5f, -1.0f, 0.25f, 2.0f, 0.0f, 1.0f, -0.5f, 0.75f, -2.0f};
    eph.kernels = {k, k};

    Architecture host_arch;
    host_arch.input_shape = {1, 4, 4};
    host_arch.conv = {{2, Activation::ReLU}, {2, Activation::ReLU}};
    host_arch.class_count = 2;
    const Model host = make_model(host_arch, 9); // N = 6

    const std::uint64_t N = host.conv_kernel_count();
    bool found_collision = false;
    for (std::uint64_t seed = 0; seed < 500 && !found_collision; ++seed) {
        const EmbeddingKey key = make_key(seed);
        const std::uint64_t raw1 = compute_position(eph.kernels[0], 1, key, N);
        const std::uint64_t raw2 = compute_position(eph.kernels[1], 2, key, N);
        if (raw1 != raw2) continue;
        found_collision = true;
        const EmbedResult r = embed(host, eph, key);
        CHECK(r.record.positions[0] == raw1);
        CHECK(r.record.positions[1] == (raw1 + 1) % N); // probed to the next slot
    }
    CHECK(found_collision);
}

TEST_CASE("watermarked training changes unfrozen kernels but not embedded ones") {
    const auto& f = fixtures::pipeline();
    bool some_unfrozen_changed = false;
    for (std::size_t l = 0; l < f.f_wm.conv_layers.size(); ++l)
        for (std::size_t o = 0; o < f.f_wm.conv_layers[l].out_channels; ++o)
            for (std::size_t i = 0; i < f.f_wm.conv_layers[l].in_channels; ++i) {
                if (f.mask.is_frozen(l, o, i)) continue;
                if (!(f.f_wm.conv_layers[l].kernel(o, i) == f.host_init.conv_layers[l].kernel(o, i)))
                    some_unfrozen_changed = true;
            }
    CHECK(some_unfrozen_changed);
}

TEST_CASE("embed then extract returns the piece bit-exactly") {
    const auto& f = fixtures::pipeline();
    const EPH retrieved = extract(f.host_init, f.eph, f.key);
    CHECK(retrieved == f.eph);

    // still intact after host training thanks to the freeze mask
    const EPH after_training = extract(f.f_wm, f.eph, f.key);
    CHECK(after_training == f.eph);
}

TEST_CASE("extraction from an innocent model yields junk and chance accuracy") {
    const auto& f = fixtures::pipeline();
    Architecture host_arch = architecture_of(f.f_wm);
    const Model innocent = make_model(host_arch, 4242);
    const EPH retrieved = extract(innocent, f.eph, f.key);
    CHECK(retrieved.kernels != f.eph.kernels);
    const float acc = evaluate(combine(retrieved, f.sph), f.d_s_test);
    CHECK(acc < 0.5f);
}

TEST_CASE("extraction with the wrong key reads the wrong kernels") {
    const auto& f = fixtures::pipeline();
    const EPH retrieved = extract(f.f_wm, f.eph, make_key(404));
    CHECK(retrieved.kernels != f.eph.kernels);
}

TEST_CASE("extraction refuses hosts smaller than the piece") {
    const auto& f = fixtures::pipeline();
    Architecture small;
    small.input_shape = f.shape;
    small.conv = {{1, Activation::ReLU}};
    small.class_count = 4;
    const Model shrunk = make_model(small, 5);
    CHECK_THROWS_AS(extract(shrunk, f.eph, f.key), Error);
}

TEST_CASE("pruned suspect differs only where pruning zeroed embedded kernels") {
    const auto& f = fixtures::pipeline();
    Model pruned = f.f_wm;
    // zero one embedded kernel by hand, mimicking a targeted prune
    const std::uint64_t pos = f.record.positions[3];
    kernel_ref(pruned, pos) = ConvKernel{};

    const EPH retrieved = extract(pruned, f.eph, f.key);
    for (std::size_t i = 0; i < retrieved.count(); ++i) {
        if (i == 3)
            CHECK(retrieved.kernels[i] == ConvKernel{});
        else
            CHECK(retrieved.kernels[i] == f.eph.kernels[i]);
    }
}

TEST_CASE("verification on the untouched watermarked host is exact") {
    const auto& f = fixtures::pipeline();
    const VerificationReport report = verify(f.f_wm, f.hufu, f.key, f.d_s_test);
    CHECK(report.diff_acc == 0.0f);
    CHECK(report.acc_combined == f.hufu.acc_ori);
    CHECK(report.verdict);
}

TEST_CASE("verification rejects innocent models") {
    const auto& f = fixtures::pipeline();
    const Model innocent = make_model(architecture_of(f.f_wm), 31415);
    const VerificationReport report = verify(innocent, f.hufu, f.key, f.d_s_test);
    CHECK_FALSE(report.verdict);
}

TEST_CASE("tau zero makes any nonzero perturbation fail") {
    const auto& f = fixtures::pipeline();
    const VerificationReport exact = verify(f.f_wm, f.hufu, f.key, f.d_s_test, 0.0f);
    CHECK_FALSE(exact.verdict); // diff_acc < 0 is impossible

    Model perturbed = f.f_wm;
    kernel_ref(perturbed, f.record.positions[0]).values[0] += 10.0f;
    const VerificationReport report = verify(perturbed, f.hufu, f.key, f.d_s_test, 0.0f);
    CHECK_FALSE(report.verdict);
}

TEST_CASE("positions under independent keys rarely match the owner key") {
    const auto& f = fixtures::pipeline();
    const double n = static_cast<double>(f.eph.count());
    const double N = static_cast<double>(f.record.host_kernel_count);
    double total_fraction = 0.0;
    const std::size_t trials = 120;
    for (std::size_t t = 0; t < trials; ++t) {
        const EmbeddingKey other = make_key(90000 + t);
        const EmbedResult r = embed(f.host_init, f.eph, other);
        std::size_t matches = 0;
        for (std::size_t i = 0; i < f.eph.count(); ++i)
            matches += r.record.positions[i] == f.record.positions[i];
        total_fraction += static_cast<double>(matches) / n;
    }
    CHECK(total_fraction / static_cast<double>(trials) <= 2.0 * n / N + 0.05);
}

TEST_CASE("carrier and mask files round trip") {
    const auto& f = fixtures::pipeline();
    const std::string hufu_path =
        (std::filesystem::temp_directory_path() / "hufu_carrier.hufu").string();
    save_hufunet(f.hufu, hufu_path);
    const HufuNet loaded = load_hufunet(hufu_path);
    CHECK(loaded.carrier == f.hufu.carrier);
    CHECK(loaded.acc_ori == f.hufu.acc_ori);
    std::remove(hufu_path.c_str());

    const std::string mask_path =
        (std::filesystem::temp_directory_path() / "hufu_mask.hfrc").string();
    save_freeze_mask(f.mask, mask_path);
    const FreezeMask mask = load_freeze_mask(mask_path);
    REQUIRE(mask.layers.size() == f.mask.layers.size());
    for (std::size_t l = 0; l < mask.layers.size(); ++l) CHECK(mask.layers[l].flags == f.mask.layers[l].flags);
    std::remove(mask_path.c_str());
}
