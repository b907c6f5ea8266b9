// Acceptance suite: one criterion per numbered block, one PASS/FAIL line
// each, every tolerance pinned in code. Runs the full pipeline at desk
// scale on fixed seeds; exit code is the number of failed criteria.

#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <string>
#include <tuple>
#include <vector>

#include "hufu/attacks.hpp"
#include "hufu/audit.hpp"
#include "hufu/crypto.hpp"
#include "hufu/dataset.hpp"
#include "hufu/model_io.hpp"
#include "hufu/restore.hpp"
#include "hufu/watermark.hpp"
#include "support/oracles.hpp"

using namespace hufu;

namespace {

int failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
    std::printf("[%2d] %s  %s (%s)\n", id, pass ? "PASS" : "FAIL", name, detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return buf;
}

bool same_bits(const Model& a, const Model& b) {
    const std::vector<float> pa = flatten_parameters(a), pb = flatten_parameters(b);
    return pa.size() == pb.size() &&
           std::memcmp(pa.data(), pb.data(), pa.size() * sizeof(float)) == 0;
}

bool logits_bit_equal(const Model& a, const Model& b, const Dataset& data) {
    for (const Tensor& img : data.images) {
        const Tensor la = forward(a, img), lb = forward(b, img);
        if (std::memcmp(la.data.data(), lb.data.data(), la.data.size() * sizeof(float)) != 0)
            return false;
    }
    return true;
}

struct Fixture {
    Shape3 shape{1, 12, 12};
    Dataset d_s, d_s_test, d_t, d_t_test;
    HufuNet hufu;
    EPH eph;
    SPH sph;
    EmbeddingKey key;
    Model host_init;   // embedded, untrained
    EmbeddingRecord record;
    FreezeMask mask;
    Model f_wm;        // embedded, trained 20 epochs
    Model twin;        // same init and schedule, no watermark
    TrainConfig host_cfg;
};

Fixture build_fixture() {
    Fixture f;
    f.d_s = synth_generate(4, 150, f.shape, 101, PatternFamily::Bars);
    f.d_s_test = synth_generate(4, 100, f.shape, 102, PatternFamily::Bars);
    f.d_t = synth_generate(4, 150, f.shape, 301, PatternFamily::Blobs);
    f.d_t_test = synth_generate(4, 100, f.shape, 302, PatternFamily::Blobs);

    Architecture carrier_arch;
    carrier_arch.input_shape = f.shape;
    carrier_arch.conv = {{4, Activation::ReLU}, {8, Activation::ReLU}};
    carrier_arch.class_count = 4;
    TrainConfig carrier_cfg;
    carrier_cfg.learning_rate = 0.2f;
    carrier_cfg.epochs = 25;
    carrier_cfg.batch_size = 16;
    carrier_cfg.seed = 1;
    f.hufu = generate_hufunet(carrier_arch, carrier_cfg, f.d_s, f.d_s_test);
    std::tie(f.eph, f.sph) = split_carrier(f.hufu);

    Architecture host_arch;
    host_arch.input_shape = f.shape;
    host_arch.conv = {{8, Activation::ReLU}, {16, Activation::ReLU}, {16, Activation::ReLU}};
    host_arch.class_count = 4;
    const Model host0 = make_model(host_arch, 5);

    // key seed 6 embeds without any probing displacement on this host
    f.key = make_key(6);
    EmbedResult emb = embed(host0, f.eph, f.key);
    f.host_init = emb.model;
    f.record = emb.record;
    f.mask = emb.mask;

    f.host_cfg.learning_rate = 0.08f;
    f.host_cfg.epochs = 20;
    f.host_cfg.batch_size = 16;
    f.host_cfg.seed = 9;
    f.f_wm = train_watermarked(f.host_init, f.mask, f.d_t, f.host_cfg).first;
    f.twin = train(host0, f.d_t, f.host_cfg, FreezeMask::none_for(host0)).first;
    return f;
}

} // namespace

int main() {
    std::printf("building fixture (carrier, embed, 20-epoch host training, twin) ...\n");
    const Fixture f = build_fixture();
    std::printf("carrier acc_ori=%.4f  host acc=%.4f  n=%zu  N=%llu\n\n", f.hufu.acc_ori,
                evaluate(f.f_wm, f.d_t_test), f.eph.count(),
                static_cast<unsigned long long>(f.record.host_kernel_count));

    { // 1. untouched suspect: exact identity
        const VerificationReport v = verify(f.f_wm, f.hufu, f.key, f.d_s_test);
        const EPH retrieved = extract(f.f_wm, f.eph, f.key);
        const bool pass = v.diff_acc == 0.0f && v.verdict && retrieved == f.eph &&
                          f.hufu.acc_ori >= 0.90f;
        report(1, "baseline identity: diff_acc exactly 0, piece bit-exact", pass,
               fmt("diff_acc=%g acc_ori=%.4f bit_exact=%d", v.diff_acc, f.hufu.acc_ori,
                   int(retrieved == f.eph)));
    }

    { // 2. fidelity: watermarked vs plain twin within 3 points
        const float acc_wm = evaluate(f.f_wm, f.d_t_test);
        const float acc_twin = evaluate(f.twin, f.d_t_test);
        const float delta = std::fabs(acc_wm - acc_twin);
        report(2, "fidelity: |watermarked - twin| <= 3 points", delta <= 0.03f,
               fmt("wm=%.4f twin=%.4f delta=%.4f", acc_wm, acc_twin, delta));
    }

    { // 3. freeze invariant through the 20-epoch training
        bool intact = true;
        for (std::size_t i = 0; i < f.eph.count(); ++i)
            if (!(kernel_ref(f.f_wm, f.record.positions[i]) == f.eph.kernels[i])) intact = false;
        report(3, "freeze invariant: embedded kernels bit-identical after training", intact,
               fmt("%zu kernels checked", f.eph.count()));
    }

    { // 4. structure adjustment, then reorder restore
        auto [shuffled, attack] = structure_adjust(f.f_wm, 99);
        (void)attack;
        const VerificationReport direct = verify(shuffled, f.hufu, f.key, f.d_s_test);
        auto [restored, rr] = reorder_restore(shuffled, f.f_wm);
        (void)rr;
        const EPH retrieved = extract(restored, f.eph, f.key);
        const VerificationReport after = verify(restored, f.hufu, f.key, f.d_s_test);
        const bool pass = direct.acc_combined <= 0.25f + 0.15f && retrieved == f.eph &&
                          after.diff_acc == 0.0f;
        report(4, "structure adjustment: collapse then exact reorder restore", pass,
               fmt("direct=%.4f restored_diff=%g bit_exact=%d", direct.acc_combined,
                   after.diff_acc, int(retrieved == f.eph)));
    }

    { // 5. parameter adjustment: bit-exact logits, exact factor recovery
        auto [scaled, attack] = parameter_adjust(f.f_wm, 31337);
        const bool logits_ok = logits_bit_equal(scaled, f.f_wm, f.d_t_test);

        auto [restored, rr] = scale_restore(scaled, f.f_wm);
        bool factors_ok = true;
        std::size_t flat = 0;
        for (std::size_t l = 0; l < f.f_wm.conv_layers.size(); ++l) {
            const int into = l == 0 ? 0 : attack.pair_exponents[l - 1];
            const int outof = l < attack.pair_exponents.size() ? attack.pair_exponents[l] : 0;
            const float expected = std::ldexp(1.0f, outof - into);
            for (std::size_t k = 0; k < f.f_wm.conv_layers[l].kernels.size(); ++k, ++flat)
                if (std::fabs(rr.kernel_scale_factors[flat] - expected) > 1e-6f * std::fabs(expected))
                    factors_ok = false;
        }
        const EPH retrieved = extract(restored, f.eph, f.key);
        const bool pass = logits_ok && factors_ok && retrieved == f.eph;
        report(5, "parameter adjustment: exact logits, factors within 1e-6, piece bit-exact", pass,
               fmt("logits_bit_equal=%d factors_ok=%d bit_exact=%d", int(logits_ok),
                   int(factors_ok), int(retrieved == f.eph)));
    }

    { // 6. channel expansion (double a layer) plus shuffle, full restore
        const std::size_t width = f.f_wm.conv_layers[1].out_channels;
        auto [expanded, e] = channel_expand(f.f_wm, 1, width, ExpandStrategy::ZeroB, 515);
        (void)e;
        auto [shuffled, s] = structure_adjust(expanded, 616);
        (void)s;
        auto [restored, rr] = full_restore(shuffled, f.f_wm);
        const VerificationReport v = verify(restored, f.hufu, f.key, f.d_s_test);
        const bool pass = v.verdict && rr.restored_rate == 1.0f;
        report(6, "channel expansion + shuffle: full restore at rate 1.0", pass,
               fmt("rate=%.4f verdict=%d diff=%g", rr.restored_rate, int(v.verdict), v.diff_acc));
    }

    { // 7. pruning robustness at 10%, host destruction at 90%
        auto [p10, r10] = prune_magnitude(f.f_wm, 0.10f);
        (void)r10;
        const VerificationReport v10 = verify(p10, f.hufu, f.key, f.d_s_test);

        auto [p90, r90] = prune_magnitude(f.f_wm, 0.90f);
        (void)r90;
        const float host90 = evaluate(p90, f.d_t_test);
        const VerificationReport v90 = verify(p90, f.hufu, f.key, f.d_s_test);
        const bool pass = v10.verdict && host90 <= 0.25f + 0.15f;
        report(7, "pruning: verdict at 10%, host dead by 90%", pass,
               fmt("diff10=%.4f host90=%.4f (90%% watermark verdict=%d, informational)",
                   v10.diff_acc, host90, int(v90.verdict)));
    }

    { // 8. kernels cutoff of 1 of 8 channels, then cutoff restore
        auto [cut, record] = kernels_cutoff(f.f_wm, 0, {2});
        (void)record;
        const float before = evaluate(f.f_wm, f.d_t_test);
        const float after = evaluate(cut, f.d_t_test);
        auto [restored, rr] = cutoff_restore(cut, f.f_wm);
        (void)rr;
        const VerificationReport v = verify(restored, f.hufu, f.key, f.d_s_test);
        const bool pass = before - after <= 0.10f && v.verdict;
        report(8, "kernels cutoff: small host drop, verdict after restore", pass,
               fmt("host %.4f->%.4f diff=%.4f verdict=%d", before, after, v.diff_acc,
                   int(v.verdict)));
    }

    { // 9. staged synthetic attack at 10% and 50% pruning
        SyntheticConfig cfg;
        cfg.do_expand = true;
        cfg.expand_layer = 1;
        cfg.expand_k = 16;
        cfg.expand_strategy = ExpandStrategy::DuplicateSplit;
        cfg.do_finetune = true;
        cfg.finetune_config = finetune_preset();
        cfg.finetune_config.epochs = 8;
        cfg.shuffle_layers = {0, 1, 2};
        cfg.scale_pairs = {0, 1};
        cfg.scale_exponent_range = 3;
        cfg.seed = 79;

        cfg.prune_fraction = 0.10f;
        auto [light, lr] = synthetic_attack(f.f_wm, f.d_t, cfg);
        (void)lr;
        auto [light_restored, light_report] = full_restore(light, f.f_wm);
        const VerificationReport v_light = verify(light_restored, f.hufu, f.key, f.d_s_test);

        cfg.prune_fraction = 0.50f;
        auto [heavy, hr] = synthetic_attack(f.f_wm, f.d_t, cfg);
        (void)hr;
        const float heavy_host = evaluate(heavy, f.d_t_test);
        auto [heavy_restored, heavy_report] = full_restore(heavy, f.f_wm);
        (void)heavy_report;
        const VerificationReport v_heavy = verify(heavy_restored, f.hufu, f.key, f.d_s_test);

        const bool pass = light_report.restored_rate >= 0.95f && v_light.verdict &&
                          heavy_host <= 0.25f + 0.10f;
        report(9, "synthetic attack: restorable at 10%, host dead at 50%", pass,
               fmt("rate10=%.4f verdict10=%d host50=%.4f (50%% verdict=%d)",
                   light_report.restored_rate, int(v_light.verdict), heavy_host,
                   int(v_heavy.verdict)));
    }

    { // 10. integrity over ten innocent models
        Architecture host_arch = architecture_of(f.host_init);
        int positives = 0;
        float lo = 1.0f, hi = 0.0f;
        for (int i = 0; i < 10; ++i) {
            Model m = make_model(host_arch, 1000 + static_cast<std::uint64_t>(i));
            TrainConfig cfg = f.host_cfg;
            cfg.epochs = 6;
            cfg.seed = 2000 + static_cast<std::uint64_t>(i);
            m = train(m, f.d_t, cfg, FreezeMask::none_for(m)).first;
            const VerificationReport v = verify(m, f.hufu, f.key, f.d_s_test);
            positives += v.verdict;
            lo = std::min(lo, v.acc_combined);
            hi = std::max(hi, v.acc_combined);
        }
        const bool pass = positives == 0 && lo >= 0.25f - 0.15f && hi <= 0.25f + 0.15f;
        report(10, "integrity: 0/10 innocent models claimed", pass,
               fmt("positives=%d combined in [%.4f, %.4f]", positives, lo, hi));
    }

    { // 11. key search statistics
        const KeySearchReport ks = correlation_key_search(f.f_wm, 100, 31337, 1);
        const std::size_t owner = correlation_count(f.host_init, f.key, f.eph.count());
        const bool pass = ks.max_satisfying_kernels <= 5 && owner >= f.eph.count();
        report(11, "key search: random keys <= 5 kernels, owner key >= n", pass,
               fmt("max_random=%zu owner=%zu n=%zu", ks.max_satisfying_kernels, owner,
                   f.eph.count()));
    }

    { // 12. HMAC-SHA256 known answers (digest level)
        auto hmac_hex = [](const std::vector<std::uint8_t>& key,
                           const std::vector<std::uint8_t>& msg) {
            return hex_encode(hmac_sha256(key.data(), key.size(), msg.data(), msg.size()));
        };
        auto ascii = [](const char* s) {
            return std::vector<std::uint8_t>(s, s + std::strlen(s));
        };
        bool pass = true;
        pass &= hmac_hex(std::vector<std::uint8_t>(20, 0x0b), ascii("Hi There")) ==
                "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7";
        pass &= hmac_hex(ascii("Jefe"), ascii("what do ya want for nothing?")) ==
                "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843";
        pass &= hmac_hex(std::vector<std::uint8_t>(20, 0xaa), std::vector<std::uint8_t>(50, 0xdd)) ==
                "773ea91e36800e46854db8ebd09181a72959098b3ef8c122d9635514ced565fe";
        pass &= hmac_hex(std::vector<std::uint8_t>(131, 0xaa),
                         ascii("Test Using Larger Than Block-Size Key - Hash Key First")) ==
                "60e431591ee0b67f0d8a26aacbf5b77f8e0bc6213728c5140546040f0ee37f54";

        // position computation reproduces a published digest before the modulus
        std::vector<std::uint8_t> key_bytes(64, 0x00);
        for (int i = 0; i < 20; ++i) key_bytes[static_cast<std::size_t>(i)] = 0x0b;
        const std::uint64_t prefix = 0xb0344c61d8db3853ULL;
        pass &= compute_position(ConvKernel{}, 0x4869205468657265ULL, key_from_bytes(key_bytes),
                                 1000003) == prefix % 1000003;
        report(12, "hmac-sha256 known-answer vectors", pass, "rfc 4231 cases 1-4,6 + position");
    }

    { // 13. numerical soundness: gradients and assignment
        Architecture tiny;
        tiny.input_shape = {1, 6, 6};
        tiny.conv = {{3, Activation::ReLU}, {4, Activation::ReLU}};
        tiny.class_count = 4;
        const Model model = make_model(tiny, 7);
        Tensor input({1, 6, 6});
        Rng rng(7);
        for (float& v : input.data) v = static_cast<float>(rng.uniform());

        const Gradients g = backward(model, input, 2);
        std::vector<float> flat;
        for (const auto& v : g.kernel) flat.insert(flat.end(), v.begin(), v.end());
        for (const auto& v : g.conv_bias) flat.insert(flat.end(), v.begin(), v.end());
        flat.insert(flat.end(), g.dense_w.begin(), g.dense_w.end());
        flat.insert(flat.end(), g.dense_b.begin(), g.dense_b.end());
        const std::vector<double> fd = oracle::finite_difference_gradients(model, input, 2, 1e-3);
        double worst = 0.0;
        for (std::size_t p = 0; p < fd.size(); ++p)
            worst = std::max(worst, std::fabs(flat[p] - fd[p]) /
                                        std::max({std::fabs(double(flat[p])), std::fabs(fd[p]), 1e-4}));

        bool perm_ok = true;
        for (int trial = 0; trial < 50; ++trial) {
            Architecture arch;
            arch.input_shape = {1, 6, 6};
            arch.conv = {{5, Activation::ReLU}, {6, Activation::ReLU}};
            arch.class_count = 3;
            const Model m = make_model(arch, 400 + static_cast<std::uint64_t>(trial));
            auto [shuffled, attack] = structure_adjust(m, 500 + static_cast<std::uint64_t>(trial));
            auto [restored, rr] = reorder_restore(shuffled, m);
            if (!same_bits(restored, m)) perm_ok = false;
            for (std::size_t l = 0; l < attack.permutations.size(); ++l)
                if (rr.permutations[l] != invert_permutation(attack.permutations[l])) perm_ok = false;
        }
        const bool pass = model.parameter_count() <= 500 && worst < 1e-2 && perm_ok;
        report(13, "numerics: finite-difference gradients, exact permutation recovery", pass,
               fmt("params=%zu worst_rel=%.2e perms_ok=%d", model.parameter_count(), worst,
                   int(perm_ok)));
    }

    { // 14. match-search monotonicity across the published ranges
        Architecture arch = architecture_of(f.hufu.carrier);
        TrainConfig cfg;
        cfg.learning_rate = 0.2f;
        cfg.epochs = 25;
        cfg.batch_size = 16;
        cfg.seed = 8080;
        const HufuNet forged = generate_hufunet(arch, cfg, f.d_s, f.d_s_test);
        bool nondecreasing = true;
        float prev = -1.0f;
        std::string detail;
        for (float range : {0.25f, 0.50f, 0.75f, 0.90f}) {
            const MatchReport r = match_search(f.f_wm, forged, f.d_s_test, range);
            if (r.found_fraction < prev) nondecreasing = false;
            prev = r.found_fraction;
            detail += fmt("%g:%.3f ", range, r.found_fraction);
        }
        report(14, "match search: found fraction nondecreasing in range", nondecreasing, detail);
    }

    std::printf("\n%d of 14 criteria passed\n", 14 - failures);
    return failures;
}
