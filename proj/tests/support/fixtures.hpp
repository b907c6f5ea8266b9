#pragma once

// Small shared pipeline fixture so the per-module suites do not each pay
// for carrier/host training. Built lazily, cached per process.

#include <tuple>

#include "hufu/attacks.hpp"
#include "hufu/dataset.hpp"
#include "hufu/watermark.hpp"

namespace hufu::fixtures {

struct Pipeline {
    Shape3 shape{1, 12, 12};
    Dataset d_s, d_s_test;   // carrier task (bars)
    Dataset d_t, d_t_test;   // host task (blobs)
    HufuNet hufu;
    EPH eph;
    SPH sph;
    EmbeddingKey key;
    Model host_init;         // random host with the watermark embedded, untrained
    EmbeddingRecord record;
    FreezeMask mask;
    Model f_wm;              // embedded and trained host
};

inline const Pipeline& pipeline() {
    static const Pipeline p = [] {
        Pipeline f;
        f.d_s = synth_generate(4, 40, f.shape, 1001, PatternFamily::Bars);
        f.d_s_test = synth_generate(4, 25, f.shape, 1002, PatternFamily::Bars);
        f.d_t = synth_generate(4, 40, f.shape, 2001, PatternFamily::Blobs);
        f.d_t_test = synth_generate(4, 25, f.shape, 2002, PatternFamily::Blobs);

        Architecture carrier_arch;
        carrier_arch.input_shape = f.shape;
        carrier_arch.conv = {{3, Activation::ReLU}, {4, Activation::ReLU}};
        carrier_arch.class_count = 4;

        TrainConfig carrier_cfg;
        carrier_cfg.learning_rate = 0.2f;
        carrier_cfg.epochs = 20;
        carrier_cfg.batch_size = 8;
        carrier_cfg.seed = 11;
        f.hufu = generate_hufunet(carrier_arch, carrier_cfg, f.d_s, f.d_s_test);
        std::tie(f.eph, f.sph) = split_carrier(f.hufu);

        Architecture host_arch;
        host_arch.input_shape = f.shape;
        host_arch.conv = {{8, Activation::ReLU}, {12, Activation::ReLU}};
        host_arch.class_count = 4;
        const Model host = make_model(host_arch, 21);

        f.key = make_key(7);
        EmbedResult embedded = embed(host, f.eph, f.key);
        f.host_init = embedded.model;
        f.record = embedded.record;
        f.mask = embedded.mask;

        TrainConfig host_cfg;
        host_cfg.learning_rate = 0.1f;
        host_cfg.epochs = 14;
        host_cfg.batch_size = 8;
        host_cfg.seed = 31;
        f.f_wm = train_watermarked(f.host_init, f.mask, f.d_t, host_cfg).first;
        return f;
    }();
    return p;
}

} // namespace hufu::fixtures
