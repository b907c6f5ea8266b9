#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hufu/attacks.hpp"
#include "hufu/audit.hpp"
#include "hufu/crypto.hpp"
#include "hufu/dataset.hpp"
#include "hufu/model_io.hpp"
#include "hufu/restore.hpp"
#include "hufu/watermark.hpp"

namespace py = pybind11;
using namespace hufu;

namespace {

Shape3 to_shape(const std::tuple<std::size_t, std::size_t, std::size_t>& t) {
    return Shape3{std::get<0>(t), std::get<1>(t), std::get<2>(t)};
}

Architecture make_architecture(const std::tuple<std::size_t, std::size_t, std::size_t>& shape,
                               const std::vector<std::size_t>& conv, std::size_t class_count) {
    Architecture arch;
    arch.input_shape = to_shape(shape);
    for (std::size_t width : conv) arch.conv.emplace_back(width, Activation::ReLU);
    arch.class_count = class_count;
    return arch;
}

} // namespace

PYBIND11_MODULE(_hufu, m) {
    m.doc() = "Split-carrier watermarking for small convolutional networks";

    py::register_exception<Error>(m, "HufuError");

    py::class_<Dataset>(m, "Dataset")
        .def_readonly("class_count", &Dataset::class_count)
        .def("__len__", &Dataset::size);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init([](float lr, std::size_t epochs, std::size_t batch_size, float weight_decay,
                         std::uint64_t seed) {
                 TrainConfig cfg;
                 cfg.learning_rate = lr;
                 cfg.epochs = epochs;
                 cfg.batch_size = batch_size;
                 cfg.weight_decay = weight_decay;
                 cfg.seed = seed;
                 return cfg;
             }),
             py::arg("learning_rate") = 0.05f, py::arg("epochs") = 10,
             py::arg("batch_size") = 16, py::arg("weight_decay") = 0.0f, py::arg("seed") = 0)
        .def_readwrite("learning_rate", &TrainConfig::learning_rate)
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("weight_decay", &TrainConfig::weight_decay)
        .def_readwrite("seed", &TrainConfig::seed);

    py::class_<Architecture>(m, "Architecture")
        .def(py::init(&make_architecture), py::arg("input_shape"), py::arg("conv"),
             py::arg("class_count"));

    py::class_<Model>(m, "Model")
        .def_property_readonly("parameter_count", &Model::parameter_count)
        .def_property_readonly("conv_kernel_count", &Model::conv_kernel_count)
        .def("save", &save_model, py::arg("path"))
        .def("__eq__", [](const Model& a, const Model& b) { return a == b; });

    py::class_<FreezeMask>(m, "FreezeMask")
        .def_property_readonly("frozen_count", &FreezeMask::frozen_count);

    py::class_<HufuNet>(m, "HufuNet")
        .def_readonly("acc_ori", &HufuNet::acc_ori)
        .def_readonly("carrier", &HufuNet::carrier)
        .def("save", &save_hufunet, py::arg("path"));

    py::class_<EPH>(m, "EPH")
        .def_property_readonly("count", &EPH::count)
        .def("save", &save_eph, py::arg("path"))
        .def("__eq__", [](const EPH& a, const EPH& b) { return a == b; });
    py::class_<SPH>(m, "SPH").def("save", &save_sph, py::arg("path"));

    py::class_<EmbeddingKey>(m, "EmbeddingKey")
        .def_static("from_bytes",
                    [](py::bytes raw) {
                        const std::string s = raw;
                        return key_from_bytes(std::vector<std::uint8_t>(s.begin(), s.end()));
                    })
        .def_property_readonly("key_id", [](const EmbeddingKey& k) { return hex_encode(key_id(k)); });

    py::class_<EmbeddingRecord>(m, "EmbeddingRecord")
        .def_readonly("host_kernel_count", &EmbeddingRecord::host_kernel_count)
        .def_readonly("positions", &EmbeddingRecord::positions)
        .def_property_readonly("key_id",
                               [](const EmbeddingRecord& r) {
                                   return hex_encode(r.key_hash.data(), r.key_hash.size());
                               })
        .def("save", &save_embedding_record, py::arg("path"));

    py::class_<VerificationReport>(m, "VerificationReport")
        .def_readonly("acc_ori", &VerificationReport::acc_ori)
        .def_readonly("acc_combined", &VerificationReport::acc_combined)
        .def_readonly("diff_acc", &VerificationReport::diff_acc)
        .def_readonly("tau", &VerificationReport::tau)
        .def_readonly("verdict", &VerificationReport::verdict);

    py::class_<AttackRecord>(m, "AttackRecord")
        .def_property_readonly("kind",
                               [](const AttackRecord& r) { return static_cast<int>(r.kind); })
        .def_readonly("permutations", &AttackRecord::permutations)
        .def_readonly("pair_exponents", &AttackRecord::pair_exponents)
        .def_readonly("zeroed", &AttackRecord::zeroed)
        .def("save", &save_attack_record, py::arg("path"));

    py::class_<RestoreReport>(m, "RestoreReport")
        .def_readonly("restored_rate", &RestoreReport::restored_rate)
        .def_readonly("permutations", &RestoreReport::permutations)
        .def_readonly("zero_filled", &RestoreReport::zero_filled)
        .def_readonly("removed", &RestoreReport::removed)
        .def_readonly("kernel_scale_factors", &RestoreReport::kernel_scale_factors)
        .def("save", &save_restore_report, py::arg("path"));

    py::class_<MatchReport>(m, "MatchReport")
        .def_readonly("range_pct", &MatchReport::range_pct)
        .def_readonly("found_fraction", &MatchReport::found_fraction)
        .def_readonly("forged_combined_accuracy", &MatchReport::forged_combined_accuracy);

    py::class_<KeySearchReport>(m, "KeySearchReport")
        .def_readonly("keys_tried", &KeySearchReport::keys_tried)
        .def_readonly("max_satisfying_kernels", &KeySearchReport::max_satisfying_kernels);

    // datasets
    m.def(
        "synth_generate",
        [](std::size_t classes, std::size_t per_class,
           const std::tuple<std::size_t, std::size_t, std::size_t>& shape, std::uint64_t seed,
           const std::string& family) {
            return synth_generate(classes, per_class, to_shape(shape), seed,
                                  family == "blobs" ? PatternFamily::Blobs : PatternFamily::Bars);
        },
        py::arg("classes"), py::arg("per_class"), py::arg("shape"), py::arg("seed"),
        py::arg("family") = "bars");
    m.def("split_dataset", &split, py::arg("dataset"), py::arg("fraction"), py::arg("seed"));
    m.def("load_idx", &load_idx, py::arg("images_path"), py::arg("labels_path"));
    m.def("save_idx", &save_idx, py::arg("dataset"), py::arg("images_path"),
          py::arg("labels_path"));

    // models
    m.def("make_model", &make_model, py::arg("architecture"), py::arg("seed"));
    m.def("load_model", &load_model, py::arg("path"));
    m.def("evaluate", &evaluate, py::arg("model"), py::arg("dataset"));
    m.def(
        "train",
        [](const Model& model, const Dataset& data, const TrainConfig& cfg) {
            auto [trained, report] = train(model, data, cfg, FreezeMask::none_for(model));
            return py::make_tuple(trained, report.final_accuracy);
        },
        py::arg("model"), py::arg("dataset"), py::arg("config"));

    // watermarking
    m.def("make_key", &make_key, py::arg("seed"));
    m.def("load_key_file", &load_key_file, py::arg("path"));
    m.def("save_key_file", &save_key_file, py::arg("key"), py::arg("path"));
    m.def("generate_hufunet", &generate_hufunet, py::arg("architecture"), py::arg("config"),
          py::arg("d_s"), py::arg("d_s_test"));
    m.def("load_hufunet", &load_hufunet, py::arg("path"));
    m.def("load_eph", &load_eph, py::arg("path"));
    m.def("load_sph", &load_sph, py::arg("path"));
    m.def("split_carrier", &split_carrier, py::arg("hufu"));
    m.def("combine", &combine, py::arg("eph"), py::arg("sph"));
    m.def(
        "embed",
        [](const Model& host, const EPH& eph, const EmbeddingKey& key) {
            EmbedResult r = embed(host, eph, key);
            return py::make_tuple(r.model, r.record, r.mask);
        },
        py::arg("host"), py::arg("eph"), py::arg("key"));
    m.def(
        "train_watermarked",
        [](const Model& host, const FreezeMask& mask, const Dataset& data, const TrainConfig& cfg) {
            auto [trained, report] = train_watermarked(host, mask, data, cfg);
            return py::make_tuple(trained, report.final_accuracy);
        },
        py::arg("host"), py::arg("mask"), py::arg("dataset"), py::arg("config"));
    m.def("extract", &extract, py::arg("suspect"), py::arg("eph_local"), py::arg("key"));
    m.def("verify", &verify, py::arg("suspect"), py::arg("hufu_local"), py::arg("key"),
          py::arg("d_s_test"), py::arg("tau") = 0.15f);

    // attacks
    m.def("finetune_preset", &finetune_preset);
    m.def("finetune", &finetune, py::arg("model"), py::arg("dataset"), py::arg("config"));
    m.def("prune_magnitude", &prune_magnitude, py::arg("model"), py::arg("fraction"));
    m.def("structure_adjust", &structure_adjust, py::arg("model"), py::arg("seed"));
    m.def("parameter_adjust", &parameter_adjust, py::arg("model"), py::arg("seed"));
    m.def(
        "channel_expand",
        [](const Model& model, std::size_t layer, std::size_t k, const std::string& strategy,
           std::uint64_t seed) {
            return channel_expand(model, layer, k,
                                  strategy == "duplicate_split" ? ExpandStrategy::DuplicateSplit
                                                                : ExpandStrategy::ZeroB,
                                  seed);
        },
        py::arg("model"), py::arg("layer"), py::arg("k"), py::arg("strategy") = "zero_b",
        py::arg("seed") = 0);
    m.def("kernels_cutoff", &kernels_cutoff, py::arg("model"), py::arg("layer"),
          py::arg("channels"));
    m.def("kernels_supplement", &kernels_supplement, py::arg("model"), py::arg("layer"),
          py::arg("k"), py::arg("seed"));
    m.def(
        "synthetic_attack",
        [](const Model& model, const Dataset& data, std::size_t expand_layer, std::size_t expand_k,
           const std::string& expand_strategy, std::size_t finetune_epochs,
           const std::vector<std::size_t>& shuffle_layers, const std::vector<std::size_t>& scale_pairs,
           int scale_exponent_range, float prune_fraction, std::uint64_t seed) {
            SyntheticConfig cfg;
            cfg.do_expand = expand_k > 0;
            cfg.expand_layer = expand_layer;
            cfg.expand_k = expand_k;
            cfg.expand_strategy = expand_strategy == "duplicate_split"
                                      ? ExpandStrategy::DuplicateSplit
                                      : ExpandStrategy::ZeroB;
            cfg.do_finetune = finetune_epochs > 0;
            cfg.finetune_config = finetune_preset();
            cfg.finetune_config.epochs = finetune_epochs;
            cfg.shuffle_layers = shuffle_layers;
            cfg.scale_pairs = scale_pairs;
            cfg.scale_exponent_range = scale_exponent_range;
            cfg.prune_fraction = prune_fraction;
            cfg.seed = seed;
            return synthetic_attack(model, data, cfg);
        },
        py::arg("model"), py::arg("dataset"), py::arg("expand_layer") = 0, py::arg("expand_k") = 0,
        py::arg("expand_strategy") = "zero_b", py::arg("finetune_epochs") = 0,
        py::arg("shuffle_layers") = std::vector<std::size_t>{},
        py::arg("scale_pairs") = std::vector<std::size_t>{}, py::arg("scale_exponent_range") = 3,
        py::arg("prune_fraction") = 0.0f, py::arg("seed") = 0);

    m.def(
        "replay_attack",
        [](const Model& pre_attack, const AttackRecord& record, const Dataset* data) {
            return replay_attack(pre_attack, record, data);
        },
        py::arg("pre_attack"), py::arg("record"), py::arg("dataset") = nullptr);
    m.def("load_attack_record", &load_attack_record, py::arg("path"));
    m.def("load_embedding_record", &load_embedding_record, py::arg("path"));
    m.def("load_restore_report", &load_restore_report, py::arg("path"));

    // restore
    m.def("reorder_restore", &reorder_restore, py::arg("suspect"), py::arg("reference"));
    m.def("scale_restore", &scale_restore, py::arg("suspect"), py::arg("reference"));
    m.def("cutoff_restore", &cutoff_restore, py::arg("suspect"), py::arg("reference"));
    m.def("full_restore", &full_restore, py::arg("suspect"), py::arg("reference"));
    m.def("cosine_similarity", &cosine_similarity, py::arg("a"), py::arg("b"));

    // audit
    m.def("match_search", &match_search, py::arg("host"), py::arg("forged"), py::arg("d_s_test"),
          py::arg("range_pct"), py::arg("small_value_cutoff") = -1.0f);
    m.def("correlation_count", &correlation_count, py::arg("host"), py::arg("key"),
          py::arg("max_index"));
    m.def("correlation_key_search", &correlation_key_search, py::arg("host"),
          py::arg("trial_keys"), py::arg("seed"), py::arg("max_index") = 1);
    m.def("param_histogram_distance", &param_histogram_distance, py::arg("a"), py::arg("b"),
          py::arg("bins"));
    m.def("gradient_histogram_distance", &gradient_histogram_distance, py::arg("a"), py::arg("b"),
          py::arg("dataset"), py::arg("bins"));
}
