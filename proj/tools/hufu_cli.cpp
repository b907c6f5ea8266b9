// Command-line front end for the watermarking pipeline. Every subcommand
// prints a JSON run manifest (command, parameters, seeds, paths, report) so
// runs can be reproduced from their output alone.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hufu/attacks.hpp"
#include "hufu/audit.hpp"
#include "hufu/crypto.hpp"
#include "hufu/dataset.hpp"
#include "hufu/model_io.hpp"
#include "hufu/restore.hpp"
#include "hufu/watermark.hpp"

using json = nlohmann::json;
using namespace hufu;

namespace {

constexpr int kSchemaVersion = 1;

json base_manifest(const std::string& command) {
    json m;
    m["schema_version"] = kSchemaVersion;
    m["command"] = command;
    return m;
}

void emit(const json& manifest, const std::string& report_path) {
    const std::string text = manifest.dump(2);
    if (!report_path.empty()) {
        std::ofstream out(report_path);
        if (!out) fail(ErrorKind::Io, "cannot write report file: " + report_path);
        out << text << "\n";
    }
    std::cout << text << "\n";
}

std::string images_path(const std::string& prefix) { return prefix + "-images.idx"; }
std::string labels_path(const std::string& prefix) { return prefix + "-labels.idx"; }

Dataset load_dataset(const std::string& prefix) {
    return load_idx(images_path(prefix), labels_path(prefix));
}

// Keys come from a raw 64-byte file or the HUFU_KEY hex environment
// variable, never from argv.
EmbeddingKey resolve_key(const std::string& key_file) {
    if (!key_file.empty()) return load_key_file(key_file);
    if (const char* hex = std::getenv("HUFU_KEY")) return key_from_bytes(hex_decode(hex));
    fail(ErrorKind::InvalidArgument, "no key: pass --key-file or set HUFU_KEY (hex)");
}

Architecture parse_architecture(const std::string& conv_spec, std::size_t classes,
                                std::size_t height, std::size_t width) {
    Architecture arch;
    arch.input_shape = {1, height, width};
    arch.class_count = classes;
    std::size_t start = 0;
    while (start < conv_spec.size()) {
        std::size_t end = conv_spec.find(',', start);
        if (end == std::string::npos) end = conv_spec.size();
        arch.conv.emplace_back(std::stoul(conv_spec.substr(start, end - start)), Activation::ReLU);
        start = end + 1;
    }
    if (arch.conv.empty()) fail(ErrorKind::InvalidArgument, "empty conv layer list");
    return arch;
}

json train_config_json(const TrainConfig& cfg) {
    return {{"learning_rate", cfg.learning_rate},
            {"epochs", cfg.epochs},
            {"batch_size", cfg.batch_size},
            {"weight_decay", cfg.weight_decay},
            {"seed", cfg.seed}};
}

json verification_json(const VerificationReport& v) {
    static const char* names[] = {"none", "reorder", "scale", "cutoff", "full"};
    return {{"acc_ori", v.acc_ori},
            {"acc_combined", v.acc_combined},
            {"diff_acc", v.diff_acc},
            {"tau", v.tau},
            {"verdict", v.verdict},
            {"restore_applied", names[static_cast<int>(v.restore_applied)]}};
}

json restore_report_json(const RestoreReport& r) {
    json j;
    j["restored_rate"] = r.restored_rate;
    j["zero_filled"] = json::array();
    for (auto [layer, channel] : r.zero_filled)
        j["zero_filled"].push_back({{"layer", layer}, {"channel", channel}});
    j["removed"] = json::array();
    for (auto [layer, channel] : r.removed)
        j["removed"].push_back({{"layer", layer}, {"channel", channel}});
    j["permutations"] = r.permutations;
    j["scale_skipped"] = r.scale_skipped;
    if (!r.kernel_scale_factors.empty()) {
        float lo = r.kernel_scale_factors[0], hi = lo;
        for (float v : r.kernel_scale_factors) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        j["scale_factor_min"] = lo;
        j["scale_factor_max"] = hi;
    }
    return j;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hufu: split-carrier watermarking for small conv nets"};
    app.require_subcommand(1);
    std::string report_path;
    app.add_option("--report", report_path, "also write the JSON manifest to this file");

    // gen-data
    auto* gen_data = app.add_subcommand("gen-data", "generate a synthetic dataset as IDX files");
    struct {
        std::uint64_t seed = 0;
        std::size_t classes = 4, per_class = 150, height = 12, width = 12;
        std::string family = "bars", out;
    } gd;
    gen_data->add_option("--seed", gd.seed)->required();
    gen_data->add_option("--classes", gd.classes);
    gen_data->add_option("--per-class", gd.per_class);
    gen_data->add_option("--height", gd.height);
    gen_data->add_option("--width", gd.width);
    gen_data->add_option("--family", gd.family)->check(CLI::IsMember({"bars", "blobs"}));
    gen_data->add_option("--out", gd.out, "output path prefix")->required();

    // gen-key
    auto* gen_key = app.add_subcommand("gen-key", "write a 64-byte embedding key");
    struct {
        std::uint64_t seed = 0;
        bool random = false;
        std::string out;
    } gk;
    gen_key->add_option("--seed", gk.seed, "deterministic key seed");
    gen_key->add_flag("--random", gk.random, "draw the key from the OS entropy source");
    gen_key->add_option("--out", gk.out)->required();

    // init-model
    auto* init_model = app.add_subcommand("init-model", "randomly initialize a host model");
    struct {
        std::string conv = "8,16,16", out;
        std::size_t classes = 4, height = 12, width = 12;
        std::uint64_t seed = 0;
    } im;
    init_model->add_option("--conv", im.conv, "comma-separated conv widths");
    init_model->add_option("--classes", im.classes);
    init_model->add_option("--height", im.height);
    init_model->add_option("--width", im.width);
    init_model->add_option("--seed", im.seed)->required();
    init_model->add_option("--out", im.out)->required();

    // gen-hufu
    auto* gen_hufu = app.add_subcommand("gen-hufu", "train a carrier and record its accuracy");
    struct {
        std::string ds, ds_test, out, conv = "4,8";
        TrainConfig cfg{0.2f, 25, 16, 0.0f, 1};
    } gh;
    gen_hufu->add_option("--ds", gh.ds, "training set path prefix")->required();
    gen_hufu->add_option("--ds-test", gh.ds_test, "test set path prefix")->required();
    gen_hufu->add_option("--conv", gh.conv);
    gen_hufu->add_option("--lr", gh.cfg.learning_rate);
    gen_hufu->add_option("--epochs", gh.cfg.epochs);
    gen_hufu->add_option("--batch", gh.cfg.batch_size);
    gen_hufu->add_option("--seed", gh.cfg.seed);
    gen_hufu->add_option("--out", gh.out)->required();

    // embed
    auto* embed_cmd = app.add_subcommand("embed", "embed a carrier's conv kernels into a host");
    struct {
        std::string host, hufu, key_file, out, record, mask;
    } em;
    embed_cmd->add_option("--host", em.host)->required();
    embed_cmd->add_option("--hufu", em.hufu)->required();
    embed_cmd->add_option("--key-file", em.key_file);
    embed_cmd->add_option("--out", em.out)->required();
    embed_cmd->add_option("--record", em.record, "write the embedding record here");
    embed_cmd->add_option("--mask", em.mask, "write the freeze mask here");

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model, optionally with a freeze mask");
    struct {
        std::string model, mask, data, out;
        TrainConfig cfg{0.08f, 20, 16, 0.0f, 9};
    } tr;
    train_cmd->add_option("--model", tr.model)->required();
    train_cmd->add_option("--mask", tr.mask);
    train_cmd->add_option("--data", tr.data)->required();
    train_cmd->add_option("--lr", tr.cfg.learning_rate);
    train_cmd->add_option("--epochs", tr.cfg.epochs);
    train_cmd->add_option("--batch", tr.cfg.batch_size);
    train_cmd->add_option("--weight-decay", tr.cfg.weight_decay);
    train_cmd->add_option("--seed", tr.cfg.seed);
    train_cmd->add_option("--out", tr.out)->required();

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "accuracy of a model on a dataset");
    struct {
        std::string model, data;
    } ev;
    eval_cmd->add_option("--model", ev.model)->required();
    eval_cmd->add_option("--data", ev.data)->required();

    // attack
    auto* attack_cmd = app.add_subcommand("attack", "apply an adversarial transform");
    struct {
        std::string kind, model, out, record, data;
        std::uint64_t seed = 0;
        float fraction = 0.1f;
        std::size_t layer = 0, k = 1;
        std::string strategy = "zero_b";
        std::vector<std::size_t> channels;
        TrainConfig finetune_cfg = finetune_preset();
        int range = 18;
        // synthetic stage toggles
        bool with_expand = false, with_finetune = false;
        std::vector<std::size_t> shuffle_layers, scale_pairs;
    } at;
    attack_cmd
        ->add_option("kind", at.kind,
                     "finetune|prune|shuffle|scale|expand|cutoff|supplement|synthetic")
        ->required()
        ->check(CLI::IsMember({"finetune", "prune", "shuffle", "scale", "expand", "cutoff",
                               "supplement", "synthetic"}));
    attack_cmd->add_option("--model", at.model)->required();
    attack_cmd->add_option("--out", at.out)->required();
    attack_cmd->add_option("--record", at.record, "write the attack record here");
    attack_cmd->add_option("--seed", at.seed);
    attack_cmd->add_option("--data", at.data, "dataset prefix (finetune/synthetic)");
    attack_cmd->add_option("--fraction", at.fraction, "prune fraction");
    attack_cmd->add_option("--layer", at.layer);
    attack_cmd->add_option("--k", at.k, "channels to add");
    attack_cmd->add_option("--strategy", at.strategy)->check(CLI::IsMember({"zero_b", "duplicate_split"}));
    attack_cmd->add_option("--channels", at.channels, "channels to cut off");
    attack_cmd->add_option("--epochs", at.finetune_cfg.epochs);
    attack_cmd->add_option("--lr", at.finetune_cfg.learning_rate);
    attack_cmd->add_option("--range", at.range, "scale exponent range");
    attack_cmd->add_flag("--with-expand", at.with_expand, "synthetic: include channel expansion");
    attack_cmd->add_flag("--with-finetune", at.with_finetune, "synthetic: include fine-tuning");
    attack_cmd->add_option("--shuffle-layers", at.shuffle_layers, "synthetic: layers to shuffle");
    attack_cmd->add_option("--scale-pairs", at.scale_pairs, "synthetic: pair anchors to rescale");

    // restore
    auto* restore_cmd = app.add_subcommand("restore", "normalize a suspect against a reference");
    struct {
        std::string suspect, reference, out, report, mode = "full";
    } rs;
    restore_cmd->add_option("--suspect", rs.suspect)->required();
    restore_cmd->add_option("--reference", rs.reference)->required();
    restore_cmd->add_option("--out", rs.out)->required();
    restore_cmd->add_option("--record", rs.report, "write the restore report here");
    restore_cmd->add_option("--mode", rs.mode)->check(CLI::IsMember({"full", "reorder", "scale", "cutoff"}));

    // verify
    auto* verify_cmd = app.add_subcommand("verify", "ownership verification of a suspect model");
    struct {
        std::string suspect, hufu, key_file, ds_test, reference, record;
        float tau = 0.15f;
        bool restore = false;
    } vf;
    verify_cmd->add_option("--suspect", vf.suspect)->required();
    verify_cmd->add_option("--record", vf.record,
                           "embedding record; enforces the host shape and key identity");
    verify_cmd->add_option("--hufu", vf.hufu)->required();
    verify_cmd->add_option("--key-file", vf.key_file);
    verify_cmd->add_option("--ds-test", vf.ds_test)->required();
    verify_cmd->add_option("--tau", vf.tau);
    verify_cmd->add_flag("--restore", vf.restore, "full restore before extraction");
    verify_cmd->add_option("--reference", vf.reference, "watermarked reference (with --restore)");

    // audit
    auto* audit_cmd = app.add_subcommand("audit", "forgery and stealthiness experiments");
    struct {
        std::string kind, host, forged, ds_test, model, a, b, data, owner_key_file;
        float range = 0.25f, cutoff = -1.0f;
        std::size_t keys = 100, bins = 32, max_index = 1, owner_max_index = 0;
        std::uint64_t seed = 0;
        bool gradients = false;
    } au;
    audit_cmd->add_option("kind", au.kind, "match|keysearch|histogram")
        ->required()
        ->check(CLI::IsMember({"match", "keysearch", "histogram"}));
    audit_cmd->add_option("--host", au.host);
    audit_cmd->add_option("--forged-hufu", au.forged);
    audit_cmd->add_option("--ds-test", au.ds_test);
    audit_cmd->add_option("--range", au.range);
    audit_cmd->add_option("--cutoff", au.cutoff);
    audit_cmd->add_option("--model", au.model);
    audit_cmd->add_option("--keys", au.keys);
    audit_cmd->add_option("--seed", au.seed);
    audit_cmd->add_option("--max-index", au.max_index);
    audit_cmd->add_option("--owner-key-file", au.owner_key_file);
    audit_cmd->add_option("--owner-max-index", au.owner_max_index,
                          "index budget for the owner key (usually the carrier kernel count)");
    audit_cmd->add_option("--a", au.a);
    audit_cmd->add_option("--b", au.b);
    audit_cmd->add_option("--bins", au.bins);
    audit_cmd->add_flag("--gradients", au.gradients, "compare gradient histograms");
    audit_cmd->add_option("--data", au.data, "dataset prefix for --gradients");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen_data) {
            const PatternFamily family =
                gd.family == "bars" ? PatternFamily::Bars : PatternFamily::Blobs;
            const Dataset d = synth_generate(gd.classes, gd.per_class, {1, gd.height, gd.width},
                                             gd.seed, family);
            save_idx(d, images_path(gd.out), labels_path(gd.out));
            json m = base_manifest("gen-data");
            m["params"] = {{"seed", gd.seed}, {"classes", gd.classes}, {"per_class", gd.per_class},
                           {"height", gd.height}, {"width", gd.width}, {"family", gd.family}};
            m["outputs"] = {{"images", images_path(gd.out)}, {"labels", labels_path(gd.out)}};
            m["report"] = {{"samples", d.size()}};
            emit(m, report_path);
        } else if (*gen_key) {
            EmbeddingKey key;
            if (gk.random) {
                std::ifstream urandom("/dev/urandom", std::ios::binary);
                urandom.read(reinterpret_cast<char*>(key.bytes.data()),
                             static_cast<std::streamsize>(key.bytes.size()));
                if (!urandom) fail(ErrorKind::Io, "cannot read /dev/urandom");
            } else {
                key = make_key(gk.seed);
            }
            save_key_file(key, gk.out);
            json m = base_manifest("gen-key");
            m["params"] = {{"seed", gk.random ? json(nullptr) : json(gk.seed)}, {"random", gk.random}};
            m["outputs"] = {{"key", gk.out}};
            m["report"] = {{"key_id", hex_encode(key_id(key))}};
            emit(m, report_path);
        } else if (*init_model) {
            const Architecture arch = parse_architecture(im.conv, im.classes, im.height, im.width);
            const Model model = make_model(arch, im.seed);
            save_model(model, im.out);
            json m = base_manifest("init-model");
            m["params"] = {{"conv", im.conv}, {"classes", im.classes}, {"height", im.height},
                           {"width", im.width}, {"seed", im.seed}};
            m["outputs"] = {{"model", im.out}};
            m["report"] = {{"parameters", model.parameter_count()},
                           {"conv_kernels", model.conv_kernel_count()}};
            emit(m, report_path);
        } else if (*gen_hufu) {
            const Dataset d_s = load_dataset(gh.ds);
            const Dataset d_s_test = load_dataset(gh.ds_test);
            const Architecture arch = parse_architecture(
                gh.conv, d_s.class_count, d_s.images.at(0).shape[1], d_s.images.at(0).shape[2]);
            const HufuNet hufu = generate_hufunet(arch, gh.cfg, d_s, d_s_test);
            save_hufunet(hufu, gh.out);
            json m = base_manifest("gen-hufu");
            m["params"] = {{"conv", gh.conv}, {"train", train_config_json(gh.cfg)}};
            m["inputs"] = {{"ds", gh.ds}, {"ds_test", gh.ds_test}};
            m["outputs"] = {{"hufu", gh.out}};
            m["report"] = {{"acc_ori", hufu.acc_ori},
                           {"eph_kernels", hufu.carrier.conv_kernel_count()}};
            emit(m, report_path);
        } else if (*embed_cmd) {
            const Model host = load_model(em.host);
            const HufuNet hufu = load_hufunet(em.hufu);
            const EmbeddingKey key = resolve_key(em.key_file);
            auto [eph, sph] = split_carrier(hufu);
            const EmbedResult result = embed(host, eph, key);
            save_model(result.model, em.out);
            if (!em.record.empty()) save_embedding_record(result.record, em.record);
            if (!em.mask.empty()) save_freeze_mask(result.mask, em.mask);
            json m = base_manifest("embed");
            m["inputs"] = {{"host", em.host}, {"hufu", em.hufu}};
            m["outputs"] = {{"model", em.out}, {"record", em.record}, {"mask", em.mask}};
            m["report"] = {{"key_id", hex_encode(result.record.key_hash)},
                           {"embedded_kernels", result.record.positions.size()},
                           {"host_kernels", result.record.host_kernel_count}};
            emit(m, report_path);
        } else if (*train_cmd) {
            Model model = load_model(tr.model);
            const Dataset data = load_dataset(tr.data);
            FreezeMask mask = tr.mask.empty() ? FreezeMask::none_for(model) : load_freeze_mask(tr.mask);
            auto [trained, report] = train(model, data, tr.cfg, mask);
            save_model(trained, tr.out);
            json m = base_manifest("train");
            m["params"] = {{"train", train_config_json(tr.cfg)}, {"mask", tr.mask}};
            m["inputs"] = {{"model", tr.model}, {"data", tr.data}};
            m["outputs"] = {{"model", tr.out}};
            m["report"] = {{"final_loss", report.final_loss},
                           {"final_accuracy", report.final_accuracy}};
            emit(m, report_path);
        } else if (*eval_cmd) {
            const Model model = load_model(ev.model);
            const Dataset data = load_dataset(ev.data);
            json m = base_manifest("evaluate");
            m["inputs"] = {{"model", ev.model}, {"data", ev.data}};
            m["report"] = {{"accuracy", evaluate(model, data)}};
            emit(m, report_path);
        } else if (*attack_cmd) {
            const Model model = load_model(at.model);
            Model out;
            AttackRecord record;
            if (at.kind == "finetune") {
                at.finetune_cfg.seed = at.seed ? at.seed : at.finetune_cfg.seed;
                std::tie(out, record) = finetune(model, load_dataset(at.data), at.finetune_cfg);
            } else if (at.kind == "prune") {
                std::tie(out, record) = prune_magnitude(model, at.fraction);
            } else if (at.kind == "shuffle") {
                std::tie(out, record) = structure_adjust(model, at.seed);
            } else if (at.kind == "scale") {
                std::vector<std::size_t> anchors;
                for (std::size_t l = 0; l + 1 < model.conv_layers.size(); ++l) anchors.push_back(l);
                std::tie(out, record) = parameter_adjust_pairs(model, at.seed, anchors, at.range);
            } else if (at.kind == "expand") {
                const ExpandStrategy strategy = at.strategy == "zero_b"
                                                    ? ExpandStrategy::ZeroB
                                                    : ExpandStrategy::DuplicateSplit;
                std::tie(out, record) = channel_expand(model, at.layer, at.k, strategy, at.seed);
            } else if (at.kind == "cutoff") {
                std::tie(out, record) = kernels_cutoff(model, at.layer, at.channels);
            } else if (at.kind == "supplement") {
                std::tie(out, record) = kernels_supplement(model, at.layer, at.k, at.seed);
            } else { // synthetic
                SyntheticConfig cfg;
                cfg.do_expand = at.with_expand;
                cfg.expand_layer = at.layer;
                cfg.expand_k = at.k;
                cfg.expand_strategy = at.strategy == "zero_b" ? ExpandStrategy::ZeroB
                                                              : ExpandStrategy::DuplicateSplit;
                cfg.do_finetune = at.with_finetune;
                cfg.finetune_config = at.finetune_cfg;
                cfg.shuffle_layers = at.shuffle_layers;
                cfg.scale_pairs = at.scale_pairs;
                cfg.scale_exponent_range = std::min(at.range, 18);
                cfg.prune_fraction = at.fraction;
                cfg.seed = at.seed;
                Dataset data;
                if (cfg.do_finetune) data = load_dataset(at.data);
                std::tie(out, record) = synthetic_attack(model, data, cfg);
            }
            save_model(out, at.out);
            if (!at.record.empty()) save_attack_record(record, at.record);
            json m = base_manifest("attack");
            m["params"] = {{"kind", at.kind}, {"seed", at.seed}, {"fraction", at.fraction},
                           {"layer", at.layer}, {"k", at.k}, {"strategy", at.strategy},
                           {"channels", at.channels}, {"range", at.range}};
            m["inputs"] = {{"model", at.model}, {"data", at.data}};
            m["outputs"] = {{"model", at.out}, {"record", at.record}};
            m["report"] = {{"kind", at.kind}};
            emit(m, report_path);
        } else if (*restore_cmd) {
            const Model suspect = load_model(rs.suspect);
            const Model reference = load_model(rs.reference);
            std::pair<Model, RestoreReport> result =
                rs.mode == "reorder"  ? reorder_restore(suspect, reference)
                : rs.mode == "scale"  ? scale_restore(suspect, reference)
                : rs.mode == "cutoff" ? cutoff_restore(suspect, reference)
                                      : full_restore(suspect, reference);
            save_model(result.first, rs.out);
            if (!rs.report.empty()) save_restore_report(result.second, rs.report);
            json m = base_manifest("restore");
            m["params"] = {{"mode", rs.mode}};
            m["inputs"] = {{"suspect", rs.suspect}, {"reference", rs.reference}};
            m["outputs"] = {{"model", rs.out}, {"record", rs.report}};
            m["report"] = restore_report_json(result.second);
            emit(m, report_path);
        } else if (*verify_cmd) {
            Model suspect = load_model(vf.suspect);
            const HufuNet hufu = load_hufunet(vf.hufu);
            const EmbeddingKey key = resolve_key(vf.key_file);
            const Dataset d_s_test = load_dataset(vf.ds_test);
            if (!vf.record.empty()) {
                const EmbeddingRecord record = load_embedding_record(vf.record);
                if (record.key_hash != key_id(key))
                    fail(ErrorKind::InvalidArgument, "key does not match the embedding record");
                if (!vf.restore && suspect.conv_kernel_count() != record.host_kernel_count)
                    fail(ErrorKind::Structural,
                         "suspect kernel count differs from embedding time; restore first "
                         "(--restore --reference <watermarked model>)");
            }
            VerificationReport v;
            if (vf.restore) {
                if (vf.reference.empty())
                    fail(ErrorKind::InvalidArgument, "--restore needs --reference");
                const Model reference = load_model(vf.reference);
                auto [restored, rr] = full_restore(suspect, reference);
                (void)rr;
                v = verify(restored, hufu, key, d_s_test, vf.tau);
                v.restore_applied = VerificationReport::Restore::Full;
            } else {
                v = verify(suspect, hufu, key, d_s_test, vf.tau);
            }
            json m = base_manifest("verify");
            m["params"] = {{"tau", vf.tau}, {"restore", vf.restore}};
            m["inputs"] = {{"suspect", vf.suspect}, {"hufu", vf.hufu}, {"ds_test", vf.ds_test},
                           {"reference", vf.reference}};
            m["report"] = verification_json(v);
            emit(m, report_path);
            return v.verdict ? 0 : 1;
        } else if (*audit_cmd) {
            json m = base_manifest("audit");
            if (au.kind == "match") {
                const Model host = load_model(au.host);
                const HufuNet forged = load_hufunet(au.forged);
                const MatchReport r =
                    match_search(host, forged, load_dataset(au.ds_test), au.range, au.cutoff);
                m["params"] = {{"range", au.range}, {"cutoff", au.cutoff}};
                m["inputs"] = {{"host", au.host}, {"forged_hufu", au.forged}, {"ds_test", au.ds_test}};
                m["report"] = {{"found_fraction", r.found_fraction},
                               {"forged_combined_accuracy", r.forged_combined_accuracy},
                               {"small_value_cutoff", r.small_value_cutoff}};
            } else if (au.kind == "keysearch") {
                const Model host = load_model(au.model);
                const KeySearchReport r = correlation_key_search(host, au.keys, au.seed, au.max_index);
                m["params"] = {{"keys", au.keys}, {"seed", au.seed}, {"max_index", au.max_index}};
                m["inputs"] = {{"model", au.model}};
                m["report"] = {{"keys_tried", r.keys_tried},
                               {"max_satisfying_kernels", r.max_satisfying_kernels},
                               {"best_key_id", hex_encode(r.best_key_hash)}};
                if (!au.owner_key_file.empty()) {
                    const EmbeddingKey owner = load_key_file(au.owner_key_file);
                    const std::size_t budget = au.owner_max_index ? au.owner_max_index : au.max_index;
                    m["report"]["owner_satisfying_kernels"] =
                        correlation_count(host, owner, budget);
                }
            } else { // histogram
                const Model a = load_model(au.a);
                const Model b = load_model(au.b);
                float distance;
                if (au.gradients) {
                    distance = gradient_histogram_distance(a, b, load_dataset(au.data), au.bins);
                } else {
                    distance = param_histogram_distance(a, b, au.bins);
                }
                m["params"] = {{"bins", au.bins}, {"gradients", au.gradients}};
                m["inputs"] = {{"a", au.a}, {"b", au.b}, {"data", au.data}};
                m["report"] = {{"l1_distance", distance}};
            }
            emit(m, report_path);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
