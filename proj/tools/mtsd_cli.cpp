// mtsd: command-line front end for training, evaluation, decomposition export and dataset tools.

#include "mtsd/mtsd.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace mtsd;

namespace {

struct Overrides {
    std::string config_file;
    std::string spec;
    std::optional<std::size_t> epochs, seeds, batch_size;
    std::optional<double> learning_rate;

    void attach(CLI::App* app) {
        app->add_option("--config", config_file, "JSON training config")->check(CLI::ExistingFile);
        app->add_option("--spec", spec, "stack spec such as A-tsg, M-t3s3g3, A-tsg-nostat, or MLP");
        app->add_option("--epochs", epochs, "override config epochs");
        app->add_option("--seeds", seeds, "override config seed count");
        app->add_option("--batch-size", batch_size, "override config batch size");
        app->add_option("--lr", learning_rate, "override config learning rate");
    }

    harness::TrainConfig resolve() const {
        harness::TrainConfig c = config_file.empty() ? harness::TrainConfig{} : harness::load_config(config_file);
        if (!spec.empty()) c.spec = spec;
        if (epochs) c.epochs = *epochs;
        if (seeds) c.seeds = *seeds;
        if (batch_size) c.batch_size = *batch_size;
        if (learning_rate) c.learning_rate = *learning_rate;
        c.validate();
        return c;
    }
};

void print_run(const harness::SeedResult& r) {
    std::printf("part %zu seed %llu: accuracy %.4f  macro-F1 %.4f  (%zu train / %zu test windows, %.1fs)\n", r.part,
                static_cast<unsigned long long>(r.seed), r.metrics.accuracy, r.metrics.f1, r.train_windows, r.test_windows,
                r.wall_seconds);
    std::fflush(stdout);
}

/// Every subject's windows after preprocessing with the part's training statistics, ordered by (subject, start).
data::WindowSet all_windows(std::span<const data::Recording> recordings, const data::DatasetManifest& m, std::size_t part,
                            data::Preprocess preprocess) {
    const auto processed = data::standardize(recordings, m, data::train_subjects(m, part), preprocess);
    data::WindowSet out;
    out.channels = m.channels;
    out.window = m.window;
    for (const auto& r : processed) out.append(data::window(r, m.window, m.stride));
    return out;
}

Mtsdnet& as_mtsdnet(Model& model) {
    auto* net = dynamic_cast<Mtsdnet*>(&model);
    if (!net) throw UsageError("this command needs an MTSDNet checkpoint, not the MLP baseline");
    return *net;
}

struct CheckpointContext {
    LoadedCheckpoint checkpoint;
    data::DatasetManifest manifest;
    std::vector<data::Recording> recordings;
    std::size_t part = 0;
    data::Preprocess preprocess = data::Preprocess::standard;
};

CheckpointContext open_checkpoint(const std::string& checkpoint, const std::string& data_dir, std::optional<std::size_t> part) {
    CheckpointContext ctx;
    ctx.checkpoint = read_checkpoint(checkpoint);
    auto [m, recs] = data::load_canonical(data_dir);
    ctx.manifest = std::move(m);
    ctx.recordings = std::move(recs);
    const auto& meta = ctx.checkpoint.meta;
    ctx.part = part ? *part : meta.value("part", std::size_t{0});
    ctx.preprocess = meta.contains("preprocess") ? data::parse_preprocess(meta.at("preprocess").get<std::string>())
                                                 : ctx.manifest.preprocess;
    return ctx;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stacked basis-constrained decomposition network for cross-person activity recognition"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "train one model on one part with one seed");
    std::string data_dir, out_dir = "run";
    std::size_t part = 0;
    std::uint64_t seed = 1;
    Overrides train_over;
    train->add_option("--data", data_dir, "canonical dataset directory")->required()->check(CLI::ExistingDirectory);
    train->add_option("--part", part, "test part index (0-based)");
    train->add_option("--seed", seed, "random seed");
    train->add_option("--out", out_dir, "output directory");
    train_over.attach(train);

    // protocol
    auto* protocol = app.add_subcommand("protocol", "every part times every seed, with mean(std) tables");
    std::string proto_data, proto_out = "results";
    std::vector<std::size_t> proto_parts;
    Overrides proto_over;
    protocol->add_option("--data", proto_data, "canonical dataset directory")->required()->check(CLI::ExistingDirectory);
    protocol->add_option("--out", proto_out, "output directory");
    protocol->add_option("--part", proto_parts, "restrict to these part indices (0-based)");
    proto_over.attach(protocol);

    // eval
    auto* eval = app.add_subcommand("eval", "score a checkpoint on a part's test subjects");
    std::string eval_ckpt, eval_data;
    std::optional<std::size_t> eval_part;
    eval->add_option("--checkpoint", eval_ckpt)->required()->check(CLI::ExistingFile);
    eval->add_option("--data", eval_data)->required()->check(CLI::ExistingDirectory);
    eval->add_option("--part", eval_part, "defaults to the part the checkpoint was trained for");

    // decompose
    auto* decompose = app.add_subcommand("decompose", "export one window's components as CSV");
    std::string dec_ckpt, dec_data, dec_out;
    std::size_t dec_sample = 0;
    std::optional<std::size_t> dec_part;
    decompose->add_option("--checkpoint", dec_ckpt)->required()->check(CLI::ExistingFile);
    decompose->add_option("--data", dec_data)->required()->check(CLI::ExistingDirectory);
    decompose->add_option("--sample", dec_sample, "window index over all subjects, ordered by (subject, start)");
    decompose->add_option("--out", dec_out, "CSV path")->required();
    decompose->add_option("--part", dec_part, "preprocessing part; defaults to the checkpoint's");

    // features
    auto* features = app.add_subcommand("features", "export per-layer coefficient features as CSV");
    std::string feat_ckpt, feat_data, feat_out;
    std::optional<std::size_t> feat_part;
    features->add_option("--checkpoint", feat_ckpt)->required()->check(CLI::ExistingFile);
    features->add_option("--data", feat_data)->required()->check(CLI::ExistingDirectory);
    features->add_option("--out", feat_out, "output directory")->required();
    features->add_option("--part", feat_part, "preprocessing part; defaults to the checkpoint's");

    // synth
    auto* synth = app.add_subcommand("synth", "write a synthetic subject-biased dataset");
    data::SynthSpec synth_spec;
    std::string synth_out;
    std::uint64_t synth_seed = 1;
    synth->add_option("--out", synth_out)->required();
    synth->add_option("--subjects", synth_spec.subjects);
    synth->add_option("--classes", synth_spec.classes);
    synth->add_option("--channels", synth_spec.channels);
    synth->add_option("--length", synth_spec.length, "time steps per subject");
    synth->add_option("--bias-scale", synth_spec.bias_scale);
    synth->add_option("--noise-scale", synth_spec.noise_scale);
    synth->add_option("--drift-scale", synth_spec.drift_scale);
    synth->add_option("--trend-scale", synth_spec.trend_scale, "class ramp height across one window");
    synth->add_option("--window", synth_spec.window);
    synth->add_option("--stride", synth_spec.stride);
    synth->add_option("--segment-min", synth_spec.segment_min, "shortest activity segment, in windows");
    synth->add_option("--segment-max", synth_spec.segment_max, "longest activity segment, in windows");
    synth->add_option("--seed", synth_seed);

    // import-ucihar
    auto* import = app.add_subcommand("import-ucihar", "convert the UCI HAR Dataset folder to the canonical layout");
    std::string raw_dir, import_out;
    import->add_option("--raw", raw_dir, "the 'UCI HAR Dataset' directory")->required()->check(CLI::ExistingDirectory);
    import->add_option("--out", import_out)->required();

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every primitive and a tiny network");
    std::uint64_t gc_seed = 1;
    std::string gc_out;
    gradcheck->add_option("--seed", gc_seed);
    gradcheck->add_option("--out", gc_out, "also write the JSON report here");

    // params
    auto* params = app.add_subcommand("params", "count trainable parameters");
    std::string params_spec = "A-tsg", params_data;
    std::size_t pk = 9, ph = 128, pc = 6;
    harness::TrainConfig params_cfg;
    params->add_option("--spec", params_spec);
    params->add_option("--data", params_data, "take geometry from this dataset")->check(CLI::ExistingDirectory);
    params->add_option("--channels", pk);
    params->add_option("--window", ph);
    params->add_option("--classes", pc);
    params->add_option("--extractor-width", params_cfg.extractor_width);
    params->add_option("--classifier-width", params_cfg.classifier_width);
    params->add_option("--poly-degree", params_cfg.poly_degree);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            auto config = train_over.resolve();
            auto [m, recs] = data::load_canonical(data_dir);
            const auto preprocess = harness::preprocess_for(config, m);
            auto outcome = harness::train_one(recs, m, part, config, seed);
            print_run(outcome.result);
            harness::RunResult result;
            result.spec = config.spec;
            result.dataset = m.name;
            result.config = config;
            result.parameter_count = outcome.model->parameter_count();
            result.parts = {part};
            result.runs = {outcome.result};
            result.part_summaries = {harness::summarize(result.runs)};
            result.overall = result.part_summaries.front();
            harness::write_results(result, out_dir);
            save_checkpoint(*outcome.model, fs::path(out_dir) / "model.ckpt",
                            {{"dataset", m.name}, {"part", part}, {"seed", seed}, {"preprocess", data::to_string(preprocess)}});
            std::cout << "wrote " << (fs::path(out_dir) / "model.ckpt").string() << "\n";
        } else if (*protocol) {
            auto config = proto_over.resolve();
            if (!proto_parts.empty()) config.parts = proto_parts;
            auto [m, recs] = data::load_canonical(proto_data);
            const auto result = harness::run_protocol(recs, m, config, print_run);
            harness::write_results(result, proto_out);
            std::cout << harness::results_csv(result);
        } else if (*eval) {
            auto ctx = open_checkpoint(eval_ckpt, eval_data, eval_part);
            const auto split = harness::prepare_split(ctx.recordings, ctx.manifest, ctx.part, ctx.preprocess);
            const auto predictions = harness::predict(*ctx.checkpoint.model, split.test, 512);
            const auto metrics = harness::compute_metrics(predictions, split.test.labels, ctx.manifest.classes);
            nlohmann::json j{{"part", ctx.part},
                             {"test_windows", split.test.size()},
                             {"accuracy", metrics.accuracy},
                             {"precision", metrics.precision},
                             {"recall", metrics.recall},
                             {"f1", metrics.f1},
                             {"attention", ctx.checkpoint.model->attention()}};
            std::cout << j.dump(2) << "\n";
        } else if (*decompose) {
            auto ctx = open_checkpoint(dec_ckpt, dec_data, dec_part);
            auto& net = as_mtsdnet(*ctx.checkpoint.model);
            const auto windows = all_windows(ctx.recordings, ctx.manifest, ctx.part, ctx.preprocess);
            if (dec_sample >= windows.size()) {
                throw UsageError("sample " + std::to_string(dec_sample) + " out of range; " + std::to_string(windows.size()) +
                                 " windows");
            }
            const std::vector<std::size_t> row{dec_sample};
            harness::write_text(dec_out, harness::export_components(net, windows.batch(row)));
            std::cout << "wrote " << dec_out << " (subject " << windows.subjects[dec_sample] << ", start "
                      << windows.starts[dec_sample] << ", label " << windows.labels[dec_sample] << ")\n";
        } else if (*features) {
            auto ctx = open_checkpoint(feat_ckpt, feat_data, feat_part);
            auto& net = as_mtsdnet(*ctx.checkpoint.model);
            const auto windows = all_windows(ctx.recordings, ctx.manifest, ctx.part, ctx.preprocess);
            const auto files = harness::export_features(net, windows);
            for (std::size_t l = 0; l < files.size(); ++l) {
                const auto path = fs::path(feat_out) /
                                  ("layer" + std::to_string(l) + "_" + std::string(to_string(net.layer(l).config.kind)) + ".csv");
                harness::write_text(path, files[l]);
                std::cout << "wrote " << path.string() << "\n";
            }
        } else if (*synth) {
            auto [m, recs] = data::synth_generate(synth_spec, synth_seed);
            data::write_canonical(synth_out, m, recs);
            std::cout << "wrote " << recs.size() << " subjects to " << synth_out << "\n";
        } else if (*import) {
            const auto m = data::import_ucihar(raw_dir, import_out);
            std::cout << "wrote " << m.name << " (" << m.channels << " channels, " << m.classes << " classes) to " << import_out
                      << "\n";
        } else if (*gradcheck) {
            const auto report = harness::gradcheck_all(gc_seed);
            const auto text = harness::to_json(report).dump(2);
            std::cout << text << "\n";
            if (!gc_out.empty()) harness::write_text(gc_out, text + "\n");
            return report.passed() ? 0 : 1;
        } else if (*params) {
            data::DatasetManifest m;
            if (!params_data.empty()) {
                m = data::read_manifest(params_data);
            } else {
                m.channels = pk;
                m.window = ph;
                m.classes = pc;
            }
            params_cfg.spec = params_spec;
            auto model = harness::build_model(params_cfg, m, 0);
            std::map<std::string, std::size_t> groups;
            for (const auto& p : model->parameters()) {
                const auto dot = p.name.find('.', p.name.find('.') + 1);
                groups[p.name.substr(0, dot)] += p.array.size();
            }
            for (const auto& [name, n] : groups) std::cout << name << " " << n << "\n";
            std::cout << "total " << model->parameter_count() << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
