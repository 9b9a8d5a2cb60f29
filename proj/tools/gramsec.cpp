// gramsec: command-line front end for the Gram-matrix deviation classifier.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gramsec/audio.hpp"
#include "gramsec/calibration.hpp"
#include "gramsec/classifier.hpp"
#include "gramsec/error.hpp"
#include "gramsec/gram.hpp"
#include "gramsec/harness.hpp"
#include "gramsec/interchange.hpp"
#include "gramsec/manifest.hpp"
#include "gramsec/refnet.hpp"
#include "gramsec/wav.hpp"

namespace fs = std::filesystem;
using namespace gramsec;

namespace {

// Optional refnet front end shared by fit/predict/eval.
struct RefnetOptions {
    std::optional<std::uint64_t> seed;
    bool band_filters = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--refnet-seed", seed,
                        "Run manifest spectrograms through the reference network with this seed");
        cmd->add_flag("--band-filters", band_filters, "Use band-selector kernels in the first block")
            ->needs(cmd->get_option("--refnet-seed"));
    }

    SampleTransform transform() const {
        if (!seed) return identity_transform();
        RefNetConfig config;
        config.seed = *seed;
        config.band_filter_mode = band_filters;
        return refnet_transform(config);
    }
};

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("failed to write " + path.string());
}

void print_metrics(const Metrics& m) {
    std::printf("ACC %.6f\n", m.accuracy);
    std::printf("BA %.6f\n", m.balanced_accuracy);
    std::printf("confusion (rows: true, columns: predicted)\n");
    for (const auto& row : m.confusion) {
        for (std::size_t j = 0; j < row.size(); ++j) {
            std::printf("%s%llu", j ? " " : "  ", static_cast<unsigned long long>(row[j]));
        }
        std::printf("\n");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gram-matrix deviation classifier for CNN activations"};
    app.require_subcommand(1);

    std::string in_path, out_path, manifest_path, model_path, config_path;
    unsigned threads = 0;

    auto* spectrogram = app.add_subcommand("spectrogram", "WAV -> 128-band log-mel spectrogram file");
    spectrogram->add_option("--in", in_path, "16-bit PCM or 32-bit float WAV")->required();
    spectrogram->add_option("--out", out_path, "Output spectrogram file")->required();

    std::uint64_t refnet_seed = 42;
    bool band_filters = false;
    std::vector<std::uint32_t> channels{8, 16, 32};
    auto* refnet = app.add_subcommand("refnet", "Spectrogram -> reference network activations");
    refnet->add_option("--in", in_path, "Spectrogram file")->required();
    refnet->add_option("--out", out_path, "Output activation file")->required();
    refnet->add_option("--seed", refnet_seed, "Weight seed")->capture_default_str();
    refnet->add_flag("--band-filters", band_filters, "Use band-selector kernels in the first block");
    refnet->add_option("--channels", channels, "Channels per block")->delimiter(',')->capture_default_str();

    auto* summarize_cmd = app.add_subcommand("summarize", "Activation file -> normalized Gram summaries");
    summarize_cmd->add_option("--in", in_path, "Activation file")->required();
    summarize_cmd->add_option("--out", out_path, "Output summary file")->required();

    std::optional<std::size_t> top_k;
    std::string score_split = "validation";
    RefnetOptions fit_net, predict_net, eval_net;
    auto* fit = app.add_subcommand("fit", "Calibrate a model from a manifest's train and validation splits");
    fit->add_option("--manifest", manifest_path, "Dataset manifest (JSON)")->required();
    fit->add_option("--out", out_path, "Output model file")->required();
    fit->add_option("--top-k", top_k, "Number of layers to keep (default ceil(L/2))");
    fit->add_option("--score-split", score_split, "Split used to score layers")
        ->check(CLI::IsMember({"train", "validation"}))
        ->capture_default_str();
    fit->add_option("--threads", threads, "Worker threads (0 = all cores)");
    fit_net.attach(fit);

    auto* predict_cmd = app.add_subcommand("predict", "Score every test entry of a manifest");
    predict_cmd->add_option("--manifest", manifest_path, "Dataset manifest (JSON)")->required();
    predict_cmd->add_option("--model", model_path, "Model file")->required();
    predict_cmd->add_option("--out", out_path, "Output CSV")->required();
    predict_cmd->add_option("--threads", threads, "Worker threads (0 = all cores)");
    predict_net.attach(predict_cmd);

    auto* eval = app.add_subcommand("eval", "Report ACC, BA and the confusion matrix on the test split");
    eval->add_option("--manifest", manifest_path, "Dataset manifest (JSON)")->required();
    eval->add_option("--model", model_path, "Model file")->required();
    eval->add_option("--threads", threads, "Worker threads (0 = all cores)");
    eval_net.attach(eval);

    SynthConfig synth_cfg;
    auto* synth = app.add_subcommand("synth", "Generate a band-separable synthetic dataset");
    synth->add_option("--classes", synth_cfg.num_classes, "Number of classes (<= 8)")->capture_default_str();
    synth->add_option("--train", synth_cfg.train, "Train samples per class")->capture_default_str();
    synth->add_option("--val", synth_cfg.validation, "Validation samples per class")->capture_default_str();
    synth->add_option("--test", synth_cfg.test, "Test samples per class")->capture_default_str();
    synth->add_option("--seed", synth_cfg.seed, "Generator seed")->capture_default_str();
    synth->add_option("--frames", synth_cfg.frames, "Frames per spectrogram")->capture_default_str();
    synth->add_option("--out", out_path, "Output directory")->required();

    auto* run = app.add_subcommand("run", "Run a full fit/select/evaluate experiment");
    run->add_option("--config", config_path, "Experiment config (JSON)")->required();
    std::optional<std::size_t> run_top_k;
    std::string run_out;
    run->add_option("--top-k", run_top_k, "Override the config's top_k");
    run->add_option("--out", run_out, "Override the config's output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*spectrogram) {
            const auto spec = log_mel_spectrogram(read_wav(in_path));
            write_activations_file(to_activations(spec), out_path);
            std::printf("%zu bands x %zu frames -> %s\n", spec.bands(), spec.frames(), out_path.c_str());
        } else if (*refnet) {
            RefNetConfig config;
            config.channels = channels;
            config.seed = refnet_seed;
            config.band_filter_mode = band_filters;
            const auto spec = spectrogram_from(read_activations_file(in_path));
            const auto acts = forward(spec, config);
            write_activations_file(acts, out_path);
            for (const auto& shape : acts.layout()) std::printf("%s\n", describe(shape).c_str());
        } else if (*summarize_cmd) {
            const auto acts = read_activations_file(in_path);
            write_activations_file(summaries_to_activations(summarize_sample(acts)), out_path);
            std::printf("%zu layers -> %s\n", acts.records.size(), out_path.c_str());
        } else if (*fit) {
            const auto manifest = load_manifest(manifest_path);
            const auto transform = fit_net.transform();
            CalibrationOptions options;
            options.top_k = top_k;
            options.score_split = *parse_split(score_split);
            const auto model = calibrate(load_split(manifest, Split::Train, transform, threads),
                                         load_split(manifest, Split::Validation, transform, threads),
                                         manifest.num_classes, transformed_layout(manifest, transform),
                                         options);
            save_model(model, fs::path(out_path));
            std::printf("classes %u layers %zu top_k %u selected", model.num_classes,
                        model.num_layers(), model.top_k);
            for (auto id : model.selected_layers) std::printf(" %u", id);
            std::printf("\n");
        } else if (*predict_cmd) {
            const auto manifest = load_manifest(manifest_path);
            const auto model = load_model(fs::path(model_path));
            const auto transform = predict_net.transform();
            check_layout(transformed_layout(manifest, transform), model, "manifest activations");
            const auto ev = evaluate(load_split(manifest, Split::Test, transform, threads), model);
            write_file(out_path, format_predictions_csv(ev.predictions, model.num_classes));
            std::printf("%zu predictions -> %s\n", ev.predictions.size(), out_path.c_str());
        } else if (*eval) {
            const auto manifest = load_manifest(manifest_path);
            const auto model = load_model(fs::path(model_path));
            const auto transform = eval_net.transform();
            check_layout(transformed_layout(manifest, transform), model, "manifest activations");
            print_metrics(evaluate(load_split(manifest, Split::Test, transform, threads), model).metrics);
        } else if (*synth) {
            const auto manifest = generate_synthetic(synth_cfg, out_path);
            std::printf("%zu samples, %u classes -> %s\n", manifest.entries.size(), manifest.num_classes,
                        out_path.c_str());
        } else if (*run) {
            auto config = load_experiment_config(config_path);
            if (run_top_k) config.top_k = run_top_k;
            if (!run_out.empty()) config.output_dir = run_out;
            const auto report = run_experiment(config);
            print_metrics(report.evaluation.metrics);
            std::printf("selected layers");
            for (auto id : report.model.selected_layers) std::printf(" %u", id);
            std::printf("\noutputs in %s\n", config.output_dir.string().c_str());
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "gramsec: %s error: %s\n", to_string(e.kind()), e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "gramsec: %s\n", e.what());
        return 1;
    }
    return 0;
}
