#include "gramsec/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "gramsec/error.hpp"
#include "gramsec/gram.hpp"
#include "gramsec/rng.hpp"

namespace gramsec {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("failed to write " + path.string());
}

// Runs fn(i) for i in [0, n). The exception of the lowest failing index
// is rethrown so failures do not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Error& e) {
        rethrow_with_context(e, std::string("stage ") + name + ": ");
    }
}

}  // namespace

Matrix synthetic_spectrogram(std::uint32_t label, std::uint64_t sample_seed, const SynthConfig& config) {
    if (label >= kMaxSynthClasses) {
        throw ContractError("synthetic_spectrogram: class " + std::to_string(label) +
                            " has no free 16-row band");
    }
    SplitMix64 rng(sample_seed);
    const double sigma = config.noise_fraction * config.amplitude;
    Matrix m(kMelBands, config.frames);
    const std::size_t lo = label * kBandRows, hi = lo + kBandRows;
    for (std::size_t r = 0; r < kMelBands; ++r) {
        const double signal = (r >= lo && r < hi) ? config.amplitude : 0.0;
        for (std::size_t c = 0; c < config.frames; ++c) {
            m(r, c) = std::max(0.0, signal + rng.normal(0.0, sigma));
        }
    }
    return m;
}

DatasetManifest generate_synthetic(const SynthConfig& config, const fs::path& out_dir) {
    if (config.num_classes == 0 || config.num_classes > kMaxSynthClasses) {
        throw ContractError("synth: classes must be in [1, " + std::to_string(kMaxSynthClasses) +
                            "] so each gets a disjoint 16-row band");
    }
    if (config.train == 0 || config.validation == 0) {
        throw ContractError("synth: every class needs >= 1 train and >= 1 validation sample");
    }
    if (config.frames == 0) throw ContractError("synth: frames must be >= 1");

    fs::create_directories(out_dir);
    DatasetManifest manifest;
    manifest.num_classes = config.num_classes;
    manifest.base_dir = out_dir;

    std::uint64_t stream = 0;
    const std::pair<Split, std::uint32_t> splits[] = {
        {Split::Train, config.train}, {Split::Validation, config.validation}, {Split::Test, config.test}};
    for (const auto& [split, count] : splits) {
        for (std::uint32_t c = 0; c < config.num_classes; ++c) {
            for (std::uint32_t i = 0; i < count; ++i) {
                char id[64];
                std::snprintf(id, sizeof id, "%s_c%u_%03u", std::string(to_string(split)).c_str(), c, i);
                const fs::path file = std::string(id) + ".gram";
                const Matrix spec = synthetic_spectrogram(c, derive_seed(config.seed, stream++), config);
                write_activations_file(to_activations(MelSpectrogram{spec}, id), out_dir / file);
                manifest.entries.push_back({id, split, c, file});
            }
        }
    }
    validate(manifest);
    save_manifest(manifest, out_dir / "manifest.json");

    ExperimentConfig experiment;
    experiment.manifest = "manifest.json";
    experiment.output_dir = "run";
    experiment.refnet = RefNetConfig{};
    experiment.refnet->band_filter_mode = true;
    experiment.refnet->seed = config.seed;
    experiment.seed = config.seed;
    write_text(out_dir / "experiment.json", dump_experiment_config(experiment));
    return manifest;
}

SampleTransform identity_transform() {
    return [](SampleActivations s) { return s; };
}

SampleTransform refnet_transform(RefNetConfig config) {
    validate(config);
    return [config = std::move(config)](SampleActivations s) {
        const MelSpectrogram spec = spectrogram_from(s);
        return forward(spec, config, std::move(s.sample_id));
    };
}

SummarySet load_split(const DatasetManifest& manifest, Split split, const SampleTransform& transform,
                      unsigned threads) {
    const auto entries = manifest.split(split);
    SummarySet set;
    set.split = split;
    std::vector<SampleSummary> summaries(entries.size());
    parallel_for(entries.size(), threads, [&](std::size_t i) {
        const auto& e = *entries[i];
        auto activations = transform(read_activations_file(manifest.resolve(e), e.id));
        validate(activations);
        summaries[i] = summarize_sample(activations);
    });
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i]->split != split) throw ContractError("load_split: split provenance mismatch");
        set.add(entries[i]->id, std::move(summaries[i]), entries[i]->label);
    }
    return set;
}

std::vector<LayerShape> transformed_layout(const DatasetManifest& manifest,
                                           const SampleTransform& transform) {
    if (manifest.entries.empty()) throw ContractError("manifest has no entries");
    const auto& e = manifest.entries.front();
    return transform(read_activations_file(manifest.resolve(e), e.id)).layout();
}

ExperimentConfig load_experiment_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open experiment config " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    const auto fail = [&](const std::string& why) -> FormatError {
        return FormatError(path.string() + ": " + why);
    };
    if (!doc.is_object()) throw fail("top level must be an object");

    const fs::path base = path.parent_path();
    const auto resolve = [&](const std::string& p) {
        const fs::path q(p);
        return q.is_absolute() || base.empty() ? q : base / q;
    };

    ExperimentConfig cfg;
    try {
        cfg.manifest = resolve(doc.at("manifest").get<std::string>());
        cfg.output_dir = resolve(doc.value("output_dir", std::string("run")));
        cfg.seed = doc.value("seed", std::uint64_t{0});
        cfg.threads = doc.value("threads", 0u);
        if (doc.contains("top_k") && !doc["top_k"].is_null()) cfg.top_k = doc["top_k"].get<std::size_t>();
        const auto split = parse_split(doc.value("score_split", std::string("validation")));
        if (!split || *split == Split::Test) throw fail("score_split must be 'train' or 'validation'");
        cfg.score_split = *split;

        const bool external = doc.value("external_activations", false);
        if (doc.contains("refnet")) {
            if (external) throw fail("'refnet' and 'external_activations' are mutually exclusive");
            const auto& r = doc["refnet"];
            RefNetConfig net;
            net.channels = r.value("channels", net.channels);
            net.seed = r.value("seed", cfg.seed);
            net.band_filter_mode = r.value("band_filters", false);
            cfg.refnet = net;
        }
    } catch (const json::exception& e) {
        throw fail(e.what());
    }
    if (!fs::exists(cfg.manifest)) throw IoError("manifest " + cfg.manifest.string() + " does not exist");
    return cfg;
}

std::string dump_experiment_config(const ExperimentConfig& cfg) {
    json doc;
    doc["manifest"] = cfg.manifest.generic_string();
    doc["output_dir"] = cfg.output_dir.generic_string();
    doc["seed"] = cfg.seed;
    doc["score_split"] = std::string(to_string(cfg.score_split));
    doc["threads"] = cfg.threads;
    if (cfg.top_k) doc["top_k"] = *cfg.top_k;
    if (cfg.refnet) {
        doc["refnet"] = {{"channels", cfg.refnet->channels},
                         {"seed", cfg.refnet->seed},
                         {"band_filters", cfg.refnet->band_filter_mode}};
    } else {
        doc["external_activations"] = true;
    }
    return doc.dump(2) + "\n";
}

std::string format_metrics_text(const Metrics& m, const CalibrationModel& model) {
    std::ostringstream os;
    os << "accuracy " << fmt_fixed(m.accuracy, 6) << "\n";
    os << "balanced_accuracy " << fmt_fixed(m.balanced_accuracy, 6) << "\n";
    os << "samples " << m.total << " correct " << m.correct << "\n";
    os << "confusion (rows: true class, columns: predicted class)\n";
    for (const auto& row : m.confusion) {
        for (std::size_t j = 0; j < row.size(); ++j) os << (j ? " " : "  ") << row[j];
        os << "\n";
    }
    os << "layer scores (top_k " << model.top_k << ")\n";
    os << "  layer  selected  I_l";
    for (std::uint32_t c = 0; c < model.num_classes; ++c) os << "  W_c" << c;
    os << "\n";
    for (const auto& s : model.scores) {
        const bool selected = std::binary_search(model.selected_layers.begin(),
                                                 model.selected_layers.end(), s.layer_id);
        os << "  " << s.layer_id << "  " << (selected ? "yes" : "no") << "  "
           << fmt_double(s.aggregate);
        for (double v : s.per_class) os << "  " << fmt_double(v);
        os << "\n";
    }
    return os.str();
}

std::string format_metrics_json(const Metrics& m, const CalibrationModel& model) {
    json layers = json::array();
    for (const auto& s : model.scores) {
        layers.push_back({{"layer_id", s.layer_id},
                          {"aggregate", s.aggregate},
                          {"per_class", s.per_class},
                          {"selected", std::binary_search(model.selected_layers.begin(),
                                                          model.selected_layers.end(), s.layer_id)}});
    }
    json doc = {{"accuracy", m.accuracy},
                {"balanced_accuracy", m.balanced_accuracy},
                {"samples", m.total},
                {"correct", m.correct},
                {"confusion", m.confusion},
                {"top_k", model.top_k},
                {"selected_layers", model.selected_layers},
                {"layers", std::move(layers)}};
    return doc.dump(2) + "\n";
}

std::string format_predictions_csv(const std::vector<DeviationVector>& predictions,
                                   std::uint32_t num_classes) {
    std::ostringstream os;
    os << "sample_id,predicted_class";
    for (std::uint32_t c = 0; c < num_classes; ++c) os << ",delta_" << c;
    os << "\n";
    for (const auto& p : predictions) {
        os << p.sample_id << "," << p.predicted_class;
        for (double v : p.totals) os << "," << fmt_double(v);
        os << "\n";
    }
    return os.str();
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    const DatasetManifest manifest = stage("load_manifest", [&] { return load_manifest(cfg.manifest); });
    const SampleTransform transform = cfg.refnet ? refnet_transform(*cfg.refnet) : identity_transform();
    const auto layout = stage("forward", [&] { return transformed_layout(manifest, transform); });

    const SummarySet train = stage("summarize_train", [&] {
        return load_split(manifest, Split::Train, transform, cfg.threads);
    });
    const SummarySet validation = stage("summarize_validation", [&] {
        return load_split(manifest, Split::Validation, transform, cfg.threads);
    });

    const ClassBounds bounds = stage("fit_bounds", [&] { return fit_bounds(train, manifest.num_classes); });
    const auto expected = stage("fit_expected_devs", [&] { return fit_expected_devs(validation, bounds); });
    const SummarySet& scoring = cfg.score_split == Split::Train ? train : validation;
    auto scores = stage("score_layers", [&] { return score_layers(scoring, bounds); });
    const std::size_t top_k = cfg.top_k.value_or(default_top_k(layout.size()));
    auto selected = stage("select_layers", [&] { return select_layers(scores, top_k); });

    ExperimentReport report;
    auto& model = report.model;
    model.num_classes = manifest.num_classes;
    model.layout = layout;
    model.top_k = static_cast<std::uint32_t>(top_k);
    model.selected_layers = std::move(selected);
    model.stats.resize(manifest.num_classes);
    for (std::uint32_t c = 0; c < manifest.num_classes; ++c) {
        for (std::size_t l = 0; l < layout.size(); ++l) {
            model.stats[c].push_back({bounds.at(c, l), expected[c][l]});
        }
    }
    model.scores = std::move(scores);
    stage("select_layers", [&] { validate(model); });

    const SummarySet test = stage("summarize_test", [&] {
        return load_split(manifest, Split::Test, transform, cfg.threads);
    });
    report.evaluation = stage("evaluate", [&] { return evaluate(test, model); });

    stage("write_outputs", [&] {
        fs::create_directories(cfg.output_dir);
        save_model(model, cfg.output_dir / "model.gram");
        write_text(cfg.output_dir / "predictions.csv",
                   format_predictions_csv(report.evaluation.predictions, model.num_classes));
        write_text(cfg.output_dir / "metrics.txt", format_metrics_text(report.evaluation.metrics, model));
        write_text(cfg.output_dir / "metrics.json", format_metrics_json(report.evaluation.metrics, model));

        std::ostringstream log;
        log << "stages fit_bounds(train) fit_expected_devs(validation) score_layers("
            << to_string(cfg.score_split) << ") select_layers evaluate(test)\n";
        log << "classes " << manifest.num_classes << "\n";
        log << "samples train " << train.size() << " validation " << validation.size() << " test "
            << test.size() << "\n";
        if (cfg.refnet) {
            log << "activations refnet seed " << cfg.refnet->seed << " band_filters "
                << (cfg.refnet->band_filter_mode ? "true" : "false") << " channels";
            for (auto c : cfg.refnet->channels) log << " " << c;
            log << "\n";
        } else {
            log << "activations external\n";
        }
        log << "layers " << layout.size() << " top_k " << top_k << " selected";
        for (auto id : model.selected_layers) log << " " << id;
        log << "\n";
        log << "layer_aggregation mean_wasserstein\n";
        log << "expected_dev_floor " << fmt_double(model.expected_dev_floor) << "\n";
        log << "delta_floor " << fmt_double(model.delta_floor) << "\n";
        log << "seed " << cfg.seed << "\n";
        log << "accuracy " << fmt_double(report.evaluation.metrics.accuracy) << "\n";
        log << "balanced_accuracy " << fmt_double(report.evaluation.metrics.balanced_accuracy) << "\n";
        write_text(cfg.output_dir / "run.log", log.str());
    });
    return report;
}

}  // namespace gramsec
