#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gramsec/calibration.hpp"
#include "gramsec/classifier.hpp"
#include "gramsec/manifest.hpp"
#include "gramsec/refnet.hpp"

namespace gramsec {

// Desk-scale stand-in for a labelled audio corpus: each class owns one
// disjoint 16-row mel band of a non-negative spectrogram surrogate.
struct SynthConfig {
    std::uint32_t num_classes = 3;
    std::uint32_t train = 10;
    std::uint32_t validation = 5;
    std::uint32_t test = 5;
    std::uint64_t seed = 7;
    std::uint32_t frames = 32;
    double amplitude = 1.0;
    // Noise standard deviation as a fraction of the amplitude.
    double noise_fraction = 0.05;
};

inline constexpr std::uint32_t kMaxSynthClasses = kMelBands / kBandRows;

// 128 x frames surrogate: amplitude on the class band, plus Gaussian noise,
// clipped at zero.
Matrix synthetic_spectrogram(std::uint32_t label, std::uint64_t sample_seed, const SynthConfig& config);

// Writes one spectrogram file per sample, manifest.json and a ready-to-run
// experiment.json into out_dir. Returns the manifest.
DatasetManifest generate_synthetic(const SynthConfig& config, const std::filesystem::path& out_dir);

// Maps a sample read from disk to the activations that get summarized.
using SampleTransform = std::function<SampleActivations(SampleActivations)>;

SampleTransform identity_transform();
SampleTransform refnet_transform(RefNetConfig config);

// Reads, transforms and summarizes every entry of one split. Results are
// in manifest order regardless of the thread count.
SummarySet load_split(const DatasetManifest& manifest, Split split, const SampleTransform& transform,
                      unsigned threads = 0);

// Layout of the transformed activations of the first manifest entry.
std::vector<LayerShape> transformed_layout(const DatasetManifest& manifest,
                                           const SampleTransform& transform);

struct ExperimentConfig {
    std::filesystem::path manifest;
    std::filesystem::path output_dir;
    // Absent: manifest files already hold activations.
    std::optional<RefNetConfig> refnet;
    std::optional<std::size_t> top_k;
    std::uint64_t seed = 0;
    Split score_split = Split::Validation;
    unsigned threads = 0;
};

// Relative paths resolve against the config file's directory.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
std::string dump_experiment_config(const ExperimentConfig& config);

struct ExperimentReport {
    CalibrationModel model;
    Evaluation evaluation;
};

// fit_bounds -> fit_expected_devs -> score_layers -> select_layers -> evaluate.
// Writes model.gram, predictions.csv, metrics.txt, metrics.json and run.log
// into output_dir. Stage failures are rethrown prefixed with the stage name.
ExperimentReport run_experiment(const ExperimentConfig& config);

std::string format_metrics_text(const Metrics& metrics, const CalibrationModel& model);
std::string format_metrics_json(const Metrics& metrics, const CalibrationModel& model);
std::string format_predictions_csv(const std::vector<DeviationVector>& predictions,
                                   std::uint32_t num_classes);

}  // namespace gramsec
