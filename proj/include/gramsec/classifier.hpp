#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gramsec/calibration.hpp"
#include "gramsec/matrix.hpp"

namespace gramsec {

struct DeviationVector {
    std::string sample_id;
    std::vector<double> totals;  // one per class
    std::uint32_t predicted_class = 0;
    // num_classes x selected layers: delta_l / expected_dev for each term.
    Matrix per_layer;
};

// Index of the smallest value; ties go to the lowest index.
std::uint32_t argmin_class(std::span<const double> totals);

// Sum over the model's selected layers of delta_l / expected_dev[c][l].
// `sample` must hold summaries for every model layer, in layout order.
double total_deviation(const SampleSummary& sample, std::uint32_t c, const CalibrationModel& model);

// Checks the sample's layer layout against the model; throws ShapeError
// naming the layer and the expected and actual K, m, n.
void check_layout(const SampleActivations& sample, const CalibrationModel& model);
void check_layout(std::span<const LayerShape> layout, const CalibrationModel& model,
                  const std::string& what);

// Summarizes only the selected layers and scores every class.
DeviationVector predict(const SampleActivations& sample, const CalibrationModel& model);
// `sample` holds summaries for every model layer.
DeviationVector predict_summary(const SampleSummary& sample, const CalibrationModel& model,
                                std::string sample_id = {});

struct Metrics {
    std::uint64_t total = 0;
    std::uint64_t correct = 0;
    double accuracy = 0.0;
    // Mean per-class recall over classes that occur in the labels.
    double balanced_accuracy = 0.0;
    std::vector<std::vector<std::uint64_t>> confusion;  // [true][predicted]
};

Metrics compute_metrics(std::span<const std::uint32_t> labels,
                        std::span<const std::uint32_t> predictions, std::uint32_t num_classes);

struct Evaluation {
    std::vector<DeviationVector> predictions;
    Metrics metrics;
};

Evaluation evaluate(const SummarySet& test, const CalibrationModel& model);

}  // namespace gramsec
