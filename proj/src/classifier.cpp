#include "gramsec/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "gramsec/error.hpp"

namespace gramsec {

std::uint32_t argmin_class(std::span<const double> totals) {
    if (totals.empty()) throw ContractError("argmin_class: no classes");
    std::size_t best = 0;
    for (std::size_t c = 1; c < totals.size(); ++c) {
        if (totals[c] < totals[best]) best = c;
    }
    return static_cast<std::uint32_t>(best);
}

namespace {

// Shared by total_deviation and predict; fills one row of per_layer when given.
double class_total(const SampleSummary& sample, std::uint32_t c, const CalibrationModel& model,
                   std::span<double> terms) {
    if (c >= model.num_classes) {
        throw ContractError("total_deviation: class " + std::to_string(c) + " >= num_classes " +
                            std::to_string(model.num_classes));
    }
    if (sample.size() != model.num_layers()) {
        throw ShapeError("total_deviation: sample has " + std::to_string(sample.size()) +
                         " layers, model has " + std::to_string(model.num_layers()));
    }
    double total = 0.0;
    for (std::size_t i = 0; i < model.selected_layers.size(); ++i) {
        const std::size_t l = model.layer_index(model.selected_layers[i]);
        if (sample[l].layer_id != model.layout[l].layer_id) {
            throw ShapeError("total_deviation: layer index " + std::to_string(l) + " has id " +
                             std::to_string(sample[l].layer_id) + ", model expects " +
                             std::to_string(model.layout[l].layer_id));
        }
        const auto& stats = model.at(c, l);
        const double term =
            layer_deviation(sample[l], stats.bounds, model.delta_floor) / stats.expected_dev;
        if (!terms.empty()) terms[i] = term;
        total += term;
    }
    return total;
}

}  // namespace

double total_deviation(const SampleSummary& sample, std::uint32_t c, const CalibrationModel& model) {
    return class_total(sample, c, model, {});
}

void check_layout(std::span<const LayerShape> actual, const CalibrationModel& model,
                  const std::string& what) {
    if (actual.size() != model.num_layers()) {
        throw ShapeError(what + " has " + std::to_string(actual.size()) + " layers, model expects " +
                         std::to_string(model.num_layers()));
    }
    for (std::size_t l = 0; l < actual.size(); ++l) {
        if (actual[l] != model.layout[l]) {
            throw ShapeError(what + ", layer index " + std::to_string(l) + ": expected " +
                             describe(model.layout[l]) + ", got " + describe(actual[l]));
        }
    }
}

void check_layout(const SampleActivations& sample, const CalibrationModel& model) {
    check_layout(sample.layout(), model, "sample '" + sample.sample_id + "'");
}

DeviationVector predict_summary(const SampleSummary& sample, const CalibrationModel& model,
                                std::string sample_id) {
    DeviationVector out;
    out.sample_id = std::move(sample_id);
    out.totals.resize(model.num_classes);
    out.per_layer = Matrix(model.num_classes, model.selected_layers.size());
    for (std::uint32_t c = 0; c < model.num_classes; ++c) {
        out.totals[c] = class_total(sample, c, model, out.per_layer.row(c));
    }
    out.predicted_class = argmin_class(out.totals);
    return out;
}

DeviationVector predict(const SampleActivations& sample, const CalibrationModel& model) {
    check_layout(sample, model);
    // Unselected layers keep empty placeholders; only selected ones are read.
    SampleSummary summaries(model.num_layers());
    for (std::size_t l = 0; l < model.num_layers(); ++l) summaries[l].layer_id = model.layout[l].layer_id;
    for (auto id : model.selected_layers) {
        const std::size_t l = model.layer_index(id);
        summaries[l] = summarize(sample.records[l]);
    }
    return predict_summary(summaries, model, sample.sample_id);
}

Metrics compute_metrics(std::span<const std::uint32_t> labels,
                        std::span<const std::uint32_t> predictions, std::uint32_t num_classes) {
    if (labels.size() != predictions.size()) {
        throw ContractError("compute_metrics: label and prediction counts differ");
    }
    if (labels.empty()) throw ContractError("compute_metrics: empty test split");
    Metrics m;
    m.confusion.assign(num_classes, std::vector<std::uint64_t>(num_classes, 0));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= num_classes || predictions[i] >= num_classes) {
            throw ContractError("compute_metrics: class index out of range");
        }
        ++m.confusion[labels[i]][predictions[i]];
    }
    m.total = labels.size();
    double recall_sum = 0.0;
    std::uint32_t present = 0;
    for (std::uint32_t c = 0; c < num_classes; ++c) {
        std::uint64_t row = 0;
        for (auto v : m.confusion[c]) row += v;
        m.correct += m.confusion[c][c];
        if (row == 0) continue;
        recall_sum += static_cast<double>(m.confusion[c][c]) / static_cast<double>(row);
        ++present;
    }
    m.accuracy = static_cast<double>(m.correct) / static_cast<double>(m.total);
    m.balanced_accuracy = recall_sum / present;
    return m;
}

Evaluation evaluate(const SummarySet& test, const CalibrationModel& model) {
    require_split(test, Split::Test, "evaluate");
    if (test.size() == 0) throw ContractError("evaluate: empty test split");
    Evaluation ev;
    std::vector<std::uint32_t> predicted;
    ev.predictions.reserve(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
        ev.predictions.push_back(predict_summary(test.samples[i], model, test.ids[i]));
        predicted.push_back(ev.predictions.back().predicted_class);
    }
    ev.metrics = compute_metrics(test.labels, predicted, model.num_classes);
    return ev;
}

}  // namespace gramsec
