#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gramsec/deviation.hpp"
#include "gramsec/gram.hpp"
#include "gramsec/interchange.hpp"
#include "gramsec/manifest.hpp"

namespace gramsec {

inline constexpr char kModelMagic[4] = {'G', 'R', 'M', 'M'};
inline constexpr std::uint32_t kModelVersion = 1;
inline constexpr double kExpectedDevFloor = 1e-12;

// Summaries of one manifest split. The split tag is checked by every
// fitting/evaluation stage so data cannot leak between partitions.
struct SummarySet {
    Split split = Split::Train;
    std::vector<std::string> ids;
    std::vector<SampleSummary> samples;
    std::vector<std::uint32_t> labels;

    std::size_t size() const noexcept { return samples.size(); }
    void add(std::string id, SampleSummary summary, std::uint32_t label);
};

// Throws ContractError unless set.split == expected.
void require_split(const SummarySet& set, Split expected, const char* stage);

// Per-class, per-layer bounds; indexed [class][layer index].
struct ClassBounds {
    std::uint32_t num_classes = 0;
    std::vector<std::uint32_t> layer_ids;
    std::vector<std::vector<LayerBounds>> per_class;

    const LayerBounds& at(std::uint32_t c, std::size_t l) const { return per_class.at(c).at(l); }
};

// Single-pass elementwise min/max per (class, layer, channel). Partial
// accumulators over disjoint chunks merge to the same result in any order.
class BoundsAccumulator {
public:
    explicit BoundsAccumulator(std::uint32_t num_classes);

    void add(const SampleSummary& sample, std::uint32_t label);
    void merge(const BoundsAccumulator& other);
    // Throws InvariantError if any class has no samples.
    ClassBounds finish() const;

    std::uint64_t count(std::uint32_t c) const { return counts_.at(c); }

private:
    void adopt_layout(const SampleSummary& sample);
    void check_layout(const SampleSummary& sample) const;

    std::uint32_t num_classes_;
    std::vector<std::uint32_t> layer_ids_;
    std::vector<std::size_t> channels_;
    std::vector<std::uint64_t> counts_;
    std::vector<std::vector<LayerBounds>> bounds_;
};

ClassBounds fit_bounds(const SummarySet& train, std::uint32_t num_classes);

// Mean own-class layer deviation over the validation set, floored at
// kExpectedDevFloor; indexed [class][layer index].
std::vector<std::vector<double>> fit_expected_devs(const SummarySet& validation,
                                                   const ClassBounds& bounds);

// Exact 1-Wasserstein distance between two empirical distributions.
double wasserstein_1d(std::span<const double> a, std::span<const double> b);

struct LayerScore {
    std::uint32_t layer_id = 0;
    std::vector<double> per_class;  // W(D_c+, D_c-) per class
    double aggregate = 0.0;         // mean of per_class

    friend bool operator==(const LayerScore&, const LayerScore&) = default;
};

std::vector<LayerScore> score_layers(const SummarySet& set, const ClassBounds& bounds);

// top_k layer ids by aggregate score, ties to the lower layer; ascending.
std::vector<std::uint32_t> select_layers(std::span<const LayerScore> scores, std::size_t top_k);

std::size_t default_top_k(std::size_t num_layers) noexcept;

struct ClassLayerStats {
    LayerBounds bounds;
    double expected_dev = kExpectedDevFloor;

    friend bool operator==(const ClassLayerStats&, const ClassLayerStats&) = default;
};

struct CalibrationModel {
    std::uint32_t num_classes = 0;
    std::vector<LayerShape> layout;
    std::uint32_t top_k = 0;
    std::vector<std::uint32_t> selected_layers;
    std::vector<std::vector<ClassLayerStats>> stats;  // [class][layer index]
    std::vector<LayerScore> scores;                   // [layer index]
    double expected_dev_floor = kExpectedDevFloor;
    double delta_floor = kDeltaDenominatorFloor;

    std::size_t num_layers() const noexcept { return layout.size(); }
    // Index into layout/stats for a layer id; throws ShapeError if absent.
    std::size_t layer_index(std::uint32_t layer_id) const;
    const ClassLayerStats& at(std::uint32_t c, std::size_t layer_index) const {
        return stats.at(c).at(layer_index);
    }

    friend bool operator==(const CalibrationModel&, const CalibrationModel&) = default;
};

void validate(const CalibrationModel& model);

struct CalibrationOptions {
    std::optional<std::size_t> top_k;
    // Partition feeding the layer scores.
    Split score_split = Split::Validation;
};

// fit_bounds -> fit_expected_devs -> score_layers -> select_layers.
CalibrationModel calibrate(const SummarySet& train, const SummarySet& validation,
                           std::uint32_t num_classes, const std::vector<LayerShape>& layout,
                           const CalibrationOptions& options = {});

std::size_t save_model(const CalibrationModel& model, std::ostream& out);
void save_model(const CalibrationModel& model, const std::filesystem::path& path);
CalibrationModel load_model(std::istream& in);
CalibrationModel load_model(const std::filesystem::path& path);

}  // namespace gramsec
