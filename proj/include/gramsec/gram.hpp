#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gramsec/interchange.hpp"
#include "gramsec/matrix.hpp"

namespace gramsec {

// Per-layer correlation profile of one sample.
struct GramSummary {
    std::uint32_t layer_id = 0;
    std::vector<double> raw;         // row sums of the Gram matrix
    std::vector<double> normalized;  // raw min-max scaled to [0, 1]

    std::size_t channels() const noexcept { return normalized.size(); }

    friend bool operator==(const GramSummary&, const GramSummary&) = default;
};

using SampleSummary = std::vector<GramSummary>;

// K x K matrix of inner products between flattened feature maps. The upper
// triangle is computed and mirrored, so the result is exactly symmetric.
// Throws NonFiniteError naming the layer and channel pair on overflow.
Matrix gram_matrix(const ActivationRecord& record);

// Row sums of a square matrix.
std::vector<double> accumulate(const Matrix& gram);

// (x - min) / (max - min); the zero vector when max == min.
std::vector<double> normalize(std::span<const double> raw);

GramSummary summarize(const ActivationRecord& record);
SampleSummary summarize_sample(const SampleActivations& sample);

// Summary file: one record per layer with channels = 1, height = 1,
// width = K holding the normalized vector.
SampleActivations summaries_to_activations(const SampleSummary& summaries,
                                           std::string sample_id = {});

}  // namespace gramsec
