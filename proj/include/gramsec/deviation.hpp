#pragma once

#include <span>
#include <vector>

#include "gramsec/gram.hpp"

namespace gramsec {

// Guard on the |lower| / |upper| denominators of delta. Normalized profiles
// always contain an exact 0, so bounds of 0 are routine.
inline constexpr double kDeltaDenominatorFloor = 1e-12;

// Per-channel [lower, upper] range for one (class, layer).
struct LayerBounds {
    std::vector<double> lower;
    std::vector<double> upper;

    std::size_t channels() const noexcept { return lower.size(); }

    friend bool operator==(const LayerBounds&, const LayerBounds&) = default;
};

// Relative distance of g outside [lower, upper]; 0 inside. Throws
// ContractError if lower > upper.
double delta(double lower, double upper, double g, double floor = kDeltaDenominatorFloor);

// Sum of delta over channels.
double layer_deviation(std::span<const double> profile, const LayerBounds& bounds,
                       double floor = kDeltaDenominatorFloor);
double layer_deviation(const GramSummary& summary, const LayerBounds& bounds,
                       double floor = kDeltaDenominatorFloor);

}  // namespace gramsec
