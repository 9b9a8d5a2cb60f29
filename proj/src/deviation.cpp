#include "gramsec/deviation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gramsec/error.hpp"

namespace gramsec {

double delta(double lower, double upper, double g, double floor) {
    if (lower > upper) {
        throw ContractError("delta: lower bound " + std::to_string(lower) +
                            " exceeds upper bound " + std::to_string(upper));
    }
    if (g < lower) return (lower - g) / std::max(std::abs(lower), floor);
    if (g > upper) return (g - upper) / std::max(std::abs(upper), floor);
    return 0.0;
}

double layer_deviation(std::span<const double> profile, const LayerBounds& b, double floor) {
    if (profile.size() != b.lower.size() || profile.size() != b.upper.size()) {
        throw ShapeError("layer_deviation: profile has K=" + std::to_string(profile.size()) +
                         ", bounds have K=" + std::to_string(b.lower.size()));
    }
    double acc = 0.0;
    for (std::size_t k = 0; k < profile.size(); ++k) acc += delta(b.lower[k], b.upper[k], profile[k], floor);
    return acc;
}

double layer_deviation(const GramSummary& summary, const LayerBounds& bounds, double floor) {
    return layer_deviation(summary.normalized, bounds, floor);
}

}  // namespace gramsec
