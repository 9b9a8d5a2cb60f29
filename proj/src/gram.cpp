#include "gramsec/gram.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gramsec/error.hpp"

namespace gramsec {

Matrix gram_matrix(const ActivationRecord& r) {
    const std::size_t k = r.channels;
    const std::size_t n = r.map_size();
    if (r.values.size() != k * n) {
        throw InvariantError("gram_matrix: layer " + std::to_string(r.layer_id) +
                             " has inconsistent value count");
    }
    std::vector<double> rows(r.values.begin(), r.values.end());

    Matrix g(k, k);
    for (std::size_t i = 0; i < k; ++i) {
        const double* vi = rows.data() + i * n;
        for (std::size_t j = i; j < k; ++j) {
            const double* vj = rows.data() + j * n;
            double acc = 0.0;
            for (std::size_t t = 0; t < n; ++t) acc += vi[t] * vj[t];
            if (!std::isfinite(acc)) {
                throw NonFiniteError("gram_matrix: layer " + std::to_string(r.layer_id) +
                                     ", channels (" + std::to_string(i) + ", " +
                                     std::to_string(j) + "): inner product is not finite");
            }
            g(i, j) = acc;
            g(j, i) = acc;
        }
    }
    return g;
}

std::vector<double> accumulate(const Matrix& gram) {
    if (gram.rows() != gram.cols()) throw ContractError("accumulate: matrix must be square");
    std::vector<double> out(gram.rows(), 0.0);
    for (std::size_t i = 0; i < gram.rows(); ++i) {
        double acc = 0.0;
        for (double v : gram.row(i)) acc += v;
        if (!std::isfinite(acc)) {
            throw NonFiniteError("accumulate: row " + std::to_string(i) + " sum is not finite");
        }
        out[i] = acc;
    }
    return out;
}

std::vector<double> normalize(std::span<const double> raw) {
    std::vector<double> out(raw.size(), 0.0);
    if (raw.empty()) return out;
    const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
    const double lo = *lo_it, hi = *hi_it;
    const double span = hi - lo;
    if (!(span > 0.0)) return out;
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - lo) / span;
    return out;
}

GramSummary summarize(const ActivationRecord& record) {
    GramSummary s;
    s.layer_id = record.layer_id;
    s.raw = accumulate(gram_matrix(record));
    s.normalized = normalize(s.raw);
    return s;
}

SampleSummary summarize_sample(const SampleActivations& sample) {
    SampleSummary out;
    out.reserve(sample.records.size());
    for (const auto& r : sample.records) out.push_back(summarize(r));
    return out;
}

SampleActivations summaries_to_activations(const SampleSummary& summaries, std::string sample_id) {
    SampleActivations out;
    out.sample_id = std::move(sample_id);
    for (const auto& s : summaries) {
        ActivationRecord r{s.layer_id, 1, 1, static_cast<std::uint32_t>(s.channels()), {}};
        for (double v : s.normalized) r.values.push_back(static_cast<float>(v));
        out.records.push_back(std::move(r));
    }
    return out;
}

}  // namespace gramsec
