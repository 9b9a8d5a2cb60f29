#include "gramsec/calibration.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "gramsec/error.hpp"

namespace gramsec {

void SummarySet::add(std::string id, SampleSummary summary, std::uint32_t label) {
    ids.push_back(std::move(id));
    samples.push_back(std::move(summary));
    labels.push_back(label);
}

void require_split(const SummarySet& set, Split expected, const char* stage) {
    if (set.split != expected) {
        throw ContractError(std::string(stage) + ": expects " + std::string(to_string(expected)) +
                            " data, got " + std::string(to_string(set.split)));
    }
}

namespace {

void check_sample_layers(const SampleSummary& s, std::span<const std::uint32_t> layer_ids,
                         const char* stage) {
    if (s.size() != layer_ids.size()) {
        throw ShapeError(std::string(stage) + ": sample has " + std::to_string(s.size()) +
                         " layers, expected " + std::to_string(layer_ids.size()));
    }
    for (std::size_t l = 0; l < s.size(); ++l) {
        if (s[l].layer_id != layer_ids[l]) {
            throw ShapeError(std::string(stage) + ": layer index " + std::to_string(l) +
                             " has id " + std::to_string(s[l].layer_id) + ", expected " +
                             std::to_string(layer_ids[l]));
        }
    }
}

void check_label(std::uint32_t label, std::uint32_t num_classes, const char* stage) {
    if (label >= num_classes) {
        throw InvariantError(std::string(stage) + ": label " + std::to_string(label) +
                             " >= num_classes " + std::to_string(num_classes));
    }
}

}  // namespace

BoundsAccumulator::BoundsAccumulator(std::uint32_t num_classes)
    : num_classes_(num_classes), counts_(num_classes, 0), bounds_(num_classes) {
    if (num_classes == 0) throw ContractError("BoundsAccumulator: num_classes must be >= 1");
}

void BoundsAccumulator::adopt_layout(const SampleSummary& sample) {
    for (const auto& s : sample) {
        layer_ids_.push_back(s.layer_id);
        channels_.push_back(s.channels());
    }
    for (auto& per_layer : bounds_) {
        per_layer.resize(sample.size());
        for (std::size_t l = 0; l < sample.size(); ++l) {
            per_layer[l].lower.assign(channels_[l], std::numeric_limits<double>::infinity());
            per_layer[l].upper.assign(channels_[l], -std::numeric_limits<double>::infinity());
        }
    }
}

void BoundsAccumulator::check_layout(const SampleSummary& sample) const {
    check_sample_layers(sample, layer_ids_, "fit_bounds");
    for (std::size_t l = 0; l < sample.size(); ++l) {
        if (sample[l].channels() != channels_[l]) {
            throw ShapeError("fit_bounds: layer " + std::to_string(layer_ids_[l]) + " has K=" +
                             std::to_string(sample[l].channels()) + ", expected " +
                             std::to_string(channels_[l]));
        }
    }
}

void BoundsAccumulator::add(const SampleSummary& sample, std::uint32_t label) {
    check_label(label, num_classes_, "fit_bounds");
    if (sample.empty()) throw ShapeError("fit_bounds: sample has no layers");
    if (layer_ids_.empty()) {
        adopt_layout(sample);
    } else {
        check_layout(sample);
    }
    auto& per_layer = bounds_[label];
    for (std::size_t l = 0; l < sample.size(); ++l) {
        const auto& g = sample[l].normalized;
        auto& b = per_layer[l];
        for (std::size_t k = 0; k < g.size(); ++k) {
            b.lower[k] = std::min(b.lower[k], g[k]);
            b.upper[k] = std::max(b.upper[k], g[k]);
        }
    }
    ++counts_[label];
}

void BoundsAccumulator::merge(const BoundsAccumulator& other) {
    if (other.num_classes_ != num_classes_) {
        throw ContractError("BoundsAccumulator::merge: class count mismatch");
    }
    if (other.layer_ids_.empty()) return;
    if (layer_ids_.empty()) {
        *this = other;
        return;
    }
    if (other.layer_ids_ != layer_ids_ || other.channels_ != channels_) {
        throw ShapeError("BoundsAccumulator::merge: layer layout mismatch");
    }
    for (std::uint32_t c = 0; c < num_classes_; ++c) {
        for (std::size_t l = 0; l < layer_ids_.size(); ++l) {
            auto& dst = bounds_[c][l];
            const auto& src = other.bounds_[c][l];
            for (std::size_t k = 0; k < channels_[l]; ++k) {
                dst.lower[k] = std::min(dst.lower[k], src.lower[k]);
                dst.upper[k] = std::max(dst.upper[k], src.upper[k]);
            }
        }
        counts_[c] += other.counts_[c];
    }
}

ClassBounds BoundsAccumulator::finish() const {
    for (std::uint32_t c = 0; c < num_classes_; ++c) {
        if (counts_[c] == 0) {
            throw InvariantError("fit_bounds: class " + std::to_string(c) + " has no training samples");
        }
    }
    return {num_classes_, layer_ids_, bounds_};
}

ClassBounds fit_bounds(const SummarySet& train, std::uint32_t num_classes) {
    require_split(train, Split::Train, "fit_bounds");
    BoundsAccumulator acc(num_classes);
    for (std::size_t i = 0; i < train.size(); ++i) acc.add(train.samples[i], train.labels[i]);
    return acc.finish();
}

std::vector<std::vector<double>> fit_expected_devs(const SummarySet& validation,
                                                   const ClassBounds& bounds) {
    require_split(validation, Split::Validation, "fit_expected_devs");
    const std::size_t layers = bounds.layer_ids.size();
    std::vector<std::vector<double>> sums(bounds.num_classes, std::vector<double>(layers, 0.0));
    std::vector<std::uint64_t> counts(bounds.num_classes, 0);

    for (std::size_t i = 0; i < validation.size(); ++i) {
        const auto c = validation.labels[i];
        check_label(c, bounds.num_classes, "fit_expected_devs");
        const auto& s = validation.samples[i];
        check_sample_layers(s, bounds.layer_ids, "fit_expected_devs");
        for (std::size_t l = 0; l < layers; ++l) sums[c][l] += layer_deviation(s[l], bounds.at(c, l));
        ++counts[c];
    }

    for (std::uint32_t c = 0; c < bounds.num_classes; ++c) {
        if (counts[c] == 0) {
            throw InvariantError("fit_expected_devs: class " + std::to_string(c) +
                                 " has no validation samples");
        }
        for (auto& v : sums[c]) v = std::max(v / static_cast<double>(counts[c]), kExpectedDevFloor);
    }
    return sums;
}

double wasserstein_1d(std::span<const double> a_in, std::span<const double> b_in) {
    if (a_in.empty() || b_in.empty()) throw ContractError("wasserstein_1d: empty input");
    std::vector<double> a(a_in.begin(), a_in.end()), b(b_in.begin(), b_in.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());

    // Integrate |F_a - F_b| between consecutive distinct support points.
    // The CDF gap is kept as an exact integer numerator over na * nb.
    const auto na = static_cast<std::int64_t>(a.size());
    const auto nb = static_cast<std::int64_t>(b.size());
    const double denom = static_cast<double>(na) * static_cast<double>(nb);
    std::int64_t i = 0, j = 0;
    double prev = std::min(a.front(), b.front());
    double total = 0.0;
    while (i < na || j < nb) {
        double x;
        if (i == na) x = b[j];
        else if (j == nb) x = a[i];
        else x = std::min(a[i], b[j]);

        const std::int64_t gap = i * nb - j * na;
        if (gap != 0) total += (static_cast<double>(gap < 0 ? -gap : gap) / denom) * (x - prev);

        while (i < na && a[i] == x) ++i;
        while (j < nb && b[j] == x) ++j;
        prev = x;
    }
    return total;
}

std::vector<LayerScore> score_layers(const SummarySet& set, const ClassBounds& bounds) {
    const std::size_t layers = bounds.layer_ids.size();
    for (std::size_t i = 0; i < set.size(); ++i) {
        check_label(set.labels[i], bounds.num_classes, "score_layers");
        check_sample_layers(set.samples[i], bounds.layer_ids, "score_layers");
    }

    std::vector<LayerScore> scores;
    scores.reserve(layers);
    std::vector<double> positives, negatives;
    for (std::size_t l = 0; l < layers; ++l) {
        LayerScore score{bounds.layer_ids[l], std::vector<double>(bounds.num_classes, 0.0), 0.0};
        for (std::uint32_t c = 0; c < bounds.num_classes; ++c) {
            positives.clear();
            negatives.clear();
            for (std::size_t i = 0; i < set.size(); ++i) {
                const double d = layer_deviation(set.samples[i][l], bounds.at(c, l));
                (set.labels[i] == c ? positives : negatives).push_back(d);
            }
            if (positives.empty()) {
                throw InvariantError("score_layers: class " + std::to_string(c) +
                                     " has no samples in the " +
                                     std::string(to_string(set.split)) + " split");
            }
            // With a single class there is nothing to separate from.
            score.per_class[c] = negatives.empty() ? 0.0 : wasserstein_1d(positives, negatives);
        }
        score.aggregate = std::accumulate(score.per_class.begin(), score.per_class.end(), 0.0) /
                          static_cast<double>(bounds.num_classes);
        scores.push_back(std::move(score));
    }
    return scores;
}

std::vector<std::uint32_t> select_layers(std::span<const LayerScore> scores, std::size_t top_k) {
    if (top_k < 1 || top_k > scores.size()) {
        throw ContractError("select_layers: top_k " + std::to_string(top_k) +
                            " outside [1, " + std::to_string(scores.size()) + "]");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return scores[x].aggregate > scores[y].aggregate;
    });
    std::vector<std::uint32_t> out;
    for (std::size_t i = 0; i < top_k; ++i) out.push_back(scores[order[i]].layer_id);
    std::sort(out.begin(), out.end());
    return out;
}

std::size_t default_top_k(std::size_t num_layers) noexcept { return (num_layers + 1) / 2; }

std::size_t CalibrationModel::layer_index(std::uint32_t layer_id) const {
    for (std::size_t l = 0; l < layout.size(); ++l) {
        if (layout[l].layer_id == layer_id) return l;
    }
    throw ShapeError("model has no layer " + std::to_string(layer_id));
}

void validate(const CalibrationModel& m) {
    const auto fail = [](const std::string& why) { throw InvariantError("calibration model: " + why); };
    if (m.num_classes == 0) fail("num_classes must be >= 1");
    if (m.layout.empty()) fail("no layers");
    for (std::size_t l = 1; l < m.layout.size(); ++l) {
        if (m.layout[l].layer_id <= m.layout[l - 1].layer_id) fail("layer ids not strictly increasing");
    }
    if (m.top_k < 1 || m.top_k > m.layout.size()) fail("top_k out of range");
    if (m.selected_layers.size() != m.top_k) fail("selected layer count differs from top_k");
    if (!std::is_sorted(m.selected_layers.begin(), m.selected_layers.end()) ||
        std::adjacent_find(m.selected_layers.begin(), m.selected_layers.end()) !=
            m.selected_layers.end()) {
        fail("selected layers must be strictly ascending");
    }
    for (auto id : m.selected_layers) {
        try {
            (void)m.layer_index(id);
        } catch (const ShapeError&) {
            fail("selected layer " + std::to_string(id) + " is not a model layer");
        }
    }
    if (m.stats.size() != m.num_classes) fail("stats missing for some class");
    for (std::uint32_t c = 0; c < m.num_classes; ++c) {
        if (m.stats[c].size() != m.layout.size()) fail("stats missing for class " + std::to_string(c));
        for (std::size_t l = 0; l < m.layout.size(); ++l) {
            const auto& s = m.stats[c][l];
            const auto where = "class " + std::to_string(c) + ", layer " +
                               std::to_string(m.layout[l].layer_id);
            if (s.bounds.lower.size() != m.layout[l].channels ||
                s.bounds.upper.size() != m.layout[l].channels) {
                fail(where + ": bound length differs from K");
            }
            for (std::size_t k = 0; k < s.bounds.lower.size(); ++k) {
                if (!std::isfinite(s.bounds.lower[k]) || !std::isfinite(s.bounds.upper[k])) {
                    fail(where + ": non-finite bound");
                }
                if (s.bounds.lower[k] > s.bounds.upper[k]) {
                    fail(where + ", channel " + std::to_string(k) + ": lambda > Lambda");
                }
            }
            if (!std::isfinite(s.expected_dev) || s.expected_dev < m.expected_dev_floor) {
                fail(where + ": expected deviation below floor");
            }
        }
    }
    if (!(m.expected_dev_floor > 0.0) || !(m.delta_floor > 0.0)) fail("floors must be positive");
    if (m.scores.size() != m.layout.size()) fail("scores missing for some layer");
    for (std::size_t l = 0; l < m.scores.size(); ++l) {
        if (m.scores[l].layer_id != m.layout[l].layer_id) fail("score layer ids differ from layout");
        if (m.scores[l].per_class.size() != m.num_classes) fail("per-class score count differs from C");
        for (double v : m.scores[l].per_class) {
            if (!(v >= 0.0) || !std::isfinite(v)) fail("negative or non-finite layer score");
        }
        if (!(m.scores[l].aggregate >= 0.0) || !std::isfinite(m.scores[l].aggregate)) {
            fail("negative or non-finite aggregate score");
        }
    }
}

CalibrationModel calibrate(const SummarySet& train, const SummarySet& validation,
                           std::uint32_t num_classes, const std::vector<LayerShape>& layout,
                           const CalibrationOptions& options) {
    const ClassBounds bounds = fit_bounds(train, num_classes);
    if (bounds.layer_ids.size() != layout.size()) {
        throw ShapeError("calibrate: summaries have " + std::to_string(bounds.layer_ids.size()) +
                         " layers, layout has " + std::to_string(layout.size()));
    }
    for (std::size_t l = 0; l < layout.size(); ++l) {
        if (bounds.layer_ids[l] != layout[l].layer_id ||
            bounds.at(0, l).channels() != layout[l].channels) {
            throw ShapeError("calibrate: summaries disagree with " + describe(layout[l]));
        }
    }
    const auto expected = fit_expected_devs(validation, bounds);
    const SummarySet& scoring = options.score_split == Split::Train ? train : validation;
    if (options.score_split == Split::Test) {
        throw ContractError("calibrate: layers cannot be scored on the test split");
    }
    auto scores = score_layers(scoring, bounds);
    const std::size_t top_k = options.top_k.value_or(default_top_k(layout.size()));

    CalibrationModel m;
    m.num_classes = num_classes;
    m.layout = layout;
    m.top_k = static_cast<std::uint32_t>(top_k);
    m.selected_layers = select_layers(scores, top_k);
    m.stats.resize(num_classes);
    for (std::uint32_t c = 0; c < num_classes; ++c) {
        for (std::size_t l = 0; l < layout.size(); ++l) {
            m.stats[c].push_back({bounds.at(c, l), expected[c][l]});
        }
    }
    m.scores = std::move(scores);
    validate(m);
    return m;
}

// Model file, little-endian throughout:
//   "GRMM" | version u32 | C u32 | L u32 | top_k u32 | selected layer ids u32 x top_k
//   per (class, layer): K u32 | lambda f64 x K | Lambda f64 x K | expected_dev f64
//   per layer: per-class score f64 x C | aggregate f64
//   per layer: layer_id u32 | m u32 | n u32
//   expected_dev floor f64 | delta floor f64
namespace {

class ByteWriter {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
    }
    void f64(double v) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
    }
    void raw(const char* p, std::size_t n) { buf_.append(p, n); }
    const std::string& bytes() const noexcept { return buf_; }

private:
    std::string buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::istream& in) : in_(in) {}

    void raw(unsigned char* dst, std::size_t n, const char* what) {
        in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
        const auto got = static_cast<std::size_t>(in_.gcount());
        if (got != n) {
            std::ostringstream msg;
            msg << "truncated model file reading " << what << ": expected " << n
                << " bytes, available " << got;
            throw TruncationError(msg.str(), n, got);
        }
    }
    std::uint32_t u32(const char* what) {
        unsigned char b[4];
        raw(b, 4, what);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }
    double f64(const char* what) {
        unsigned char b[8];
        raw(b, 8, what);
        std::uint64_t bits = 0;
        for (int i = 7; i >= 0; --i) bits = (bits << 8) | b[i];
        return std::bit_cast<double>(bits);
    }
    bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

private:
    std::istream& in_;
};

// Rejects absurd counts before allocating.
std::uint32_t bounded(std::uint32_t v, std::uint32_t limit, const char* what) {
    if (v > limit) {
        throw FormatError(std::string("model file: implausible ") + what + " " + std::to_string(v));
    }
    return v;
}

}  // namespace

std::size_t save_model(const CalibrationModel& m, std::ostream& out) {
    validate(m);
    ByteWriter w;
    w.raw(kModelMagic, 4);
    w.u32(kModelVersion);
    w.u32(m.num_classes);
    w.u32(static_cast<std::uint32_t>(m.num_layers()));
    w.u32(m.top_k);
    for (auto id : m.selected_layers) w.u32(id);
    for (std::uint32_t c = 0; c < m.num_classes; ++c) {
        for (std::size_t l = 0; l < m.num_layers(); ++l) {
            const auto& s = m.stats[c][l];
            w.u32(static_cast<std::uint32_t>(s.bounds.channels()));
            for (double v : s.bounds.lower) w.f64(v);
            for (double v : s.bounds.upper) w.f64(v);
            w.f64(s.expected_dev);
        }
    }
    for (const auto& score : m.scores) {
        for (double v : score.per_class) w.f64(v);
        w.f64(score.aggregate);
    }
    for (const auto& shape : m.layout) {
        w.u32(shape.layer_id);
        w.u32(shape.height);
        w.u32(shape.width);
    }
    w.f64(m.expected_dev_floor);
    w.f64(m.delta_floor);

    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw IoError("failed to write model stream");
    return w.bytes().size();
}

void save_model(const CalibrationModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    save_model(model, out);
    out.flush();
    if (!out) throw IoError("failed to write " + path.string());
}

CalibrationModel load_model(std::istream& in) {
    ByteReader r(in);
    unsigned char magic[4];
    r.raw(magic, 4, "magic");
    if (std::memcmp(magic, kModelMagic, 4) != 0) throw FormatError("bad magic: not a GRMM model file");
    const std::uint32_t version = r.u32("version");
    if (version != kModelVersion) {
        throw VersionError("unsupported model version " + std::to_string(version) +
                           " (supported: " + std::to_string(kModelVersion) + ")");
    }

    constexpr std::uint32_t kMaxCount = 1u << 20;
    CalibrationModel m;
    m.num_classes = bounded(r.u32("class count"), kMaxCount, "class count");
    const std::uint32_t layers = bounded(r.u32("layer count"), kMaxCount, "layer count");
    m.top_k = bounded(r.u32("top_k"), layers, "top_k");
    for (std::uint32_t i = 0; i < m.top_k; ++i) m.selected_layers.push_back(r.u32("selected layer"));

    m.stats.assign(m.num_classes, std::vector<ClassLayerStats>(layers));
    std::vector<std::uint32_t> channels(layers, 0);
    for (std::uint32_t c = 0; c < m.num_classes; ++c) {
        for (std::uint32_t l = 0; l < layers; ++l) {
            const std::uint32_t k = bounded(r.u32("channel count"), kMaxCount, "channel count");
            if (c == 0) {
                channels[l] = k;
            } else if (channels[l] != k) {
                throw InvariantError("model file: class " + std::to_string(c) + ", layer index " +
                                     std::to_string(l) + " has K=" + std::to_string(k) +
                                     ", class 0 has K=" + std::to_string(channels[l]));
            }
            auto& s = m.stats[c][l];
            s.bounds.lower.resize(k);
            s.bounds.upper.resize(k);
            for (auto& v : s.bounds.lower) v = r.f64("lambda");
            for (auto& v : s.bounds.upper) v = r.f64("Lambda");
            s.expected_dev = r.f64("expected deviation");
        }
    }
    m.scores.resize(layers);
    for (auto& score : m.scores) {
        score.per_class.resize(m.num_classes);
        for (auto& v : score.per_class) v = r.f64("layer score");
        score.aggregate = r.f64("aggregate layer score");
    }
    m.layout.resize(layers);
    for (std::uint32_t l = 0; l < layers; ++l) {
        auto& shape = m.layout[l];
        shape.layer_id = r.u32("layer id");
        shape.channels = channels[l];
        shape.height = r.u32("layer height");
        shape.width = r.u32("layer width");
        m.scores[l].layer_id = shape.layer_id;
    }
    m.expected_dev_floor = r.f64("expected deviation floor");
    m.delta_floor = r.f64("delta floor");
    if (!r.at_end()) throw FormatError("model file: trailing bytes");

    validate(m);
    return m;
}

CalibrationModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return load_model(in);
    } catch (const Error& e) {
        rethrow_with_context(e, path.string() + ": ");
    }
}

}  // namespace gramsec
