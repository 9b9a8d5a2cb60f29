#include "gramsec/refnet.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "gramsec/error.hpp"
#include "gramsec/rng.hpp"

namespace gramsec {

namespace {

// Multi-channel feature maps, [channel][row][col].
struct Tensor3 {
    std::uint32_t channels = 0, height = 0, width = 0;
    std::vector<double> data;

    Tensor3(std::uint32_t c, std::uint32_t h, std::uint32_t w)
        : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, 0.0) {}

    double& at(std::uint32_t c, std::uint32_t y, std::uint32_t x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double at(std::uint32_t c, std::uint32_t y, std::uint32_t x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
};

Tensor3 conv3x3_relu(const Tensor3& in, const std::vector<double>& w, std::uint32_t out_channels) {
    Tensor3 out(out_channels, in.height, in.width);
    const auto h = static_cast<std::int64_t>(in.height);
    const auto wd = static_cast<std::int64_t>(in.width);
    for (std::uint32_t o = 0; o < out_channels; ++o) {
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < wd; ++x) {
                double acc = 0.0;
                for (std::uint32_t i = 0; i < in.channels; ++i) {
                    const double* k = &w[(static_cast<std::size_t>(o) * in.channels + i) * 9];
                    for (int dy = -1; dy <= 1; ++dy) {
                        const std::int64_t yy = y + dy;
                        if (yy < 0 || yy >= h) continue;
                        for (int dx = -1; dx <= 1; ++dx) {
                            const std::int64_t xx = x + dx;
                            if (xx < 0 || xx >= wd) continue;
                            acc += k[(dy + 1) * 3 + (dx + 1)] *
                                   in.at(i, static_cast<std::uint32_t>(yy),
                                         static_cast<std::uint32_t>(xx));
                        }
                    }
                }
                out.at(o, static_cast<std::uint32_t>(y), static_cast<std::uint32_t>(x)) =
                    std::max(acc, 0.0);
            }
        }
    }
    return out;
}

// Block 0 in band-filter mode. Input is single-channel.
Tensor3 band_selectors(const Tensor3& in, std::uint32_t out_channels) {
    Tensor3 out(out_channels, in.height, in.width);
    const auto h = static_cast<std::int64_t>(in.height);
    const auto wd = static_cast<std::int64_t>(in.width);
    for (std::uint32_t c = 0; c < out_channels; ++c) {
        const auto band_lo = static_cast<std::int64_t>(c * kBandRows);
        const auto band_hi = band_lo + static_cast<std::int64_t>(kBandRows);
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < wd; ++x) {
                double acc = 0.0;
                for (int dy = -1; dy <= 1; ++dy) {
                    const std::int64_t yy = y + dy;
                    if (yy < 0 || yy >= h || yy < band_lo || yy >= band_hi) continue;
                    for (int dx = -1; dx <= 1; ++dx) {
                        const std::int64_t xx = x + dx;
                        if (xx < 0 || xx >= wd) continue;
                        acc += in.at(0, static_cast<std::uint32_t>(yy),
                                     static_cast<std::uint32_t>(xx));
                    }
                }
                out.at(c, static_cast<std::uint32_t>(y), static_cast<std::uint32_t>(x)) =
                    std::max(acc / 9.0, 0.0);
            }
        }
    }
    return out;
}

Tensor3 maxpool2x2(const Tensor3& in) {
    Tensor3 out(in.channels, in.height / 2, in.width / 2);
    for (std::uint32_t c = 0; c < in.channels; ++c) {
        for (std::uint32_t y = 0; y < out.height; ++y) {
            for (std::uint32_t x = 0; x < out.width; ++x) {
                out.at(c, y, x) = std::max({in.at(c, 2 * y, 2 * x), in.at(c, 2 * y, 2 * x + 1),
                                            in.at(c, 2 * y + 1, 2 * x),
                                            in.at(c, 2 * y + 1, 2 * x + 1)});
            }
        }
    }
    return out;
}

ActivationRecord to_record(const Tensor3& t, std::uint32_t layer_id) {
    ActivationRecord r{layer_id, t.channels, t.height, t.width, {}};
    r.values.reserve(t.data.size());
    for (double v : t.data) r.values.push_back(static_cast<float>(v));
    return r;
}

}  // namespace

void validate(const RefNetConfig& config) {
    if (config.channels.empty()) throw ContractError("refnet: need at least one block");
    for (std::size_t b = 0; b < config.channels.size(); ++b) {
        if (config.channels[b] == 0) {
            throw ContractError("refnet: block " + std::to_string(b) + " has zero channels");
        }
    }
}

std::vector<double> block_weights(const RefNetConfig& config, std::size_t block,
                                  std::uint32_t in_channels) {
    const std::uint32_t out_channels = config.channels.at(block);
    std::vector<double> w(static_cast<std::size_t>(out_channels) * in_channels * 9);
    if (config.band_filter_mode && block == 0) {
        // Marker weights for the checksum; band selectors are applied directly.
        std::fill(w.begin(), w.end(), 1.0 / 9.0);
        return w;
    }
    SplitMix64 rng(derive_seed(config.seed, block));
    const double scale = 1.0 / std::sqrt(9.0 * in_channels);
    for (auto& v : w) v = rng.uniform(-scale, scale);
    return w;
}

std::uint64_t weight_checksum(const RefNetConfig& config) {
    validate(config);
    std::uint64_t h = 0xCBF29CE484222325ULL;
    std::uint32_t in_channels = 1;
    for (std::size_t b = 0; b < config.num_blocks(); ++b) {
        for (double v : block_weights(config, b, in_channels)) {
            h ^= std::bit_cast<std::uint64_t>(v);
            h *= 0x100000001B3ULL;
        }
        in_channels = config.channels[b];
    }
    return h;
}

SampleActivations forward(const Matrix& input, const RefNetConfig& config, std::string sample_id) {
    validate(config);
    if (input.empty()) throw ShapeError("refnet: empty input");
    for (double v : input.data()) {
        if (!std::isfinite(v)) throw NonFiniteError("refnet: non-finite input value");
    }

    Tensor3 x(1, static_cast<std::uint32_t>(input.rows()), static_cast<std::uint32_t>(input.cols()));
    std::copy(input.data().begin(), input.data().end(), x.data.begin());

    SampleActivations out;
    out.sample_id = std::move(sample_id);
    for (std::size_t b = 0; b < config.num_blocks(); ++b) {
        if (b > 0) {
            if (x.height < 2 || x.width < 2) {
                throw ShapeError("refnet: block " + std::to_string(b - 1) + " output is " +
                                 std::to_string(x.height) + "x" + std::to_string(x.width) +
                                 ", too small for 2x2 pooling");
            }
            x = maxpool2x2(x);
        }
        const std::uint32_t out_channels = config.channels[b];
        if (config.band_filter_mode && b == 0) {
            x = band_selectors(x, out_channels);
        } else {
            x = conv3x3_relu(x, block_weights(config, b, x.channels), out_channels);
        }
        out.records.push_back(to_record(x, static_cast<std::uint32_t>(b)));
    }
    return out;
}

SampleActivations forward(const MelSpectrogram& spec, const RefNetConfig& config,
                          std::string sample_id) {
    return forward(spec.values, config, std::move(sample_id));
}

}  // namespace gramsec
