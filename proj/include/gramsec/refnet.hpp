#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gramsec/audio.hpp"
#include "gramsec/interchange.hpp"

namespace gramsec {

// Rows of the input each band-selector channel averages.
inline constexpr std::size_t kBandRows = 16;

// Untrained reference CNN: blocks of 3x3 conv (stride 1, zero pad 1, zero
// bias) -> ReLU -> 2x2 max-pool. Activations are captured post-ReLU and
// pre-pool, one record per block with layer_id equal to the block index.
struct RefNetConfig {
    std::vector<std::uint32_t> channels{8, 16, 32};
    std::uint64_t seed = 42;
    // Replaces block 0 with fixed band selectors: output channel c averages
    // the 3x3 neighbourhood of input rows [16c, 16c + 16) only.
    bool band_filter_mode = false;

    std::size_t num_blocks() const noexcept { return channels.size(); }
};

void validate(const RefNetConfig& config);

// Weights of one block, laid out [out][in][ky][kx]. Random blocks are a pure
// function of (seed, block), uniform in +-1/sqrt(9 * in_channels).
std::vector<double> block_weights(const RefNetConfig& config, std::size_t block,
                                  std::uint32_t in_channels);

// Order-sensitive checksum over every weight of the network.
std::uint64_t weight_checksum(const RefNetConfig& config);

SampleActivations forward(const Matrix& input, const RefNetConfig& config,
                          std::string sample_id = {});
SampleActivations forward(const MelSpectrogram& spec, const RefNetConfig& config,
                          std::string sample_id = {});

}  // namespace gramsec
