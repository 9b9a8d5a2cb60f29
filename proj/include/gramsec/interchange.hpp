#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace gramsec {

inline constexpr char kActivationMagic[4] = {'G', 'R', 'A', 'M'};
inline constexpr std::uint32_t kActivationVersion = 1;

// One layer's feature maps for one sample: `channels` maps of
// height x width values, stored channel-major then row then column.
struct ActivationRecord {
    std::uint32_t layer_id = 0;
    std::uint32_t channels = 0;
    std::uint32_t height = 0;
    std::uint32_t width = 0;
    std::vector<float> values;

    std::size_t map_size() const noexcept {
        return static_cast<std::size_t>(height) * width;
    }
    std::size_t expected_size() const noexcept { return channels * map_size(); }

    friend bool operator==(const ActivationRecord&, const ActivationRecord&) = default;
};

// Per-layer shape without the payload.
struct LayerShape {
    std::uint32_t layer_id = 0;
    std::uint32_t channels = 0;
    std::uint32_t height = 0;
    std::uint32_t width = 0;

    friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

struct SampleActivations {
    std::string sample_id;
    std::vector<ActivationRecord> records;

    std::vector<LayerShape> layout() const;

    friend bool operator==(const SampleActivations&, const SampleActivations&) = default;
};

std::string describe(const LayerShape& shape);

// Throws InvariantError / NonFiniteError naming the offending layer.
void validate(const ActivationRecord& record, std::size_t layer_index);
void validate(const SampleActivations& sample);

// Validates the whole sample before emitting anything; returns bytes written.
std::size_t write_activations(const SampleActivations& sample, std::ostream& out);
void write_activations_file(const SampleActivations& sample,
                            const std::filesystem::path& path);

// The file format carries no sample id; callers supply it.
SampleActivations read_activations(std::istream& in, std::string sample_id = {});
SampleActivations read_activations_file(const std::filesystem::path& path,
                                        std::string sample_id = {});

// Reads only the headers, skipping payloads.
std::vector<LayerShape> probe_layout(const std::filesystem::path& path);

}  // namespace gramsec
