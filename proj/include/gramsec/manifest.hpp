#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gramsec/interchange.hpp"

namespace gramsec {

enum class Split { Train, Validation, Test };

std::string_view to_string(Split split) noexcept;
std::optional<Split> parse_split(std::string_view text) noexcept;

struct ManifestEntry {
    std::string id;
    Split split = Split::Train;
    std::uint32_t label = 0;
    // As written in the manifest; see DatasetManifest::resolve.
    std::filesystem::path path;

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
    std::uint32_t num_classes = 0;
    std::vector<ManifestEntry> entries;
    // Directory relative entry paths are resolved against.
    std::filesystem::path base_dir;

    std::filesystem::path resolve(const ManifestEntry& entry) const;
    std::vector<const ManifestEntry*> split(Split which) const;
};

// Checks label range, id uniqueness and per-class train/validation coverage.
void validate(const DatasetManifest& manifest);

DatasetManifest parse_manifest(std::string_view json_text,
                               std::filesystem::path base_dir = {});

// Loads and validates; with probe_headers, also reads every activation file
// header and rejects heterogeneous layer layouts.
DatasetManifest load_manifest(const std::filesystem::path& path, bool probe_headers = true);

std::string dump_manifest(const DatasetManifest& manifest);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// Common layout of all entries; throws ShapeError naming the first mismatch.
std::vector<LayerShape> verify_layouts(const DatasetManifest& manifest);

}  // namespace gramsec
