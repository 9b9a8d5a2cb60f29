#include "gramsec/manifest.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "gramsec/error.hpp"

namespace gramsec {

using nlohmann::json;

std::string_view to_string(Split split) noexcept {
    switch (split) {
        case Split::Train: return "train";
        case Split::Validation: return "validation";
        case Split::Test: return "test";
    }
    return "?";
}

std::optional<Split> parse_split(std::string_view text) noexcept {
    if (text == "train") return Split::Train;
    if (text == "validation" || text == "val") return Split::Validation;
    if (text == "test") return Split::Test;
    return std::nullopt;
}

std::filesystem::path DatasetManifest::resolve(const ManifestEntry& entry) const {
    if (entry.path.is_absolute() || base_dir.empty()) return entry.path;
    return base_dir / entry.path;
}

std::vector<const ManifestEntry*> DatasetManifest::split(Split which) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries) {
        if (e.split == which) out.push_back(&e);
    }
    return out;
}

void validate(const DatasetManifest& m) {
    if (m.num_classes == 0) throw InvariantError("manifest: num_classes must be >= 1");

    std::unordered_set<std::string> ids;
    std::vector<int> train(m.num_classes, 0), val(m.num_classes, 0);
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        const auto& e = m.entries[i];
        if (e.label >= m.num_classes) {
            throw InvariantError("manifest entry " + std::to_string(i) + " ('" + e.id +
                                 "'): label " + std::to_string(e.label) +
                                 " >= num_classes " + std::to_string(m.num_classes));
        }
        if (!ids.insert(e.id).second) {
            throw InvariantError("manifest entry " + std::to_string(i) +
                                 ": duplicate sample id '" + e.id + "'");
        }
        if (e.split == Split::Train) ++train[e.label];
        if (e.split == Split::Validation) ++val[e.label];
    }
    for (std::uint32_t c = 0; c < m.num_classes; ++c) {
        if (train[c] == 0) {
            throw InvariantError("manifest: class " + std::to_string(c) + " has no train entries");
        }
        if (val[c] == 0) {
            throw InvariantError("manifest: class " + std::to_string(c) +
                                 " has no validation entries");
        }
    }
}

DatasetManifest parse_manifest(std::string_view text, std::filesystem::path base_dir) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw FormatError("manifest: top level must be an object");
    if (!doc.contains("num_classes") || !doc["num_classes"].is_number_unsigned()) {
        throw FormatError("manifest: 'num_classes' must be a non-negative integer");
    }
    if (!doc.contains("entries") || !doc["entries"].is_array()) {
        throw FormatError("manifest: 'entries' must be an array");
    }

    DatasetManifest m;
    m.base_dir = std::move(base_dir);
    m.num_classes = doc["num_classes"].get<std::uint32_t>();
    const auto& entries = doc["entries"];
    m.entries.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        const auto where = "manifest entry " + std::to_string(i);
        if (!e.is_object()) throw FormatError(where + ": not an object");
        for (const char* key : {"id", "split", "path"}) {
            if (!e.contains(key) || !e[key].is_string()) {
                throw FormatError(where + ": '" + key + "' must be a string");
            }
        }
        if (!e.contains("label") || !e["label"].is_number_integer()) {
            throw FormatError(where + ": 'label' must be an integer");
        }
        const auto label = e["label"].get<std::int64_t>();
        if (label < 0 || label > static_cast<std::int64_t>(UINT32_MAX)) {
            throw InvariantError(where + ": label " + std::to_string(label) + " out of range");
        }
        const auto split_text = e["split"].get<std::string>();
        const auto split = parse_split(split_text);
        if (!split) throw FormatError(where + ": unknown split '" + split_text + "'");
        m.entries.push_back({e["id"].get<std::string>(), *split,
                             static_cast<std::uint32_t>(label),
                             std::filesystem::path(e["path"].get<std::string>())});
    }
    validate(m);
    return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path, bool probe_headers) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    auto m = parse_manifest(text.str(), path.parent_path());
    if (probe_headers) verify_layouts(m);
    return m;
}

std::string dump_manifest(const DatasetManifest& m) {
    json entries = json::array();
    for (const auto& e : m.entries) {
        entries.push_back({{"id", e.id},
                           {"split", std::string(to_string(e.split))},
                           {"label", e.label},
                           {"path", e.path.generic_string()}});
    }
    json doc = {{"num_classes", m.num_classes}, {"entries", std::move(entries)}};
    return doc.dump(2) + "\n";
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << dump_manifest(m);
    if (!out) throw IoError("failed to write " + path.string());
}

std::vector<LayerShape> verify_layouts(const DatasetManifest& m) {
    std::vector<LayerShape> reference;
    const ManifestEntry* first = nullptr;
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        const auto& e = m.entries[i];
        auto layout = probe_layout(m.resolve(e));
        if (!first) {
            reference = std::move(layout);
            first = &e;
            continue;
        }
        if (layout.size() != reference.size()) {
            throw ShapeError("manifest entry " + std::to_string(i) + " ('" + e.id + "') has " +
                             std::to_string(layout.size()) + " layers, '" + first->id +
                             "' has " + std::to_string(reference.size()));
        }
        for (std::size_t l = 0; l < layout.size(); ++l) {
            if (layout[l] != reference[l]) {
                throw ShapeError("manifest entry " + std::to_string(i) + " ('" + e.id +
                                 "'): layer index " + std::to_string(l) + " is " +
                                 describe(layout[l]) + ", expected " + describe(reference[l]));
            }
        }
    }
    return reference;
}

}  // namespace gramsec
