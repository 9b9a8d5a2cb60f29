#include "gramsec/interchange.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "gramsec/error.hpp"

namespace gramsec {

namespace {

constexpr std::size_t kHeaderBytes = 12;       // magic + version + layer count
constexpr std::size_t kLayerHeaderBytes = 16;  // layer_id, K, m, n
constexpr std::size_t kChunkFloats = 1 << 16;

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

// Reads exactly n bytes or throws a TruncationError describing `what`.
void read_exact(std::istream& in, unsigned char* dst, std::size_t n, const std::string& what) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got != n) {
        std::ostringstream msg;
        msg << "truncated " << what << ": expected " << n << " bytes, available " << got;
        throw TruncationError(msg.str(), n, got);
    }
}

}  // namespace

std::vector<LayerShape> SampleActivations::layout() const {
    std::vector<LayerShape> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back({r.layer_id, r.channels, r.height, r.width});
    return out;
}

std::string describe(const LayerShape& s) {
    std::ostringstream os;
    os << "layer " << s.layer_id << " (K=" << s.channels << ", m=" << s.height
       << ", n=" << s.width << ")";
    return os.str();
}

void validate(const ActivationRecord& r, std::size_t layer_index) {
    const auto where = [&] {
        return "layer index " + std::to_string(layer_index) + " (layer_id " +
               std::to_string(r.layer_id) + ")";
    };
    if (r.channels == 0 || r.height == 0 || r.width == 0) {
        throw InvariantError(where() + ": K, m and n must all be >= 1");
    }
    if (r.values.size() != r.expected_size()) {
        throw InvariantError(where() + ": expected " + std::to_string(r.expected_size()) +
                             " values, got " + std::to_string(r.values.size()));
    }
    const auto bad = std::find_if(r.values.begin(), r.values.end(),
                                  [](float v) { return !std::isfinite(v); });
    if (bad != r.values.end()) {
        throw NonFiniteError(where() + ": non-finite value at offset " +
                             std::to_string(bad - r.values.begin()));
    }
}

void validate(const SampleActivations& sample) {
    if (sample.records.empty()) throw InvariantError("sample has no layers");
    for (std::size_t i = 0; i < sample.records.size(); ++i) {
        validate(sample.records[i], i);
        if (i > 0 && sample.records[i].layer_id <= sample.records[i - 1].layer_id) {
            throw InvariantError("layer index " + std::to_string(i) +
                                 ": layer ids must be strictly increasing");
        }
    }
}

std::size_t write_activations(const SampleActivations& sample, std::ostream& out) {
    validate(sample);

    std::string buf;
    buf.append(kActivationMagic, 4);
    put_u32(buf, kActivationVersion);
    put_u32(buf, static_cast<std::uint32_t>(sample.records.size()));
    for (const auto& r : sample.records) {
        put_u32(buf, r.layer_id);
        put_u32(buf, r.channels);
        put_u32(buf, r.height);
        put_u32(buf, r.width);
        for (float v : r.values) put_u32(buf, std::bit_cast<std::uint32_t>(v));
    }

    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("failed to write activation stream");
    return buf.size();
}

void write_activations_file(const SampleActivations& sample, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    write_activations(sample, out);
    out.flush();
    if (!out) throw IoError("failed to write " + path.string());
}

namespace {

std::uint32_t read_preamble(std::istream& in) {
    std::array<unsigned char, kHeaderBytes> head{};
    read_exact(in, head.data(), 4, "magic");
    if (std::memcmp(head.data(), kActivationMagic, 4) != 0) {
        throw FormatError("bad magic: not a GRAM activation stream");
    }
    read_exact(in, head.data() + 4, 8, "header");
    const std::uint32_t version = get_u32(head.data() + 4);
    if (version != kActivationVersion) {
        throw VersionError("unsupported activation format version " + std::to_string(version) +
                           " (supported: " + std::to_string(kActivationVersion) + ")");
    }
    const std::uint32_t layers = get_u32(head.data() + 8);
    if (layers == 0) throw FormatError("activation stream declares zero layers");
    return layers;
}

LayerShape read_layer_header(std::istream& in, std::uint32_t index,
                             const LayerShape* previous) {
    std::array<unsigned char, kLayerHeaderBytes> h{};
    read_exact(in, h.data(), h.size(), "header of layer index " + std::to_string(index));
    LayerShape s{get_u32(h.data()), get_u32(h.data() + 4), get_u32(h.data() + 8),
                 get_u32(h.data() + 12)};
    if (s.channels == 0 || s.height == 0 || s.width == 0) {
        throw FormatError("layer index " + std::to_string(index) + ": zero dimension in " +
                          describe(s));
    }
    if (previous && s.layer_id <= previous->layer_id) {
        throw FormatError("layer index " + std::to_string(index) +
                          ": layer ids must be strictly increasing");
    }
    return s;
}

}  // namespace

SampleActivations read_activations(std::istream& in, std::string sample_id) {
    const std::uint32_t layers = read_preamble(in);

    SampleActivations sample;
    sample.sample_id = std::move(sample_id);
    sample.records.reserve(std::min<std::uint32_t>(layers, 1024));

    std::vector<unsigned char> bytes;
    for (std::uint32_t li = 0; li < layers; ++li) {
        LayerShape prev{};
        if (li > 0) {
            const auto& p = sample.records.back();
            prev = {p.layer_id, p.channels, p.height, p.width};
        }
        const LayerShape s = read_layer_header(in, li, li > 0 ? &prev : nullptr);

        ActivationRecord r{s.layer_id, s.channels, s.height, s.width, {}};
        const std::uint64_t count =
            static_cast<std::uint64_t>(s.channels) * s.height * s.width;
        const std::uint64_t payload_bytes = count * 4;

        // Grow in chunks so a corrupt header cannot force a huge allocation
        // before the truncation is noticed.
        std::uint64_t done = 0;
        while (done < count) {
            const std::size_t n = static_cast<std::size_t>(std::min<std::uint64_t>(kChunkFloats, count - done));
            bytes.resize(n * 4);
            in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n * 4));
            const auto got = static_cast<std::uint64_t>(in.gcount());
            if (got != n * 4) {
                const auto available = done * 4 + got;
                std::ostringstream msg;
                msg << "truncated payload of layer index " << li << ": expected "
                    << payload_bytes << " bytes, available " << available;
                throw TruncationError(msg.str(), payload_bytes, available);
            }
            for (std::size_t i = 0; i < n; ++i) {
                const float v = std::bit_cast<float>(get_u32(bytes.data() + 4 * i));
                if (!std::isfinite(v)) {
                    throw NonFiniteError("layer index " + std::to_string(li) +
                                         ": non-finite value at offset " +
                                         std::to_string(done + i));
                }
                r.values.push_back(v);
            }
            done += n;
        }
        sample.records.push_back(std::move(r));
    }
    return sample;
}

SampleActivations read_activations_file(const std::filesystem::path& path, std::string sample_id) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return read_activations(in, std::move(sample_id));
    } catch (const Error& e) {
        rethrow_with_context(e, path.string() + ": ");
    }
}

std::vector<LayerShape> probe_layout(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::error_code ec;
    const std::uint64_t file_bytes = std::filesystem::file_size(path, ec);
    if (ec) throw IoError("cannot stat " + path.string());
    try {
        const std::uint32_t layers = read_preamble(in);
        std::uint64_t offset = kHeaderBytes;
        std::vector<LayerShape> out;
        for (std::uint32_t li = 0; li < layers; ++li) {
            const LayerShape s = read_layer_header(in, li, li > 0 ? &out.back() : nullptr);
            const std::uint64_t payload =
                static_cast<std::uint64_t>(s.channels) * s.height * s.width * 4;
            offset += kLayerHeaderBytes;
            if (offset + payload > file_bytes) {
                const auto available = static_cast<std::size_t>(file_bytes - offset);
                throw TruncationError("truncated payload of layer index " + std::to_string(li) +
                                          ": expected " + std::to_string(payload) +
                                          " bytes, available " + std::to_string(available),
                                      static_cast<std::size_t>(payload), available);
            }
            offset += payload;
            in.seekg(static_cast<std::streamoff>(offset), std::ios::beg);
            out.push_back(s);
        }
        if (offset != file_bytes) {
            throw FormatError(std::to_string(file_bytes - offset) + " trailing bytes after last layer");
        }
        return out;
    } catch (const Error& e) {
        rethrow_with_context(e, path.string() + ": ");
    }
}

}  // namespace gramsec
