#include <doctest.h>

#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "gramsec/error.hpp"
#include "gramsec/interchange.hpp"
#include "gramsec/manifest.hpp"
#include "test_util.hpp"

using namespace gramsec;

namespace {

SampleActivations minimal_sample() {
    return {"s", {ActivationRecord{0, 1, 1, 1, {0.0f}}}};
}

std::string bytes_of(const SampleActivations& s) {
    std::ostringstream out;
    write_activations(s, out);
    return out.str();
}

}  // namespace

TEST_CASE("minimal record is header plus a 4-byte payload and round-trips") {
    const auto sample = minimal_sample();
    std::ostringstream out;
    CHECK(write_activations(sample, out) == 12 + 16 + 4);

    const std::string expected("GRAM\x01\0\0\0\x01\0\0\0"  // magic, version, L
                               "\0\0\0\0\x01\0\0\0\x01\0\0\0\x01\0\0\0"  // layer_id, K, m, n
                               "\0\0\0\0",
                               32);
    CHECK(out.str() == expected);

    std::istringstream in(out.str());
    CHECK(read_activations(in, "s") == sample);
}

TEST_CASE("payload is float32 little-endian in channel, row, column order") {
    SampleActivations s{"x", {ActivationRecord{7, 2, 1, 2, {1.0f, -2.0f, 0.5f, 3.0f}}}};
    const auto b = bytes_of(s);
    REQUIRE(b.size() == 12 + 16 + 16);
    // 1.0f = 0x3F800000, -2.0f = 0xC0000000
    CHECK(b.substr(28, 4) == std::string("\x00\x00\x80\x3F", 4));
    CHECK(b.substr(32, 4) == std::string("\x00\x00\x00\xC0", 4));
    CHECK(static_cast<unsigned char>(b[12]) == 7);
}

TEST_CASE("two heterogeneous layers read back field for field") {
    SampleActivations s{"two",
                        {ActivationRecord{0, 2, 2, 2, {1, 2, 3, 4, 5, 6, 7, 8}},
                         ActivationRecord{1, 3, 1, 1, {-1.5f, 0.25f, 9.0f}}}};
    std::istringstream in(bytes_of(s));
    CHECK(read_activations(in, "two") == s);
}

TEST_CASE("randomized records round-trip bit for bit and serialize deterministically") {
    SplitMix64 rng(1234);
    for (int trial = 0; trial < 100; ++trial) {
        SampleActivations s{"r", {}};
        const auto layers = 1 + rng.next() % 4;
        std::uint32_t id = static_cast<std::uint32_t>(rng.next() % 3);
        for (std::uint64_t l = 0; l < layers; ++l) {
            s.records.push_back(testutil::random_record(
                rng, id, 1 + rng.next() % 5, 1 + rng.next() % 4, 1 + rng.next() % 4, -1e6, 1e6));
            id += 1 + static_cast<std::uint32_t>(rng.next() % 3);
        }
        const auto first = bytes_of(s);
        CHECK(first == bytes_of(s));
        std::istringstream in(first);
        const auto back = read_activations(in, "r");
        REQUIRE(back.records.size() == s.records.size());
        for (std::size_t l = 0; l < s.records.size(); ++l) {
            CHECK(std::memcmp(back.records[l].values.data(), s.records[l].values.data(),
                              s.records[l].values.size() * 4) == 0);
        }
        CHECK(back == s);
    }
}

TEST_CASE("NaN is rejected before any byte is written") {
    auto s = minimal_sample();
    s.records[0].values[0] = std::numeric_limits<float>::quiet_NaN();
    std::ostringstream out;
    CHECK_THROWS_AS(write_activations(s, out), NonFiniteError);
    CHECK(out.str().empty());
}

TEST_CASE("write rejects invariant violations and names the layer") {
    SampleActivations s{"bad", {ActivationRecord{0, 1, 1, 1, {1.0f}}, ActivationRecord{1, 2, 1, 1, {1.0f}}}};
    std::ostringstream out;
    try {
        write_activations(s, out);
        FAIL("expected an error");
    } catch (const InvariantError& e) {
        CHECK(std::string(e.what()).find("layer index 1") != std::string::npos);
    }
    CHECK(out.str().empty());

    SampleActivations dup{"dup", {ActivationRecord{3, 1, 1, 1, {1.0f}}, ActivationRecord{3, 1, 1, 1, {1.0f}}}};
    CHECK_THROWS_AS(write_activations(dup, out), InvariantError);
    SampleActivations zero{"z", {ActivationRecord{0, 0, 1, 1, {}}}};
    CHECK_THROWS_AS(write_activations(zero, out), InvariantError);
    CHECK_THROWS_AS(write_activations(SampleActivations{}, out), InvariantError);
}

TEST_CASE("stream truncated mid-payload reports expected and available bytes") {
    SampleActivations s{"t", {ActivationRecord{0, 2, 2, 2, {1, 2, 3, 4, 5, 6, 7, 8}}}};
    const auto b = bytes_of(s);
    std::istringstream in(b.substr(0, b.size() - 10));
    try {
        read_activations(in);
        FAIL("expected truncation");
    } catch (const TruncationError& e) {
        CHECK(e.kind() == ErrorKind::Truncated);
        CHECK(e.expected_bytes() == 32);
        CHECK(e.available_bytes() == 22);
        const std::string msg = e.what();
        CHECK(msg.find("expected 32") != std::string::npos);
        CHECK(msg.find("available 22") != std::string::npos);
    }

    std::istringstream header_only(b.substr(0, 20));
    CHECK_THROWS_AS(read_activations(header_only), TruncationError);
}

TEST_CASE("wrong magic is a format error and nothing past the probe is consumed") {
    auto b = bytes_of(minimal_sample());
    b[0] = 'X';
    std::istringstream in(b);
    CHECK_THROWS_AS(read_activations(in), FormatError);
    in.clear();
    CHECK(in.tellg() == 4);
}

TEST_CASE("unsupported version, zero layers and non-finite payload are distinct errors") {
    auto b = bytes_of(minimal_sample());
    auto versioned = b;
    versioned[4] = 2;
    std::istringstream v(versioned);
    CHECK_THROWS_AS(read_activations(v), VersionError);

    auto empty = b.substr(0, 12);
    empty[8] = 0;
    std::istringstream e(empty);
    CHECK_THROWS_AS(read_activations(e), FormatError);

    auto inf = b;
    inf.replace(28, 4, std::string("\x00\x00\x80\x7F", 4));  // +Inf
    std::istringstream i(inf);
    CHECK_THROWS_AS(read_activations(i), NonFiniteError);

    auto zero_dim = b;
    zero_dim[16] = 0;  // K = 0
    std::istringstream z(zero_dim);
    CHECK_THROWS_AS(read_activations(z), FormatError);
}

TEST_CASE("file helpers round-trip and probe headers without payload") {
    testutil::TempDir dir("interchange");
    SampleActivations s{"f", {ActivationRecord{0, 2, 3, 1, {1, 2, 3, 4, 5, 6}}, ActivationRecord{4, 1, 1, 2, {7, 8}}}};
    write_activations_file(s, dir / "a.gram");
    CHECK(read_activations_file(dir / "a.gram", "f") == s);
    CHECK(probe_layout(dir / "a.gram") == s.layout());

    const auto bytes = testutil::slurp(dir / "a.gram");
    std::ofstream(dir / "cut.gram", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
    CHECK_THROWS_AS(probe_layout(dir / "cut.gram"), TruncationError);
    CHECK_THROWS_AS(read_activations_file(dir / "cut.gram"), TruncationError);
    CHECK_THROWS_AS(read_activations_file(dir / "missing.gram"), IoError);
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

std::string manifest_json(int classes, int train, int val, int test, int skip_val_class = -1) {
    std::string out = "{\"num_classes\": " + std::to_string(classes) + ", \"entries\": [";
    bool first = true;
    auto add = [&](const char* split, int c, int i) {
        out += first ? "" : ",";
        first = false;
        const std::string id = std::string(split) + "_" + std::to_string(c) + "_" + std::to_string(i);
        out += "{\"id\":\"" + id + "\",\"split\":\"" + split + "\",\"label\":" + std::to_string(c) +
               ",\"path\":\"" + id + ".gram\"}";
    };
    for (int c = 0; c < classes; ++c) {
        for (int i = 0; i < train; ++i) add("train", c, i);
        if (c != skip_val_class)
            for (int i = 0; i < val; ++i) add("validation", c, i);
        for (int i = 0; i < test; ++i) add("test", c, i);
    }
    return out + "]}";
}

}  // namespace

TEST_CASE("manifest with 3 classes of 2/1/1 entries parses to 12 entries") {
    const auto m = parse_manifest(manifest_json(3, 2, 1, 1));
    CHECK(m.num_classes == 3);
    CHECK(m.entries.size() == 12);
    CHECK(m.split(Split::Train).size() == 6);
    CHECK(m.split(Split::Validation).size() == 3);
    CHECK(m.split(Split::Test).size() == 3);
}

TEST_CASE("manifest validation errors") {
    SUBCASE("class absent from validation") {
        try {
            parse_manifest(manifest_json(3, 2, 1, 1, 2));
            FAIL("expected coverage error");
        } catch (const InvariantError& e) {
            CHECK(std::string(e.what()).find("class 2") != std::string::npos);
            CHECK(std::string(e.what()).find("validation") != std::string::npos);
        }
    }
    SUBCASE("duplicate sample id") {
        const std::string text =
            R"({"num_classes":1,"entries":[{"id":"a","split":"train","label":0,"path":"a"},
                {"id":"a","split":"validation","label":0,"path":"b"}]})";
        try {
            parse_manifest(text);
            FAIL("expected uniqueness error");
        } catch (const InvariantError& e) {
            CHECK(std::string(e.what()).find("duplicate") != std::string::npos);
            CHECK(std::string(e.what()).find("entry 1") != std::string::npos);
        }
    }
    SUBCASE("label out of range") {
        const std::string text =
            R"({"num_classes":1,"entries":[{"id":"a","split":"train","label":1,"path":"a"}]})";
        CHECK_THROWS_WITH_AS(parse_manifest(text), doctest::Contains("label 1 >= num_classes 1"),
                             InvariantError);
    }
    SUBCASE("structural problems") {
        CHECK_THROWS_AS(parse_manifest("not json"), FormatError);
        CHECK_THROWS_AS(parse_manifest(R"({"entries":[]})"), FormatError);
        CHECK_THROWS_AS(parse_manifest(
                            R"({"num_classes":1,"entries":[{"id":"a","split":"dev","label":0,"path":"a"}]})"),
                        FormatError);
        CHECK_THROWS_AS(parse_manifest(
                            R"({"num_classes":1,"entries":[{"id":"a","split":"train","label":-1,"path":"a"}]})"),
                        InvariantError);
    }
}

TEST_CASE("manifest dump parses back to the same entries") {
    const auto m = parse_manifest(manifest_json(2, 3, 2, 1));
    const auto again = parse_manifest(dump_manifest(m));
    CHECK(again.num_classes == m.num_classes);
    CHECK(again.entries == m.entries);
}

TEST_CASE("load_manifest resolves relative paths and enforces layer homogeneity") {
    testutil::TempDir dir("manifest");
    const auto m = parse_manifest(manifest_json(2, 1, 1, 1));
    save_manifest(m, dir / "manifest.json");
    for (const auto& e : m.entries) {
        write_activations_file({e.id, {ActivationRecord{0, 2, 1, 1, {1, 2}}}}, dir / e.path.string());
    }
    const auto loaded = load_manifest(dir / "manifest.json");
    CHECK(loaded.resolve(loaded.entries[0]) == dir / loaded.entries[0].path);
    CHECK(verify_layouts(loaded) == std::vector<LayerShape>{{0, 2, 1, 1}});

    write_activations_file({"odd", {ActivationRecord{0, 3, 1, 1, {1, 2, 3}}}},
                           dir / m.entries.back().path.string());
    CHECK_THROWS_WITH_AS(load_manifest(dir / "manifest.json"), doctest::Contains("K=3"), ShapeError);
    CHECK_NOTHROW(load_manifest(dir / "manifest.json", false));
}
