#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "gramsec/interchange.hpp"
#include "gramsec/rng.hpp"

namespace testutil {

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        gramsec::SplitMix64 rng(reinterpret_cast<std::uintptr_t>(this) ^ ++counter);
        path_ = std::filesystem::temp_directory_path() /
                ("gramsec_" + tag + "_" + std::to_string(rng.next() % 1000000007ULL));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline gramsec::ActivationRecord random_record(gramsec::SplitMix64& rng, std::uint32_t layer_id,
                                               std::uint32_t k, std::uint32_t m, std::uint32_t n,
                                               double lo = -1.0, double hi = 1.0) {
    gramsec::ActivationRecord r{layer_id, k, m, n, {}};
    for (std::size_t i = 0; i < r.expected_size(); ++i) r.values.push_back(static_cast<float>(rng.uniform(lo, hi)));
    return r;
}

}  // namespace testutil
