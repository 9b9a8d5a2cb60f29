// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gramsec/audio.hpp"
#include "gramsec/calibration.hpp"
#include "gramsec/classifier.hpp"
#include "gramsec/gram.hpp"
#include "gramsec/rng.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#ifndef GRAMSEC_CLI
#define GRAMSEC_CLI "gramsec"
#endif

using namespace gramsec;
namespace fs = std::filesystem;

namespace {

struct Check {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (!cond && ok) detail = what;
        ok = ok && cond;
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double rel_err(double a, double b) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-300});
}

Check gram_algebra() {
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    SplitMix64 rng(101);
    for (int trial = 0; trial < 200; ++trial) {
        const auto k = static_cast<std::uint32_t>(1 + rng.next() % 8);
        const auto m = static_cast<std::uint32_t>(1 + rng.next() % 8);
        const auto n = static_cast<std::uint32_t>(1 + rng.next() % (64 / m));
        const auto r = testutil::random_record(rng, 0, k, m, n, -3.0, 3.0);
        const auto g = gram_matrix(r);
        const auto ref = oracle::gram(r);
        double norm = 0.0;
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) {
                c.require(g(i, j) == g(j, i), "asymmetric G");
                c.require(rel_err(g(i, j), ref[i][j]) <= 1e-9 || std::fabs(g(i, j) - ref[i][j]) <= 1e-12,
                          "oracle mismatch");
                norm = std::max(norm, std::fabs(g(i, j)));
            }

        // Smallest eigenvalue via power iteration on the shifted matrix.
        const double s = norm * k + 1.0;
        std::vector<double> v(k), w(k);
        for (std::size_t i = 0; i < k; ++i) v[i] = 1.0 + 0.37 * i;
        double mu = 0.0;
        for (int it = 0; it < 1000; ++it) {
            double len = 0.0, num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < k; ++i) {
                double acc = s * v[i];
                for (std::size_t j = 0; j < k; ++j) acc -= g(i, j) * v[j];
                w[i] = acc;
                len += acc * acc;
                num += v[i] * acc;
                den += v[i] * v[i];
            }
            mu = num / den;
            len = std::sqrt(len);
            for (std::size_t i = 0; i < k; ++i) v[i] = w[i] / len;
        }
        c.require(s - mu >= -1e-6 * norm, "negative eigenvalue");

        auto scaled = r;
        for (auto& x : scaled.values) x *= 2.0f;
        const auto gs = gram_matrix(scaled);
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j)
                c.require(rel_err(gs(i, j), 4.0 * g(i, j)) <= 1e-9 || g(i, j) == 0.0, "scale covariance");

        const auto sum = summarize(r);
        const auto ref_raw = oracle::row_sums(ref);
        const auto ref_norm = oracle::minmax_scale(ref_raw);
        for (std::size_t i = 0; i < k; ++i) {
            c.require(rel_err(sum.raw[i], ref_raw[i]) <= 1e-9 || std::fabs(sum.raw[i] - ref_raw[i]) <= 1e-9,
                      "row-sum oracle");
            c.require(std::fabs(sum.normalized[i] - ref_norm[i]) <= 1e-9, "normalize oracle");
        }
    }
    const double secs = seconds_since(t0);
    c.require(secs < 10.0, "runtime over 10 s");
    if (c.ok) c.detail = "200 records, " + std::to_string(secs) + " s";
    return c;
}

Check delta_branches() {
    Check c;
    c.require(delta(0.2, 0.8, 0.5) == 0.0, "in-range example");
    c.require(std::fabs(delta(0.2, 0.8, 0.1) - 0.5) <= 1e-12, "below example");
    c.require(std::fabs(delta(0.2, 0.8, 1.0) - 0.25) <= 1e-12, "above example");
    SplitMix64 rng(202);
    for (int i = 0; i < 10000; ++i) {
        double lo = rng.uniform(-5, 5), hi = rng.uniform(-5, 5);
        if (lo > hi) std::swap(lo, hi);
        const double g = rng.uniform(-10, 10);
        const double d = delta(lo, hi, g);
        c.require(d >= 0.0, "negative delta");
        if (std::fabs(lo) > 1e-12 && std::fabs(hi) > 1e-12)
            c.require((d == 0.0) == (lo <= g && g <= hi), "zero iff in range");
        for (double e : {1e-9, 1e-12}) {
            c.require(delta(lo, hi, lo - e) <= e / std::max(std::fabs(lo), 1e-12) * (1 + 1e-9) + 1e-15,
                      "continuity at lambda");
            c.require(delta(lo, hi, hi + e) <= e / std::max(std::fabs(hi), 1e-12) * (1 + 1e-9) + 1e-15,
                      "continuity at Lambda");
        }
        c.require(delta(lo, hi, lo) == 0.0 && delta(lo, hi, hi) == 0.0, "breakpoint value");
    }
    if (c.ok) c.detail = "examples exact, 10000 random triples";
    return c;
}

SampleSummary random_profile(SplitMix64& rng, const std::vector<std::size_t>& ks) {
    SampleSummary s;
    for (std::uint32_t l = 0; l < ks.size(); ++l) {
        std::vector<double> raw(ks[l]);
        for (auto& v : raw) v = rng.uniform(0.0, 5.0);
        s.push_back({l, raw, normalize(raw)});
    }
    return s;
}

Check bound_consistency() {
    Check c;
    SplitMix64 rng(303);
    for (int dataset = 0; dataset < 20; ++dataset) {
        const std::uint32_t classes = 3 + static_cast<std::uint32_t>(rng.next() % 4);
        const std::vector<std::size_t> ks{2 + rng.next() % 6, 2 + rng.next() % 6, 2 + rng.next() % 6};
        SummarySet train{Split::Train, {}, {}, {}}, val{Split::Validation, {}, {}, {}};
        for (std::uint32_t cl = 0; cl < classes; ++cl) {
            for (int i = 0; i < 6; ++i) train.add("t", random_profile(rng, ks), cl);
            for (int i = 0; i < 3; ++i) val.add("v", random_profile(rng, ks), cl);
        }
        std::vector<LayerShape> layout;
        for (std::uint32_t l = 0; l < 3; ++l) layout.push_back({l, static_cast<std::uint32_t>(ks[l]), 1, 1});
        CalibrationOptions opts;
        opts.top_k = 3;
        const auto model = calibrate(train, val, classes, layout, opts);
        for (std::size_t i = 0; i < train.size(); ++i) {
            const auto own = train.labels[i];
            for (std::size_t l = 0; l < 3; ++l)
                c.require(layer_deviation(train.samples[i][l], model.at(own, l).bounds) == 0.0, "own-class delta_l != 0");
            c.require(total_deviation(train.samples[i], own, model) == 0.0, "own-class Delta != 0");
        }
    }
    if (c.ok) c.detail = "20 datasets, 3-6 classes";
    return c;
}

Check wasserstein_suite() {
    Check c;
    const std::vector<double> a{0.4, 0.1, 0.9};
    c.require(wasserstein_1d(a, a) == 0.0, "W(a, a) example");
    c.require(wasserstein_1d(std::vector<double>{0.0}, std::vector<double>{1.0}) == 1.0, "point masses");
    c.require(wasserstein_1d(std::vector<double>{0.0, 1.0}, std::vector<double>{0.5, 0.5}) == 0.5, "two-point example");
    SplitMix64 rng(404);
    const auto draw = [&](std::size_t n) {
        std::vector<double> v(n);
        for (auto& x : v) x = rng.uniform(-2.0, 2.0);
        return v;
    };
    for (int t = 0; t < 2000; ++t) {
        const auto x = draw(1 + rng.next() % 50), y = draw(1 + rng.next() % 50), z = draw(1 + rng.next() % 50);
        const double xy = wasserstein_1d(x, y);
        c.require(xy >= 0.0, "non-negative");
        c.require(xy == wasserstein_1d(y, x), "symmetry");
        c.require(wasserstein_1d(x, x) == 0.0, "identity");
        c.require(xy <= wasserstein_1d(x, z) + wasserstein_1d(z, y) + 1e-12, "triangle inequality");
        const auto e = draw(x.size());
        c.require(std::fabs(wasserstein_1d(x, e) - oracle::wasserstein_sorted_pairing(x, e)) <= 1e-12,
                  "sorted-pairing oracle");
    }
    if (c.ok) c.detail = "examples exact, 2000 random triples";
    return c;
}

int cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string("\"") + GRAMSEC_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    return std::system(cmd.c_str());
}

Check end_to_end(const testutil::TempDir& dir) {
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path data = dir / "e2e";
    c.require(cli("synth --classes 3 --train 10 --val 5 --test 5 --seed 7 --out \"" + data.string() + "\"",
                  dir / "synth.log") == 0, "synth failed");
    c.require(cli("run --config \"" + (data / "experiment.json").string() + "\"", dir / "run.log") == 0,
              "run failed: " + testutil::slurp(dir / "run.log"));
    if (!c.ok) return c;
    const auto metrics = nlohmann::json::parse(testutil::slurp(data / "run" / "metrics.json"));
    c.require(metrics["accuracy"].get<double>() == 1.0, "ACC below 100%");
    c.require(metrics["balanced_accuracy"].get<double>() == 1.0, "BA below 100%");

    c.require(cli("run --config \"" + (data / "experiment.json").string() + "\" --top-k 1 --out \"" +
                      (data / "top1").string() + "\"", dir / "top1.log") == 0, "top_k=1 run failed");
    if (!c.ok) return c;
    const auto top1 = nlohmann::json::parse(testutil::slurp(data / "top1" / "metrics.json"));
    const auto selected = top1["selected_layers"].get<std::vector<std::uint32_t>>();
    std::ostringstream sel;
    for (auto id : selected) sel << id << " ";
    std::ostringstream scores;
    for (const auto& l : top1["layers"]) scores << " I_" << l["layer_id"].get<int>() << "=" << l["aggregate"].get<double>();
    c.require(selected == std::vector<std::uint32_t>{0},
              "top_k=1 selected layer " + sel.str() + "instead of the band-selective block 0;" + scores.str());
    const double secs = seconds_since(t0);
    c.require(secs < 60.0, "runtime over 60 s");
    if (c.ok) c.detail = "ACC = BA = 100%, top_k=1 -> layer 0, " + std::to_string(secs) + " s";
    return c;
}

Check determinism(const testutil::TempDir& dir) {
    Check c;
    std::vector<std::string> outputs[2];
    for (int run = 0; run < 2; ++run) {
        const fs::path data = dir / ("det" + std::to_string(run));
        c.require(cli("synth --seed 7 --out \"" + data.string() + "\"", dir / "det_synth.log") == 0, "synth failed");
        c.require(cli("run --config \"" + (data / "experiment.json").string() + "\"", dir / "det_run.log") == 0,
                  "run failed");
        for (const char* f : {"model.gram", "predictions.csv", "metrics.json", "metrics.txt"})
            outputs[run].push_back(testutil::slurp(data / "run" / f));
    }
    if (!c.ok) return c;
    const char* names[] = {"model.gram", "predictions.csv", "metrics.json", "metrics.txt"};
    for (std::size_t i = 0; i < outputs[0].size(); ++i) {
        c.require(!outputs[0][i].empty(), std::string(names[i]) + " empty");
        c.require(outputs[0][i] == outputs[1][i], std::string(names[i]) + " differs");
    }
    if (c.ok) c.detail = "model, predictions and metrics byte-identical";
    return c;
}

Check front_end() {
    Check c;
    const AudioSegment ten_s{std::vector<double>(160000, 0.0), 16000.0};
    const auto p = stft_power(ten_s);
    c.require(p.cols() == 499, "frame count " + std::to_string(p.cols()));

    const std::size_t k = 64;
    AudioSegment sine{std::vector<double>(1600), 16000.0};
    for (std::size_t i = 0; i < sine.samples.size(); ++i)
        sine.samples[i] = std::sin(2.0 * 3.14159265358979323846 * (k * 16000.0 / 1024.0) * i / 16000.0);
    const auto ps = stft_power(sine);
    const std::vector<double> frame(sine.samples.begin(), sine.samples.begin() + 640);
    const auto ref = oracle::dft_power(frame, 1024);
    std::size_t peak = 0;
    for (std::size_t b = 1; b < 513; ++b)
        if (ps(b, 0) > ps(peak, 0)) peak = b;
    c.require(peak == k, "peak at bin " + std::to_string(peak));
    c.require(std::fabs(ps(k, 0) - ref[k]) / ref[k] < 1e-6, "peak power differs from naive DFT");

    const auto mel = log_mel_spectrogram(AudioSegment{std::vector<double>(16000, 0.0), 16000.0});
    for (double v : mel.values.data()) c.require(v == std::log(1e-10), "zero audio above floor");
    if (c.ok) c.detail = "499 frames, peak bin 64, floor " + std::to_string(std::log(1e-10));
    return c;
}

Check metric_definitions() {
    Check c;
    std::vector<std::uint32_t> labels(10, 0), preds(10, 0);
    labels[9] = 1;
    const auto m = compute_metrics(labels, preds, 2);
    c.require(m.accuracy == 0.9, "ACC " + std::to_string(m.accuracy));
    c.require(m.balanced_accuracy == 0.5, "BA " + std::to_string(m.balanced_accuracy));
    if (c.ok) c.detail = "ACC = 0.9, BA = 0.5";
    return c;
}

}  // namespace

int main() {
    testutil::TempDir dir("acceptance");
    const std::vector<std::pair<const char*, std::function<Check()>>> criteria{
        {"gram algebra", gram_algebra},
        {"deviation branches", delta_branches},
        {"bound consistency", bound_consistency},
        {"wasserstein", wasserstein_suite},
        {"end-to-end synthetic", [&] { return end_to_end(dir); }},
        {"determinism", [&] { return determinism(dir); }},
        {"front end", front_end},
        {"metric definitions", metric_definitions},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        Check c;
        try {
            c = fn();
        } catch (const std::exception& e) {
            c.ok = false;
            c.detail = std::string("exception: ") + e.what();
        }
        std::printf("%s  %-22s %s\n", c.ok ? "PASS" : "FAIL", name, c.detail.c_str());
        failed += !c.ok;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed ? 1 : 0;
}
