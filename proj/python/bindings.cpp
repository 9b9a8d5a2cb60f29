#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>

#include "gramsec/audio.hpp"
#include "gramsec/calibration.hpp"
#include "gramsec/classifier.hpp"
#include "gramsec/deviation.hpp"
#include "gramsec/error.hpp"
#include "gramsec/gram.hpp"
#include "gramsec/harness.hpp"
#include "gramsec/interchange.hpp"
#include "gramsec/refnet.hpp"

namespace py = pybind11;
using namespace gramsec;

namespace {

using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;
using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Layers = std::vector<std::pair<std::uint32_t, py::array_t<float>>>;

ActivationRecord to_record(std::uint32_t layer_id, const F32Array& a) {
    if (a.ndim() != 3) throw ShapeError("activation arrays must be 3-D (K, m, n)");
    ActivationRecord r{layer_id, static_cast<std::uint32_t>(a.shape(0)),
                       static_cast<std::uint32_t>(a.shape(1)), static_cast<std::uint32_t>(a.shape(2)), {}};
    r.values.assign(a.data(), a.data() + a.size());
    return r;
}

py::array_t<float> to_array(const ActivationRecord& r) {
    py::array_t<float> out({r.channels, r.height, r.width});
    std::copy(r.values.begin(), r.values.end(), out.mutable_data());
    return out;
}

Layers to_layers(const SampleActivations& s) {
    Layers out;
    for (const auto& r : s.records) out.emplace_back(r.layer_id, to_array(r));
    return out;
}

Matrix to_matrix(const F64Array& a) {
    if (a.ndim() != 2) throw ShapeError("expected a 2-D array");
    Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
    std::copy(a.data(), a.data() + a.size(), m.data().begin());
    return m;
}

py::array_t<double> from_matrix(const Matrix& m) {
    py::array_t<double> out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

std::vector<double> to_vector(const F64Array& a) { return {a.data(), a.data() + a.size()}; }

AudioSegment to_audio(const F64Array& samples, double rate) { return {to_vector(samples), rate}; }

py::dict metrics_dict(const Metrics& m) {
    py::dict d;
    d["accuracy"] = m.accuracy;
    d["balanced_accuracy"] = m.balanced_accuracy;
    d["total"] = m.total;
    d["correct"] = m.correct;
    d["confusion"] = m.confusion;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Gram-matrix deviation classifier core";

    static py::exception<Error> base(m, "Error");
    static py::exception<IoError> io(m, "IoError", base.ptr());
    static py::exception<FormatError> format(m, "FormatError", base.ptr());
    static py::exception<VersionError> version(m, "VersionError", base.ptr());
    static py::exception<TruncationError> truncated(m, "TruncationError", base.ptr());
    static py::exception<NonFiniteError> non_finite(m, "NonFiniteError", base.ptr());
    static py::exception<InvariantError> invariant(m, "InvariantError", base.ptr());
    static py::exception<ContractError> contract(m, "ContractError", base.ptr());
    static py::exception<ShapeError> shape(m, "ShapeError", base.ptr());
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const IoError& e) { py::set_error(io, e.what());
        } catch (const FormatError& e) { py::set_error(format, e.what());
        } catch (const VersionError& e) { py::set_error(version, e.what());
        } catch (const TruncationError& e) { py::set_error(truncated, e.what());
        } catch (const NonFiniteError& e) { py::set_error(non_finite, e.what());
        } catch (const InvariantError& e) { py::set_error(invariant, e.what());
        } catch (const ContractError& e) { py::set_error(contract, e.what());
        } catch (const ShapeError& e) { py::set_error(shape, e.what());
        } catch (const Error& e) { py::set_error(base, e.what());
        }
    });

    m.def("read_activations", [](const std::filesystem::path& path) {
        return to_layers(read_activations_file(path));
    }, py::arg("path"), "Read an activation file as a list of (layer_id, float32 array (K, m, n)).");

    m.def("write_activations", [](const std::filesystem::path& path,
                                  const std::vector<std::pair<std::uint32_t, F32Array>>& layers) {
        SampleActivations s;
        for (const auto& [id, a] : layers) s.records.push_back(to_record(id, a));
        write_activations_file(s, path);
    }, py::arg("path"), py::arg("layers"), "Write (layer_id, array (K, m, n)) pairs to an activation file.");

    m.def("gram_matrix", [](std::uint32_t layer_id, const F32Array& a) {
        return from_matrix(gram_matrix(to_record(layer_id, a)));
    }, py::arg("layer_id"), py::arg("features"));
    m.def("gram_matrix", [](const F32Array& a) { return from_matrix(gram_matrix(to_record(0, a))); },
          py::arg("features"), "K x K Gram matrix of a (K, m, n) feature array.");

    m.def("accumulate", [](const F64Array& g) { return accumulate(to_matrix(g)); }, py::arg("gram"));
    m.def("normalize", [](const F64Array& raw) { return normalize(to_vector(raw)); }, py::arg("raw"));
    m.def("summarize", [](const F32Array& a) {
        const auto s = summarize(to_record(0, a));
        return py::make_tuple(s.raw, s.normalized);
    }, py::arg("features"), "(raw row sums, min-max normalized profile) of a (K, m, n) array.");

    m.def("delta", [](double lo, double hi, double g) { return delta(lo, hi, g); },
          py::arg("lower"), py::arg("upper"), py::arg("g"));
    m.def("layer_deviation", [](const F64Array& g, const F64Array& lo, const F64Array& hi) {
        return layer_deviation(to_vector(g), LayerBounds{to_vector(lo), to_vector(hi)});
    }, py::arg("profile"), py::arg("lower"), py::arg("upper"));
    m.def("wasserstein_1d", [](const F64Array& a, const F64Array& b) {
        return wasserstein_1d(to_vector(a), to_vector(b));
    }, py::arg("a"), py::arg("b"));
    m.def("compute_metrics", [](const std::vector<std::uint32_t>& labels,
                                const std::vector<std::uint32_t>& preds, std::uint32_t num_classes) {
        return metrics_dict(compute_metrics(labels, preds, num_classes));
    }, py::arg("labels"), py::arg("predictions"), py::arg("num_classes"));

    m.def("resample", [](const F64Array& samples, double rate, double target) {
        return resample(to_audio(samples, rate), target).samples;
    }, py::arg("samples"), py::arg("sample_rate"), py::arg("target_rate"));
    m.def("stft_power", [](const F64Array& samples, double rate) {
        return from_matrix(stft_power(to_audio(samples, rate)));
    }, py::arg("samples"), py::arg("sample_rate") = 16000.0, "513 x frames power spectrogram.");
    m.def("log_mel_spectrogram", [](const F64Array& samples, double rate) {
        return from_matrix(log_mel_spectrogram(to_audio(samples, rate)).values);
    }, py::arg("samples"), py::arg("sample_rate"), "128 x frames log-mel spectrogram.");

    m.def("refnet_forward", [](const F64Array& spec, std::uint64_t seed, bool band_filters,
                               std::vector<std::uint32_t> channels) {
        RefNetConfig cfg;
        cfg.seed = seed;
        cfg.band_filter_mode = band_filters;
        cfg.channels = std::move(channels);
        return to_layers(forward(to_matrix(spec), cfg));
    }, py::arg("spectrogram"), py::arg("seed") = 42, py::arg("band_filters") = false,
       py::arg("channels") = std::vector<std::uint32_t>{8, 16, 32});

    m.def("generate_synthetic", [](const std::filesystem::path& out_dir, std::uint32_t classes,
                                   std::uint32_t train, std::uint32_t validation, std::uint32_t test,
                                   std::uint64_t seed, std::uint32_t frames) {
        SynthConfig cfg{classes, train, validation, test, seed, frames};
        return generate_synthetic(cfg, out_dir).entries.size();
    }, py::arg("out_dir"), py::arg("classes") = 3, py::arg("train") = 10, py::arg("validation") = 5,
       py::arg("test") = 5, py::arg("seed") = 7, py::arg("frames") = 32,
       "Write a band-separable synthetic dataset; returns the number of samples.");

    m.def("run_experiment", [](const std::filesystem::path& config, std::optional<std::size_t> top_k) {
        auto cfg = load_experiment_config(config);
        if (top_k) cfg.top_k = top_k;
        ExperimentReport report;
        {
            py::gil_scoped_release release;
            report = run_experiment(cfg);
        }
        auto d = metrics_dict(report.evaluation.metrics);
        d["selected_layers"] = report.model.selected_layers;
        std::vector<double> scores;
        for (const auto& s : report.model.scores) scores.push_back(s.aggregate);
        d["layer_scores"] = scores;
        d["output_dir"] = cfg.output_dir;
        return d;
    }, py::arg("config"), py::arg("top_k") = py::none(), "Run an experiment config; returns metrics.");
}
