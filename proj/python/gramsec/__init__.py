"""Gram-matrix deviation classifier: Python bindings over the C++ core."""

from ._core import (
    ContractError,
    Error,
    FormatError,
    InvariantError,
    IoError,
    NonFiniteError,
    ShapeError,
    TruncationError,
    VersionError,
    accumulate,
    compute_metrics,
    delta,
    generate_synthetic,
    gram_matrix,
    layer_deviation,
    log_mel_spectrogram,
    normalize,
    read_activations,
    refnet_forward,
    resample,
    run_experiment,
    stft_power,
    summarize,
    wasserstein_1d,
    write_activations,
)

__all__ = [name for name in dir() if not name.startswith("_")]
