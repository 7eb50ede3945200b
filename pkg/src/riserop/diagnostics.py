"""Run metrics, spectra, and report emission.

All numeric file output is printed with 17 significant digits and contains no
timestamps, so re-running a command with the same inputs reproduces every
file byte for byte.
"""

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

FLOAT_FMT = "%.17g"


def _check_pair(prediction, truth):
    p = np.asarray(prediction, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape:
        raise DataError(f"prediction shape {p.shape} != truth shape {t.shape}")
    if p.size == 0:
        raise DataError("empty arrays have no error metrics")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(t))):
        raise DataError("metrics require finite inputs")
    return p, t


def mse(prediction, truth):
    p, t = _check_pair(prediction, truth)
    d = p - t
    return float(np.mean(d * d))


def nmse(prediction, truth):
    """MSE normalized by the (population) variance of the truth."""
    p, t = _check_pair(prediction, truth)
    centred = t - t.mean()
    var = float(np.mean(centred * centred))
    if var == 0.0:
        raise DataError("truth has zero variance; NMSE undefined")
    d = p - t
    return float(np.mean(d * d)) / var


def rms_profile(values):
    """Per-location RMS over time of a (steps, locations) array."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] < 1:
        raise DataError(f"rms_profile expects a 2-D (steps, locations) array, got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise DataError("rms_profile requires finite inputs")
    return np.sqrt(np.mean(v * v, axis=0))


@dataclass(frozen=True)
class SpectrumResult:
    frequencies: np.ndarray        # Hz, one-sided, starts at 0
    magnitudes: np.ndarray         # unnormalized |rfft|
    dominant_frequency: float      # Hz, zero-frequency bin excluded


def spectrum(signal, sample_rate, hann=False):
    """One-sided amplitude spectrum. With hann=True the signal is tapered by
    a Hann window first (reduces leakage at the cost of amplitude bias)."""
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1 or x.size < 4:
        raise DataError(f"spectrum needs a 1-D signal of at least 4 samples, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DataError("spectrum requires a finite signal")
    if sample_rate <= 0:
        raise DataError("sample_rate must be positive")
    if hann:
        x = x * np.hanning(x.size)
    mags = np.abs(np.fft.rfft(x))
    freqs = np.fft.rfftfreq(x.size, d=1.0 / float(sample_rate))
    dominant = float(freqs[1 + int(np.argmax(mags[1:]))])
    return SpectrumResult(frequencies=freqs, magnitudes=mags, dominant_frequency=dominant)


# ----------------------------------------------------------------- reports


@dataclass(frozen=True)
class Trace:
    """One location's truth/prediction time series; rows before train_end
    belong to the training window, the rest to the test window."""

    label: str
    time_s: np.ndarray
    truth: np.ndarray
    prediction: np.ndarray
    train_end: int = 0

    def __post_init__(self):
        n = self.time_s.shape[0]
        if self.truth.shape != (n,) or self.prediction.shape != (n,):
            raise DataError(f"trace {self.label!r} arrays must share one length")
        if not (0 <= self.train_end <= n):
            raise DataError(f"trace {self.label!r} train_end out of range")


@dataclass(frozen=True)
class RunArtifacts:
    """Everything a command wants written to disk."""

    sample_rate: float
    traces: tuple = ()
    rms: tuple = ()                 # (locations, truth_rms, prediction_rms)
    placement_trajectory: tuple = ()  # (header_names, rows array)
    metrics: dict = field(default_factory=dict)  # window label -> {metric: value}


def _safe(label):
    return re.sub(r"[^A-Za-z0-9_.-]+", "-", str(label)).strip("-") or "trace"


def write_csv(path, header, columns, text_column=None):
    """Write equal-length columns as CSV with 17-significant-digit floats
    (plus an optional trailing text column)."""
    cols = [np.asarray(c, dtype=np.float64) for c in columns]
    lines = [",".join(header)]
    for i in range(cols[0].shape[0]):
        cells = [FLOAT_FMT % c[i] for c in cols]
        if text_column is not None:
            cells.append(text_column[i])
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")


def emit_report(artifacts, out_dir):
    """Write the diagnostic file set; returns the paths written (sorted).

    Per trace: trace_<label>.csv (time, truth, prediction, segment) and
    spectrum_<label>.csv (one-sided spectra of both series). Plus rms.csv,
    placement_traj.csv, and summary.txt when the matching artifact is
    present; an empty artifact set still writes a header-only summary.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    summary = ["# riserop run summary"]
    for window in sorted(artifacts.metrics):
        pairs = " ".join(
            f"{k}={FLOAT_FMT % v}" for k, v in sorted(artifacts.metrics[window].items())
        )
        summary.append(f"metrics {window}: {pairs}")

    for trace in artifacts.traces:
        label = _safe(trace.label)
        tpath = out / f"trace_{label}.csv"
        segments = ["train" if i < trace.train_end else "test"
                    for i in range(trace.time_s.shape[0])]
        write_csv(tpath, ["time_s", "truth", "prediction", "segment"],
                   [trace.time_s, trace.truth, trace.prediction], segments)
        written.append(tpath)

        spath = out / f"spectrum_{label}.csv"
        st = spectrum(trace.truth, artifacts.sample_rate)
        sp = spectrum(trace.prediction, artifacts.sample_rate)
        write_csv(spath, ["frequency_hz", "truth_magnitude", "prediction_magnitude"],
                   [st.frequencies, st.magnitudes, sp.magnitudes])
        written.append(spath)
        summary.append(
            f"trace {label}: dominant_truth_hz={FLOAT_FMT % st.dominant_frequency} "
            f"dominant_prediction_hz={FLOAT_FMT % sp.dominant_frequency}"
        )

    if len(artifacts.rms) == 3:
        rpath = out / "rms.csv"
        write_csv(rpath, ["location", "truth_rms", "prediction_rms"], list(artifacts.rms))
        written.append(rpath)

    if len(artifacts.placement_trajectory) == 2:
        names, rows = artifacts.placement_trajectory
        ppath = out / "placement_traj.csv"
        rows = np.asarray(rows, dtype=np.float64).reshape(-1, len(names))
        write_csv(ppath, list(names), [rows[:, j] for j in range(rows.shape[1])])
        written.append(ppath)

    spath = out / "summary.txt"
    spath.write_text("\n".join(summary) + "\n")
    written.append(spath)
    return sorted(written)
