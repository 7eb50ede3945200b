"""Strain-field data handling.

Loading/saving the CSV field format, the normalization and boundary-padding
conventions, window splitting, and assembly of reconstruction-stage and
forecasting-stage sample batches.

Conventions baked in here:
  * strain values are divided by 0.2 x max|eps|, with the statistics taken
    from the training window only; the divisor is kept on the field so raw
    values stay recoverable as values * normalization_scale;
  * the pinned ends contribute two extra all-zero sensor columns;
  * trunk coordinates are the physical z divided by the top-end coordinate,
    so they live in [0, 1];
  * forecast branch rows stack look-back steps time-major, then space.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import (
    ConfigError,
    DataError,
    NonNumericError,
    RaggedRowsError,
    UnsortedGridError,
)


@dataclass(frozen=True)
class StrainField:
    """Dense strain record: rows are time steps, columns follow z_grid."""

    values: np.ndarray          # (time, space)
    z_grid: np.ndarray          # meters from riser bottom, strictly increasing
    sample_rate: float          # Hz
    case_label: str = ""
    max_velocity_U: float = 0.0
    normalization_scale: float = 1.0  # 1.0 means raw values

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        z = np.asarray(self.z_grid, dtype=np.float64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "z_grid", z)
        if values.ndim != 2:
            raise DataError(f"strain values must be 2D (time, space), got {values.shape}")
        if z.ndim != 1 or z.size != values.shape[1]:
            raise DataError(
                f"z_grid length {z.size} does not match {values.shape[1]} columns"
            )
        if z.size > 1 and not np.all(np.diff(z) > 0):
            raise UnsortedGridError("z_grid must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise DataError("strain values contain non-finite entries")
        if self.sample_rate <= 0:
            raise DataError(f"sample_rate must be positive, got {self.sample_rate}")

    @property
    def n_steps(self):
        return self.values.shape[0]

    @property
    def n_locations(self):
        return self.values.shape[1]

    @property
    def length(self):
        """Top-end coordinate, used to map z onto the normalized domain."""
        return float(self.z_grid[-1])


@dataclass(frozen=True)
class SensorLayout:
    """Observer (branch input) and training (label) sensor coordinates."""

    observer_locations: np.ndarray
    training_locations: np.ndarray

    def __post_init__(self):
        obs = np.asarray(self.observer_locations, dtype=np.float64)
        tr = np.asarray(self.training_locations, dtype=np.float64)
        object.__setattr__(self, "observer_locations", obs)
        object.__setattr__(self, "training_locations", tr)
        if obs.size < 1 or tr.size < 1:
            raise ConfigError("layout needs at least one observer and one training sensor")

    @property
    def m(self):
        return int(self.observer_locations.size)

    @property
    def p(self):
        return int(self.training_locations.size)


@dataclass(frozen=True)
class WindowSpec:
    """Half-open training and test windows in time steps, plus the
    forecasting look-back and horizon."""

    train_window: tuple
    test_window: tuple
    look_back: int = 1
    forecast_horizon: int = 0

    def __post_init__(self):
        tr = (int(self.train_window[0]), int(self.train_window[1]))
        te = (int(self.test_window[0]), int(self.test_window[1]))
        object.__setattr__(self, "train_window", tr)
        object.__setattr__(self, "test_window", te)
        for name, (a, b) in (("train", tr), ("test", te)):
            if a < 0 or b <= a:
                raise ConfigError(f"{name}_window {a, b} must satisfy 0 <= start < end")
        if tr[1] > te[0]:
            raise ConfigError(
                f"windows must be disjoint with test after train, got {tr} then {te}"
            )
        if self.look_back < 1:
            raise ConfigError("look_back must be >= 1")
        if self.forecast_horizon < 0:
            raise ConfigError("forecast_horizon must be >= 0")
        if self.look_back >= tr[1] - tr[0]:
            raise ConfigError("look_back must be smaller than the training window")


@dataclass(frozen=True)
class WindowView:
    """A half-open row range of a field; values is a numpy view, not a copy."""

    field: StrainField
    start: int
    end: int

    @property
    def values(self):
        return self.field.values[self.start:self.end]

    @property
    def n_steps(self):
        return self.end - self.start


@dataclass(frozen=True)
class SampleBatch:
    """Paired branch inputs / trunk coordinates / labels for one window."""

    branch_inputs: np.ndarray   # (N, m*lb)
    trunk_coords: np.ndarray    # (K,) normalized, or (N, K, 2) with time
    labels: np.ndarray          # (N, K)
    provenance: tuple = ()      # (case_label, (start, end), layout)

    def __post_init__(self):
        if self.branch_inputs.shape[0] != self.labels.shape[0]:
            raise DataError("branch/label row counts disagree")
        if not (np.all(np.isfinite(self.branch_inputs)) and np.all(np.isfinite(self.labels))):
            raise DataError("sample batch contains non-finite entries")

    @property
    def n_samples(self):
        return self.branch_inputs.shape[0]


# ------------------------------------------------------------------ file I/O

def save_strain_field(field, path):
    """Write the CSV format: header comment, z-grid line, one step per line."""
    with open(path, "w") as fh:
        fh.write(
            f"# case={field.case_label or 'unnamed'} "
            f"rate_hz={field.sample_rate:.17g} "
            f"U={field.max_velocity_U:.17g} "
            f"scale={field.normalization_scale:.17g}\n"
        )
        fh.write(",".join(format(z, ".17g") for z in field.z_grid) + "\n")
        np.savetxt(fh, field.values, fmt="%.17g", delimiter=",")


def _parse_float_row(line, lineno, path):
    parts = line.split(",")
    try:
        row = np.array(parts, dtype=np.float64)
    except ValueError as exc:
        raise NonNumericError(f"{path}:{lineno}: non-numeric cell ({exc})") from exc
    if not np.all(np.isfinite(row)):
        raise NonNumericError(f"{path}:{lineno}: non-finite cell")
    return row


def load_strain_field(path):
    """Read a strain-field CSV; raises distinct errors for a malformed header,
    ragged rows, non-numeric cells, and an unsorted grid."""
    try:
        with open(path) as fh:
            lines = [ln.strip() for ln in fh]
    except OSError as exc:
        raise DataError(f"cannot read strain field {path}: {exc}") from exc
    lines = [ln for ln in lines if ln]
    if len(lines) < 3:
        raise DataError(f"{path}: expected header, grid line and at least one step")

    header = lines[0]
    meta = {}
    if header.startswith("#"):
        for token in header[1:].split():
            if "=" in token:
                key, _, val = token.partition("=")
                meta[key] = val
    required = {"case", "rate_hz", "U", "scale"}
    if not required.issubset(meta):
        raise DataError(
            f"{path}: header must carry case/rate_hz/U/scale, got {sorted(meta)}"
        )
    try:
        rate = float(meta["rate_hz"])
        vel = float(meta["U"])
        scale = float(meta["scale"])
    except ValueError as exc:
        raise NonNumericError(f"{path}: non-numeric header value ({exc})") from exc

    z_grid = _parse_float_row(lines[1], 2, path)
    if z_grid.size > 1 and not np.all(np.diff(z_grid) > 0):
        raise UnsortedGridError(f"{path}: z_grid line is not strictly increasing")

    rows = []
    for i, ln in enumerate(lines[2:], start=3):
        row = _parse_float_row(ln, i, path)
        if row.size != z_grid.size:
            raise RaggedRowsError(
                f"{path}:{i}: row has {row.size} cells, expected {z_grid.size}"
            )
        rows.append(row)
    return StrainField(
        values=np.vstack(rows),
        z_grid=z_grid,
        sample_rate=rate,
        case_label=meta["case"],
        max_velocity_U=vel,
        normalization_scale=scale,
    )


# ------------------------------------------------------------- conventions

def _stat_rows(field, stat_window):
    if stat_window is None:
        return 0, field.n_steps
    if isinstance(stat_window, WindowSpec):
        start, end = stat_window.train_window
    else:
        start, end = int(stat_window[0]), int(stat_window[1])
    if not (0 <= start < end <= field.n_steps):
        raise DataError(
            f"stat window [{start}, {end}) outside field of {field.n_steps} steps"
        )
    return start, end


def normalize(field, stat_window=None):
    """Divide every value by 0.2 x max|eps|.

    The maximum is taken over `stat_window` rows (a (start, end) pair or a
    WindowSpec, whose training window is used); default is the whole record,
    but pipelines pass the training window so the test window never leaks
    into the statistics. The divisor accumulates multiplicatively on
    normalization_scale, so raw = values * normalization_scale always holds.
    """
    start, end = _stat_rows(field, stat_window)
    maxabs = float(np.abs(field.values[start:end]).max())
    if maxabs == 0.0:
        raise DataError("cannot normalize an all-zero field")
    divisor = 0.2 * maxabs
    if divisor == 1.0:
        new_values = field.values.copy()
    else:
        # equivalent to values / (0.2*maxabs), arranged so the argmax row
        # maps to exactly 5.0
        new_values = field.values / maxabs * 5.0
    return replace(
        field,
        values=new_values,
        normalization_scale=field.normalization_scale * divisor,
    )


def pad_boundaries(field, z_start=0.0, z_end=None):
    """Append the two pinned-end "imaginary sensors" as exact-zero columns.

    z_end defaults to extrapolating the mean grid spacing past the last
    sensor; synthetic pipelines pass the riser length explicitly.
    """
    z = field.z_grid
    if z_end is None:
        z_end = float(z[-1] + (z[-1] - z[0]) / max(z.size - 1, 1))
    if z_start >= z[0] or z_end <= z[-1]:
        raise DataError(
            f"endpoints [{z_start}, {z_end}] already covered by grid "
            f"[{z[0]}, {z[-1]}]; nothing to pad"
        )
    zeros = np.zeros((field.n_steps, 1))
    return replace(
        field,
        values=np.hstack([zeros, field.values, zeros]),
        z_grid=np.concatenate([[z_start], z, [z_end]]),
    )


def drop_location(field, z):
    """Remove one sensor column (the paper's faulty-sensor exclusion).

    `z` must match a grid coordinate exactly.
    """
    idx = np.nonzero(field.z_grid == z)[0]
    if idx.size != 1:
        raise DataError(f"no unique sensor at z={z} to drop")
    keep = np.ones(field.n_locations, dtype=bool)
    keep[idx[0]] = False
    return replace(field, values=field.values[:, keep], z_grid=field.z_grid[keep])


def split_windows(field, spec):
    """Non-overlapping train/test row views per the WindowSpec."""
    for name, (a, b) in (("train", spec.train_window), ("test", spec.test_window)):
        if b > field.n_steps:
            raise DataError(
                f"{name} window [{a}, {b}) exceeds field length {field.n_steps}"
            )
    train = WindowView(field, *spec.train_window)
    test = WindowView(field, *spec.test_window)
    return train, test


# ------------------------------------------------------------ batch builders

def sample_at(field, rows, locations):
    """Strain at arbitrary coordinates for a block of time rows, by linear
    interpolation on the spatial grid. rows is a (start, end) pair."""
    start, end = rows
    locs = np.asarray(locations, dtype=np.float64)
    if locs.min() < field.z_grid[0] or locs.max() > field.z_grid[-1]:
        raise DataError(
            f"locations {locs} extend outside the grid "
            f"[{field.z_grid[0]}, {field.z_grid[-1]}]"
        )
    return kernels.interp_rows(field.values[start:end], field.z_grid, locs)


def normalized_coords(field, locations):
    """Map physical z to the trunk's normalized [0, 1] domain."""
    return np.asarray(locations, dtype=np.float64) / field.length


def _check_window(field, window):
    start, end = int(window[0]), int(window[1])
    if not (0 <= start < end <= field.n_steps):
        raise DataError(
            f"window [{start}, {end}) outside field of {field.n_steps} steps"
        )
    return start, end


def build_reconstruction_batch(field, layout, window):
    """One sample per time step: branch row = observer strains at t_j,
    labels = strains at the training locations at the same step."""
    start, end = _check_window(field, window)
    branch = sample_at(field, (start, end), layout.observer_locations)
    labels = sample_at(field, (start, end), layout.training_locations)
    return SampleBatch(
        branch_inputs=np.ascontiguousarray(branch),
        trunk_coords=normalized_coords(field, layout.training_locations),
        labels=np.ascontiguousarray(labels),
        provenance=(field.case_label, (start, end), layout),
    )


def build_forecast_batch(field, layout, window, lb, horizon=0):
    """Forecast-mode batch: for each target step j the branch row stacks
    observer strains at steps j-lb .. j-1 (time-major, then space) and the
    label row holds training-location strains at step j+horizon."""
    start, end = _check_window(field, window)
    lb = int(lb)
    horizon = int(horizon)
    if lb < 1:
        raise ConfigError("look-back lb must be >= 1")
    if horizon < 0:
        raise ConfigError("forecast horizon must be >= 0")
    n = (end - start) - lb - horizon
    if n < 1:
        raise DataError(
            f"window of {end - start} steps cannot fit lb={lb} plus horizon={horizon}"
        )
    obs = sample_at(field, (start, end), layout.observer_locations)
    labels_full = sample_at(field, (start, end), layout.training_locations)

    m = layout.m
    branch = np.empty((n, m * lb))
    for k in range(lb):
        # look-back step j-lb+k for targets j = start+lb .. start+lb+n-1
        branch[:, k * m:(k + 1) * m] = obs[k:k + n]
    labels = labels_full[lb + horizon:lb + horizon + n]
    return SampleBatch(
        branch_inputs=np.ascontiguousarray(branch),
        trunk_coords=normalized_coords(field, layout.training_locations),
        labels=np.ascontiguousarray(labels),
        provenance=(field.case_label, (start, end), layout),
    )
