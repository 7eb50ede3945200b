"""Proper orthogonal decomposition and extrema-based sensor placement.

Snapshots of the strain field are stacked into a time x space matrix E; the
spatial covariance C = E^T E / rows is eigendecomposed (hand-rolled cyclic
Jacobi — numpy's solver is kept for test oracles only) into energy-ranked
orthonormal modes. Candidate observer sites are the interior extrema of the
leading modes, combined by one of three deterministic strategies.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .dataflow import WindowSpec
from .errors import ConfigError, DataError

JACOBI_REL_TOL = 1e-14

PLACEMENT_STRATEGIES = ("two-one", "per-mode", "mixed")


@dataclass(frozen=True)
class SnapshotMatrix:
    """Snapshot stack: rows are (possibly strided) time samples, columns are
    the selected spatial locations."""

    e: np.ndarray
    locations: np.ndarray
    mean_removed: bool = False

    def __post_init__(self):
        if self.e.ndim != 2 or self.e.shape[0] < 2 or self.e.shape[1] < 2:
            raise DataError(f"snapshot matrix must be at least 2x2, got {self.e.shape}")
        if not np.all(np.isfinite(self.e)):
            raise DataError("snapshot matrix contains non-finite entries")
        if self.locations.shape != (self.e.shape[1],):
            raise DataError("snapshot locations must match the column count")

    @property
    def n_rows(self):
        return self.e.shape[0]


@dataclass(frozen=True)
class PODResult:
    """Energy-ranked decomposition: eigenvalues descending, modes as
    unit-norm columns, contributions in percent."""

    eigenvalues: np.ndarray     # (k,) descending
    modes: np.ndarray           # (space, k), column k is phi_k
    contributions: np.ndarray   # (k,) percentages summing to 100
    locations: np.ndarray       # coordinates of the spatial axis


def build_snapshot_matrix(field, window, locations, stride=1, remove_mean=False):
    """Sample the field at `locations` over a (start, end) window (or a
    WindowSpec's training window), keeping every stride-th row."""
    if isinstance(window, WindowSpec):
        window = window.train_window
    start, end = int(window[0]), int(window[1])
    if not (0 <= start < end <= field.n_steps):
        raise DataError(f"window [{start}, {end}) outside field of {field.n_steps} steps")
    if int(stride) < 1:
        raise ConfigError("stride must be >= 1")
    locs = np.asarray(locations, dtype=np.float64)
    if locs.min() < field.z_grid[0] or locs.max() > field.z_grid[-1]:
        raise DataError("snapshot locations extend outside the grid")
    rows = kernels.interp_rows(field.values[start:end:int(stride)], field.z_grid, locs)
    mean_removed = bool(remove_mean)
    if mean_removed:
        rows = rows - rows.mean(axis=0)
    return SnapshotMatrix(e=np.ascontiguousarray(rows), locations=locs,
                          mean_removed=mean_removed)


def pod_decompose(snapshot):
    """Eigendecompose C = E^T E / rows; returns modes sorted by descending
    eigenvalue, sign-fixed so each mode's largest-magnitude entry is positive."""
    e = snapshot.e
    c = e.T @ e / e.shape[0]
    lam, vec = kernels.jacobi_eigh(c, JACOBI_REL_TOL)
    order = np.argsort(lam)[::-1]
    lam = lam[order]
    vec = vec[:, order]
    for k in range(vec.shape[1]):
        j = np.abs(vec[:, k]).argmax()
        if vec[j, k] < 0:
            vec[:, k] = -vec[:, k]
    total = lam.sum()
    if total <= 0:
        raise DataError("snapshot matrix carries no energy; cannot rank modes")
    return PODResult(
        eigenvalues=lam,
        modes=vec,
        contributions=lam / total * 100.0,
        locations=snapshot.locations.copy(),
    )


def mode_extrema(mode, z_grid):
    """Strict interior local extrema of a mode vector.

    Returns a list of (index, value, kind) with kind "max" or "min", sorted
    by |value| descending (ties: smaller index first). Plateau points (an
    equal neighbor) are excluded.
    """
    phi = np.asarray(mode, dtype=np.float64)
    z = np.asarray(z_grid, dtype=np.float64)
    if phi.ndim != 1 or phi.size != z.size:
        raise DataError("mode and grid lengths differ")
    if phi.size < 3:
        raise DataError("need at least 3 points to define interior extrema")
    out = []
    for i in range(1, phi.size - 1):
        if phi[i - 1] < phi[i] > phi[i + 1]:
            out.append((i, float(phi[i]), "max"))
        elif phi[i - 1] > phi[i] < phi[i + 1]:
            out.append((i, float(phi[i]), "min"))
    out.sort(key=lambda t: (-abs(t[1]), t[0]))
    return out


def _strategy_mode_pattern(strategy):
    # which mode (0-based) supplies each successive pick; cycles if m exceeds
    # the pattern length
    if strategy == "two-one":
        return (0, 0, 1)
    if strategy == "mixed":
        return (1, 0)
    raise ConfigError(
        f"unknown placement strategy {strategy!r}; choose from {PLACEMENT_STRATEGIES}"
    )


def pod_placement(result, m, strategy):
    """Pick m sensor sites (column indices, ascending) from mode extrema.

    Strategies: "two-one" takes the two strongest extrema of mode 1 plus the
    strongest of mode 2 (cycling 2:1 beyond m=3); "per-mode" takes the top
    extremum of each of the first m modes; "mixed" alternates between modes
    2 and 1. Within a mode, extrema are consumed in |value| order; a site
    already taken is skipped in favor of the mode's next extremum.
    """
    m = int(m)
    if m < 1:
        raise ConfigError("m must be >= 1")
    n_modes = result.modes.shape[1]
    if strategy == "per-mode":
        mode_seq = tuple(range(m))
    else:
        pattern = _strategy_mode_pattern(strategy)
        mode_seq = tuple(pattern[i % len(pattern)] for i in range(m))
    if max(mode_seq) >= n_modes:
        raise DataError(
            f"strategy {strategy!r} with m={m} needs mode {max(mode_seq) + 1} "
            f"but only {n_modes} are available"
        )

    extrema = {}
    cursor = {}
    chosen = []
    for mode_idx in mode_seq:
        if mode_idx not in extrema:
            extrema[mode_idx] = mode_extrema(result.modes[:, mode_idx], result.locations)
            cursor[mode_idx] = 0
        ranked = extrema[mode_idx]
        while cursor[mode_idx] < len(ranked) and ranked[cursor[mode_idx]][0] in chosen:
            cursor[mode_idx] += 1
        if cursor[mode_idx] >= len(ranked):
            raise DataError(
                f"mode {mode_idx + 1} ran out of extrema for strategy {strategy!r}"
            )
        chosen.append(ranked[cursor[mode_idx]][0])
        cursor[mode_idx] += 1
    return np.array(sorted(chosen), dtype=int)
