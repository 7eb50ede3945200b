"""Learnable observer placement via reparameterized Gaussian sampling.

Each observer's normalized coordinate is drawn as z = clip(mu + sigma * eta,
0, 1) with eta ~ N(0, 1). Predictions are averaged over r realizations and
the MSE of that expectation is differentiated pathwise: the chain runs loss
-> branch-input gradient -> linear-interpolation slope -> (d z / d mu = 1,
d z / d sigma = eta), with clipped draws contributing zero. Training
alternates blocks of network (theta) updates at the current means with
blocks of (mu, sigma) (lambda) updates, each phase leaving the other's
parameters untouched.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels, nn
from .deeponet import _StepBuffers, _loss_and_grads_into
from .errors import ConfigError, DataError, DivergenceError

TRAJECTORY_STRIDE = 100


@dataclass(frozen=True)
class LocationDistribution:
    """Per-observer Gaussian location parameters on the normalized span."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        sigma = np.asarray(self.sigma, dtype=np.float64)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        if mu.ndim != 1 or mu.shape != sigma.shape:
            raise ConfigError(
                f"mu and sigma must be matching vectors, got {mu.shape} vs {sigma.shape}"
            )
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            raise ConfigError("mu and sigma must be finite")
        if mu.min() < 0.0 or mu.max() > 1.0:
            raise ConfigError("mu must lie in the normalized span [0, 1]")
        if sigma.min() < 0.0:
            raise ConfigError("sigma must be non-negative")

    @property
    def m(self):
        return self.mu.shape[0]


def init_distribution(m, seed, sigma0=0.05):
    """Uniform-random means over the span, common initial spread sigma0."""
    if int(m) < 1:
        raise ConfigError("need at least one observer")
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x706c)))
    return LocationDistribution(
        mu=rng.uniform(0.0, 1.0, size=int(m)),
        sigma=np.full(int(m), float(sigma0)),
    )


@dataclass(frozen=True)
class AlternationSchedule:
    """Block-alternating optimization: theta_steps network updates, then
    lambda_steps location updates, cycling until total_iterations."""

    theta_steps: int = 60
    lambda_steps: int = 40
    total_iterations: int = 20000
    realizations: int = 8
    theta_lr: float = 1e-3
    lambda_lr: float = 2e-3

    def __post_init__(self):
        if self.theta_steps < 0 or self.lambda_steps < 0:
            raise ConfigError("phase lengths must be non-negative")
        if self.theta_steps + self.lambda_steps < 1:
            raise ConfigError("at least one phase must have steps")
        if self.total_iterations < 1:
            raise ConfigError("total_iterations must be >= 1")
        if self.realizations < 1:
            raise ConfigError("need at least one realization")
        if self.theta_lr <= 0 or self.lambda_lr <= 0:
            raise ConfigError("learning rates must be positive")


@dataclass(frozen=True)
class PlacementDataset:
    """Reconstruction-style batch whose branch inputs are *not* fixed: the
    raw strain rows are kept so observers can be re-sampled anywhere."""

    rows: np.ndarray          # (n_samples, n_grid) strain snapshots
    zstar_grid: np.ndarray    # (n_grid,) normalized grid coordinates
    labels: np.ndarray        # (n_samples, p) strains at training locations
    trunk_coords: np.ndarray  # (p,) normalized training locations

    def __post_init__(self):
        n, s = self.rows.shape
        if self.zstar_grid.shape != (s,):
            raise DataError("grid length must match the row width")
        if self.labels.shape[0] != n or self.labels.ndim != 2:
            raise DataError("labels must pair with the rows")
        if self.trunk_coords.shape != (self.labels.shape[1],):
            raise DataError("trunk coordinates must match the label width")
        for a in (self.rows, self.zstar_grid, self.labels, self.trunk_coords):
            if not np.all(np.isfinite(a)):
                raise DataError("placement dataset contains non-finite values")

    @property
    def n_samples(self):
        return self.rows.shape[0]


def make_placement_dataset(field, training_locations, window):
    """Slice a window of the field into a PlacementDataset (one-step
    reconstruction: each row both feeds the observers and is predicted)."""
    start, end = int(window[0]), int(window[1])
    if not (0 <= start < end <= field.n_steps):
        raise DataError(f"window [{start}, {end}) outside field of {field.n_steps} steps")
    locs = np.asarray(training_locations, dtype=np.float64)
    if locs.min() < field.z_grid[0] or locs.max() > field.z_grid[-1]:
        raise DataError("training locations extend outside the grid")
    rows = np.ascontiguousarray(field.values[start:end])
    labels = kernels.interp_rows(rows, field.z_grid, locs)
    return PlacementDataset(
        rows=rows,
        zstar_grid=field.z_grid / field.length,
        labels=np.ascontiguousarray(labels),
        trunk_coords=locs / field.length,
    )


def sample_locations(dist, r, seed):
    """Draw r location realizations; returns (locations, noise) with
    locations = clip(mu + sigma * noise, 0, 1), each (r, m)."""
    if int(r) < 1:
        raise ConfigError("need at least one realization")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((int(r), dist.m))
    locations = np.clip(dist.mu + dist.sigma * noise, 0.0, 1.0)
    return locations, noise


def _check_model(model, dist, data):
    if model.meta.trunk_with_time:
        raise ConfigError("placement optimization runs on spatial-trunk models")
    if model.branch.spec.layer_widths[0] != dist.m:
        raise ValueError(
            f"model branch expects {model.branch.spec.layer_widths[0]} observers, "
            f"distribution has {dist.m}"
        )
    if model.trunk.spec.layer_widths[0] != 1:
        raise ValueError("placement trunk must take a single coordinate")
    if data.labels.shape[1] != data.trunk_coords.shape[0]:
        raise DataError("dataset labels and trunk coordinates disagree")


def _stacked_branch_inputs(data, locations):
    """Interpolated observer strains and slopes for every realization,
    stacked realization-major: (r * n, m)."""
    r = locations.shape[0]
    n = data.n_samples
    m = locations.shape[1]
    u = np.empty((r * n, m))
    du = np.empty((r * n, m))
    for j in range(r):
        vals, slopes = kernels.interp_rows_slopes(data.rows, data.zstar_grid,
                                                  np.ascontiguousarray(locations[j]))
        u[j * n:(j + 1) * n] = vals
        du[j * n:(j + 1) * n] = slopes
    return u, du


def expected_forward(model, dist, data, r, seed):
    """Mean prediction over r sampled observer layouts; (n_samples, p)."""
    _check_model(model, dist, data)
    locations, _ = sample_locations(dist, r, seed)
    u, _ = _stacked_branch_inputs(data, locations)
    b = nn.mlp_forward_batch(model.branch, u)
    t = nn.mlp_forward_batch(model.trunk, data.trunk_coords[:, None])
    n = data.n_samples
    pred = (b @ t.T).reshape(int(r), n, -1).mean(axis=0) + model.bias_b0
    return pred


def placement_loss(model, dist, data, r, seed):
    """MSE of the expected prediction under frozen noise (same seed, same
    draws) — the objective whose pathwise gradient placement_grad returns."""
    pred = expected_forward(model, dist, data, r, seed)
    diff = pred - data.labels
    return float(np.mean(diff * diff))


def placement_grad(model, dist, data, r, seed):
    """Pathwise gradient of placement_loss w.r.t. (mu, sigma).

    Returns (loss, dmu, dsigma). Realizations clipped to the span boundary
    contribute zero gradient (the clip is flat there).
    """
    _check_model(model, dist, data)
    r = int(r)
    locations, noise = sample_locations(dist, r, seed)
    raw = dist.mu + dist.sigma * noise
    interior = (raw >= 0.0) & (raw <= 1.0)

    u, slopes = _stacked_branch_inputs(data, locations)
    n = data.n_samples
    p = data.labels.shape[1]

    branch_hidden = nn.alloc_hidden(model.branch.spec, r * n)
    b = nn.mlp_forward_cached(model.branch, u, branch_hidden)
    t = nn.mlp_forward_batch(model.trunk, data.trunk_coords[:, None])
    pred = (b @ t.T).reshape(r, n, p).mean(axis=0) + model.bias_b0

    diff = pred - data.labels
    loss = float(np.mean(diff * diff))
    dpred = (2.0 / diff.size) * diff
    # every realization sees the same upstream (1/r of the expectation grad)
    db_row = (dpred @ t) / r
    dout = np.ascontiguousarray(np.tile(db_row, (r, 1)))
    dws, dbs = nn.alloc_grads(model.branch.spec)
    du = nn.mlp_backward_batch(model.branch, u, branch_hidden, dout, dws, dbs)

    per_draw = (du * slopes).reshape(r, n, dist.m).sum(axis=1)
    per_draw = np.where(interior, per_draw, 0.0)
    dmu = per_draw.sum(axis=0)
    dsigma = (per_draw * noise).sum(axis=0)
    return loss, dmu, dsigma


def optimize_placement(model, dist, data, schedule, seed, callback=None):
    """Alternating theta/lambda optimization of network and locations.

    theta phases run Adam on the network with branch inputs frozen at the
    current means; lambda phases run Adam on (mu, sigma) through the
    sampled-expectation loss with fresh noise each iteration (seeded by
    (seed, iteration), so runs are reproducible). mu is projected back into
    [0, 1] and sigma floored at zero after every lambda step. The trajectory
    records (iteration, mu..., sigma...) every 100 iterations.

    callback(iteration, phase, model, mu, sigma, loss), when given, is
    invoked after every iteration (a monitoring hook; mutating from it is
    unsupported).

    Returns (trained model, final distribution, trajectory array).
    """
    _check_model(model, dist, data)
    if schedule.theta_steps == 0:
        raise ConfigError("placement needs theta phases to fit the network")

    model = model.copy()
    mu = dist.mu.copy()
    sigma = dist.sigma.copy()
    b0 = np.array([model.bias_b0])
    theta_arrays = model.branch.flat_arrays() + model.trunk.flat_arrays() + [b0]
    theta_state = nn.init_adam(theta_arrays, lr=schedule.theta_lr)
    lambda_state = nn.init_adam([mu, sigma], lr=schedule.lambda_lr)

    tin = np.ascontiguousarray(data.trunk_coords[:, None])
    bufs = _StepBuffers(model, data.n_samples, data.trunk_coords.shape[0])

    trajectory = []
    first_loss = None
    it = 0
    theta_inputs = None
    while it < schedule.total_iterations:
        for phase, steps in (("theta", schedule.theta_steps),
                             ("lambda", schedule.lambda_steps)):
            if phase == "theta":
                theta_inputs = np.ascontiguousarray(
                    kernels.interp_rows(data.rows, data.zstar_grid, mu)
                )
            for _ in range(steps):
                if it >= schedule.total_iterations:
                    break
                if phase == "theta":
                    loss = _loss_and_grads_into(
                        model, theta_inputs, tin, data.labels, b0[0], bufs
                    )
                    nn.adam_update_arrays(theta_arrays, bufs.grads(), theta_state)
                    model.bias_b0 = float(b0[0])
                else:
                    current = LocationDistribution(mu=mu.copy(), sigma=sigma.copy())
                    loss, dmu, dsigma = placement_grad(
                        model, current, data, schedule.realizations, (int(seed), it)
                    )
                    nn.adam_update_arrays([mu, sigma], [dmu, dsigma], lambda_state)
                    np.clip(mu, 0.0, 1.0, out=mu)
                    np.maximum(sigma, 0.0, out=sigma)
                if not math.isfinite(loss):
                    raise DivergenceError(f"placement loss went non-finite at iteration {it}")
                if first_loss is None:
                    first_loss = loss if loss > 0 else 1.0
                elif loss > 1e6 * first_loss:
                    raise DivergenceError(
                        f"placement loss exploded at iteration {it}: {loss:g}"
                    )
                if callback is not None:
                    callback(it, phase, model, mu.copy(), sigma.copy(), loss)
                it += 1
                if it % TRAJECTORY_STRIDE == 0:
                    trajectory.append([float(it), *mu.tolist(), *sigma.tolist()])

    model.bias_b0 = float(b0[0])
    final = LocationDistribution(mu=mu.copy(), sigma=sigma.copy())
    traj = np.array(trajectory, dtype=np.float64).reshape(len(trajectory), 1 + 2 * dist.m)
    return model, final, traj


def trajectory_header(m):
    """Column names matching optimize_placement's trajectory rows."""
    return (["iteration"]
            + [f"mu_{i + 1}" for i in range(m)]
            + [f"sigma_{i + 1}" for i in range(m)])
