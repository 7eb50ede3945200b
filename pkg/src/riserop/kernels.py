"""Hot numeric kernels.

The loop-heavy kernels (RK4 modal integration, cyclic Jacobi sweeps, row
interpolation, the fused Adam update) are numba-compiled by default with a
pure-numpy fallback, selected at import time by ``RISEROP_NO_NUMBA`` (see
:mod:`riserop.accel`); ``benchmarks/bench_kernels.py`` compares the paths.
The MLP batch kernels are plain vectorized numpy on both paths: their cost
is BLAS matmuls plus ``np.tanh``, which numpy already runs at full speed,
while @njit was measured slower (numba's ``np.dot`` does not hit BLAS for
transposed weight views and its ``tanh`` is a scalar libm call).

Conventions: float64 throughout; MLP parameters are passed as tuples of
C-contiguous arrays, weight matrices shaped (out, in).
"""

import numpy as np

from .accel import NUMBA_ENABLED, maybe_njit

ACT_TANH = 0
ACT_RELU = 1
ACT_SIGMOID = 2


def _act_forward(z, act):
    if act == ACT_TANH:
        return np.tanh(z)
    elif act == ACT_RELU:
        return np.maximum(z, 0.0)
    else:
        return 1.0 / (1.0 + np.exp(-z))


def _act_grad(a, act):
    # gradient expressed through the activation value, not the pre-activation
    if act == ACT_TANH:
        return 1.0 - a * a
    elif act == ACT_RELU:
        return np.where(a > 0.0, 1.0, 0.0)
    else:
        return a * (1.0 - a)


def mlp_batch_forward(weights, biases, x, act):
    """Forward pass for a batch. x: (N, in) -> (N, out); hidden layers activated."""
    h = x
    for i in range(len(weights) - 1):
        h = _act_forward(np.dot(h, weights[i].T) + biases[i], act)
    return np.dot(h, weights[-1].T) + biases[-1]


def mlp_batch_forward_cached(weights, biases, x, act, hidden):
    """Forward pass that stores hidden activations into the preallocated
    `hidden` tuple (one (N, width) array per hidden layer) for reuse by
    mlp_batch_backward. Requires at least one hidden layer."""
    h = x
    for i in range(len(weights) - 1):
        hidden[i][:, :] = _act_forward(np.dot(h, weights[i].T) + biases[i], act)
        h = hidden[i]
    return np.dot(h, weights[-1].T) + biases[-1]


def mlp_batch_backward(weights, x, act, hidden, dout, dweights, dbiases):
    """Reverse-mode pass. Fills the preallocated dweights/dbiases tuples with
    gradients summed over the batch and returns d(loss)/d(x), shape (N, in)."""
    dz = dout
    for i in range(len(weights) - 1, 0, -1):
        dweights[i][:, :] = np.dot(dz.T, hidden[i - 1])
        dbiases[i][:] = np.sum(dz, axis=0)
        dh = np.dot(dz, weights[i])
        dz = dh * _act_grad(hidden[i - 1], act)
    dweights[0][:, :] = np.dot(dz.T, x)
    dbiases[0][:] = np.sum(dz, axis=0)
    return np.dot(dz, weights[0])


def _adam_flat_numpy(p, g, m, v, lr, b1, b2, eps, t):
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * (g * g)
    mhat = m / (1.0 - b1 ** t)
    vhat = v / (1.0 - b2 ** t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)


def _adam_flat_loop(p, g, m, v, lr, b1, b2, eps, t):
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for k in range(p.size):
        mk = b1 * m[k] + (1.0 - b1) * g[k]
        vk = b2 * v[k] + (1.0 - b2) * (g[k] * g[k])
        m[k] = mk
        v[k] = vk
        p[k] -= lr * (mk / bc1) / (np.sqrt(vk / bc2) + eps)


if NUMBA_ENABLED:
    adam_update_flat = maybe_njit(_adam_flat_loop)
else:
    adam_update_flat = _adam_flat_numpy
adam_update_flat.__doc__ = (
    "In-place bias-corrected Adam update on flat 1D views of one parameter "
    "array. t is the already-incremented step counter."
)


def _interp_rows_numpy(values, grid, targets):
    idx = np.clip(np.searchsorted(grid, targets, side="right") - 1, 0, grid.size - 2)
    g0 = grid[idx]
    w = (targets - g0) / (grid[idx + 1] - g0)
    return values[:, idx] * (1.0 - w) + values[:, idx + 1] * w


def _interp_rows_loop(values, grid, targets):
    n_rows = values.shape[0]
    out = np.empty((n_rows, targets.size))
    for k in range(targets.size):
        z = targets[k]
        i = np.searchsorted(grid, z, side="right") - 1
        if i < 0:
            i = 0
        elif i > grid.size - 2:
            i = grid.size - 2
        w = (z - grid[i]) / (grid[i + 1] - grid[i])
        for r in range(n_rows):
            out[r, k] = values[r, i] * (1.0 - w) + values[r, i + 1] * w
    return out


def _interp_rows_slopes_numpy(values, grid, targets):
    idx = np.clip(np.searchsorted(grid, targets, side="right") - 1, 0, grid.size - 2)
    g0 = grid[idx]
    dz = grid[idx + 1] - g0
    w = (targets - g0) / dz
    v0 = values[:, idx]
    v1 = values[:, idx + 1]
    return v0 * (1.0 - w) + v1 * w, (v1 - v0) / dz


def _interp_rows_slopes_loop(values, grid, targets):
    n_rows = values.shape[0]
    vals = np.empty((n_rows, targets.size))
    slopes = np.empty((n_rows, targets.size))
    for k in range(targets.size):
        z = targets[k]
        i = np.searchsorted(grid, z, side="right") - 1
        if i < 0:
            i = 0
        elif i > grid.size - 2:
            i = grid.size - 2
        dz = grid[i + 1] - grid[i]
        w = (z - grid[i]) / dz
        for r in range(n_rows):
            v0 = values[r, i]
            v1 = values[r, i + 1]
            vals[r, k] = v0 * (1.0 - w) + v1 * w
            slopes[r, k] = (v1 - v0) / dz
    return vals, slopes


if NUMBA_ENABLED:
    interp_rows = maybe_njit(_interp_rows_loop)
    interp_rows_slopes = maybe_njit(_interp_rows_slopes_loop)
else:
    interp_rows = _interp_rows_numpy
    interp_rows_slopes = _interp_rows_slopes_numpy
interp_rows.__doc__ = (
    "Linear interpolation of each row of `values` (n_rows, n_grid) at the "
    "`targets` coordinates; targets outside the grid are clamped to the end "
    "segments. Returns (n_rows, n_targets)."
)
interp_rows_slopes.__doc__ = (
    "Like interp_rows but also returns the per-row segment slope at each "
    "target (the pathwise derivative of the lookup)."
)


@maybe_njit
def jacobi_eigh(C, rel_tol):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Sweeps until the off-diagonal Frobenius norm drops below
    rel_tol * ||C||_F (or 60 sweeps). Returns (eigenvalues, V) with
    C ~= V @ diag(eigenvalues) @ V.T, unordered.
    """
    n = C.shape[0]
    A = C.copy()
    V = np.eye(n)
    fro = np.sqrt(np.sum(C * C))
    if fro == 0.0:
        return np.zeros(n), V
    thresh = rel_tol * fro
    for _sweep in range(60):
        off2 = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off2 += 2.0 * A[p, q] * A[p, q]
        if np.sqrt(off2) <= thresh:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = 1.0 / (tau - np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                rp = c * A[p, :] - s * A[q, :]
                rq = s * A[p, :] + c * A[q, :]
                A[p, :] = rp
                A[q, :] = rq
                cp = c * A[:, p] - s * A[:, q]
                cq = s * A[:, p] + c * A[:, q]
                A[:, p] = cp
                A[:, q] = cq
                vp = c * V[:, p] - s * V[:, q]
                vq = s * V[:, p] + c * V[:, q]
                V[:, p] = vp
                V[:, q] = vq
    return np.diag(A).copy(), V


@maybe_njit
def _modal_force(amp, omf, phase, t):
    n_modes = amp.shape[0]
    if amp.shape[1] == 0:
        return np.zeros(n_modes)
    return np.dot(amp, np.sin(omf * t + phase))


@maybe_njit
def rk4_modal(omega2, zeta, amp, omf, phase, q0, v0, t_start, dt, n_steps, substeps):
    """Integrate the forced damped modal oscillators q'' + zeta q' + omega^2 q = f(t).

    f_n(t) = sum_k amp[n, k] * sin(omf[k] * t + phase[k]). Classic RK4 with
    `substeps` internal steps per output sample. Returns the (n_steps, n_modes)
    trajectory sampled at t_j = t_start + j * dt (row 0 is the initial state)
    plus the final (q, v) state.
    """
    n_modes = omega2.size
    out = np.empty((n_steps, n_modes))
    q = q0.copy()
    v = v0.copy()
    h = dt / substeps
    for j in range(n_steps):
        out[j, :] = q
        base = j * substeps
        for s in range(substeps):
            t0 = t_start + (base + s) * h
            f0 = _modal_force(amp, omf, phase, t0)
            fh = _modal_force(amp, omf, phase, t0 + 0.5 * h)
            f1 = _modal_force(amp, omf, phase, t0 + h)
            k1q = v
            k1v = f0 - zeta * v - omega2 * q
            q2 = q + 0.5 * h * k1q
            v2 = v + 0.5 * h * k1v
            k2q = v2
            k2v = fh - zeta * v2 - omega2 * q2
            q3 = q + 0.5 * h * k2q
            v3 = v + 0.5 * h * k2v
            k3q = v3
            k3v = fh - zeta * v3 - omega2 * q3
            q4 = q + h * k3q
            v4 = v + h * k3v
            k4q = v4
            k4v = f1 - zeta * v4 - omega2 * q4
            q = q + (h / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
            v = v + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    return out, q, v
