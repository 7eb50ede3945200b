"""Shared oracles and small utilities for the test suite."""

import numpy as np


def rel_err(a, b, floor=1e-4):
    """Elementwise relative error |a-b| / max(|a|, |b|, floor).

    The floor keeps finite-difference noise from blowing up the ratio when
    both values are nearly zero.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return np.abs(a - b) / denom


def central_diff(f, x, h=1e-6):
    """Central finite-difference gradient of scalar f at vector x."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    flat = g.reshape(-1)
    xf = x.reshape(-1)
    for k in range(xf.size):
        xp = x.copy().reshape(-1)
        xm = x.copy().reshape(-1)
        xp[k] += h
        xm[k] -= h
        flat[k] = (f(xp.reshape(x.shape)) - f(xm.reshape(x.shape))) / (2.0 * h)
    return g


def loop_mlp_forward(params, v):
    """Independent scalar-loop evaluation of an MLP on one vector.

    Deliberately avoids matrix products so it cannot share bugs with the
    kernel implementation.
    """
    acts = {
        "tanh": np.tanh,
        "relu": lambda z: z if z > 0 else 0.0,
        "sigmoid": lambda z: 1.0 / (1.0 + np.exp(-z)),
    }
    act = acts[params.spec.activation]
    h = [float(val) for val in v]
    n_layers = len(params.weights)
    for i, (W, b) in enumerate(zip(params.weights, params.biases)):
        nxt = []
        for r in range(W.shape[0]):
            s = float(b[r])
            for c in range(W.shape[1]):
                s += float(W[r, c]) * h[c]
            nxt.append(act(s) if i < n_layers - 1 else s)
        h = nxt
    return np.array(h)
