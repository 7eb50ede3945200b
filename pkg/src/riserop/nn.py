"""Feed-forward network core.

Plain MLPs with tanh/relu/sigmoid hidden activations and a linear output
layer: Glorot-uniform initialization, forward evaluation, exact reverse-mode
gradients with respect to parameters *and* inputs, and a bias-corrected Adam
update. The heavy lifting is delegated to :mod:`riserop.kernels`.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, DataError, DivergenceError

ACTIVATIONS = {
    "tanh": kernels.ACT_TANH,
    "relu": kernels.ACT_RELU,
    "sigmoid": kernels.ACT_SIGMOID,
}


@dataclass(frozen=True)
class MLPSpec:
    """Network shape: layer widths (input first, output last) and the hidden
    activation name. The output layer is always affine."""

    layer_widths: tuple
    activation: str = "tanh"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise ConfigError("layer_widths needs at least an input and an output width")
        if any(w < 1 for w in widths):
            raise ConfigError(f"layer widths must all be >= 1, got {widths}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(
                f"unknown activation {self.activation!r}; choose from {sorted(ACTIVATIONS)}"
            )

    @property
    def n_layers(self):
        return len(self.layer_widths) - 1

    @property
    def act_code(self):
        return ACTIVATIONS[self.activation]


@dataclass
class MLPParams:
    """Per-layer weights (out, in) and biases (out,), all float64."""

    spec: MLPSpec
    weights: list
    biases: list

    def copy(self):
        return MLPParams(
            self.spec,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    def flat_arrays(self):
        """Parameter arrays in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def n_params(self):
        return sum(a.size for a in self.flat_arrays())


def zeros_like_params(params):
    return MLPParams(
        params.spec,
        [np.zeros_like(w) for w in params.weights],
        [np.zeros_like(b) for b in params.biases],
    )


def mlp_init(spec, seed):
    """Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases.

    Each layer draws from its own spawned child of SeedSequence(seed), so the
    layout of one layer's draw does not shift the others. `seed` may be an
    integer or an existing SeedSequence.
    """
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    children = seed.spawn(spec.n_layers)
    weights = []
    biases = []
    for i, child in enumerate(children):
        fan_in = spec.layer_widths[i]
        fan_out = spec.layer_widths[i + 1]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        rng = np.random.default_rng(child)
        weights.append(np.ascontiguousarray(rng.uniform(-bound, bound, size=(fan_out, fan_in))))
        biases.append(np.zeros(fan_out))
    return MLPParams(spec, weights, biases)


def _check_input_width(params, x):
    if x.shape[-1] != params.spec.layer_widths[0]:
        raise ValueError(
            f"input width {x.shape[-1]} does not match spec input width "
            f"{params.spec.layer_widths[0]}"
        )


def mlp_forward(params, x):
    """Evaluate the network on a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    _check_input_width(params, x)
    out = kernels.mlp_batch_forward(
        tuple(params.weights), tuple(params.biases), np.ascontiguousarray(x[None, :]),
        params.spec.act_code,
    )
    return out[0]


def mlp_forward_batch(params, x):
    """Evaluate the network on a batch, shape (N, in) -> (N, out)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    _check_input_width(params, x)
    return kernels.mlp_batch_forward(
        tuple(params.weights), tuple(params.biases), x, params.spec.act_code
    )


def alloc_hidden(spec, n_rows):
    """Preallocate the hidden-activation cache tuple for an n_rows batch."""
    return tuple(np.empty((n_rows, w)) for w in spec.layer_widths[1:-1])


def alloc_grads(spec):
    """Preallocate (dweights, dbiases) tuples shaped like the parameters."""
    widths = spec.layer_widths
    dws = tuple(np.empty((widths[i + 1], widths[i])) for i in range(len(widths) - 1))
    dbs = tuple(np.empty(widths[i + 1]) for i in range(len(widths) - 1))
    return dws, dbs


def mlp_forward_cached(params, x, hidden):
    """Batch forward that fills the `hidden` cache (from alloc_hidden)."""
    if len(params.weights) == 1:
        return x @ params.weights[0].T + params.biases[0]
    return kernels.mlp_batch_forward_cached(
        tuple(params.weights), tuple(params.biases), x, params.spec.act_code, hidden
    )


def mlp_backward_batch(params, x, hidden, dout, dweights, dbiases):
    """Batch reverse-mode pass into preallocated grad buffers; returns dx."""
    if len(params.weights) == 1:
        dweights[0][:, :] = dout.T @ x
        dbiases[0][:] = dout.sum(axis=0)
        return dout @ params.weights[0]
    return kernels.mlp_batch_backward(
        tuple(params.weights), x, params.spec.act_code, hidden, dout, dweights, dbiases
    )


def mlp_backward(params, x, upstream_grad):
    """Gradients of the scalar <upstream_grad, mlp(x)> for one input vector.

    Returns (param_grads, input_grad) where param_grads is an MLPParams with
    the same shapes as `params`.
    """
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float64)[None, :])
    _check_input_width(params, x)
    upstream = np.asarray(upstream_grad, dtype=np.float64)
    if upstream.shape != (params.spec.layer_widths[-1],):
        raise ValueError(
            f"upstream_grad shape {upstream.shape} does not match output width "
            f"{params.spec.layer_widths[-1]}"
        )
    if not np.all(np.isfinite(upstream)):
        raise DataError("upstream_grad contains non-finite values")
    hidden = alloc_hidden(params.spec, 1)
    mlp_forward_cached(params, x, hidden)
    dws, dbs = alloc_grads(params.spec)
    dx = mlp_backward_batch(params, x, hidden, np.ascontiguousarray(upstream[None, :]), dws, dbs)
    grads = MLPParams(params.spec, [w.copy() for w in dws], [b.copy() for b in dbs])
    return grads, dx[0]


@dataclass
class AdamState:
    """Adam accumulators and hyperparameters; shapes mirror the parameters."""

    m: list
    v: list
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def copy(self):
        return AdamState(
            [a.copy() for a in self.m],
            [a.copy() for a in self.v],
            self.t,
            self.lr,
            self.beta1,
            self.beta2,
            self.eps,
        )


def init_adam(arrays, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """Fresh AdamState for a list of parameter arrays (or an MLPParams)."""
    if isinstance(arrays, MLPParams):
        arrays = arrays.flat_arrays()
    return AdamState(
        [np.zeros_like(a) for a in arrays],
        [np.zeros_like(a) for a in arrays],
        0,
        lr,
        beta1,
        beta2,
        eps,
    )


def adam_update_arrays(arrays, grads, state):
    """In-place Adam step over a flat list of parameter arrays.

    Mutates `arrays` and the accumulators in `state`; increments state.t.
    This is the hot-loop primitive — adam_step is the pure wrapper.
    """
    state.t += 1
    for a, g, m, v in zip(arrays, grads, state.m, state.v):
        kernels.adam_update_flat(
            a.reshape(-1), np.ascontiguousarray(g).reshape(-1), m.reshape(-1),
            v.reshape(-1), state.lr, state.beta1, state.beta2, state.eps, state.t,
        )


def adam_step(params, grads, state):
    """One bias-corrected Adam update; returns (new_params, new_state).

    `params` and `grads` are MLPParams (grads as produced by mlp_backward);
    the inputs are left untouched.
    """
    for g in grads.flat_arrays():
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient passed to adam_step")
    new_params = params.copy()
    new_state = state.copy()
    adam_update_arrays(new_params.flat_arrays(), grads.flat_arrays(), new_state)
    return new_params, new_state
