"""Branch/trunk operator network.

The model predicts strain at an arbitrary normalized coordinate z* in [0, 1]
from an observer-strain vector u:

    G(u)(z*) = sum_{k=1..P} B_k(u) * T_k(z*) + B0

where B and T are plain MLPs (the branch and trunk nets) with a shared latent
width P and B0 is a global scalar bias. By default the trunk sees only z*;
a model can instead be built with a (t, z*) trunk for comparison, in which
case trunk inputs carry a normalized time column first.

Training is full-batch Adam on the MSE loss (mini-batching is a config
option), with a divergence guard and a sampled loss history.
"""

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .errors import CheckpointError, DataError, DivergenceError

CHECKPOINT_FORMAT = "riserop-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class ModelMeta:
    """Bookkeeping carried with a model so predictions can be mapped back to
    physical units and the right input layout."""

    case: str = ""
    scale: float = 1.0
    lb: int = 1
    m: int = 3
    trunk_with_time: bool = False


@dataclass
class DeepONetModel:
    branch: nn.MLPParams
    trunk: nn.MLPParams
    bias_b0: float
    latent_p: int
    meta: ModelMeta

    def validate(self):
        bw = self.branch.spec.layer_widths
        tw = self.trunk.spec.layer_widths
        if bw[-1] != self.latent_p or tw[-1] != self.latent_p:
            raise DataError(
                f"branch/trunk output widths {bw[-1]}/{tw[-1]} must equal latent_p={self.latent_p}"
            )
        if bw[0] != self.meta.m * self.meta.lb:
            raise DataError(
                f"branch input width {bw[0]} does not match m*lb = "
                f"{self.meta.m}*{self.meta.lb}"
            )
        expected_trunk_in = 2 if self.meta.trunk_with_time else 1
        if tw[0] != expected_trunk_in:
            raise DataError(f"trunk input width {tw[0]}, expected {expected_trunk_in}")
        if not self.meta.scale > 0:
            raise DataError(f"normalization scale must be positive, got {self.meta.scale}")

    def copy(self):
        return DeepONetModel(
            self.branch.copy(), self.trunk.copy(), float(self.bias_b0),
            self.latent_p, replace(self.meta),
        )


@dataclass
class LossHistory:
    """Training-loss samples: parallel lists of iteration index and train MSE,
    plus optional test MSE tracked at the same points."""

    iterations: list = field(default_factory=list)
    train_mse: list = field(default_factory=list)
    test_mse: list = field(default_factory=list)

    def append(self, iteration, train, test=None):
        if self.iterations and iteration <= self.iterations[-1]:
            raise ValueError("loss-history iterations must be strictly increasing")
        self.iterations.append(int(iteration))
        self.train_mse.append(float(train))
        if test is not None:
            self.test_mse.append(float(test))


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and loop settings for train / fine_tune."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    history_stride: int = 100
    minibatch: int = 0  # 0 = full batch
    divergence_factor: float = 1e6


def build_model(
    m,
    lb,
    seed,
    latent_p=50,
    branch_hidden=(50, 50, 50, 50, 50, 50),
    trunk_hidden=(50, 50, 50, 50, 50, 50),
    activation="tanh",
    trunk_with_time=False,
    case="",
    scale=1.0,
):
    """Initialize a fresh model; branch and trunk draw from independent
    spawned seed streams."""
    branch_seed, trunk_seed = np.random.SeedSequence(seed).spawn(2)
    trunk_in = 2 if trunk_with_time else 1
    branch_spec = nn.MLPSpec((m * lb, *branch_hidden, latent_p), activation)
    trunk_spec = nn.MLPSpec((trunk_in, *trunk_hidden, latent_p), activation)
    model = DeepONetModel(
        branch=nn.mlp_init(branch_spec, branch_seed),
        trunk=nn.mlp_init(trunk_spec, trunk_seed),
        bias_b0=0.0,
        latent_p=latent_p,
        meta=ModelMeta(case=case, scale=scale, lb=lb, m=m, trunk_with_time=trunk_with_time),
    )
    model.validate()
    return model


def _as_trunk_matrix(model, trunk_inputs):
    """Normalize trunk input layout to a 2D (rows, trunk_in) float array."""
    t = np.asarray(trunk_inputs, dtype=np.float64)
    if model.meta.trunk_with_time:
        if t.ndim == 2 and t.shape[-1] == 2:
            return np.ascontiguousarray(t)
        raise ValueError(
            f"trunk inputs for a (t, z*) trunk must be (K, 2), got shape {t.shape}"
        )
    if t.ndim == 1:
        return np.ascontiguousarray(t[:, None])
    if t.ndim == 2 and t.shape[1] == 1:
        return np.ascontiguousarray(t)
    raise ValueError(f"trunk inputs must be (K,) coordinates, got shape {t.shape}")


def forward(model, branch_input, trunk_inputs):
    """Predict at each trunk coordinate for a single branch input vector."""
    u = np.asarray(branch_input, dtype=np.float64)
    width = model.branch.spec.layer_widths[0]
    if u.ndim != 1 or u.size != width:
        raise ValueError(f"branch input must be a vector of width {width}, got {u.shape}")
    if not np.all(np.isfinite(u)):
        raise DataError("branch input contains non-finite values")
    tmat = _as_trunk_matrix(model, trunk_inputs)
    if not np.all(np.isfinite(tmat)):
        raise DataError("trunk inputs contain non-finite values")
    zcol = tmat[:, -1]
    if zcol.min() < -1e-12 or zcol.max() > 1.0 + 1e-12:
        raise ValueError("trunk coordinates must lie in the normalized domain [0, 1]")
    b = nn.mlp_forward_batch(model.branch, np.ascontiguousarray(u[None, :]))
    t = nn.mlp_forward_batch(model.trunk, tmat)
    return (b @ t.T + model.bias_b0)[0]


def predict_batch(model, branch_inputs, trunk_inputs):
    """Vectorized prediction: (N, m*lb) branch inputs against a shared trunk
    grid (K,) -> (N, K). With a (t, z*) trunk, trunk_inputs is per-sample
    (N, K, 2)."""
    x = np.ascontiguousarray(branch_inputs, dtype=np.float64)
    b = nn.mlp_forward_batch(model.branch, x)
    if model.meta.trunk_with_time:
        tin = np.asarray(trunk_inputs, dtype=np.float64)
        if tin.ndim != 3 or tin.shape[0] != x.shape[0] or tin.shape[2] != 2:
            raise ValueError(f"per-sample trunk inputs must be (N, K, 2), got {tin.shape}")
        n, k = tin.shape[0], tin.shape[1]
        t = nn.mlp_forward_batch(model.trunk, np.ascontiguousarray(tin.reshape(n * k, 2)))
        t3 = t.reshape(n, k, model.latent_p)
        return np.einsum("np,nkp->nk", b, t3) + model.bias_b0
    t = nn.mlp_forward_batch(model.trunk, _as_trunk_matrix(model, trunk_inputs))
    return b @ t.T + model.bias_b0


def loss_mse(predictions, labels):
    """Mean squared difference."""
    p = np.asarray(predictions, dtype=np.float64)
    l = np.asarray(labels, dtype=np.float64)
    if p.shape != l.shape:
        raise ValueError(f"prediction shape {p.shape} != label shape {l.shape}")
    if p.size == 0:
        raise ValueError("loss_mse needs at least one element")
    d = p - l
    return float(np.mean(d * d))


def _check_batch(model, batch):
    x = np.ascontiguousarray(batch.branch_inputs, dtype=np.float64)
    y = np.ascontiguousarray(batch.labels, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise DataError(f"branch inputs must be a nonempty (N, width) matrix, got {x.shape}")
    if x.shape[1] != model.branch.spec.layer_widths[0]:
        raise DataError(
            f"batch branch width {x.shape[1]} does not match model width "
            f"{model.branch.spec.layer_widths[0]}"
        )
    if model.meta.trunk_with_time:
        tin = np.ascontiguousarray(batch.trunk_coords, dtype=np.float64)
        if tin.ndim != 3 or tin.shape[:2] != (x.shape[0], y.shape[1]) or tin.shape[2] != 2:
            raise DataError(f"per-sample trunk inputs must be (N, K, 2), got {tin.shape}")
    else:
        tin = _as_trunk_matrix(model, batch.trunk_coords)
        if y.shape != (x.shape[0], tin.shape[0]):
            raise DataError(
                f"labels shape {y.shape} does not match (N={x.shape[0]}, K={tin.shape[0]})"
            )
    return x, tin, y


class _StepBuffers:
    """Preallocated hidden caches and gradient buffers for one batch shape."""

    def __init__(self, model, n_rows, trunk_rows):
        self.branch_hidden = nn.alloc_hidden(model.branch.spec, n_rows)
        self.branch_dws, self.branch_dbs = nn.alloc_grads(model.branch.spec)
        self.trunk_hidden = nn.alloc_hidden(model.trunk.spec, trunk_rows)
        self.trunk_dws, self.trunk_dbs = nn.alloc_grads(model.trunk.spec)
        self.db0 = np.empty(1)

    def grads(self):
        """Gradient arrays ordered like branch.flat_arrays() + trunk.flat_arrays() + [b0]."""
        out = list(_interleave(self.branch_dws, self.branch_dbs))
        out += list(_interleave(self.trunk_dws, self.trunk_dbs))
        out.append(self.db0)
        return out


def _interleave(ws, bs):
    for w, b in zip(ws, bs):
        yield w
        yield b


def _loss_and_grads_into(model, x, tin, y, b0, bufs):
    """Full forward + backward for one batch; fills bufs, returns the loss."""
    with_time = model.meta.trunk_with_time
    b = nn.mlp_forward_cached(model.branch, x, bufs.branch_hidden)
    if with_time:
        n, k = tin.shape[0], tin.shape[1]
        tflat = np.ascontiguousarray(tin.reshape(n * k, 2))
        t = nn.mlp_forward_cached(model.trunk, tflat, bufs.trunk_hidden)
        t3 = t.reshape(n, k, model.latent_p)
        pred = np.einsum("np,nkp->nk", b, t3) + b0
    else:
        tflat = tin
        t = nn.mlp_forward_cached(model.trunk, tflat, bufs.trunk_hidden)
        pred = b @ t.T + b0

    diff = pred - y
    loss = float(np.mean(diff * diff))
    dpred = (2.0 / diff.size) * diff
    if with_time:
        db = np.einsum("nk,nkp->np", dpred, t3)
        dt = (dpred[:, :, None] * b[:, None, :]).reshape(n * k, model.latent_p)
    else:
        db = dpred @ t
        dt = dpred.T @ b
    nn.mlp_backward_batch(model.branch, x, bufs.branch_hidden,
                          np.ascontiguousarray(db), bufs.branch_dws, bufs.branch_dbs)
    nn.mlp_backward_batch(model.trunk, tflat, bufs.trunk_hidden,
                          np.ascontiguousarray(dt), bufs.trunk_dws, bufs.trunk_dbs)
    bufs.db0[0] = dpred.sum()
    return loss


def loss_and_grads(model, batch):
    """MSE loss and its exact gradient for every parameter.

    Returns (loss, grads) with grads ordered like
    model.branch.flat_arrays() + model.trunk.flat_arrays() + [dB0].
    """
    x, tin, y = _check_batch(model, batch)
    trunk_rows = x.shape[0] * tin.shape[1] if model.meta.trunk_with_time else tin.shape[0]
    bufs = _StepBuffers(model, x.shape[0], trunk_rows)
    loss = _loss_and_grads_into(model, x, tin, y, float(model.bias_b0), bufs)
    return loss, [g.copy() for g in bufs.grads()]


def train(model, batch, iterations, config=None, seed=0, test_batch=None):
    """Adam/MSE training; returns (trained copy, LossHistory).

    Deterministic for fixed inputs and seed (the seed only matters in
    mini-batch mode, where it drives index sampling). Aborts with
    DivergenceError if the loss goes non-finite or exceeds
    divergence_factor x the initial loss.
    """
    config = config or TrainConfig()
    model = model.copy()
    model.validate()
    history = LossHistory()
    if iterations == 0:
        return model, history

    x_all, t_all, y_all = _check_batch(model, batch)
    if test_batch is not None:
        xt, tt, yt = _check_batch(model, test_batch)

    n_all = x_all.shape[0]
    mb = int(config.minibatch) or n_all
    mb = min(mb, n_all)
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x7261)))

    b0 = np.array([float(model.bias_b0)])
    arrays = model.branch.flat_arrays() + model.trunk.flat_arrays() + [b0]
    state = nn.init_adam(arrays, lr=config.lr, beta1=config.beta1,
                         beta2=config.beta2, eps=config.eps)

    with_time = model.meta.trunk_with_time
    trunk_rows = mb * t_all.shape[1] if with_time else t_all.shape[0]
    bufs = _StepBuffers(model, mb, trunk_rows)
    grads = bufs.grads()

    initial_loss = None
    for it in range(int(iterations)):
        if mb == n_all:
            x, y = x_all, y_all
            tin = t_all
        else:
            idx = rng.permutation(n_all)[:mb]
            x = np.ascontiguousarray(x_all[idx])
            y = y_all[idx]
            tin = np.ascontiguousarray(t_all[idx]) if with_time else t_all

        loss = _loss_and_grads_into(model, x, tin, y, b0[0], bufs)
        if initial_loss is None:
            initial_loss = loss
        if not np.isfinite(loss) or loss > config.divergence_factor * max(initial_loss, 1e-300):
            raise DivergenceError(
                f"training diverged at iteration {it}: loss={loss:.6g} "
                f"(initial {initial_loss:.6g})"
            )
        if it % config.history_stride == 0:
            test = None
            if test_batch is not None:
                model.bias_b0 = float(b0[0])  # keep the scalar in sync for eval
                test = loss_mse(predict_batch(model, xt, tt), yt)
            history.append(it, loss, test)

        nn.adam_update_arrays(arrays, grads, state)

    model.bias_b0 = float(b0[0])
    final_pred = predict_batch(model, x_all, t_all)
    final_test = loss_mse(predict_batch(model, xt, tt), yt) if test_batch is not None else None
    history.append(int(iterations), loss_mse(final_pred, y_all), final_test)
    return model, history


def fine_tune(model, new_case_batch, iterations, config=None, seed=0):
    """Continue training from an existing model's parameters on a new case.

    iterations=0 returns an identical copy (zero-shot transfer).
    """
    tuned, _ = train(model, new_case_batch, iterations, config=config, seed=seed) \
        if iterations else (model.copy(), None)
    return tuned


# ------------------------------------------------------------- checkpointing

def _format_json17(obj, indent=0):
    """JSON writer that renders floats with 17 significant digits so every
    float64 round-trips exactly."""
    pad = " " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = ",\n".join(
            f'{pad}  {json.dumps(str(k))}: {_format_json17(v, indent + 2)}'
            for k, v in obj.items()
        )
        return "{\n" + items + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if len(obj) == 0:
            return "[]"
        return "[" + ", ".join(_format_json17(v, indent) for v in obj) + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format(float(obj), ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if obj is None:
        return "null"
    raise TypeError(f"cannot serialize {type(obj)!r}")


def _params_blob(params):
    return {
        "layer_widths": list(params.spec.layer_widths),
        "activation": params.spec.activation,
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
    }


def save_checkpoint(model, path):
    """Write the model as versioned structured text (17-sig-digit floats)."""
    model.validate()
    blob = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "meta": {
            "case": model.meta.case,
            "scale": model.meta.scale,
            "lb": model.meta.lb,
            "m": model.meta.m,
            "trunk_with_time": model.meta.trunk_with_time,
        },
        "latent_p": model.latent_p,
        "bias_b0": float(model.bias_b0),
        "branch": _params_blob(model.branch),
        "trunk": _params_blob(model.trunk),
    }
    with open(path, "w") as fh:
        fh.write(_format_json17(blob))
        fh.write("\n")


def _params_from_blob(blob, what):
    try:
        spec = nn.MLPSpec(tuple(blob["layer_widths"]), blob["activation"])
        weights = [np.ascontiguousarray(np.asarray(w, dtype=np.float64)) for w in blob["weights"]]
        biases = [np.asarray(b, dtype=np.float64) for b in blob["biases"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed {what} block in checkpoint: {exc}") from exc
    widths = spec.layer_widths
    if len(weights) != spec.n_layers or len(biases) != spec.n_layers:
        raise CheckpointError(f"{what}: expected {spec.n_layers} layers of parameters")
    for i, (w, b) in enumerate(zip(weights, biases)):
        if w.shape != (widths[i + 1], widths[i]) or b.shape != (widths[i + 1],):
            raise CheckpointError(
                f"{what} layer {i}: weight shape {w.shape} / bias shape {b.shape} "
                f"inconsistent with declared widths {widths}"
            )
    return nn.MLPParams(spec, weights, biases)


def load_checkpoint(path):
    """Read a checkpoint; raises CheckpointError on any malformation."""
    try:
        with open(path) as fh:
            blob = json.load(fh)
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint {path} is not well-formed: {exc}") from exc
    if not isinstance(blob, dict) or blob.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"checkpoint {path} has an unrecognized format")
    if blob.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {blob.get('version')!r} unsupported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    try:
        meta = ModelMeta(
            case=str(blob["meta"]["case"]),
            scale=float(blob["meta"]["scale"]),
            lb=int(blob["meta"]["lb"]),
            m=int(blob["meta"]["m"]),
            trunk_with_time=bool(blob["meta"]["trunk_with_time"]),
        )
        model = DeepONetModel(
            branch=_params_from_blob(blob["branch"], "branch"),
            trunk=_params_from_blob(blob["trunk"], "trunk"),
            bias_b0=float(blob["bias_b0"]),
            latent_p=int(blob["latent_p"]),
            meta=meta,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"checkpoint {path} is missing fields: {exc}") from exc
    try:
        model.validate()
    except DataError as exc:
        raise CheckpointError(f"checkpoint {path} violates model invariants: {exc}") from exc
    return model
