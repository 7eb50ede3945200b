"""Run configuration: a JSON file validated fully before any computation.

Every command takes one config file; flags may override a handful of
scalars. All randomness flows from the explicit seeds recorded here, so a
config uniquely determines every output byte.
"""

import json
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError

ENV_OUT = "RISEROP_OUT"

MODES = ("reconstruction", "forecast")

_SECTION_KEYS = {
    "case": {"profile", "velocity", "duration_s", "seed", "file", "riser"},
    "riser": {"length", "ei", "tension", "damping", "n_modes", "z_points", "sample_rate"},
    "layout": {"observer_fractions", "n_training"},
    "windows": {"train_seconds", "test_seconds", "look_back", "horizon"},
    "model": {"latent_p", "branch_hidden", "trunk_hidden", "activation", "trunk_with_time"},
    "train": {"iterations", "lr", "history_stride", "minibatch"},
    "transfer": {"profile", "velocity", "seed", "finetune", "duration_s"},
    "pod": {"n_locations", "stride", "remove_mean", "n_modes_out"},
    "placement": {"sigma0", "theta_steps", "lambda_steps", "total_iterations",
                  "realizations", "theta_lr", "lambda_lr", "retrain_iterations"},
}
_TOP_KEYS = {"seed", "out_dir", "mode", "checkpoint"} | set(_SECTION_KEYS) - {"riser"}


def _fail(path, msg):
    raise ConfigError(f"{path}: {msg}")


def _as_int(value, path, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        _fail(path, f"must be >= {minimum}, got {value}")
    return value


def _as_float(value, path, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {value!r}")
    v = float(value)
    if positive and v <= 0:
        _fail(path, f"must be positive, got {v}")
    return v


def _as_str(value, path, choices=None):
    if not isinstance(value, str):
        _fail(path, f"expected a string, got {value!r}")
    if choices is not None and value not in choices:
        _fail(path, f"must be one of {sorted(choices)}, got {value!r}")
    return value


def _as_bool(value, path):
    if not isinstance(value, bool):
        _fail(path, f"expected true/false, got {value!r}")
    return value


def _as_float_list(value, path):
    if not isinstance(value, list) or not value:
        _fail(path, f"expected a non-empty list of numbers, got {value!r}")
    return [_as_float(v, f"{path}[{i}]") for i, v in enumerate(value)]


def _as_int_list(value, path):
    if not isinstance(value, list) or not value:
        _fail(path, f"expected a non-empty list of integers, got {value!r}")
    return [_as_int(v, f"{path}[{i}]", minimum=1) for i, v in enumerate(value)]


def _section(raw, name, parent="config"):
    value = raw.get(name, {})
    if not isinstance(value, dict):
        _fail(f"{parent}.{name}", f"expected a table, got {value!r}")
    allowed = _SECTION_KEYS[name]
    for key in value:
        if key not in allowed:
            _fail(f"{parent}.{name}.{key}", f"unknown key; allowed: {sorted(allowed)}")
    return dict(value)


@dataclass(frozen=True)
class RunConfig:
    """Validated, fully-defaulted run description."""

    seed: int
    out_root: Path
    mode: str
    checkpoint: Path | None
    case: dict
    layout: dict
    windows: dict
    model: dict
    train: dict
    transfer: dict
    pod: dict
    placement: dict


def _validate_case(sec, seed):
    out = {
        "profile": _as_str(sec.get("profile", "medium"), "case.profile"),
        "velocity": None,
        "duration_s": _as_float(sec.get("duration_s", 20.0), "case.duration_s", positive=True),
        "seed": _as_int(sec.get("seed", seed), "case.seed"),
        "file": None,
        "riser": {},
    }
    if sec.get("velocity") is not None:
        out["velocity"] = _as_float(sec["velocity"], "case.velocity", positive=True)
    if sec.get("file") is not None:
        f = Path(_as_str(sec["file"], "case.file"))
        if not f.is_file():
            _fail("case.file", f"no such file: {f}")
        out["file"] = f
    riser = _section(sec, "riser", parent="config.case")
    for key, val in riser.items():
        if key in ("n_modes", "z_points"):
            riser[key] = _as_int(val, f"case.riser.{key}", minimum=1)
        else:
            riser[key] = _as_float(val, f"case.riser.{key}")
    out["riser"] = riser
    return out


def _validate_layout(sec):
    fractions = _as_float_list(sec.get("observer_fractions", [0.2, 0.5, 0.8]),
                               "layout.observer_fractions")
    for i, f in enumerate(fractions):
        if not (0.0 <= f <= 1.0):
            _fail(f"layout.observer_fractions[{i}]", f"must be in [0, 1], got {f}")
    return {
        "observer_fractions": fractions,
        "n_training": _as_int(sec.get("n_training", 25), "layout.n_training", minimum=2),
    }


def _validate_windows(sec):
    train = _as_float_list(sec.get("train_seconds", [5.0, 15.0]), "windows.train_seconds")
    test = _as_float_list(sec.get("test_seconds", [15.0, 20.0]), "windows.test_seconds")
    for name, pair in (("train_seconds", train), ("test_seconds", test)):
        if len(pair) != 2 or pair[0] >= pair[1] or pair[0] < 0:
            _fail(f"windows.{name}", f"expected an increasing [start, end] pair, got {pair}")
    if train[1] > test[0]:
        _fail("windows", f"train window {train} overlaps test window {test}")
    return {
        "train_seconds": train,
        "test_seconds": test,
        "look_back": _as_int(sec.get("look_back", 1), "windows.look_back", minimum=1),
        "horizon": _as_int(sec.get("horizon", 0), "windows.horizon", minimum=0),
    }


def _validate_model(sec):
    return {
        "latent_p": _as_int(sec.get("latent_p", 50), "model.latent_p", minimum=1),
        "branch_hidden": _as_int_list(sec.get("branch_hidden", [50] * 6), "model.branch_hidden"),
        "trunk_hidden": _as_int_list(sec.get("trunk_hidden", [50] * 6), "model.trunk_hidden"),
        "activation": _as_str(sec.get("activation", "tanh"), "model.activation"),
        "trunk_with_time": _as_bool(sec.get("trunk_with_time", False), "model.trunk_with_time"),
    }


def _validate_train(sec):
    return {
        "iterations": _as_int(sec.get("iterations", 2000), "train.iterations", minimum=0),
        "lr": _as_float(sec.get("lr", 1e-3), "train.lr", positive=True),
        "history_stride": _as_int(sec.get("history_stride", 100), "train.history_stride", minimum=1),
        "minibatch": _as_int(sec.get("minibatch", 0), "train.minibatch", minimum=0),
    }


def _validate_transfer(sec, seed):
    out = {
        "profile": _as_str(sec.get("profile", "medium"), "transfer.profile"),
        "velocity": None,
        "seed": _as_int(sec.get("seed", seed), "transfer.seed"),
        "finetune": _as_int(sec.get("finetune", 0), "transfer.finetune", minimum=0),
        "duration_s": None,
    }
    if sec.get("velocity") is not None:
        out["velocity"] = _as_float(sec["velocity"], "transfer.velocity", positive=True)
    if sec.get("duration_s") is not None:
        out["duration_s"] = _as_float(sec["duration_s"], "transfer.duration_s", positive=True)
    return out


def _validate_pod(sec):
    return {
        "n_locations": _as_int(sec.get("n_locations", 100), "pod.n_locations", minimum=4),
        "stride": _as_int(sec.get("stride", 1), "pod.stride", minimum=1),
        "remove_mean": _as_bool(sec.get("remove_mean", False), "pod.remove_mean"),
        "n_modes_out": _as_int(sec.get("n_modes_out", 6), "pod.n_modes_out", minimum=1),
    }


def _validate_placement(sec):
    return {
        "sigma0": _as_float(sec.get("sigma0", 0.05), "placement.sigma0", positive=True),
        "theta_steps": _as_int(sec.get("theta_steps", 60), "placement.theta_steps", minimum=1),
        "lambda_steps": _as_int(sec.get("lambda_steps", 40), "placement.lambda_steps", minimum=0),
        "total_iterations": _as_int(sec.get("total_iterations", 2000),
                                    "placement.total_iterations", minimum=1),
        "realizations": _as_int(sec.get("realizations", 8), "placement.realizations", minimum=1),
        "theta_lr": _as_float(sec.get("theta_lr", 1e-3), "placement.theta_lr", positive=True),
        "lambda_lr": _as_float(sec.get("lambda_lr", 2e-3), "placement.lambda_lr", positive=True),
        "retrain_iterations": _as_int(sec.get("retrain_iterations", 1500),
                                      "placement.retrain_iterations", minimum=1),
    }


def load_run_config(path, overrides=None):
    """Parse + validate a config file; `overrides` maps flag names to values
    (seed, out, iterations, finetune, checkpoint, profile, velocity)."""
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    for key in raw:
        if key not in _TOP_KEYS:
            raise ConfigError(f"config.{key}: unknown key; allowed: {sorted(_TOP_KEYS)}")

    if "seed" in overrides:
        raw["seed"] = overrides["seed"]
    if "seed" not in raw:
        raise ConfigError("config.seed: a seed is mandatory (no wall-clock defaults)")
    seed = _as_int(raw["seed"], "seed")

    if "profile" in overrides:
        raw.setdefault("case", {})["profile"] = overrides["profile"]
    if "velocity" in overrides:
        raw.setdefault("case", {})["velocity"] = overrides["velocity"]
    if "iterations" in overrides:
        raw.setdefault("train", {})["iterations"] = overrides["iterations"]
    if "finetune" in overrides:
        raw.setdefault("transfer", {})["finetune"] = overrides["finetune"]

    out_dir = overrides.get("out") or raw.get("out_dir") or os.environ.get(ENV_OUT)
    if out_dir is None:
        raise ConfigError(
            "no output directory: set config.out_dir, --out, or the "
            f"{ENV_OUT} environment variable"
        )
    out_root = Path(_as_str(str(out_dir), "out_dir"))
    if not out_root.is_dir():
        raise ConfigError(f"output directory does not exist: {out_root}")

    checkpoint = overrides.get("checkpoint") or raw.get("checkpoint")
    if checkpoint is not None:
        checkpoint = Path(_as_str(str(checkpoint), "checkpoint"))
        if not checkpoint.is_file():
            raise ConfigError(f"checkpoint not found: {checkpoint}")

    return RunConfig(
        seed=seed,
        out_root=out_root,
        mode=_as_str(raw.get("mode", "reconstruction"), "mode", choices=MODES),
        checkpoint=checkpoint,
        case=_validate_case(_section(raw, "case"), seed),
        layout=_validate_layout(_section(raw, "layout")),
        windows=_validate_windows(_section(raw, "windows")),
        model=_validate_model(_section(raw, "model")),
        train=_validate_train(_section(raw, "train")),
        transfer=_validate_transfer(_section(raw, "transfer"), seed),
        pod=_validate_pod(_section(raw, "pod")),
        placement=_validate_placement(_section(raw, "placement")),
    )
