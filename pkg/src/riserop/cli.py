"""Command-line front end.

Subcommands: synth, train, predict, transfer, pod, place, report. Every
command reads one JSON config (see config.py), validates it fully before
computing, writes its outputs under <out_root>/<command>/, and prints the
written paths. Exit codes: 0 success, 2 config error, 3 data error,
4 numerical divergence.
"""

import argparse
import sys

import numpy as np

from . import deeponet, diagnostics, placement, pod
from .config import load_run_config
from .dataflow import (
    SensorLayout,
    WindowSpec,
    build_forecast_batch,
    build_reconstruction_batch,
    load_strain_field,
    save_strain_field,
)
from .diagnostics import RunArtifacts, Trace, emit_report, write_csv
from .errors import ConfigError, DataError, DivergenceError, RiseropError
from .riser import RiserConfig, make_ndp_like_case

POD_STRATEGY_ORDER = ("two-one", "per-mode", "mixed")


# ------------------------------------------------------------ shared pieces


def _build_case(cfg, section=None):
    """Materialize the configured case: (StrainField, SensorLayout).

    With case.file the field is read from disk (already normalized by
    whoever wrote it); otherwise it is synthesized from the profile.
    """
    case = section or cfg.case
    fractions = np.asarray(cfg.layout["observer_fractions"], dtype=np.float64)
    if case.get("file") is not None:
        field = load_strain_field(case["file"])
        layout = SensorLayout(
            observer_locations=fractions * field.length,
            training_locations=np.linspace(0.0, field.length, cfg.layout["n_training"]),
        )
        return field, layout
    riser_cfg = RiserConfig(**case["riser"]) if case["riser"] else RiserConfig()
    return make_ndp_like_case(
        case["profile"],
        seed=case["seed"],
        velocity=case.get("velocity"),
        duration_s=case["duration_s"],
        config=riser_cfg,
        n_training=cfg.layout["n_training"],
        observer_fractions=fractions,
    )


def _window_spec(cfg, field):
    w = cfg.windows
    rate = field.sample_rate
    spec = WindowSpec(
        train_window=(int(round(w["train_seconds"][0] * rate)),
                      int(round(w["train_seconds"][1] * rate))),
        test_window=(int(round(w["test_seconds"][0] * rate)),
                     int(round(w["test_seconds"][1] * rate))),
        look_back=w["look_back"],
        forecast_horizon=w["horizon"],
    )
    if spec.test_window[1] > field.n_steps:
        raise DataError(
            f"windows need {spec.test_window[1]} steps but the case has {field.n_steps}"
        )
    return spec


def _build_batch(cfg, field, layout, spec, window):
    if cfg.mode == "forecast":
        return build_forecast_batch(field, layout, window, spec.look_back,
                                    spec.forecast_horizon)
    return build_reconstruction_batch(field, layout, window)


def _label_steps(cfg, spec, window):
    """Time-step indices of each batch label row (for trace time axes)."""
    start, end = window
    if cfg.mode == "forecast":
        return np.arange(start + spec.look_back + spec.forecast_horizon, end)
    return np.arange(start, end)


def _model_lb(cfg, spec):
    return spec.look_back if cfg.mode == "forecast" else 1


def _check_model_compat(model, cfg, layout, spec):
    if model.meta.m != layout.m:
        raise DataError(
            f"checkpoint was trained with m={model.meta.m} observers, config has {layout.m}"
        )
    lb = _model_lb(cfg, spec)
    if model.meta.lb != lb:
        raise DataError(
            f"checkpoint look-back {model.meta.lb} does not match configured {lb}"
        )


def _trace_indices(n_locations):
    """Representative trunk columns: first interior, middle, last interior."""
    if n_locations < 4:
        return [n_locations // 2]
    return sorted({1, n_locations // 2, n_locations - 2})


def _traces_for(cfg, field, layout, spec, model, windows):
    """Truth/prediction traces at representative locations, windows stitched
    in order with the first marked as training."""
    idxs = _trace_indices(layout.p)
    parts = []
    train_end = 0
    for kind, window in windows:
        batch = _build_batch(cfg, field, layout, spec, window)
        preds = deeponet.predict_batch(model, batch.branch_inputs, batch.trunk_coords)
        steps = _label_steps(cfg, spec, window)
        parts.append((kind, steps, batch.labels, preds))
        if kind == "train":
            train_end = steps.size
    traces = []
    for i in idxs:
        time_s = np.concatenate([p[1] for p in parts]) / field.sample_rate
        truth = np.concatenate([p[2][:, i] for p in parts])
        pred = np.concatenate([p[3][:, i] for p in parts])
        z = layout.training_locations[i]
        traces.append(Trace(label=f"z{z:07.3f}", time_s=time_s, truth=truth,
                            prediction=pred, train_end=train_end))
    return tuple(traces)


def _metrics_for(cfg, field, layout, spec, model, window):
    batch = _build_batch(cfg, field, layout, spec, window)
    preds = deeponet.predict_batch(model, batch.branch_inputs, batch.trunk_coords)
    return {
        "mse": diagnostics.mse(preds, batch.labels),
        "nmse": diagnostics.nmse(preds, batch.labels),
    }, batch, preds


def _out_dir(cfg, command):
    out = cfg.out_root / command
    out.mkdir(parents=True, exist_ok=True)
    return out


# ----------------------------------------------------------------- commands


def cmd_synth(cfg):
    field, layout = _build_case(cfg)
    out = _out_dir(cfg, "synth")
    path = out / f"{field.case_label}.csv"
    save_strain_field(field, path)
    mid = field.values[:, field.n_locations // 2]
    spec = diagnostics.spectrum(mid, field.sample_rate)
    spath = out / f"spectrum_{field.case_label}.csv"
    write_csv(spath, ["frequency_hz", "magnitude"], [spec.frequencies, spec.magnitudes])
    return [path, spath]


def cmd_train(cfg):
    field, layout = _build_case(cfg)
    spec = _window_spec(cfg, field)
    train_batch = _build_batch(cfg, field, layout, spec, spec.train_window)
    test_batch = _build_batch(cfg, field, layout, spec, spec.test_window)
    model = deeponet.build_model(
        m=layout.m, lb=_model_lb(cfg, spec), seed=cfg.seed,
        latent_p=cfg.model["latent_p"],
        branch_hidden=tuple(cfg.model["branch_hidden"]),
        trunk_hidden=tuple(cfg.model["trunk_hidden"]),
        activation=cfg.model["activation"],
        trunk_with_time=cfg.model["trunk_with_time"],
        case=field.case_label, scale=field.normalization_scale,
    )
    tc = deeponet.TrainConfig(lr=cfg.train["lr"],
                              history_stride=cfg.train["history_stride"],
                              minibatch=cfg.train["minibatch"])
    model, history = deeponet.train(model, train_batch, cfg.train["iterations"],
                                    tc, seed=cfg.seed, test_batch=test_batch)
    out = _out_dir(cfg, "train")
    cpath = out / "checkpoint.json"
    deeponet.save_checkpoint(model, cpath)
    hpath = out / "loss_history.csv"
    write_csv(hpath, ["iteration", "train_mse", "test_mse"],
              [history.iterations, history.train_mse, history.test_mse])
    metrics = {
        "train": _metrics_for(cfg, field, layout, spec, model, spec.train_window)[0],
        "test": _metrics_for(cfg, field, layout, spec, model, spec.test_window)[0],
    }
    written = emit_report(RunArtifacts(sample_rate=field.sample_rate, metrics=metrics), out)
    return [cpath, hpath] + written


def _require_checkpoint(cfg):
    if cfg.checkpoint is None:
        raise ConfigError("this command needs a checkpoint (config.checkpoint or --checkpoint)")
    return deeponet.load_checkpoint(cfg.checkpoint)


def cmd_predict(cfg):
    model = _require_checkpoint(cfg)
    field, layout = _build_case(cfg)
    spec = _window_spec(cfg, field)
    _check_model_compat(model, cfg, layout, spec)
    test_metrics, batch, preds = _metrics_for(cfg, field, layout, spec, model,
                                              spec.test_window)
    rms = (layout.training_locations,
           diagnostics.rms_profile(batch.labels),
           diagnostics.rms_profile(preds))
    artifacts = RunArtifacts(
        sample_rate=field.sample_rate,
        traces=_traces_for(cfg, field, layout, spec, model,
                           [("test", spec.test_window)]),
        rms=rms,
        metrics={"test": test_metrics},
    )
    return emit_report(artifacts, _out_dir(cfg, "predict"))


def cmd_report(cfg):
    """One-stop diagnostics: evaluates train + test windows of the configured
    case with the checkpointed model and writes the full artifact set."""
    model = _require_checkpoint(cfg)
    field, layout = _build_case(cfg)
    spec = _window_spec(cfg, field)
    _check_model_compat(model, cfg, layout, spec)
    metrics = {
        "train": _metrics_for(cfg, field, layout, spec, model, spec.train_window)[0],
        "test": _metrics_for(cfg, field, layout, spec, model, spec.test_window)[0],
    }
    _, batch, preds = _metrics_for(cfg, field, layout, spec, model, spec.test_window)
    artifacts = RunArtifacts(
        sample_rate=field.sample_rate,
        traces=_traces_for(cfg, field, layout, spec, model,
                           [("train", spec.train_window), ("test", spec.test_window)]),
        rms=(layout.training_locations,
             diagnostics.rms_profile(batch.labels),
             diagnostics.rms_profile(preds)),
        metrics=metrics,
    )
    return emit_report(artifacts, _out_dir(cfg, "report"))


def cmd_transfer(cfg):
    model = _require_checkpoint(cfg)
    tr = cfg.transfer
    section = {
        "profile": tr["profile"],
        "velocity": tr["velocity"],
        "seed": tr["seed"],
        "duration_s": tr["duration_s"] or cfg.case["duration_s"],
        "file": None,
        "riser": cfg.case["riser"],
    }
    field, layout = _build_case(cfg, section=section)
    spec = _window_spec(cfg, field)
    _check_model_compat(model, cfg, layout, spec)
    out = _out_dir(cfg, "transfer")
    written = []

    metrics = {"zero_shot": _metrics_for(cfg, field, layout, spec, model,
                                         spec.test_window)[0]}
    if tr["finetune"] > 0:
        train_batch = _build_batch(cfg, field, layout, spec, spec.train_window)
        tc = deeponet.TrainConfig(lr=cfg.train["lr"],
                                  history_stride=cfg.train["history_stride"],
                                  minibatch=cfg.train["minibatch"])
        model = deeponet.fine_tune(model, train_batch, tr["finetune"], tc, seed=cfg.seed)
        metrics["finetuned"] = _metrics_for(cfg, field, layout, spec, model,
                                            spec.test_window)[0]
        cpath = out / "checkpoint_finetuned.json"
        deeponet.save_checkpoint(model, cpath)
        written.append(cpath)

    artifacts = RunArtifacts(
        sample_rate=field.sample_rate,
        traces=_traces_for(cfg, field, layout, spec, model,
                           [("test", spec.test_window)]),
        metrics=metrics,
    )
    return written + emit_report(artifacts, out)


def _pod_locations(cfg, field):
    # interior sampling sites (the pinned ends are identically zero)
    n = cfg.pod["n_locations"]
    return np.linspace(0.0, field.length, n + 2)[1:-1]


def cmd_pod(cfg):
    field, layout = _build_case(cfg)
    spec = _window_spec(cfg, field)
    locs = _pod_locations(cfg, field)
    snap = pod.build_snapshot_matrix(field, spec.train_window, locs,
                                     stride=cfg.pod["stride"],
                                     remove_mean=cfg.pod["remove_mean"])
    result = pod.pod_decompose(snap)
    out = _out_dir(cfg, "pod")

    epath = out / "eigenvalues.csv"
    k = result.eigenvalues.size
    write_csv(epath, ["mode", "eigenvalue", "contribution_pct", "cumulative_pct"],
              [np.arange(1, k + 1), result.eigenvalues, result.contributions,
               np.cumsum(result.contributions)])

    n_out = min(cfg.pod["n_modes_out"], k)
    mpath = out / "modes.csv"
    write_csv(mpath, ["location"] + [f"mode_{j + 1}" for j in range(n_out)],
              [result.locations] + [result.modes[:, j] for j in range(n_out)])

    ppath = out / "placements.csv"
    m = len(cfg.layout["observer_fractions"])
    rows = []
    for strategy in POD_STRATEGY_ORDER:
        idx = pod.pod_placement(result, m, strategy)
        rows.append((strategy, result.locations[idx]))
    write_csv(ppath, [f"z_{i + 1}" for i in range(m)] + ["strategy"],
              [np.array([r[1][i] for r in rows]) for i in range(m)],
              text_column=[r[0] for r in rows])
    return [epath, mpath, ppath]


def _retrain_mse(cfg, field, layout, spec, observers_z):
    """Train a fresh model with observers at the given physical locations and
    return its test-window MSE."""
    trial_layout = SensorLayout(
        observer_locations=np.asarray(observers_z, dtype=np.float64),
        training_locations=layout.training_locations,
    )
    train_batch = build_reconstruction_batch(field, trial_layout, spec.train_window)
    test_batch = build_reconstruction_batch(field, trial_layout, spec.test_window)
    model = deeponet.build_model(
        m=trial_layout.m, lb=1, seed=cfg.seed,
        latent_p=cfg.model["latent_p"],
        branch_hidden=tuple(cfg.model["branch_hidden"]),
        trunk_hidden=tuple(cfg.model["trunk_hidden"]),
        activation=cfg.model["activation"],
        case=field.case_label, scale=field.normalization_scale,
    )
    tc = deeponet.TrainConfig(lr=cfg.train["lr"])
    model, _ = deeponet.train(model, train_batch, cfg.placement["retrain_iterations"],
                              tc, seed=cfg.seed)
    preds = deeponet.predict_batch(model, test_batch.branch_inputs,
                                   test_batch.trunk_coords)
    return diagnostics.mse(preds, test_batch.labels)


def cmd_place(cfg):
    """Optimize observer locations, then emit the five-row comparison table:
    initial, learned, and the three extremum-based baselines."""
    if cfg.mode != "reconstruction":
        raise ConfigError("placement optimization runs in reconstruction mode")
    field, layout = _build_case(cfg)
    spec = _window_spec(cfg, field)
    pl = cfg.placement
    data = placement.make_placement_dataset(field, layout.training_locations,
                                            spec.train_window)
    dist0 = placement.init_distribution(layout.m, cfg.seed, sigma0=pl["sigma0"])
    model = deeponet.build_model(
        m=layout.m, lb=1, seed=cfg.seed,
        latent_p=cfg.model["latent_p"],
        branch_hidden=tuple(cfg.model["branch_hidden"]),
        trunk_hidden=tuple(cfg.model["trunk_hidden"]),
        activation=cfg.model["activation"],
        case=field.case_label, scale=field.normalization_scale,
    )
    schedule = placement.AlternationSchedule(
        theta_steps=pl["theta_steps"], lambda_steps=pl["lambda_steps"],
        total_iterations=pl["total_iterations"], realizations=pl["realizations"],
        theta_lr=pl["theta_lr"], lambda_lr=pl["lambda_lr"],
    )
    _, dist, trajectory = placement.optimize_placement(model, dist0, data,
                                                       schedule, seed=cfg.seed)

    snap = pod.build_snapshot_matrix(field, spec.train_window,
                                     _pod_locations(cfg, field),
                                     stride=cfg.pod["stride"],
                                     remove_mean=cfg.pod["remove_mean"])
    result = pod.pod_decompose(snap)

    candidates = [("initial", dist0.mu * field.length),
                  ("learned", dist.mu * field.length)]
    for strategy in POD_STRATEGY_ORDER:
        idx = pod.pod_placement(result, layout.m, strategy)
        candidates.append((f"pod-{strategy}", result.locations[idx]))

    labels, mses, coords = [], [], []
    for label, z in candidates:
        labels.append(label)
        coords.append(np.asarray(z, dtype=np.float64))
        mses.append(_retrain_mse(cfg, field, layout, spec, z))

    out = _out_dir(cfg, "place")
    cpath = out / "comparison.csv"
    write_csv(cpath, [f"z_{i + 1}" for i in range(layout.m)] + ["test_mse", "layout"],
              [np.array([c[i] for c in coords]) for i in range(layout.m)]
              + [np.array(mses)],
              text_column=labels)

    artifacts = RunArtifacts(
        sample_rate=field.sample_rate,
        placement_trajectory=(placement.trajectory_header(layout.m), trajectory),
        metrics={
            "placement": {
                "initial_mse": mses[0],
                "learned_mse": mses[1],
                "sigma_initial_mean": float(dist0.sigma.mean()),
                "sigma_final_mean": float(dist.sigma.mean()),
            }
        },
    )
    return [cpath] + emit_report(artifacts, out)


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "predict": cmd_predict,
    "transfer": cmd_transfer,
    "pod": cmd_pod,
    "place": cmd_place,
    "report": cmd_report,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="riserop",
        description="Strain-field reconstruction, forecasting, and sensor "
                    "placement for a vibrating riser.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or "").split("\n")[0] or None)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, help="override config.seed")
        p.add_argument("--out", help="override the output root directory")
        p.add_argument("--iterations", type=int, help="override train.iterations")
        p.add_argument("--finetune", type=int, help="override transfer.finetune")
        p.add_argument("--checkpoint", help="override config.checkpoint")
        p.add_argument("--profile", help="override case.profile")
        p.add_argument("--velocity", type=float, help="override case.velocity")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {k: getattr(args, k) for k in
                 ("seed", "out", "iterations", "finetune", "checkpoint",
                  "profile", "velocity")}
    try:
        cfg = load_run_config(args.config, overrides)
        written = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 4
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except RiseropError as exc:  # pragma: no cover - safety net
        print(f"error: {exc}", file=sys.stderr)
        return 3
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
