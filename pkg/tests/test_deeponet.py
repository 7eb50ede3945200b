"""deeponet tests: Eq-1 style combination, training, checkpointing, transfer."""

import types

import numpy as np
import pytest

from helpers import rel_err
from riserop import deeponet as dn
from riserop import nn
from riserop.errors import CheckpointError, DataError, DivergenceError


def tiny_model(seed=5, latent_p=8, m=3, lb=1, **kw):
    return dn.build_model(m=m, lb=lb, seed=seed, latent_p=latent_p,
                          branch_hidden=(16, 16), trunk_hidden=(16, 16), **kw)


def make_batch(n=64, k=9, seed=42, m=3):
    """Toy operator task: G(u)(z) = u0 + u1*z (plus a wiggle from u2)."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, size=(n, m))
    z = np.linspace(0.0, 1.0, k)
    y = x[:, :1] + x[:, 1:2] * z[None, :] + 0.2 * x[:, 2:3] * np.sin(np.pi * z)[None, :]
    return types.SimpleNamespace(branch_inputs=x, trunk_coords=z, labels=y)


def params_equal(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a.flat_arrays(), b.flat_arrays()))


def model_equal(a, b):
    return (params_equal(a.branch, b.branch) and params_equal(a.trunk, b.trunk)
            and a.bias_b0 == b.bias_b0)


# ---------------------------------------------------------------- forward

def test_forward_zero_branch_returns_bias():
    model = tiny_model()
    for w in model.branch.weights:
        w[:] = 0.0
    model.bias_b0 = 0.5
    pred = dn.forward(model, np.zeros(3), np.linspace(0, 1, 7))
    assert np.allclose(pred, 0.5, rtol=0, atol=0)


def test_forward_hand_computed_p2():
    # force B=(1,2) and T=(3,4) through zero weights + fixed output biases
    spec_b = nn.MLPSpec((3, 2))
    spec_t = nn.MLPSpec((1, 2))
    model = dn.DeepONetModel(
        branch=nn.MLPParams(spec_b, [np.zeros((2, 3))], [np.array([1.0, 2.0])]),
        trunk=nn.MLPParams(spec_t, [np.zeros((2, 1))], [np.array([3.0, 4.0])]),
        bias_b0=-1.0,
        latent_p=2,
        meta=dn.ModelMeta(m=3, lb=1),
    )
    pred = dn.forward(model, np.array([9.0, 9.0, 9.0]), np.array([0.3]))
    assert pred[0] == 1.0 * 3.0 + 2.0 * 4.0 - 1.0


def test_forward_matches_double_loop_oracle():
    model = tiny_model(seed=11)
    u = np.random.default_rng(1).normal(size=3)
    coords = np.array([0.0, 0.2, 0.5, 0.9, 1.0])
    pred = dn.forward(model, u, coords)
    b = nn.mlp_forward(model.branch, u)
    for i, z in enumerate(coords):
        t = nn.mlp_forward(model.trunk, np.array([z]))
        want = model.bias_b0
        for k in range(model.latent_p):
            want += b[k] * t[k]
        assert abs(pred[i] - want) < 1e-14


def test_forward_linear_in_branch_output():
    # doubling the branch output scales (pred - B0) by exactly 2 (powers of
    # two are exact in binary floating point; B0=0 avoids re-rounding)
    model = tiny_model(seed=3)
    u = np.random.default_rng(2).normal(size=3)
    z = np.linspace(0, 1, 6)
    base = dn.forward(model, u, z)
    scaled = model.copy()
    scaled.branch.weights[-1] *= 2.0
    scaled.branch.biases[-1] *= 2.0
    pred = dn.forward(scaled, u, z)
    assert np.array_equal(pred, 2.0 * base)
    # with a nonzero B0 the identity holds to rounding
    model.bias_b0 = scaled.bias_b0 = 0.25
    base = dn.forward(model, u, z)
    pred = dn.forward(scaled, u, z)
    assert np.allclose(pred - 0.25, 2.0 * (base - 0.25), rtol=1e-14, atol=1e-15)


def test_forward_defined_between_label_points():
    model = tiny_model(seed=7)
    u = np.zeros(3)
    z = np.array([0.123456, 0.123456 + 1e-9])
    a, b = dn.forward(model, u, z)
    assert np.isfinite(a) and abs(a - b) < 1e-6


def test_forward_input_validation():
    model = tiny_model()
    with pytest.raises(ValueError):
        dn.forward(model, np.zeros(4), np.array([0.5]))
    with pytest.raises(DataError):
        dn.forward(model, np.array([0.0, np.nan, 0.0]), np.array([0.5]))
    with pytest.raises(ValueError):
        dn.forward(model, np.zeros(3), np.array([1.5]))


# ---------------------------------------------------------------- loss

def test_loss_identical_is_zero():
    v = np.array([1.0, -2.0, 3.0])
    assert dn.loss_mse(v, v.copy()) == 0.0


def test_loss_constant_offset():
    p = np.array([1.5, 2.5, 3.5])
    assert dn.loss_mse(p, p - 0.5) == pytest.approx(0.25, rel=1e-15)


def test_loss_hand_value():
    assert dn.loss_mse(np.array([1.0, 2.0]), np.array([0.0, 0.0])) == 2.5


def test_loss_rejects_empty_and_mismatched():
    with pytest.raises(ValueError):
        dn.loss_mse(np.array([]), np.array([]))
    with pytest.raises(ValueError):
        dn.loss_mse(np.array([1.0]), np.array([1.0, 2.0]))


# ---------------------------------------------------------------- gradients

def test_loss_gradients_match_finite_differences():
    model = dn.build_model(m=2, lb=1, seed=13, latent_p=4,
                           branch_hidden=(6,), trunk_hidden=(5,))
    rng = np.random.default_rng(0)
    batch = types.SimpleNamespace(
        branch_inputs=rng.normal(size=(7, 2)),
        trunk_coords=np.linspace(0, 1, 4),
        labels=rng.normal(size=(7, 4)),
    )
    _, grads = dn.loss_and_grads(model, batch)
    arrays = model.branch.flat_arrays() + model.trunk.flat_arrays()

    h = 1e-6
    for arr, g in zip(arrays, grads):
        flat = arr.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            up = dn.loss_and_grads(model, batch)[0]
            flat[k] = orig - h
            dn_ = dn.loss_and_grads(model, batch)[0]
            flat[k] = orig
            fd = (up - dn_) / (2 * h)
            assert rel_err(fd, g.reshape(-1)[k]).max() < 1e-6

    # scalar bias B0
    base_b0 = model.bias_b0
    model.bias_b0 = base_b0 + h
    up = dn.loss_and_grads(model, batch)[0]
    model.bias_b0 = base_b0 - h
    dn_ = dn.loss_and_grads(model, batch)[0]
    model.bias_b0 = base_b0
    assert rel_err((up - dn_) / (2 * h), grads[-1][0]).max() < 1e-6


# ---------------------------------------------------------------- train

def test_train_zero_iterations_returns_unchanged_model():
    model = tiny_model()
    out, history = dn.train(model, make_batch(), 0)
    assert model_equal(out, model)
    assert history.iterations == []


def test_train_learns_constant_labels():
    model = tiny_model(seed=1)
    batch = make_batch()
    batch.labels = np.full_like(batch.labels, 0.7)
    trained, history = dn.train(model, batch, 2000, dn.TrainConfig(lr=3e-2))
    assert history.train_mse[-1] < 1e-6


def test_train_reduces_loss_substantially():
    trained, history = dn.train(tiny_model(seed=2), make_batch(), 3000,
                                dn.TrainConfig(lr=3e-3))
    assert history.train_mse[-1] < history.train_mse[0] / 100.0


def test_train_is_bit_reproducible():
    model = tiny_model(seed=4)
    batch = make_batch()
    a, ha = dn.train(model, batch, 250, dn.TrainConfig(lr=1e-3), seed=9)
    b, hb = dn.train(model, batch, 250, dn.TrainConfig(lr=1e-3), seed=9)
    assert model_equal(a, b)
    assert ha.train_mse == hb.train_mse


def test_train_minibatch_reproducible_and_seed_sensitive():
    model = tiny_model(seed=4)
    batch = make_batch(n=96)
    cfg = dn.TrainConfig(lr=1e-3, minibatch=32)
    a, _ = dn.train(model, batch, 120, cfg, seed=9)
    b, _ = dn.train(model, batch, 120, cfg, seed=9)
    c, _ = dn.train(model, batch, 120, cfg, seed=10)
    assert model_equal(a, b)
    assert not model_equal(a, c)


def test_train_history_iterations_strictly_increasing():
    _, history = dn.train(tiny_model(), make_batch(), 350,
                          dn.TrainConfig(history_stride=100))
    assert history.iterations == [0, 100, 200, 300, 350]
    assert all(b > a for a, b in zip(history.iterations, history.iterations[1:]))


def test_train_tracks_test_mse():
    _, history = dn.train(tiny_model(), make_batch(), 200,
                          dn.TrainConfig(history_stride=100),
                          test_batch=make_batch(seed=77))
    assert len(history.test_mse) == len(history.iterations)
    assert all(np.isfinite(v) for v in history.test_mse)


def test_train_divergence_guard():
    with pytest.raises(DivergenceError):
        dn.train(tiny_model(), make_batch(), 3000, dn.TrainConfig(lr=30.0))


def test_train_rejects_mismatched_batch():
    model = tiny_model()
    bad = make_batch()
    bad.branch_inputs = bad.branch_inputs[:, :2]
    with pytest.raises(DataError):
        dn.train(model, bad, 10)


def test_train_with_time_trunk():
    model = dn.build_model(m=2, lb=2, seed=9, latent_p=6, branch_hidden=(12,),
                           trunk_hidden=(12,), trunk_with_time=True)
    rng = np.random.default_rng(6)
    x = rng.normal(size=(40, 4))
    tin = rng.uniform(0, 1, size=(40, 5, 2))
    y = np.tanh(x[:, :1] + tin[:, :, 1])
    batch = types.SimpleNamespace(branch_inputs=x, trunk_coords=tin, labels=y)
    trained, history = dn.train(model, batch, 400, dn.TrainConfig(lr=3e-3))
    assert history.train_mse[-1] < history.train_mse[0]
    assert dn.predict_batch(trained, x, tin).shape == (40, 5)


# ---------------------------------------------------------------- checkpoint

def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    model, _ = dn.train(tiny_model(seed=21), make_batch(), 50)
    path = tmp_path / "model.json"
    dn.save_checkpoint(model, path)
    loaded = dn.load_checkpoint(path)
    assert model_equal(loaded, model)
    assert loaded.latent_p == model.latent_p
    assert loaded.meta == model.meta


def test_checkpoint_truncated_file_raises(tmp_path):
    model = tiny_model()
    path = tmp_path / "model.json"
    dn.save_checkpoint(model, path)
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(CheckpointError):
        dn.load_checkpoint(path)


def test_checkpoint_missing_file_raises(tmp_path):
    with pytest.raises(CheckpointError):
        dn.load_checkpoint(tmp_path / "nope.json")


def test_checkpoint_version_mismatch_raises(tmp_path):
    model = tiny_model()
    path = tmp_path / "model.json"
    dn.save_checkpoint(model, path)
    path.write_text(path.read_text().replace('"version": 1', '"version": 99'))
    with pytest.raises(CheckpointError):
        dn.load_checkpoint(path)


def test_checkpoint_shape_tampering_raises(tmp_path):
    model = tiny_model()
    path = tmp_path / "model.json"
    dn.save_checkpoint(model, path)
    # declare a different branch input width than the stored arrays
    path.write_text(path.read_text().replace('"layer_widths": [3, 16, 16, 8]',
                                             '"layer_widths": [4, 16, 16, 8]', 1))
    with pytest.raises(CheckpointError):
        dn.load_checkpoint(path)


def test_checkpoint_wrong_m_fails_at_inference(tmp_path):
    model = tiny_model(m=3)
    path = tmp_path / "model.json"
    dn.save_checkpoint(model, path)
    loaded = dn.load_checkpoint(path)
    with pytest.raises(ValueError):
        dn.forward(loaded, np.zeros(4), np.array([0.5]))  # m=4-style request


# ---------------------------------------------------------------- fine-tune

def test_fine_tune_zero_iterations_is_identity():
    model, _ = dn.train(tiny_model(seed=31), make_batch(), 100)
    ft = dn.fine_tune(model, make_batch(seed=99), 0)
    assert model_equal(ft, model)


def test_fine_tune_improves_on_new_case():
    base = make_batch(seed=50)
    model, _ = dn.train(tiny_model(seed=31), base, 1500, dn.TrainConfig(lr=3e-3))
    # "new case": same operator family, different input distribution
    new = make_batch(seed=51, n=80)
    new.labels = new.labels + 0.1

    zero_shot = dn.loss_mse(
        dn.predict_batch(model, new.branch_inputs, new.trunk_coords), new.labels
    )
    assert np.isfinite(zero_shot)
    tuned = dn.fine_tune(model, new, 800, dn.TrainConfig(lr=1e-3))
    tuned_mse = dn.loss_mse(
        dn.predict_batch(tuned, new.branch_inputs, new.trunk_coords), new.labels
    )
    assert tuned_mse <= zero_shot
