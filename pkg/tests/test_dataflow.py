"""dataflow tests: CSV I/O, normalization, padding, windows, batch builders."""

import numpy as np
import pytest

from riserop import dataflow as df
from riserop.errors import (
    ConfigError,
    DataError,
    NonNumericError,
    RaggedRowsError,
    UnsortedGridError,
)


def small_field(values=None, z=None, rate=60.0, **kw):
    if values is None:
        values = np.arange(12.0).reshape(4, 3) - 4.0
    if z is None:
        z = np.linspace(1.0, 3.0, values.shape[1])
    return df.StrainField(values=np.asarray(values, float), z_grid=z,
                          sample_rate=rate, **kw)


# ------------------------------------------------------------------- types

def test_field_rejects_unsorted_grid():
    with pytest.raises(UnsortedGridError):
        small_field(z=np.array([1.0, 3.0, 2.0]))


def test_field_rejects_nonfinite_values():
    bad = np.ones((2, 2))
    bad[1, 0] = np.nan
    with pytest.raises(DataError):
        small_field(values=bad, z=np.array([0.0, 1.0]))


def test_field_rejects_grid_length_mismatch():
    with pytest.raises(DataError):
        small_field(z=np.array([1.0, 2.0]))


def test_layout_requires_sensors():
    with pytest.raises(ConfigError):
        df.SensorLayout(np.array([]), np.array([1.0]))


def test_window_spec_rejects_overlap():
    with pytest.raises(ConfigError):
        df.WindowSpec((0, 100), (50, 150))


def test_window_spec_rejects_test_before_train():
    with pytest.raises(ConfigError):
        df.WindowSpec((100, 200), (0, 50))


def test_window_spec_rejects_large_look_back():
    with pytest.raises(ConfigError):
        df.WindowSpec((0, 10), (10, 20), look_back=10)


# ------------------------------------------------------------------ file I/O

def write_lines(tmp_path, lines, name="field.csv"):
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n")
    return path


GOOD_LINES = [
    "# case=toy rate_hz=60 U=1.5 scale=1",
    "0.5,1.5",
    "1,2",
    "3,4",
    "5,6",
]


def test_load_small_file_in_order(tmp_path):
    field = df.load_strain_field(write_lines(tmp_path, GOOD_LINES))
    assert field.values.shape == (3, 2)
    assert np.array_equal(field.values, [[1, 2], [3, 4], [5, 6]])
    assert np.array_equal(field.z_grid, [0.5, 1.5])
    assert field.sample_rate == 60.0
    assert field.case_label == "toy"
    assert field.max_velocity_U == 1.5


def test_load_rejects_unsorted_grid(tmp_path):
    lines = list(GOOD_LINES)
    lines[1] = "1.5,0.5"
    with pytest.raises(UnsortedGridError):
        df.load_strain_field(write_lines(tmp_path, lines))


def test_load_rejects_ragged_rows(tmp_path):
    lines = list(GOOD_LINES)
    lines[3] = "3,4,9"
    with pytest.raises(RaggedRowsError):
        df.load_strain_field(write_lines(tmp_path, lines))


def test_load_rejects_non_numeric_cells(tmp_path):
    lines = list(GOOD_LINES)
    lines[3] = "3,oops"
    with pytest.raises(NonNumericError):
        df.load_strain_field(write_lines(tmp_path, lines))


def test_load_rejects_missing_header(tmp_path):
    with pytest.raises(DataError):
        df.load_strain_field(write_lines(tmp_path, GOOD_LINES[1:]))


def test_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(7)
    field = small_field(values=rng.normal(size=(5, 4)) * 1e-3,
                        z=np.array([0.1, 0.7, 1.3, 2.9]),
                        case_label="rt", max_velocity_U=2.2)
    path = tmp_path / "rt.csv"
    df.save_strain_field(field, path)
    back = df.load_strain_field(path)
    assert np.array_equal(back.values, field.values)
    assert np.array_equal(back.z_grid, field.z_grid)
    assert back.sample_rate == field.sample_rate
    assert back.case_label == field.case_label
    assert back.max_velocity_U == field.max_velocity_U
    assert back.normalization_scale == field.normalization_scale


# ----------------------------------------------------------------- normalize

def test_normalize_divides_by_fifth_of_max():
    field = small_field(values=np.array([[10.0, -4.0], [1.0, 0.0]]),
                        z=np.array([0.0, 1.0]))
    out = df.normalize(field)
    assert out.normalization_scale == 2.0
    assert out.values[0, 0] == 5.0
    assert out.values[0, 1] == -2.0


def test_normalize_twice_is_identity_after_first():
    field = small_field(values=np.array([[10.0, -4.0], [1.0, 0.5]]),
                        z=np.array([0.0, 1.0]))
    once = df.normalize(field)
    twice = df.normalize(once)
    assert np.array_equal(once.values, twice.values)
    assert twice.normalization_scale == once.normalization_scale


def test_normalize_constant_field_maps_to_five():
    field = small_field(values=np.full((3, 2), 0.37), z=np.array([0.0, 1.0]))
    out = df.normalize(field)
    assert np.all(out.values == 5.0)


def test_normalize_rejects_all_zero():
    field = small_field(values=np.zeros((3, 2)), z=np.array([0.0, 1.0]))
    with pytest.raises(DataError):
        df.normalize(field)


def test_normalize_round_trip_recovers_raw():
    rng = np.random.default_rng(3)
    raw = rng.normal(size=(20, 5)) * 1e-4
    field = small_field(values=raw, z=np.linspace(1, 5, 5))
    out = df.normalize(field)
    rel = np.abs(out.values * out.normalization_scale - raw) / np.abs(raw).max()
    assert rel.max() < 1e-12


def test_normalize_stats_ignore_test_window():
    rng = np.random.default_rng(5)
    base = rng.normal(size=(100, 3))
    loud = base.copy()
    loud[80:] *= 100.0  # test rows only
    za = np.array([0.0, 1.0, 2.0])
    a = df.normalize(small_field(values=base, z=za), stat_window=(0, 80))
    b = df.normalize(small_field(values=loud, z=za), stat_window=(0, 80))
    assert a.normalization_scale == b.normalization_scale
    assert np.array_equal(a.values[:80], b.values[:80])
    spec = df.WindowSpec((0, 80), (80, 100))
    c = df.normalize(small_field(values=loud, z=za), stat_window=spec)
    assert c.normalization_scale == b.normalization_scale


# ----------------------------------------------------------------- padding

def test_pad_boundaries_adds_zero_columns():
    rng = np.random.default_rng(1)
    z = np.linspace(38.0 / 24, 38.0 * 23 / 24, 23)
    field = small_field(values=rng.normal(size=(6, 23)), z=z)
    padded = df.pad_boundaries(field, 0.0, 38.0)
    assert padded.n_locations == 25
    assert np.all(padded.values[:, 0] == 0.0)
    assert np.all(padded.values[:, -1] == 0.0)
    assert padded.z_grid[0] == 0.0 and padded.z_grid[-1] == 38.0
    assert np.array_equal(padded.values[:, 1:-1], field.values)


def test_pad_boundaries_rejects_covered_endpoints():
    field = small_field(values=np.ones((2, 3)), z=np.array([0.0, 1.0, 2.0]))
    with pytest.raises(DataError):
        df.pad_boundaries(field, 0.0, 3.0)


def test_drop_location_removes_column():
    field = small_field()
    out = df.drop_location(field, field.z_grid[1])
    assert out.n_locations == 2
    assert np.array_equal(out.values, field.values[:, [0, 2]])
    with pytest.raises(DataError):
        df.drop_location(field, 99.0)


# ------------------------------------------------------------ split_windows

def test_split_windows_table_style_counts():
    z = np.array([0.0, 1.0])
    field = small_field(values=np.zeros((45000, 2)), z=z)
    spec = df.WindowSpec((15000, 35000), (35000, 45000))
    train, test = df.split_windows(field, spec)
    assert train.n_steps == 20000
    assert test.n_steps == 10000

    field2 = small_field(values=np.zeros((35000, 2)), z=z)
    spec2 = df.WindowSpec((16000, 29000), (29000, 35000))
    train2, test2 = df.split_windows(field2, spec2)
    assert train2.n_steps == 13000
    assert test2.n_steps == 6000


def test_split_windows_share_no_step():
    field = small_field(values=np.arange(40.0)[:, None] * np.ones(2),
                        z=np.array([0.0, 1.0]))
    train, test = df.split_windows(field, df.WindowSpec((0, 20), (20, 40)))
    assert train.end <= test.start
    assert set(range(train.start, train.end)).isdisjoint(range(test.start, test.end))
    # views alias the field storage rather than copying
    assert train.values.base is field.values


def test_split_windows_out_of_range():
    field = small_field(values=np.zeros((30, 2)), z=np.array([0.0, 1.0]))
    with pytest.raises(DataError):
        df.split_windows(field, df.WindowSpec((0, 20), (20, 40)))


# ------------------------------------------- build_reconstruction_batch

def recon_layout(field, n_obs=3):
    z = field.z_grid
    obs = np.linspace(z[0], z[-1], n_obs + 2)[1:-1]
    return df.SensorLayout(obs, z.copy())


def test_reconstruction_batch_shape():
    rng = np.random.default_rng(0)
    field = small_field(values=rng.normal(size=(120, 9)), z=np.linspace(0, 8, 9))
    batch = df.build_reconstruction_batch(field, recon_layout(field), (10, 110))
    assert batch.branch_inputs.shape == (100, 3)
    assert batch.labels.shape == (100, 9)
    assert batch.trunk_coords.min() >= 0.0 and batch.trunk_coords.max() <= 1.0


def test_reconstruction_batch_on_grid_is_exact():
    rng = np.random.default_rng(4)
    field = small_field(values=rng.normal(size=(6, 5)), z=np.linspace(0, 4, 5))
    layout = df.SensorLayout(field.z_grid[[1, 3]], field.z_grid[[0, 2, 4]])
    batch = df.build_reconstruction_batch(field, layout, (0, 6))
    assert np.array_equal(batch.branch_inputs, field.values[:, [1, 3]])
    assert np.array_equal(batch.labels, field.values[:, [0, 2, 4]])


def test_reconstruction_batch_hand_oracle():
    values = np.array([[0.0, 2.0], [1.0, 3.0], [2.0, 6.0], [-2.0, 0.0]])
    field = small_field(values=values, z=np.array([0.0, 1.0]))
    layout = df.SensorLayout(np.array([0.25]), np.array([0.5]))
    batch = df.build_reconstruction_batch(field, layout, (0, 4))
    # linear interpolation by hand
    want_branch = 0.75 * values[:, 0] + 0.25 * values[:, 1]
    want_label = 0.5 * values[:, 0] + 0.5 * values[:, 1]
    assert np.allclose(batch.branch_inputs[:, 0], want_branch, rtol=0, atol=1e-15)
    assert np.allclose(batch.labels[:, 0], want_label, rtol=0, atol=1e-15)


def test_reconstruction_batch_rejects_long_window():
    field = small_field(values=np.zeros((10, 3)) + 1.0)
    with pytest.raises(DataError):
        df.build_reconstruction_batch(field, recon_layout(field), (0, 11))


# ------------------------------------------------ build_forecast_batch

def test_forecast_batch_counts():
    rng = np.random.default_rng(2)
    field = small_field(values=rng.normal(size=(10, 4)), z=np.linspace(0, 3, 4))
    layout = recon_layout(field)
    batch = df.build_forecast_batch(field, layout, (0, 10), lb=3, horizon=0)
    assert batch.branch_inputs.shape == (7, 9)
    assert batch.labels.shape == (7, 4)


def test_forecast_lb1_h0_matches_shifted_reconstruction():
    rng = np.random.default_rng(6)
    field = small_field(values=rng.normal(size=(30, 5)), z=np.linspace(0, 4, 5))
    layout = recon_layout(field)
    fc = df.build_forecast_batch(field, layout, (5, 25), lb=1, horizon=0)
    recon_in = df.build_reconstruction_batch(field, layout, (5, 24))
    recon_out = df.build_reconstruction_batch(field, layout, (6, 25))
    assert np.array_equal(fc.branch_inputs, recon_in.branch_inputs)
    assert np.array_equal(fc.labels, recon_out.labels)


def test_forecast_batch_hand_enumerated_stacks():
    # 5 steps, 2 observers on grid, lb=2: values[t, s] = 10*t + s
    t = np.arange(5.0)[:, None]
    s = np.arange(3.0)[None, :]
    field = small_field(values=10 * t + s, z=np.array([0.0, 1.0, 2.0]))
    layout = df.SensorLayout(np.array([0.0, 2.0]), np.array([1.0]))
    batch = df.build_forecast_batch(field, layout, (0, 5), lb=2, horizon=1)
    # targets j = 2, 3 with labels at j+1; branch = [t=j-2, t=j-1] x [z0, z2]
    assert batch.branch_inputs.shape == (2, 4)
    assert np.array_equal(batch.branch_inputs,
                          [[0.0, 2.0, 10.0, 12.0],
                           [10.0, 12.0, 20.0, 22.0]])
    assert np.array_equal(batch.labels, [[31.0], [41.0]])


def test_forecast_batch_rejects_undersized_window():
    field = small_field(values=np.ones((6, 3)))
    layout = recon_layout(field)
    with pytest.raises(DataError):
        df.build_forecast_batch(field, layout, (0, 6), lb=4, horizon=2)


def test_forecast_branch_never_sees_label_step():
    # values encode their own time step, so leakage would be visible as a
    # branch entry >= the label's encoded step
    rng = np.random.default_rng(12)
    for trial in range(20):
        n = int(rng.integers(8, 40))
        lb = int(rng.integers(1, 4))
        horizon = int(rng.integers(0, 3))
        if n - lb - horizon < 1:
            continue
        field = small_field(values=np.repeat(np.arange(float(n))[:, None], 4, axis=1),
                            z=np.linspace(0, 3, 4))
        layout = df.SensorLayout(np.array([0.7, 2.1]), np.array([1.5]))
        batch = df.build_forecast_batch(field, layout, (0, n), lb=lb, horizon=horizon)
        for i in range(batch.n_samples):
            assert batch.branch_inputs[i].max() < batch.labels[i].min()
