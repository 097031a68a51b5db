import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irnn.datasets import (
    DatasetFormatError,
    denormalize_targets,
    generate_pendulum_dataset,
    load_dataset,
    normalize_targets,
    oscillator_trajectory,
    rk4_trajectory,
    save_dataset,
    xor_arrays,
    xor_dataset,
)


def test_xor_table():
    rows = xor_dataset()
    assert [r.x for r in rows] == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert [r.y_xor for r in rows] == [0, 1, 1, 0]
    assert [r.y_nor for r in rows] == [1, 0, 0, 0]
    X, Y = xor_arrays()
    assert X.shape == (4, 2) and Y.shape == (4, 2)


def test_trajectory_examples():
    assert np.array_equal(oscillator_trajectory(1.0, 0.5, 0.0, 0.0, 10), np.zeros(10))
    x = oscillator_trajectory(1.0, 0.0, 1.0, 0.0, 50)
    assert np.allclose(x, np.cos(0.1 * np.arange(50)), atol=1e-12)
    crit = oscillator_trajectory(1.5, 1.5, 1.0, 0.0, 20)
    t = 0.1 * np.arange(20)
    assert np.allclose(crit, np.exp(-1.5 * t) * (1 + 1.5 * t), atol=1e-12)


def test_trajectory_invalid():
    with pytest.raises(ValueError):
        oscillator_trajectory(0.0, 0.5, 1.0, 0.0)
    with pytest.raises(ValueError):
        oscillator_trajectory(1.0, -0.1, 1.0, 0.0)


@pytest.mark.parametrize("omega0,delta", [(1.5, 0.3), (1.2, 1.2), (1.1, 1.9), (1.0, 1.0 + 1e-10)])
def test_regimes_match_rk4(omega0, delta):
    ref = rk4_trajectory(omega0, delta, 1.3, -0.7, 50)
    assert np.max(np.abs(oscillator_trajectory(omega0, delta, 1.3, -0.7, 50) - ref)) <= 1e-6


def test_continuity_across_critical_line():
    base = oscillator_trajectory(1.5, 1.5, 1.0, 1.0, 50)
    for eps in (1e-7, -1e-7):
        assert np.max(np.abs(oscillator_trajectory(1.5, 1.5 + eps, 1.0, 1.0, 50) - base)) < 1e-5


def test_vectorized_matches_scalar():
    om = np.array([1.2, 1.5, 1.1])
    de = np.array([0.4, 1.5, 1.8])
    X = oscillator_trajectory(om, de, np.ones(3), np.zeros(3), 30)
    for i in range(3):
        assert np.array_equal(X[i], oscillator_trajectory(om[i], de[i], 1.0, 0.0, 30))


def test_normalize_examples():
    assert np.allclose(normalize_targets(1.0, 0.0), [0.1, 0.1])
    assert np.allclose(normalize_targets(2.0, 2.0), [0.9, 0.9])
    assert np.allclose(normalize_targets(1.5, 1.0), [0.5, 0.5])
    with pytest.raises(ValueError):
        normalize_targets(2.5, 1.0)


@given(st.floats(1.0, 2.0), st.floats(0.0, 2.0))
def test_normalize_round_trip(om, de):
    y = normalize_targets(om, de)
    assert np.all((y >= 0.1) & (y <= 0.9))
    assert np.allclose(denormalize_targets(y), [om, de], atol=1e-12)


def test_generate_split_and_determinism():
    a = generate_pendulum_dataset(5, L=10, seed=3)
    assert (a.meta.n_train, a.meta.n_test) == (4, 1)
    b = generate_pendulum_dataset(5, L=10, seed=3)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.targets, b.targets)
    big = generate_pendulum_dataset(1000, L=20, seed=0)
    assert big.split("train")[0].shape == (800, 20) and big.split("test")[0].shape == (200, 20)
    assert len({tuple(r) for r in np.c_[big.omega0, big.delta, big.x0, big.v0]}) == 1000
    assert np.array_equal(big.X[:, 0], big.x0)


def test_generate_distributions():
    ds = generate_pendulum_dataset(20_000, L=5, seed=1)
    assert ds.omega0.min() >= 1.0 and ds.omega0.max() < 2.0
    assert ds.delta.min() >= 0.0 and ds.delta.max() < 2.0
    assert abs(ds.x0.std() - 2.0) < 0.05 and abs(ds.v0.std() - 2.0) < 0.05


def test_sample_view():
    ds = generate_pendulum_dataset(5, L=10, seed=0)
    s = ds.sample(2)
    assert s.omega0 == ds.omega0[2] and np.array_equal(s.trajectory, ds.X[2])


def test_save_load_round_trip(tmp_path):
    ds = generate_pendulum_dataset(10, L=8, seed=4)
    path = tmp_path / "d.csv"
    save_dataset(ds, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# IRNN-PENDULUM v1, L=8, dt=0.1, seed=4"
    assert lines[1].split(",")[-5:] == ["omega0", "delta", "x0", "v0", "split"]
    back = load_dataset(path)
    assert np.array_equal(back.X, ds.X) and np.array_equal(back.omega0, ds.omega0)
    assert back.meta == ds.meta


def test_load_errors(tmp_path):
    ds = generate_pendulum_dataset(5, L=4, seed=0)
    path = tmp_path / "d.csv"
    save_dataset(ds, path)
    lines = path.read_text().splitlines()
    bad = lines[:3] + [lines[3].replace(",", ",x", 1)] + lines[4:]
    path.write_text("\n".join(bad) + "\n")
    with pytest.raises(DatasetFormatError) as info:
        load_dataset(path)
    assert info.value.line == 4
    path.write_text("nonsense\n")
    with pytest.raises(DatasetFormatError):
        load_dataset(path)
    path.write_text("\n".join(lines[:2] + [lines[2].rsplit(",", 2)[0]]) + "\n")
    with pytest.raises(DatasetFormatError) as info:
        load_dataset(path)
    assert info.value.line == 3


@settings(max_examples=20, deadline=None)
@given(om=st.floats(1.0, 2.0), de=st.floats(0.0, 2.0), x0=st.floats(-4, 4), v0=st.floats(-4, 4))
def test_closed_form_property(om, de, x0, v0):
    ref = rk4_trajectory(om, de, x0, v0, 50)
    assert np.max(np.abs(oscillator_trajectory(om, de, x0, v0, 50) - ref)) <= 1e-6


@settings(max_examples=30, deadline=None)
@given(om=st.floats(1.0, 2.0), x0=st.floats(-4, 4), v0=st.floats(-4, 4))
def test_regime_continuity(om, x0, v0):
    lo = oscillator_trajectory(om, om - 1e-6, x0, v0, 50)
    hi = oscillator_trajectory(om, om + 1e-6, x0, v0, 50)
    assert np.max(np.abs(lo - hi)) <= 1e-4


@settings(max_examples=30, deadline=None)
@given(om=st.floats(1.0, 2.0), de=st.floats(0.1, 2.0), x0=st.floats(-4, 4), v0=st.floats(-4, 4))
def test_energy_decay(om, de, x0, v0):
    L = int(np.ceil(4 / de / 0.1)) + 1
    x = np.abs(oscillator_trajectory(om, de, x0, v0, max(L, 8)))
    q = len(x) // 4
    assert x[-q:].max() <= x[:q].max() + 1e-12
