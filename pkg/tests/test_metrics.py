import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fmcast import metrics
from fmcast.dynsys import Field, Trajectory

from oracles import loop_dft2, loop_ke_error, loop_kinetic_energy, loop_sharpness


def make_field(rho, mx, my, t=0.0):
    return Field(np.stack([rho, mx, my]), sim_time=t)


def random_field(rng, h=8, w=8, t=0.0):
    rho = rng.uniform(0.5, 2.0, size=(h, w))
    return make_field(rho, rng.normal(size=(h, w)), rng.normal(size=(h, w)), t)


fields = st.integers(0, 2**32 - 1).map(lambda s: random_field(np.random.default_rng(s)))


@settings(max_examples=30, deadline=None)
@given(fields)
def test_kinetic_energy_matches_loop(f):
    assert metrics.kinetic_energy(f) == pytest.approx(loop_kinetic_energy(*f.channels), rel=1e-12, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(fields, fields)
def test_ke_error_matches_loop(a, b):
    got = metrics.ke_error(a, b)
    assert got == pytest.approx(loop_ke_error(a.channels, b.channels), rel=1e-12, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(fields)
def test_sharpness_matches_loop(f):
    e = metrics.energy_density(f)
    assert metrics.sharpness(f) == pytest.approx(loop_sharpness(e), rel=1e-12, abs=1e-12)


def test_negative_density_is_clamped_in_the_oracle_and_the_metric():
    rng = np.random.default_rng(0)
    f = make_field(rng.uniform(-1, 1, size=(4, 4)), rng.normal(size=(4, 4)), rng.normal(size=(4, 4)))
    assert metrics.kinetic_energy(f) >= 0
    assert metrics.kinetic_energy(f) == pytest.approx(loop_kinetic_energy(*f.channels), rel=1e-12)


def test_ke_error_example():
    one = np.ones((4, 4))
    real = make_field(one, 0 * one, 0 * one)
    pred = make_field(one, 3.0 * one, 0 * one)
    assert metrics.ke_error(real, pred) == pytest.approx(0.5 * 9.0, rel=1e-15)
    assert metrics.ke_error(real, real) == 0.0


def test_ke_error_is_weighted_by_the_real_density():
    real = make_field(np.full((2, 2), 2.0), np.zeros((2, 2)), np.zeros((2, 2)))
    pred = make_field(np.ones((2, 2)), np.ones((2, 2)), np.zeros((2, 2)))
    assert metrics.ke_error(real, pred) == pytest.approx(0.5 * 2.0 * 1.0, rel=1e-15)


def test_kinetic_energy_example():
    # rho = 2 and u = (1, 1): momentum (2, 2) and energy rho |u|^2 / 2 = 2
    f = make_field(np.full((4, 4), 2.0), np.full((4, 4), 2.0), np.full((4, 4), 2.0))
    assert metrics.kinetic_energy(f) == pytest.approx(2.0, rel=1e-15)


def test_ke_error_rejects_mismatched_shapes():
    with pytest.raises(ValueError):
        metrics.ke_error(random_field(np.random.default_rng(0), 4, 4), random_field(np.random.default_rng(0), 4, 8))


def test_spectrum_of_constant_flow_is_in_bin_zero():
    one = np.ones((8, 8))
    spec = metrics.energy_spectrum(make_field(one, 0.5 * one, -1.0 * one))
    assert spec.energy_density[0] == pytest.approx(0.5 * (0.25 + 1.0), rel=1e-13)
    np.testing.assert_allclose(spec.energy_density[1:], 0.0, atol=1e-15)


@pytest.mark.parametrize("amp", [0.5, 2.0])
def test_spectrum_of_single_mode(amp):
    n = 16
    x = np.arange(n) / n
    u = np.broadcast_to(amp * np.cos(2 * np.pi * 3 * x), (n, n))
    one = np.ones((n, n))
    spec = metrics.energy_spectrum(make_field(one, u, 0 * one))
    assert spec.energy_density[3] == pytest.approx(amp**2 / 4, rel=1e-12)
    others = np.delete(spec.energy_density, 3)
    np.testing.assert_allclose(others, 0.0, atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(fields)
def test_spectrum_satisfies_parseval(f):
    spec = metrics.energy_spectrum(f)
    assert spec.energy_density.sum() == pytest.approx(metrics.kinetic_energy(f), rel=1e-8)


def test_fft_matches_naive_dft():
    f = np.random.default_rng(1).normal(size=(4, 8))
    np.testing.assert_allclose(np.fft.fft2(f), loop_dft2(f), atol=1e-10)


def test_spectrum_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        metrics.energy_spectrum(random_field(np.random.default_rng(0), 6, 8))


def test_sharpness_examples():
    one = np.ones((8, 8))
    assert metrics.sharpness(make_field(one, 0.3 * one, 0.1 * one)) == 0.0
    # a unit spike of energy: Laplacian -4 at the spike and +1 at four neighbours
    mx = np.zeros((8, 8))
    mx[3, 4] = np.sqrt(2.0)
    spike = make_field(one, mx, 0 * one)
    assert metrics.sharpness(spike) == pytest.approx(20 / 64, rel=1e-13)
    double = make_field(one, np.sqrt(2.0) * mx, 0 * one)
    assert metrics.sharpness(double) == pytest.approx(4 * metrics.sharpness(spike), rel=1e-13)


def test_replicate_boundary_differs_only_at_the_edges():
    e = np.random.default_rng(2).normal(size=(6, 6))
    per, rep = metrics.laplacian(e, "periodic"), metrics.laplacian(e, "replicate")
    np.testing.assert_array_equal(per[1:-1], rep[1:-1])
    with pytest.raises(ValueError):
        metrics.laplacian(e, "mirror")


def test_straightness_of_a_straight_constant_speed_path_is_zero():
    a, b = np.array([1.0, -2.0]), np.array([3.0, 5.0])
    path = [(t, (1 - t) * a + t * b) for t in np.linspace(0, 1, 9)]
    assert metrics.straightness(path) == pytest.approx(0.0, abs=1e-24)


def test_straightness_detects_bends_and_speed_changes():
    bend = [(0.0, np.array([0.0, 0.0])), (0.5, np.array([0.5, 1.0])), (1.0, np.array([1.0, 0.0]))]
    # segment velocities (1, 2) and (1, -2) against chord (1, 0)
    assert metrics.straightness(bend) == pytest.approx(4.0, rel=1e-15)
    uneven = [(0.0, np.array([0.0])), (0.5, np.array([0.8])), (1.0, np.array([1.0]))]
    assert metrics.straightness(uneven) > 0


def test_straightness_batched_matches_per_path():
    rng = np.random.default_rng(3)
    xs = [rng.normal(size=(5, 2)) for _ in range(4)]
    path = list(zip(np.linspace(0, 1, 4), xs))
    batched = metrics.straightness(path, batched=True)
    for i in range(5):
        assert batched[i] == pytest.approx(metrics.straightness([(t, x[i]) for t, x in path]), rel=1e-12)
    with pytest.raises(ValueError):
        metrics.straightness(path[:2])


def _traj(rng, n=3):
    return Trajectory([random_field(rng, t=float(k)) for k in range(n)], 1.0)


def test_evaluate_rollout_of_a_copy_has_zero_error():
    real = _traj(np.random.default_rng(4))
    rows = metrics.evaluate_rollout(real, real)
    assert [r["step"] for r in rows] == [0, 1, 2]
    for r in rows:
        assert r["ke_error"] == 0.0
        assert r["E_real"] == r["E_pred"] and r["sharp_real"] == r["sharp_pred"]
    with pytest.raises(ValueError):
        metrics.evaluate_rollout(real, _traj(np.random.default_rng(4), 2))


def test_average_tables():
    rng = np.random.default_rng(5)
    real = _traj(rng)
    a, b = metrics.evaluate_rollout(real, _traj(rng)), metrics.evaluate_rollout(real, _traj(rng))
    assert metrics.average_tables([a]) == a
    avg = metrics.average_tables([a, b])
    for k in range(3):
        assert avg[k]["ke_error"] == pytest.approx(0.5 * (a[k]["ke_error"] + b[k]["ke_error"]), rel=1e-15)
    with pytest.raises(ValueError):
        metrics.average_tables([])
    with pytest.raises(ValueError):
        metrics.average_tables([a, b[:2]])
