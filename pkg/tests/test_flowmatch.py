import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fmcast.flowmatch import (
    ArrayPairs,
    SamplerPairs,
    TrainingDiverged,
    deterministic_predict,
    fm_loss,
    initial_direction_mean,
    least_squares_table,
    sample_path,
    squared_error,
    train_deterministic,
    train_fm,
    velocity_fn,
    write_loss_csv,
)
from fmcast.nncore import MLP, MLPSpec
from fmcast.nncore.tensor import Tensor
from fmcast.odesolve import SolverConfig, solve


class Stub:
    """Velocity model given by a plain function of (t, x)."""

    def __init__(self, f, dim):
        self.f = f
        self.spec = MLPSpec(dim=dim)

    def __call__(self, params, x, t, cond=None):
        x = getattr(x, "data", x)
        t = np.broadcast_to(np.asarray(t, float), (len(x),)).reshape((-1,) + (1,) * (x.ndim - 1))
        return Tensor(self.f(t, x))


def point_mass(mu):
    mu = np.asarray(mu, float)
    return SamplerPairs(lambda rng, n: (np.broadcast_to(mu, (n, len(mu))).copy(), None))


def test_sample_path_endpoints():
    rng = np.random.default_rng(0)
    x1 = np.array([2.0, 4.0])
    p0 = sample_path(x1, rng, t=0.0)
    np.testing.assert_array_equal(p0.xt, p0.x0)
    p1 = sample_path(x1, rng, t=1.0)
    np.testing.assert_array_equal(p1.xt, x1)


def test_sample_path_midpoint_example():
    class Zero:
        def standard_normal(self, shape):
            return np.zeros(shape)

    p = sample_path(np.array([2.0, 4.0]), Zero(), t=0.5)
    np.testing.assert_array_equal(p.xt, [1.0, 2.0])
    np.testing.assert_array_equal(p.dxt, [2.0, 4.0])


def test_oracle_velocity_has_zero_loss():
    mu = np.array([0.5, -1.5, 2.0])
    oracle = Stub(lambda t, x: (mu - x) / (1 - t), 3)
    x1 = np.broadcast_to(mu, (64, 3))
    t = np.random.default_rng(1).uniform(0, 0.99, size=64)
    assert fm_loss(oracle, {}, x1, None, np.random.default_rng(2), t=t) == pytest.approx(0.0, abs=1e-20)


def test_zero_velocity_loss_expectation():
    mu = np.array([1.0, -2.0, 0.5, 3.0])
    zero = Stub(lambda t, x: np.zeros_like(x), 4)
    n = 100_000
    loss = fm_loss(zero, {}, np.broadcast_to(mu, (n, 4)), None, np.random.default_rng(3), reduction="sum")
    expected = mu @ mu + len(mu)
    assert loss == pytest.approx(expected, rel=0.02)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(1, 4), st.integers(0, 2**32 - 1), st.sampled_from(["mean", "sum"]))
def test_squared_error_is_permutation_invariant(b, d, seed, reduction):
    rng = np.random.default_rng(seed)
    pred, target = rng.normal(size=(b, d)), rng.normal(size=(b, d))
    perm = rng.permutation(b)
    a = squared_error(Tensor(pred), target, reduction).data
    c = squared_error(Tensor(pred[perm]), target[perm], reduction).data
    assert float(a) == pytest.approx(float(c), rel=1e-12, abs=1e-15)


def test_reductions_differ_by_entry_count():
    rng = np.random.default_rng(4)
    pred, target = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    mean = float(squared_error(Tensor(pred), target, "mean").data)
    total = float(squared_error(Tensor(pred), target, "sum").data)
    assert total == pytest.approx(3 * mean, rel=1e-12)


def test_zero_training_steps_returns_init():
    net = MLP(MLPSpec(dim=2))
    init = net.init(np.random.default_rng(0))
    res = train_fm(net, point_mass([1.0, 2.0]), steps=0, rng=np.random.default_rng(1), params=init)
    assert res.losses == []
    for k in init:
        np.testing.assert_array_equal(res.params[k], init[k])
    res = train_deterministic(MLP(MLPSpec(dim=1, cond_dim=1)), ArrayPairs(np.zeros((3, 1)), np.zeros((3, 1))),
                              steps=0, rng=np.random.default_rng(1))
    assert res.losses == []


def test_training_does_not_mutate_initial_params():
    net = MLP(MLPSpec(dim=2, hidden=8, depth=1))
    init = net.init(np.random.default_rng(0))
    snapshot = {k: v.copy() for k, v in init.items()}
    train_fm(net, point_mass([1.0, 2.0]), steps=3, lr=1e-2, rng=np.random.default_rng(1), params=init)
    for k in init:
        np.testing.assert_array_equal(init[k], snapshot[k])


@pytest.fixture(scope="module")
def point_mass_model():
    mu = np.array([1.5, -0.5])
    net = MLP(MLPSpec(dim=2, hidden=32, depth=2))
    res = train_fm(net, point_mass(mu), steps=600, lr=3e-3, batch_size=128,
                   rng=np.random.default_rng(5), schedule="cosine")
    return net, res.params, mu


def test_point_mass_single_euler_step(point_mass_model):
    net, params, mu = point_mass_model
    x0 = np.random.default_rng(6).standard_normal((2000, 2))
    one_step = x0 + velocity_fn(net, params)(0.0, x0)
    assert np.abs(one_step.mean(axis=0) - mu).max() <= 0.1


def test_initial_direction_mean_of_point_mass(point_mass_model):
    net, params, mu = point_mass_model
    m = initial_direction_mean(net, params, None, 10_000, np.random.default_rng(7))
    assert np.abs(m - mu).max() <= 0.1


def test_initial_direction_mean_untrained_is_noise_mean():
    net = MLP(MLPSpec(dim=3))
    n = 10_000
    m = initial_direction_mean(net, net.init(np.random.default_rng(0)), None, n, np.random.default_rng(8))
    assert np.abs(m).max() <= 3 / np.sqrt(n)


@pytest.fixture(scope="module")
def bimodal_1d_model():
    net = MLP(MLPSpec(dim=1, hidden=64, depth=3))
    data = SamplerPairs(lambda rng, n: (np.where(rng.uniform(size=(n, 1)) < 0.5, -1.0, 1.0), None))
    res = train_fm(net, data, steps=1500, lr=2e-3, batch_size=256, rng=np.random.default_rng(9),
                   schedule="cosine")
    return net, res.params


def test_bimodal_flow_recovers_both_modes(bimodal_1d_model):
    net, params = bimodal_1d_model
    x0 = np.random.default_rng(10).standard_normal((2000, 1))
    x1 = solve(velocity_fn(net, params), x0, cfg=SolverConfig("midpoint", 64))
    assert (x1 > 0).mean() == pytest.approx(0.5, abs=0.05)
    assert np.median(np.abs(np.abs(x1) - 1.0)) < 0.1


def test_bimodal_single_step_is_the_mean_not_a_mode(bimodal_1d_model):
    net, params = bimodal_1d_model
    m = initial_direction_mean(net, params, None, 10_000, np.random.default_rng(11))
    assert abs(m[0]) <= 0.1


def test_lookup_table_least_squares_is_conditional_mean():
    rng = np.random.default_rng(12)
    n = 16
    kernel = rng.uniform(size=(n, n)) ** 3
    kernel /= kernel.sum(axis=1, keepdims=True)
    values = rng.normal(size=n)
    start = rng.dirichlet(np.ones(n))
    states = np.repeat(np.arange(n), n)
    nexts = np.tile(np.arange(n), n)
    weights = start[states] * kernel[states, nexts]
    table = least_squares_table(states, values[nexts], weights, n)
    np.testing.assert_allclose(table[:, 0], kernel @ values, rtol=0, atol=1e-10)


def scalar_pm1_pairs(rng, n):
    y = rng.uniform(-2, 2, size=(n, 1))
    return y + np.where(rng.uniform(size=(n, 1)) < 0.5, -1.0, 1.0), y


def test_deterministic_model_learns_conditional_mean():
    net = MLP(MLPSpec(dim=1, cond_dim=1, hidden=32, depth=2))
    res = train_deterministic(net, SamplerPairs(scalar_pm1_pairs), steps=800, lr=3e-3, batch_size=256,
                              rng=np.random.default_rng(13), schedule="cosine")
    y = np.linspace(-1.5, 1.5, 31)[:, None]
    w = deterministic_predict(net, res.params, y).data
    assert np.abs(w - y).max() <= 0.1


def test_loss_csv_columns(tmp_path):
    write_loss_csv(tmp_path / "loss.csv", [1.5, 0.25], [1.0, 2.5])
    lines = (tmp_path / "loss.csv").read_text().splitlines()
    assert lines == ["step,loss,wall_ms", "0,1.5,1.000", "1,0.25,2.500"]


def test_non_finite_loss_aborts():
    class Net:
        spec = MLPSpec(dim=1)

        def init(self, rng):
            return {"w": np.zeros(1)}

        def __call__(self, params, x, t, cond=None):
            return params["w"] * np.inf

    with pytest.raises(TrainingDiverged) as info:
        train_fm(Net(), point_mass([1.0]), steps=3, rng=np.random.default_rng(0))
    assert info.value.step == 0
