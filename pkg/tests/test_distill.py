import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fmcast.distill import (
    AddConfig,
    CouplingPool,
    DiscriminatorHead,
    GeneratorHead,
    ProgressiveStage,
    add_train,
    blend,
    direct_distill,
    direct_objective,
    discriminator_loss,
    generator_terms,
    gradient_penalty,
    hinge_fake,
    hinge_real,
    one_step_sample,
    progressive_distill,
    rectify,
    teacher_solutions,
)
from fmcast.flowmatch import SamplerPairs
from fmcast.nncore import MLP, MLPSpec, value_and_grad
from fmcast.nncore import tensor as T
from fmcast.nncore.tensor import Tensor, no_grad
from fmcast.odesolve import SolverConfig

from oracles import central_fd, rel_error


class AffineField:
    """``v(x) = a * x + c`` with trainable scalar ``a`` and vector ``c``."""

    def __init__(self, a=0.0, c=(0.0, 0.0)):
        self.a, self.c = a, np.asarray(c, float)

    def init(self, rng=None):
        return {"a": np.array(self.a), "c": self.c.copy()}

    def __call__(self, params, x, t, cond=None):
        return T.as_tensor(x) * params["a"] + params["c"]


def gaussian_pairs(rng, n):
    return rng.normal(size=(n, 2)) + np.array([1.0, -1.0]), None


DATA = SamplerPairs(gaussian_pairs)


def test_teacher_with_constant_field_is_a_shift():
    net = AffineField(c=(0.5, -2.0))
    x0 = np.random.default_rng(0).normal(size=(7, 2))
    out = teacher_solutions(net, net.init(), x0, None, SolverConfig("midpoint", 10))
    np.testing.assert_allclose(out, x0 + net.c, rtol=0, atol=1e-14)


def test_constant_field_is_its_own_direct_distillation():
    net = AffineField(c=(0.5, -2.0))
    params = net.init()
    x0 = np.random.default_rng(1).normal(size=(16, 2))
    teacher = teacher_solutions(net, params, x0, None, SolverConfig("euler", 4))
    assert float(direct_objective(net, params, x0, None, teacher).data) == pytest.approx(0.0, abs=1e-28)
    # Adam rescales round-off gradients to full steps, so check the residual rather than the parameters
    res = direct_distill(net, params, DATA, steps=5, lr=0.0, batch_size=16, rng=np.random.default_rng(2))
    assert max(res.losses) <= 1e-20


def test_direct_distillation_fits_linear_flow():
    # v = a x has flow x0 * exp(a); the one-step student must learn a' = exp(a) - 1
    net = AffineField(a=0.3)
    params = net.init()
    res = direct_distill(net, params, DATA, SolverConfig("midpoint", 64), steps=800, lr=2e-2,
                         batch_size=64, rng=np.random.default_rng(3), schedule="cosine")
    assert float(res.params["a"]) == pytest.approx(np.expm1(0.3), abs=2e-3)


def test_coupling_pool_reuses_solves():
    net = AffineField(c=(1.0, 0.0))
    pool = CouplingPool(net, net.init(), DATA, SolverConfig("euler", 2), batch_size=4, size=16)
    rng = np.random.default_rng(4)
    for _ in range(8):
        x0, cond, x1 = pool.sample(rng)
        np.testing.assert_allclose(x1, x0 + net.c)
    assert pool.solves == 32
    fresh = CouplingPool(net, net.init(), DATA, SolverConfig("euler", 2), batch_size=4)
    for _ in range(3):
        fresh.sample(rng)
    assert fresh.solves == 12


@pytest.mark.parametrize("n, ms", [(2, [1]), (4, [2, 1]), (16, [8, 4, 2, 1])])
def test_progressive_stage_counts(n, ms):
    net = AffineField(c=(1.0, 2.0))
    stages = progressive_distill(net, net.init(), DATA, n_steps=n, steps_per_stage=2, lr=1e-3,
                                 batch_size=4, rng=np.random.default_rng(5))
    assert [s.m for s in stages] == ms


@pytest.mark.parametrize("n", [0, 1, 3, 12])
def test_progressive_rejects_non_powers_of_two(n):
    net = AffineField()
    with pytest.raises(ValueError):
        progressive_distill(net, net.init(), DATA, n_steps=n, steps_per_stage=1)


def test_progressive_constant_field_has_zero_residual():
    net = AffineField(c=(1.0, 2.0))
    stages = progressive_distill(net, net.init(), DATA, n_steps=8, steps_per_stage=20, lr=0.0,
                                 batch_size=8, rng=np.random.default_rng(6))
    assert max(max(s.losses) for s in stages) <= 1e-20


def test_progressive_linear_field_follows_closed_form():
    # two steps of x(1 + a/m) equal one step x(1 + a'/(m/2)) when a' = a + a^2 / (2m)
    m, a = 4, 0.4
    net = AffineField(a=a)
    (stage, _) = progressive_distill(net, net.init(), DATA, n_steps=m, steps_per_stage=1500, lr=1e-2,
                                     batch_size=32, rng=np.random.default_rng(7), schedule="cosine")[:2]
    assert float(stage.params["a"]) == pytest.approx(a + a * a / (2 * m), abs=1e-3)


def test_progressive_stage_sampling_counts_evaluations():
    net = AffineField(c=(1.0, 0.0))
    stage = ProgressiveStage(4, net.init(), net)
    x0 = np.zeros((3, 2))
    np.testing.assert_allclose(stage(x0), np.broadcast_to([1.0, 0.0], (3, 2)))
    assert stage.evaluations == 4
    with pytest.raises(ValueError):
        one_step_sample(stage, x0)
    final = ProgressiveStage(1, net.init(), net)
    one_step_sample(final, x0)
    assert final.evaluations == 1


def test_generator_head_is_one_euler_step_at_init():
    net = MLP(MLPSpec(dim=2, hidden=8, depth=1))
    rng = np.random.default_rng(8)
    params = net.init(rng)
    params["out.w"] = rng.normal(size=params["out.w"].shape)
    head = GeneratorHead(net, params)
    x0 = rng.normal(size=(5, 2))
    with no_grad():
        euler = x0 + net(params, x0, 0.0).data
    np.testing.assert_array_equal(head(x0), euler)
    assert head.evaluations == 1


def test_hinge_values_and_saturation():
    np.testing.assert_array_equal(hinge_fake(np.array([-1.0, 0.0, 1.0, 3.0])).data, [2.0, 1.0, 0.0, 0.0])
    np.testing.assert_array_equal(hinge_real(np.array([1.0, 0.0, -1.0, -3.0])).data, [2.0, 1.0, 0.0, 0.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=16))
def test_hinge_terms_are_non_negative(d):
    d = np.array(d)
    assert np.all(hinge_fake(d).data >= 0)
    assert np.all(hinge_real(d).data >= 0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.floats(-10, 10), st.floats(-10, 10))
def test_blend_is_affine_in_lambda(lam, d, a):
    got = float(blend(Tensor(d), Tensor(a), lam).data)
    assert got == pytest.approx(lam * d + (1 - lam) * a, rel=1e-12, abs=1e-12)


def test_zero_weight_terms_are_skipped():
    net = AffineField(c=(1.0, 0.0))
    p = {k: Tensor(v) for k, v in net.init().items()}
    x0 = np.zeros((2, 2))
    distill, adv = generator_terms(net, p, p, x0, None, x0, 1.0)
    assert distill is not None and adv is None
    distill, adv = generator_terms(net, p, p, x0, None, None, 0.0)
    assert distill is None and adv is not None


def test_lambda_one_gradient_equals_direct_distillation_gradient():
    net = MLP(MLPSpec(dim=2, hidden=8, depth=2))
    rng = np.random.default_rng(9)
    xi = net.init(rng)
    xi["out.w"] = rng.normal(size=xi["out.w"].shape) * 0.3
    zeta = {k: Tensor(v) for k, v in net.init(rng).items()}
    x0 = rng.normal(size=(16, 2))
    teacher = rng.normal(size=(16, 2))
    _, g_add = value_and_grad(lambda p: blend(*generator_terms(net, p, zeta, x0, None, teacher, 1.0), 1.0), xi)
    _, g_dir = value_and_grad(lambda p: direct_objective(net, p, x0, None, teacher), xi)
    for k in xi:
        np.testing.assert_array_equal(g_add[k], g_dir[k])


def test_gradient_penalty_of_linear_critic():
    a = np.array([0.5, -2.0, 1.0])
    net = AffineField(a=0.0, c=(0.0, 0.0, 0.0))

    class Linear:
        def __call__(self, params, x, t, cond=None):
            return T.as_tensor(x) * params["a"]

    x1 = np.random.default_rng(10).normal(size=(6, 3))
    pen = gradient_penalty(Linear(), {"a": Tensor(a)}, x1, None, 5.0)
    assert float(pen.data) == pytest.approx(5.0 * a @ a, rel=1e-12)
    assert float(gradient_penalty(net, net.init(), x1, None, 0.0).data) == 0.0


def test_gradient_penalty_gradient_matches_finite_differences():
    net = MLP(MLPSpec(dim=2, hidden=6, depth=1, time_embed_dim=4))
    rng = np.random.default_rng(11)
    zeta = net.init(rng)
    zeta["out.w"] = rng.normal(size=zeta["out.w"].shape)
    x1 = rng.normal(size=(5, 2))
    names = ["in.w", "out.w"]

    def value(arrs):
        p = {k: Tensor(v) for k, v in zeta.items()}
        p.update({n: Tensor(a) for n, a in zip(names, arrs)})
        return float(gradient_penalty(net, p, x1, None, 3.0).data)

    _, g = value_and_grad(lambda p: gradient_penalty(net, p, x1, None, 3.0), zeta)
    numeric = central_fd(value, [zeta[n].copy() for n in names])
    assert rel_error([g[n] for n in names], numeric) <= 1e-5


def test_discriminator_loss_does_not_touch_generator():
    net = MLP(MLPSpec(dim=2, hidden=8, depth=1))
    rng = np.random.default_rng(12)
    zeta = net.init(rng)
    zeta["out.w"] = rng.normal(size=zeta["out.w"].shape)
    fake, real = rng.normal(size=(4, 2)), rng.normal(size=(4, 2))
    total, pen = discriminator_loss(net, {k: Tensor(v) for k, v in zeta.items()}, fake, real, None, 2.0)
    d_f = DiscriminatorHead(net, zeta)(fake)
    d_r = DiscriminatorHead(net, zeta)(real)
    expected = np.maximum(0, 1 - d_f).mean() + np.maximum(0, 1 + d_r).mean() + float(pen.data)
    assert float(total.data) == pytest.approx(expected, rel=1e-12)


def _toy_net(rng):
    net = MLP(MLPSpec(dim=2, hidden=8, depth=1))
    params = net.init(rng)
    params["out.w"] = rng.normal(size=params["out.w"].shape) * 0.1
    return net, params


def test_add_zero_steps_returns_initial_params():
    net, params = _toy_net(np.random.default_rng(13))
    res = add_train(net, params, DATA, AddConfig(), steps=0, rng=np.random.default_rng(0))
    assert res.log == []
    for k in params:
        np.testing.assert_array_equal(res.xi[k], params[k])
        np.testing.assert_array_equal(res.zeta[k], params[k])


def test_add_updates_are_isolated():
    net, params = _toy_net(np.random.default_rng(14))
    frozen_g = add_train(net, params, DATA, AddConfig(lr_g=0.0, lr_d=1e-2), steps=3, batch_size=8,
                         rng=np.random.default_rng(1))
    frozen_d = add_train(net, params, DATA, AddConfig(lr_g=1e-2, lr_d=0.0), steps=3, batch_size=8,
                         rng=np.random.default_rng(1))
    for k in params:
        np.testing.assert_array_equal(frozen_g.xi[k], params[k])
        np.testing.assert_array_equal(frozen_d.zeta[k], params[k])
    assert any(np.any(frozen_g.zeta[k] != params[k]) for k in params)
    assert any(np.any(frozen_d.xi[k] != params[k]) for k in params)


def test_add_log_rows_and_callback(tmp_path):
    net, params = _toy_net(np.random.default_rng(15))
    seen = []
    res = add_train(net, params, DATA, AddConfig(lam=0.5, d_to_g_ratio=2, d_warmup=3), steps=4, batch_size=8,
                    rng=np.random.default_rng(2), callback=lambda step, xi, zeta: seen.append(step))
    assert seen == [0, 1, 2, 3]
    assert [r["step"] for r in res.log] == [0, 1, 2, 3]
    for r in res.log:
        assert r["loss_total"] == pytest.approx(0.5 * r["loss_distill"] + 0.5 * r["loss_adv"], rel=1e-9)
    res.write_csv(tmp_path / "log.csv")
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert lines[0] == "step,loss_total,loss_distill,loss_adv,loss_D,penalty"
    assert len(lines) == 5


@pytest.mark.parametrize("kw", [dict(lam=-0.1), dict(lam=1.5), dict(gamma=-1.0), dict(d_to_g_ratio=0),
                                dict(d_warmup=-1), dict(schedule="linear")])
def test_add_config_validation(kw):
    with pytest.raises(ValueError):
        AddConfig(**kw)


def test_rectify_straight_flow_is_a_fixed_point():
    net = AffineField(c=(0.7, -0.3))
    params = net.init()
    res = rectify(net, params, DATA, steps=10, lr=0.0, batch_size=16, rng=np.random.default_rng(16))
    assert max(res.losses) <= 1e-20
