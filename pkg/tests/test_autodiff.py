import math

import numpy as np
import pytest

from crfae import autodiff as ad
from crfae.autodiff import (
    ParamStore,
    ShapeError,
    Value,
    backward,
    binary_cross_entropy,
    concat,
    dropout,
    grad_check,
    max_over_time,
    stack,
    weighted_sum,
)


def fd_grad(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function of one array."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x)
        flat[i] = orig - eps
        fm = f(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2 * eps)
    return g


def analytic_grad(build, x: np.ndarray) -> np.ndarray:
    v = Value(x.copy())
    loss = build(v)
    backward(loss)
    return v.grad


def assert_matches_fd(build, x: np.ndarray, tol: float = 1e-4):
    got = analytic_grad(build, x)
    want = fd_grad(lambda a: float(build(Value(a)).data), x.copy())
    denom = np.maximum(1.0, np.maximum(np.abs(got), np.abs(want)))
    assert np.max(np.abs(got - want) / denom) < tol


class TestForward:
    def test_sigmoid_zero(self):
        assert Value(np.array(0.0)).sigmoid().item() == pytest.approx(0.5)

    def test_logsumexp_two_zeros(self):
        assert Value(np.array([0.0, 0.0])).logsumexp().item() == pytest.approx(math.log(2))

    def test_relu(self):
        v = Value(np.array([-3.2, 1.5])).relu()
        assert v.data.tolist() == [0.0, 1.5]

    def test_logsumexp_overflow_safe(self):
        out = Value(np.array([1000.0, 1000.0])).logsumexp().item()
        assert np.isfinite(out)
        assert out == pytest.approx(1000.0 + math.log(2))

    def test_logsumexp_axis(self):
        x = np.array([[0.0, 1.0], [2.0, 3.0]])
        got = Value(x).logsumexp(axis=0).data
        want = np.log(np.exp(x).sum(axis=0))
        np.testing.assert_allclose(got, want, rtol=1e-12)

    def test_deterministic_forward(self):
        x = np.random.default_rng(3).normal(size=(4, 5))
        a = (Value(x.copy()).tanh() @ Value(np.eye(5))).sum().item()
        b = (Value(x.copy()).tanh() @ Value(np.eye(5))).sum().item()
        assert a == b


class TestBackwardExamples:
    def test_sum_of_squares(self):
        p = Value(np.array([1.0, 2.0]))
        backward((p * p).sum())
        np.testing.assert_allclose(p.grad, [2.0, 4.0])

    def test_sigmoid_derivative_at_zero(self):
        p = Value(np.array(0.0))
        backward(p.sigmoid())
        assert p.grad == pytest.approx(0.25)

    def test_non_scalar_loss_rejected(self):
        with pytest.raises(ValueError, match="scalar"):
            backward(Value(np.array([1.0, 2.0])))

    def test_double_backward_rejected(self):
        p = Value(np.array([1.0, 2.0]))
        loss = (p * p).sum()
        backward(loss)
        with pytest.raises(RuntimeError, match="consumed"):
            backward(loss)

    def test_grads_finite_after_backward(self):
        rng = np.random.default_rng(0)
        x = Value(rng.normal(size=(3, 4)))
        w = Value(rng.normal(size=(4, 2)))
        loss = binary_cross_entropy((x @ w).sigmoid(), rng.random((3, 2)))
        backward(loss)
        for v in (x, w):
            assert np.all(np.isfinite(v.grad))


class TestShapeErrors:
    def test_matmul_mismatch_names_primitive_and_shapes(self):
        with pytest.raises(ShapeError) as e:
            Value(np.zeros((2, 3))) @ Value(np.zeros((4, 2)))
        assert "matmul" in str(e.value)
        assert "(2, 3)" in str(e.value) and "(4, 2)" in str(e.value)

    def test_add_mismatch(self):
        with pytest.raises(ShapeError, match="add"):
            Value(np.zeros(3)) + Value(np.zeros(4))

    def test_bce_mismatch(self):
        with pytest.raises(ShapeError, match="binary_cross_entropy"):
            binary_cross_entropy(Value(np.full(3, 0.5)), np.zeros(4))

    def test_stack_mismatch(self):
        with pytest.raises(ShapeError, match="stack"):
            stack([Value(np.zeros(3)), Value(np.zeros(4))])


# every primitive checked against central finite differences on random shapes
PRIMITIVE_CASES = [
    ("add_broadcast_row", (3, 4), lambda v: (v + Value(np.linspace(-1, 1, 4))).tanh().sum()),
    ("add_same", (5,), lambda v: (v + v).sigmoid().sum()),
    ("mul", (3, 4), lambda v: (v * Value(np.linspace(0.5, 2, 12).reshape(3, 4))).sum()),
    ("matmul_2d_2d", (3, 4), lambda v: (v @ Value(np.linspace(-1, 1, 8).reshape(4, 2))).tanh().sum()),
    ("matmul_1d_2d", (4,), lambda v: (v @ Value(np.linspace(-1, 1, 8).reshape(4, 2))).sum()),
    ("matmul_2d_1d", (3, 4), lambda v: (v @ Value(np.linspace(-1, 1, 4))).tanh().sum()),
    ("getitem_row", (4, 3), lambda v: v[2].tanh().sum()),
    ("getitem_fancy", (4, 3), lambda v: v[np.array([0, 2, 2]), np.array([1, 0, 2])].sum()),
    ("getitem_slice", (4, 3), lambda v: v[1:3, :2].sigmoid().sum()),
    ("reshape", (4, 3), lambda v: v.reshape((2, 6)).tanh().sum()),
    ("sigmoid", (3, 4), lambda v: v.sigmoid().sum()),
    ("tanh", (3, 4), lambda v: v.tanh().sum()),
    ("relu", (3, 4), lambda v: (v.relu() * Value(np.linspace(0.5, 2, 12).reshape(3, 4))).sum()),
    ("max_over_time", (5, 3), lambda v: (max_over_time(v) * Value(np.array([1.0, 2.0, 3.0]))).sum()),
    ("logsumexp_full", (3, 4), lambda v: v.logsumexp()),
    ("logsumexp_axis0", (3, 4), lambda v: (v.logsumexp(axis=0) * Value(np.array([1.0, -1.0, 0.5, 2.0]))).sum()),
    ("logsumexp_axis1", (3, 4), lambda v: v.logsumexp(axis=1).sum()),
    ("bce", (3, 4), lambda v: binary_cross_entropy(v.sigmoid(), np.random.default_rng(7).random((3, 4)))),
    ("concat", (3,), lambda v: concat([v, v * Value(np.array(2.0)), Value(np.ones(2))]).tanh().sum()),
    ("stack", (4,), lambda v: max_over_time(stack([v, v * Value(np.array(-1.0))])).sum()),
    ("weighted_sum", (1,), lambda v: weighted_sum([v.sum(), (v * v).sum()], [0.5, 2.0])),
    ("neg_sub", (3,), lambda v: (-v - Value(np.ones(3))).tanh().sum()),
]


@pytest.mark.parametrize("name,shape,build", PRIMITIVE_CASES, ids=[c[0] for c in PRIMITIVE_CASES])
def test_primitive_gradients_match_finite_differences(name, shape, build):
    rng = np.random.default_rng(hash(name) % (2**32))
    for trial in range(3):
        x = rng.normal(size=shape)
        assert_matches_fd(build, x)


def test_dropout_train_scales_and_masks():
    rng = np.random.default_rng(0)
    v = Value(np.ones((100, 10)))
    out = dropout(v, 0.5, rng, train=True)
    kept = out.data != 0
    assert np.all(out.data[kept] == pytest.approx(2.0))
    assert 0.3 < kept.mean() < 0.7
    backward(out.sum())
    np.testing.assert_allclose(v.grad, np.where(kept, 2.0, 0.0))


def test_dropout_eval_is_identity():
    v = Value(np.ones(5))
    assert dropout(v, 0.5, np.random.default_rng(0), train=False) is v


def test_dropout_invalid_p():
    with pytest.raises(ValueError):
        dropout(Value(np.ones(2)), 1.0, np.random.default_rng(0), train=True)


def test_bce_clamp_keeps_loss_finite():
    pred = Value(np.array([0.0, 1.0]))
    loss = binary_cross_entropy(pred, np.array([1.0, 0.0]))
    assert np.isfinite(loss.item())


class TestParamStore:
    def test_lexicographic_iteration(self):
        ps = ParamStore()
        for name in ["b.w", "a.w", "c.bias"]:
            ps.add(name, np.zeros(2))
        assert ps.names() == ["a.w", "b.w", "c.bias"]

    def test_duplicate_name_rejected(self):
        ps = ParamStore()
        ps.add("w", np.zeros(2))
        with pytest.raises(ValueError, match="duplicate"):
            ps.add("w", np.zeros(2))

    def test_state_dict_round_trip(self):
        ps = ParamStore()
        ps.add("w", np.arange(6, dtype=np.float64).reshape(2, 3))
        state = ps.state_dict()
        ps["w"].data[...] = 0
        ps.load_state_dict(state)
        np.testing.assert_array_equal(ps["w"].data, np.arange(6).reshape(2, 3))

    def test_load_state_dict_mismatch(self):
        ps = ParamStore()
        ps.add("w", np.zeros(2))
        with pytest.raises(ValueError, match="mismatch"):
            ps.load_state_dict({"other": np.zeros(2)})


class TestGradCheck:
    def test_sum_of_squares_is_exact(self):
        ps = ParamStore()
        ps.add("p", np.array([1.0, -2.0, 3.0]))
        err = grad_check(lambda s: (s["p"] * s["p"]).sum(), ps)
        assert err < 1e-8

    def test_eps_zero_rejected(self):
        ps = ParamStore()
        ps.add("p", np.ones(2))
        with pytest.raises(ValueError, match="eps"):
            grad_check(lambda s: s["p"].sum(), ps, eps=0.0)

    def test_non_finite_objective_rejected(self):
        ps = ParamStore()
        ps.add("p", np.array([0.0]))

        def f(s):
            out = s["p"].sum()
            out.data = np.asarray(np.inf)
            return out

        with pytest.raises(FloatingPointError):
            grad_check(f, ps)

    def test_coordinate_sampling_cap(self):
        ps = ParamStore()
        ps.add("p", np.random.default_rng(1).normal(size=(20,)))
        err = grad_check(
            lambda s: (s["p"] * s["p"]).sum(), ps,
            max_coords_per_param=5, rng=np.random.default_rng(2),
        )
        assert err < 1e-8
