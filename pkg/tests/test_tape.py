import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ffdgan.neural import tape as T
from ffdgan.neural.models import MLP

Node = T.Node


def fd_grad(f, x, h=1e-5):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


def rel_err(a, b):
    return np.abs(a - b).max() / max(np.abs(b).max(), 1e-8)


def test_square():
    x = Node(np.array(3.0), requires_grad=True)
    (g,) = T.grad(x * x, [x])
    assert g.value == 6.0


def test_cube_double_grad():
    x = Node(np.array(2.0), requires_grad=True)
    (g,) = T.grad(x**3, [x], create_graph=True)
    assert g.value == pytest.approx(12.0)
    (h,) = T.grad(g, [x])
    assert h.value == pytest.approx(12.0)


def test_nonscalar_output_rejected():
    x = Node(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        T.grad(x * 2.0, [x])


def test_unreachable_input_zero():
    x = Node(np.ones(3), requires_grad=True)
    y = Node(np.ones((2, 2)), requires_grad=True)
    gx, gy = T.grad((x * x).sum(), [x, y])
    np.testing.assert_array_equal(gy.value, 0.0)
    np.testing.assert_array_equal(gx.value, 2.0)


def test_interior_node_gradient():
    x = Node(np.array([1.0, 2.0]), requires_grad=True)
    h = x * 3.0
    (gh, gx) = T.grad((h * h).sum(), [h, x])
    np.testing.assert_allclose(gh.value, 2 * h.value)
    np.testing.assert_allclose(gx.value, 18 * x.value)


def test_no_grad_block():
    x = Node(np.ones(2), requires_grad=True)
    with T.no_grad():
        y = x * 2.0
    assert not y.requires_grad and y.parents == ()


OPS = {
    "add_broadcast": lambda a, b: ((a + b.sum(axis=0)) * a).sum(),
    "sub": lambda a, b: ((a - b) * (a - b)).sum(),
    "mul": lambda a, b: (a * b).sum(),
    "div": lambda a, b: (a / (b * b + 1.0)).sum(),
    "matmul": lambda a, b: (a @ b.T).sum(),
    "power": lambda a, b: ((a * a + 1.0) ** 1.5).sum(),
    "sqrt": lambda a, b: T.sqrt(a * a + b * b + 0.1).sum(),
    "mean_axis": lambda a, b: (a.mean(axis=0) * b.sum(axis=0)).sum(),
    "reshape_T": lambda a, b: (a.reshape(-1) * b.T.reshape(-1)).sum(),
    "leaky": lambda a, b: (T.leaky_relu(a, 0.2) * b).sum(),
    "neg_rsub": lambda a, b: (1.0 - a * b).sum(),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients_vs_fd(name):
    rng = np.random.default_rng(abs(hash(name)) % 2**32)
    a0, b0 = rng.normal(size=(2, 3, 3))
    a0[np.abs(a0) < 0.05] = 0.3  # keep leaky-relu away from its kink
    f = OPS[name]
    a, b = Node(a0, requires_grad=True), Node(b0, requires_grad=True)
    ga, gb = T.grad(f(a, b), [a, b])
    fa = fd_grad(lambda v: float(f(Node(v), Node(b0)).value), a0)
    fb = fd_grad(lambda v: float(f(Node(a0), Node(v)).value), b0)
    assert rel_err(ga.value, fa) < 1e-4
    assert rel_err(gb.value, fb) < 1e-4


def _net(seed, widths):
    return MLP(widths, np.random.default_rng(seed), np.float64, 0.2)


@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(2, 32))
def test_mlp_param_and_input_gradients(seed, depth, width):
    net = _net(seed, [4] + [width] * (depth - 1) + [1])
    x0 = np.random.default_rng(seed + 1).normal(size=(3, 4))
    x = Node(x0, requires_grad=True)
    grads = T.grad(net(x).sum(), [x] + net.params)
    assert rel_err(grads[0].value, fd_grad(lambda v: float(net(Node(v)).value.sum()), x0)) < 1e-4
    for p, g in zip(net.params, grads[1:]):
        def f(v, p=p):
            old = p.value
            p.value = v
            try:
                return float(net(Node(x0)).value.sum())
            finally:
                p.value = old
        assert rel_err(g.value, fd_grad(f, p.value.copy())) < 1e-4


def _inner_sqnorm(net, x0):
    x = Node(x0, requires_grad=True)
    (g,) = T.grad(net(x).sum(), [x], create_graph=True)
    return (g * g).sum()


@settings(max_examples=6)
@given(st.integers(0, 2**32 - 1), st.integers(2, 3))
def test_double_backprop_penalty(seed, depth):
    """d/dtheta ||grad_x D||^2 against FD of the analytic inner gradient."""
    net = _net(seed, [5] + [32] * (depth - 1) + [1])
    x0 = np.random.default_rng(seed + 7).normal(size=(4, 5))
    grads = T.grad(_inner_sqnorm(net, x0), net.params)
    for p, g in zip(net.params, grads):
        def f(v, p=p):
            old = p.value
            p.value = v
            try:
                return float(_inner_sqnorm(net, x0).value)
            finally:
                p.value = old
        assert rel_err(g.value, fd_grad(f, p.value.copy())) < 1e-3
