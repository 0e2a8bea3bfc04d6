import numpy as np
import pytest

from ffdgan import geometry as geo
from ffdgan.errors import NumericError
from ffdgan.neural.models import (DiscriminatorNet, FFDLayer, GeneratorNet, flatten_grids, gradient_penalty,
                                  offset_penalty, wgan_gp_losses)
from ffdgan.neural.tape import Node, grad
from ffdgan.neural.train import TrainConfig, adam_step, load_checkpoint, save_checkpoint, train


@pytest.fixture(scope="module")
def tiny_ffd(wing):
    return FFDLayer.from_base_shape(wing[:, ::8], (1, 2, 1))


def gen(ffd, seed=0, dtype=np.float64, widths=(8,)):
    return GeneratorNet(3, ffd, widths, 0.2, seed, dtype, 1)


class TestFFDLayer:
    def test_base_points(self, tiny_ffd):
        assert np.abs(tiny_ffd.base_points - tiny_ffd.base_points_source).max() <= 1e-12

    def test_channel_map_matches_decode(self, tiny_ffd):
        rng = np.random.default_rng(0)
        off = rng.normal(0, 0.05, (2, 2 * tiny_ffd.n_control))
        base, psi = tiny_ffd.channel_map(1, np.float64)
        flat = base + off @ psi
        np.testing.assert_allclose(flat, flatten_grids(tiny_ffd.decode(off), 1, np.float64), atol=1e-12)

    def test_delta_y_zero(self, tiny_ffd):
        d = tiny_ffd.offsets_to_delta(np.ones(2 * tiny_ffd.n_control))
        assert np.all(d[..., 1] == 0) and np.all(d[..., 0] == 1)

    def test_decode_agrees_with_ffd_deform(self, tiny_ffd):
        rng = np.random.default_rng(1)
        off = rng.normal(0, 0.05, 2 * tiny_ffd.n_control)
        coords = geo.param_coords(tiny_ffd.base_points_source, tiny_ffd.lattice.box)
        want = geo.ffd_deform(tiny_ffd.lattice, tiny_ffd.offsets_to_delta(off), coords)
        np.testing.assert_allclose(tiny_ffd.decode(off), want, atol=1e-12)


class TestGenerator:
    def test_zero_last_layer_gives_base(self, tiny_ffd):
        G = gen(tiny_ffd)
        last = G.mlp.layers[-1]
        last.W.value[:] = 0
        last.b.value[:] = 0
        dP, grid = G.forward(np.array([0.3, -0.9, 0.1]))
        assert np.all(dP == 0)
        assert np.abs(grid - tiny_ffd.base_points).max() <= 1e-12

    def test_y_offsets_zero_and_deterministic(self, tiny_ffd):
        G = gen(tiny_ffd)
        z = np.random.default_rng(2).uniform(-1, 1, (5, 3))
        d1, g1 = G.forward(z)
        d2, g2 = G.forward(z)
        assert np.all(d1[..., 1] == 0)
        assert np.array_equal(g1, g2)

    def test_out_of_range_latent_warns(self, tiny_ffd):
        with pytest.warns(UserWarning):
            gen(tiny_ffd).forward(np.array([1.5, 0, 0]))

    def test_grad_wrt_z_fd(self, tiny_ffd):
        G = gen(tiny_ffd)
        z0 = np.array([[0.2, -0.4, 0.7]])
        k = 17
        z = Node(z0, requires_grad=True)
        out = G(z)[1]
        sel = np.zeros(out.shape)
        sel[0, k] = 1.0
        (g,) = grad((out * sel).sum(), [z])
        h = 1e-5
        fd = np.array([(G(Node(z0 + h * e))[1].value[0, k] - G(Node(z0 - h * e))[1].value[0, k]) / (2 * h)
                       for e in np.eye(3)[:, None, :]])
        assert np.abs(g.value[0] - fd).max() / max(np.abs(fd).max(), 1e-8) < 1e-4

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_nonfinite_activation(self, tiny_ffd):
        G = gen(tiny_ffd)
        G.mlp.layers[0].W.value[:] = np.inf
        with pytest.raises(NumericError, match="layer 0"):
            G.forward(np.zeros(3))


def _toy(tiny_ffd):
    G = gen(tiny_ffd)
    n_in = G._psi.shape[1]
    D = DiscriminatorNet(n_in, (2,), 0.2, 0, np.float64)
    return G, D


def _leaky(x, s=0.2):
    return np.where(x > 0, x, s * x)


def test_losses_match_manual(tiny_ffd, wing):
    G, D = _toy(tiny_ffd)
    rng = np.random.default_rng(3)
    real = flatten_grids(np.stack([wing[:, ::8], wing[:, ::8] + 0.01]), 1, np.float64)
    z = rng.uniform(-1, 1, (2, 3))
    eps = np.array([0.25, 0.8])
    terms = wgan_gp_losses(G, D, real, z, eps, 10.0, 1.0)

    # manual forward of both nets
    (W1, b1), (W2, b2) = [(l.W.value, l.b.value) for l in G.mlp.layers]
    off = _leaky(z @ W1 + b1) @ W2 + b2
    fake = G._base.value + off @ G._psi.value
    (V1, c1), (V2, c2) = [(l.W.value, l.b.value) for l in D.mlp.layers]

    def d(x):
        return (_leaky(x @ V1 + c1) @ V2 + c2)[:, 0]

    xh = eps[:, None] * real + (1 - eps[:, None]) * fake
    pre = xh @ V1 + c1
    gx = (np.where(pre > 0, 1.0, 0.2) * V2[:, 0]) @ V1.T
    r1 = np.mean((np.sqrt((gx**2).sum(1) + 1e-12) - 1) ** 2)
    r2 = (off**2).sum() / (2 * tiny_ffd.n_control)
    assert terms.loss_d.value == pytest.approx(d(fake).mean() - d(real).mean() + 10 * r1, rel=1e-12)
    assert terms.loss_g.value == pytest.approx(-d(fake).mean() + r2, rel=1e-12)
    assert terms.r1 == pytest.approx(r1, rel=1e-12) and terms.r2 == pytest.approx(r2, rel=1e-12)


def test_r1_zero_for_unit_gradient_critic():
    D = DiscriminatorNet(4, (), 0.2, 0, np.float64)
    w = np.array([[0.6], [0.8], [0.0], [0.0]])
    D.mlp.layers[0].W.value = w
    r1, norms = gradient_penalty(D, Node(np.random.default_rng(0).normal(size=(5, 4)), requires_grad=True))
    assert abs(float(r1.value)) < 1e-10


def test_r2_zero_permutation_and_scale():
    assert float(offset_penalty(Node(np.zeros((4, 6))), 3).value) == 0.0
    off = np.random.default_rng(4).normal(size=(4, 6))
    a = float(offset_penalty(Node(off), 3).value)
    b = float(offset_penalty(Node(off[::-1]), 3).value)
    assert a == pytest.approx(b, rel=1e-14)
    assert a == pytest.approx((off**2).sum() / (4 * 3))
    assert float(offset_penalty(Node(np.concatenate([off, off])), 3).value) == pytest.approx(a)


def test_batch_mismatch(tiny_ffd, wing):
    G, D = _toy(tiny_ffd)
    real = flatten_grids(wing[None, :, ::8], 1, np.float64)
    with pytest.raises(ValueError):
        wgan_gp_losses(G, D, real, np.zeros((2, 3)), np.zeros(2))


class TestAdam:
    def test_first_step(self):
        p = [np.array([1.0, -2.0])]
        g = [np.array([0.5, -3.0])]
        new, st = adam_step(p, g, None, lr=0.1, beta1=0.5, beta2=0.9, eps=1e-8)
        # bias-corrected m/sqrt(v) = g/|g| on the first step
        np.testing.assert_allclose(new[0], p[0] - 0.1 * np.sign(g[0]), atol=1e-7)
        assert st["t"] == 1

    def test_zero_grad(self):
        p = [np.array([1.0, 2.0])]
        new, _ = adam_step(p, [np.zeros(2)], None)
        np.testing.assert_array_equal(new[0], p[0])

    def test_deterministic_and_shapes(self):
        p, g = [np.ones((2, 2))], [np.full((2, 2), 0.3)]
        a, sa = adam_step(p, g, None)
        b, sb = adam_step(p, g, None)
        assert np.array_equal(a[0], b[0]) and np.array_equal(sa["v"][0], sb["v"][0])
        with pytest.raises(ValueError):
            adam_step(p, [np.ones(3)], None)


def _tiny_cfg(**kw):
    base = dict(latent_dim=3, iterations=3, batch_size=4, n_critic=2, lattice=(1, 2, 1), g_widths=(16,),
                d_widths=(16,), d_stride=8, seed=5)
    base.update(kw)
    return TrainConfig(**base)


def test_train_deterministic(small_wings):
    a = train(small_wings, _tiny_cfg())
    b = train(small_wings, _tiny_cfg())
    assert a.history == b.history
    assert len(a.history) == 3
    assert {"wasserstein", "r1", "r2"} <= set(a.history[0])
    assert a.generator.trained


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_diverges_with_checkpoint(small_wings, tmp_path):
    with pytest.raises(NumericError):
        train(small_wings, _tiny_cfg(lr=1e30, iterations=20), checkpoint_path=tmp_path / "ck")
    assert (tmp_path / "ck.json").exists() and (tmp_path / "ck.bin").exists()


def test_checkpoint_roundtrip(small_wings, tmp_path):
    cfg = _tiny_cfg(iterations=1)
    res = train(small_wings, cfg)
    save_checkpoint(tmp_path / "g", res.generator, cfg, 1, res.discriminator)
    G, cfg2, header = load_checkpoint(tmp_path / "g.json")
    assert cfg2 == cfg and header["iteration"] == 1
    z = np.random.default_rng(0).uniform(-1, 1, (4, 3))
    np.testing.assert_array_equal(G.forward(z)[1], res.generator.forward(z)[1])


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    assert TrainConfig().lr == 2e-4 and TrainConfig().n_critic == 5 and TrainConfig().batch_size == 64
    assert (TrainConfig().gamma1, TrainConfig().gamma2) == (10.0, 1.0)
