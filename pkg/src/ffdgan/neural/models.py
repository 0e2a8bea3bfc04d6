"""Dense generator with an FFD output layer, dense critic, and the FFD-GAN losses."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .. import geometry as geo
from ..errors import NumericError
from .tape import Node, grad, leaky_relu, matmul, no_grad, sqrt


class Dense:
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, dtype=np.float32, gain: float = 1.0):
        lim = gain * np.sqrt(6.0 / (n_in + n_out))
        self.W = Node(rng.uniform(-lim, lim, (n_in, n_out)).astype(dtype), requires_grad=True)
        self.b = Node(np.zeros((1, n_out), dtype=dtype), requires_grad=True)

    def __call__(self, x: Node) -> Node:
        return matmul(x, self.W) + self.b

    @property
    def params(self) -> list[Node]:
        return [self.W, self.b]


class MLP:
    """Dense stack with leaky-ReLU between layers and a linear last layer."""

    def __init__(self, widths, rng, dtype=np.float32, slope: float = 0.2, last_gain: float = 1.0):
        widths = list(widths)
        self.widths = widths
        self.slope = slope
        n = len(widths) - 1
        self.layers = [
            Dense(a, b, rng, dtype, gain=last_gain if i == n - 1 else 1.0)
            for i, (a, b) in enumerate(zip(widths[:-1], widths[1:]))
        ]

    def __call__(self, x: Node) -> Node:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if not np.all(np.isfinite(x.value)):
                raise NumericError(f"non-finite activation after layer {i}")
            if i < len(self.layers) - 1:
                x = leaky_relu(x, self.slope)
        return x

    @property
    def params(self) -> list[Node]:
        return [p for layer in self.layers for p in layer.params]


@dataclass
class FFDLayer:
    """Linear map from learned (x, z) control-point offsets to surface points.

    ``basis`` is the trivariate Bernstein matrix of the base-shape points,
    ``lattice`` the undeformed control points, ``base_points`` the embedded
    base surface (basis @ lattice), all for the full (M, N) grid.
    """

    lattice: geo.ControlLattice
    basis: np.ndarray  # (M*N, L)
    grid_shape: tuple[int, int]
    base_points_source: np.ndarray  # the (M, N, 3) base shape the basis was built from

    @classmethod
    def from_base_shape(cls, base_grid, degrees=(3, 7, 1), margin: float = geo.BOX_MARGIN) -> "FFDLayer":
        box = geo.BoundingBox.around(base_grid, margin)
        return cls.with_box(base_grid, box, degrees)

    @classmethod
    def with_box(cls, base_grid, box: geo.BoundingBox, degrees=(3, 7, 1)) -> "FFDLayer":
        base_grid = np.asarray(base_grid, dtype=float)
        lattice = geo.base_lattice(box, *degrees)
        coords = geo.param_coords(base_grid, box)
        return cls(lattice, geo.ffd_basis(coords, degrees), base_grid.shape[:2], base_grid)

    @property
    def n_control(self) -> int:
        return self.lattice.size

    @property
    def base_points(self) -> np.ndarray:
        return (self.basis @ self.lattice.points.reshape(-1, 3)).reshape(*self.grid_shape, 3)

    def offsets_to_delta(self, offsets) -> np.ndarray:
        """(..., 2L) learned offsets -> (..., l+1, m+1, n+1, 3) with zero y channel."""
        offsets = np.asarray(offsets, dtype=float)
        L = self.n_control
        delta = np.zeros(offsets.shape[:-1] + (L, 3))
        delta[..., 0] = offsets[..., :L]
        delta[..., 2] = offsets[..., L:]
        return delta.reshape(offsets.shape[:-1] + self.lattice.points.shape)

    def decode(self, offsets) -> np.ndarray:
        """Offsets (2L,) or (B, 2L) -> grids (M, N, 3) or (B, M, N, 3)."""
        delta = self.offsets_to_delta(offsets)
        L = self.n_control
        pts = self.lattice.points.reshape(L, 3) + delta.reshape(delta.shape[:-4] + (L, 3))
        out = np.einsum("pl,...lc->...pc", self.basis, pts)
        return out.reshape(delta.shape[:-4] + tuple(self.grid_shape) + (3,))

    def channel_map(self, stride: int = 1, dtype=np.float32) -> tuple[np.ndarray, np.ndarray]:
        """Base vector and matrix taking offsets to the channel-major flat grid.

        Returns ``(base, psi)`` so that ``base + offsets @ psi`` is the
        (3, M, N//stride) surface flattened; y rows of ``psi`` are zero.
        """
        M, N = self.grid_shape
        cols = np.arange(0, N, stride)
        rows = (np.arange(M)[:, None] * N + cols[None, :]).ravel()
        phi = self.basis[rows]
        K, L = phi.shape
        psi = np.zeros((2 * L, 3 * K))
        psi[:L, :K] = phi.T
        psi[L:, 2 * K :] = phi.T
        base = self.base_points[:, cols].transpose(2, 0, 1).reshape(-1)
        return base.astype(dtype), psi.astype(dtype)


def flatten_grids(grids, stride: int = 1, dtype=np.float32) -> np.ndarray:
    """(B, M, N, 3) grids -> (B, 3*M*ceil(N/stride)) channel-major rows."""
    g = np.asarray(grids)[:, :, ::stride]
    return np.ascontiguousarray(g.transpose(0, 3, 1, 2).reshape(len(g), -1), dtype=dtype)


class GeneratorNet:
    """z -> dense layers -> (x, z) control-point offsets -> FFD layer -> surface."""

    def __init__(self, latent_dim: int, ffd: FFDLayer, widths=(256, 256), slope: float = 0.2,
                 seed: int = 0, dtype=np.float32, stride: int = 1):
        self.latent_dim = latent_dim
        self.ffd = ffd
        self.hidden = tuple(widths)
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng([seed, 1])
        self.mlp = MLP([latent_dim, *widths, 2 * ffd.n_control], rng, dtype, slope, last_gain=0.1)
        self.trained = False
        self.set_stride(stride)

    def set_stride(self, stride: int):
        self.stride = stride
        base, psi = self.ffd.channel_map(stride, self.dtype)
        self._base = Node(base[None, :])
        self._psi = Node(psi)

    @property
    def params(self) -> list[Node]:
        return self.mlp.params

    def __call__(self, z: Node) -> tuple[Node, Node]:
        """Tape forward on the strided grid: (offsets (B, 2L), flat points)."""
        offsets = self.mlp(z)
        return offsets, self._base + matmul(offsets, self._psi)

    def offsets(self, z) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=self.dtype))
        with no_grad():
            return self.mlp(Node(z)).value.astype(float)

    def forward(self, z) -> tuple[np.ndarray, np.ndarray]:
        """Full-resolution (delta P, grid) for one latent vector or a batch."""
        z = np.asarray(z, dtype=float)
        if np.any(np.abs(z) > 1.0):
            warnings.warn("latent vector outside [-1, 1]", stacklevel=2)
        off = self.offsets(z)
        if z.ndim == 1:
            off = off[0]
        return self.ffd.offsets_to_delta(off), self.ffd.decode(off)


class DiscriminatorNet:
    def __init__(self, n_in: int, widths=(512, 256), slope: float = 0.2, seed: int = 0, dtype=np.float32):
        self.hidden = tuple(widths)
        self.n_in = n_in
        self.mlp = MLP([n_in, *widths, 1], np.random.default_rng([seed, 2]), dtype, slope)

    def __call__(self, x: Node) -> Node:
        return self.mlp(x)

    @property
    def params(self) -> list[Node]:
        return self.mlp.params


@dataclass
class LossTerms:
    loss_d: Node
    loss_g: Node
    wasserstein: float
    r1: float
    r2: float
    grad_norm: float


def gradient_penalty(D, x_hat: Node) -> tuple[Node, np.ndarray]:
    """Mean of (||dD/dx||_2 - 1)^2 over the batch, plus the per-sample norms."""
    out = D(x_hat)
    (g,) = grad(out.sum(), [x_hat], create_graph=True)
    norms = sqrt((g * g).sum(axis=1) + 1e-12)
    return ((norms - 1.0) ** 2).mean(), norms.value


def offset_penalty(offsets: Node, n_control: int) -> Node:
    """Mean squared control-point offset: sum ||dP||^2 / (B * L); y offsets are zero."""
    B = offsets.shape[0]
    return (offsets * offsets).sum() * (1.0 / (B * n_control))


def wgan_gp_losses(G, D, real: np.ndarray, z: np.ndarray, eps: np.ndarray,
                   gamma1: float = 10.0, gamma2: float = 1.0) -> LossTerms:
    """Critic and generator losses of FFD-GAN for one batch.

    loss_d = mean D(fake) - mean D(real) + gamma1 * R1
    loss_g = -mean D(fake) + gamma2 * R2
    where R1 is evaluated at eps * real + (1 - eps) * fake.
    """
    real = np.asarray(real)
    if len(real) != len(z) or len(eps) != len(z):
        raise ValueError("real, z and eps batches must have equal size")
    dtype = real.dtype
    offsets, fake = G(Node(np.asarray(z, dtype=dtype)))
    n_control = offsets.shape[1] // 2
    d_real = D(Node(real)).mean()
    d_fake = D(fake).mean()
    e = np.asarray(eps, dtype=dtype).reshape(-1, 1)
    x_hat = Node(e * real + (1 - e) * fake.value, requires_grad=True)
    r1, norms = gradient_penalty(D, x_hat)
    r2 = offset_penalty(offsets, n_control)
    loss_d = d_fake - d_real + gamma1 * r1
    loss_g = -d_fake + gamma2 * r2
    for name, v in (("loss_d", loss_d), ("loss_g", loss_g)):
        if not np.isfinite(v.value):
            raise NumericError(f"{name} is not finite")
    return LossTerms(loss_d, loss_g, float(d_real.value - d_fake.value), float(r1.value),
                     float(r2.value), float(norms.mean()))
