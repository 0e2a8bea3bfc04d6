"""Design-vector -> surface-grid maps: FFD, B-spline surface and FFD-GAN latent space.

Every parameterization exposes ``space`` (a :class:`DesignSpace`) and
``decode(x) -> (M, N, 3)`` grid, and serializes to a plain dict.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .errors import BoundsError, DomainError, FittingError, StateError
from .neural.models import FFDLayer

_TOL = 1e-12


@dataclass(frozen=True)
class DesignSpace:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).ravel()
        hi = np.asarray(self.upper, dtype=float).ravel()
        if lo.shape != hi.shape:
            raise ValueError("lower and upper bounds differ in length")
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return len(self.lower)

    def check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        if x.shape != (self.dim,):
            raise ValueError(f"design vector has {x.size} entries, expected {self.dim}")
        span = np.maximum(self.upper - self.lower, 1.0)
        if np.any(x < self.lower - _TOL * span) or np.any(x > self.upper + _TOL * span):
            raise BoundsError("design vector outside the design-space bounds")
        return np.clip(x, self.lower, self.upper)

    def clip(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def from_unit(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return self.lower + u * (self.upper - self.lower)

    def to_unit(self, x) -> np.ndarray:
        width = self.upper - self.lower
        safe = np.where(width > 0, width, 1.0)
        return np.where(width > 0, (np.asarray(x, dtype=float) - self.lower) / safe, 0.5)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.from_unit(rng.uniform(0.0, 1.0, (n, self.dim)))


class Parameterization:
    name = "base"
    space: DesignSpace

    def decode(self, x) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


# --- FFD ----------------------------------------------------------------------


class FFDParam(Parameterization):
    """x/z offsets of an (l+1)(m+1)(n+1) lattice around the base shape; y fixed.

    The design vector is ``[dx_0 .. dx_{L-1}, dz_0 .. dz_{L-1}]`` in lattice C order.
    """

    name = "ffd"

    def __init__(self, base_grid, degrees=(2, 3, 1), bound: float = 0.1, box: geo.BoundingBox | None = None):
        base_grid = np.asarray(base_grid, dtype=float)
        self.degrees = tuple(int(d) for d in degrees)
        self.bound = float(bound)
        if box is None:
            self.layer = FFDLayer.from_base_shape(base_grid, self.degrees)
        else:
            self.layer = FFDLayer.with_box(base_grid, box, self.degrees)
        L = self.layer.n_control
        self.space = DesignSpace(np.full(2 * L, -self.bound), np.full(2 * L, self.bound))
        self._base = self.layer.base_points

    @property
    def base_grid(self) -> np.ndarray:
        return self._base

    def decode(self, x) -> np.ndarray:
        x = self.space.check(x)
        return self.layer.decode(x)

    def jacobian(self) -> np.ndarray:
        """(M*N*3, dim) matrix J with decode(x).ravel() == base.ravel() + J @ x."""
        phi = self.layer.basis
        P, L = phi.shape
        J = np.zeros((P, 3, 2 * L))
        J[:, 0, :L] = phi
        J[:, 2, L:] = phi
        return J.reshape(P * 3, 2 * L)

    def to_dict(self) -> dict:
        box = self.layer.lattice.box
        return {"type": "ffd", "degrees": list(self.degrees), "bound": self.bound, "dim": self.space.dim,
                "lower": self.space.lower.tolist(), "upper": self.space.upper.tolist(),
                "box": [box.lo.tolist(), box.hi.tolist()],
                "lattice": self.layer.lattice.points.tolist(),
                "base_grid": self.layer.base_points_source.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FFDParam":
        box = geo.BoundingBox(*d["box"])
        return cls(np.array(d["base_grid"]), d["degrees"], d["bound"], box)


def ffd_control_shape(n_points: tuple[int, int, int]) -> tuple[int, int, int]:
    """Control-point counts per axis -> lattice degrees."""
    return tuple(int(n) - 1 for n in n_points)


# --- B-spline surface --------------------------------------------------------


def clamped_knots(n_ctrl: int, degree: int) -> np.ndarray:
    if n_ctrl <= degree:
        raise ValueError("need more control points than the degree")
    inner = np.linspace(0.0, 1.0, n_ctrl - degree + 1)[1:-1]
    return np.concatenate([np.zeros(degree + 1), inner, np.ones(degree + 1)])


def bspline_basis(i: int, degree: int, t: float, knots) -> float:
    """Cox-de Boor recursion for basis function ``i``; the last span is closed."""
    knots = np.asarray(knots, dtype=float)
    if t < knots[0] or t > knots[-1]:
        raise DomainError(f"parameter {t} outside knot range [{knots[0]}, {knots[-1]}]")
    if degree == 0:
        lo, hi = knots[i], knots[i + 1]
        if lo <= t < hi:
            return 1.0
        # t at the right end belongs to the last non-empty span
        return 1.0 if t == knots[-1] and hi == knots[-1] and lo < hi else 0.0
    out = 0.0
    d1 = knots[i + degree] - knots[i]
    if d1 > 0:
        out += (t - knots[i]) / d1 * bspline_basis(i, degree - 1, t, knots)
    d2 = knots[i + degree + 1] - knots[i + 1]
    if d2 > 0:
        out += (knots[i + degree + 1] - t) / d2 * bspline_basis(i + 1, degree - 1, t, knots)
    return out


def bspline_matrix(n_ctrl: int, degree: int, t, knots=None) -> np.ndarray:
    """Basis values of all ``n_ctrl`` functions at each parameter: shape (len(t), n_ctrl)."""
    if knots is None:
        knots = clamped_knots(n_ctrl, degree)
    knots = np.asarray(knots, dtype=float)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < knots[0]) or np.any(t > knots[-1]):
        raise DomainError("parameter outside knot range")
    # degree-0 indicators on half-open spans, last non-empty span closed
    n0 = len(knots) - 1
    B = ((knots[:-1][None, :] <= t[:, None]) & (t[:, None] < knots[1:][None, :])).astype(float)
    last = np.flatnonzero(knots[:-1] < knots[1:])[-1]
    B[t == knots[-1], last] = 1.0
    for p in range(1, degree + 1):
        nb = n0 - p
        out = np.zeros((len(t), nb))
        for i in range(nb):
            d1 = knots[i + p] - knots[i]
            d2 = knots[i + p + 1] - knots[i + 1]
            if d1 > 0:
                out[:, i] += (t - knots[i]) / d1 * B[:, i]
            if d2 > 0:
                out[:, i] += (knots[i + p + 1] - t) / d2 * B[:, i + 1]
        B = out
    return B[:, :n_ctrl]


def chord_parameters(grid) -> tuple[np.ndarray, np.ndarray]:
    """(u, v): mean normalized arc length per chordwise index, span fraction per section."""
    g = np.asarray(grid, dtype=float)
    seg = np.linalg.norm(np.diff(g, axis=1), axis=-1)
    arc = np.concatenate([np.zeros((g.shape[0], 1)), np.cumsum(seg, axis=1)], axis=1)
    u = (arc / arc[:, -1:]).mean(axis=0)
    u[0], u[-1] = 0.0, 1.0
    y = g[:, :, 1].mean(axis=1)
    v = (y - y[0]) / (y[-1] - y[0])
    return u, v


@dataclass
class BsplineSurfaceDef:
    """Bicubic tensor-product surface; ``control`` is (span rows, chord cols, 3)."""

    control: np.ndarray
    u: np.ndarray
    v: np.ndarray
    degree: tuple[int, int] = (3, 3)

    @property
    def shape(self) -> tuple[int, int]:
        return self.control.shape[:2]

    def matrices(self) -> tuple[np.ndarray, np.ndarray]:
        rows, cols = self.shape
        return bspline_matrix(rows, self.degree[0], self.v), bspline_matrix(cols, self.degree[1], self.u)

    def evaluate(self, control=None) -> np.ndarray:
        P = self.control if control is None else control
        Nv, Nu = self.matrices()
        return np.einsum("si,ijc,tj->stc", Nv, P, Nu)


def _closure(n_cols: int) -> np.ndarray:
    """(n_cols-1, n_cols) map from free chordwise columns to all columns (last = first)."""
    E = np.zeros((n_cols - 1, n_cols))
    E[np.arange(n_cols - 1), np.arange(n_cols - 1)] = 1.0
    E[0, -1] = 1.0
    return E


def bspline_fit_base(target, n_rows: int = 4, n_cols: int = 14, u=None, v=None) -> BsplineSurfaceDef:
    """Least-squares control net for ``target`` with TE closure (first column == last).

    ``n_rows`` x ``n_cols`` control points, spanwise x chordwise. Parameters
    default to :func:`chord_parameters` of the target.
    """
    target = geo.check_grid(target)
    M, N, _ = target.shape
    if n_rows * n_cols > M * N:
        raise ValueError("more control points than data points")
    if u is None or v is None:
        u0, v0 = chord_parameters(target)
        u = u0 if u is None else u
        v = v0 if v is None else v
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    Nv = bspline_matrix(n_rows, 3, v)
    Nu = bspline_matrix(n_cols, 3, u)
    E = _closure(n_cols)
    Nu_f = Nu @ E.T
    for name, A in (("spanwise", Nv), ("chordwise", Nu_f)):
        if np.linalg.matrix_rank(A) < A.shape[1]:
            raise FittingError(f"rank-deficient {name} basis; use fewer control points")
    # separable problem: X_c = Nv @ Pf_c @ Nu_f.T for each coordinate c
    left = np.linalg.pinv(Nv)
    right = np.linalg.pinv(Nu_f)
    Pf = np.einsum("is,stc,jt->ijc", left, target, right)
    control = np.einsum("ijc,jk->ikc", Pf, E)
    return BsplineSurfaceDef(control, u, v)


class BsplineParam(Parameterization):
    """Two sweep-angle deltas (degrees) plus z offsets of the free control points.

    Control point x moves by ``s * (tan(base + d) - tan(base))`` where ``s`` is
    the row's span distance from the root, blended between the LE and TE
    angles by the point's chordwise position in its base row. The closing TE
    column shares the z offset of the first column.
    """

    name = "bspline"

    def __init__(self, base_grid=None, n_rows: int = 4, n_cols: int = 14, sweep_bound: float = 5.0,
                 z_bound: float = 0.1, surface: BsplineSurfaceDef | None = None):
        if surface is None:
            surface = bspline_fit_base(base_grid, n_rows, n_cols)
        self.surface = surface
        self.sweep_bound = float(sweep_bound)
        self.z_bound = float(z_bound)
        rows, cols = surface.shape
        n_z = rows * (cols - 1)
        self.space = DesignSpace(np.r_[np.full(2, -self.sweep_bound), np.full(n_z, -self.z_bound)],
                                 np.r_[np.full(2, self.sweep_bound), np.full(n_z, self.z_bound)])
        self._Nv, self._Nu = surface.matrices()
        P = surface.control
        span = P[:, :, 1].mean(axis=1)
        self._span = span - span[0]
        le = np.argmin(P[:, :-1, 0], axis=1)
        x_le = P[np.arange(rows), le, 0]
        x_te = P[:, 0, 0]
        chord = np.where(np.abs(x_te - x_le) > 0, x_te - x_le, 1.0)
        self._blend = np.clip((P[:, :, 0] - x_le[:, None]) / chord[:, None], 0.0, 1.0)
        self._blend[:, -1] = self._blend[:, 0]
        semi = self._span[-1] if self._span[-1] > 0 else 1.0
        self.sweep_le = float(np.degrees(np.arctan2(x_le[-1] - x_le[0], semi)))
        self.sweep_te = float(np.degrees(np.arctan2(x_te[-1] - x_te[0], semi)))
        self._E = _closure(cols)

    def control_net(self, x) -> np.ndarray:
        x = self.space.check(x)
        rows, cols = self.surface.shape
        d_le, d_te = x[0], x[1]
        t_le = np.tan(np.radians(self.sweep_le + d_le)) - np.tan(np.radians(self.sweep_le))
        t_te = np.tan(np.radians(self.sweep_te + d_te)) - np.tan(np.radians(self.sweep_te))
        shift = self._span[:, None] * ((1 - self._blend) * t_le + self._blend * t_te)
        dz = x[2:].reshape(rows, cols - 1) @ self._E
        P = self.surface.control.copy()
        P[:, :, 0] += shift
        P[:, :, 2] += dz
        return P

    def decode(self, x) -> np.ndarray:
        P = self.control_net(x)
        return np.einsum("si,ijc,tj->stc", self._Nv, P, self._Nu)

    def z_jacobian(self) -> np.ndarray:
        """(M*N, n_z) linear map from the z variables to surface z (x, y untouched)."""
        rows, cols = self.surface.shape
        Nu_f = self._Nu @ self._E.T
        return np.kron(self._Nv, Nu_f)

    @property
    def base_grid(self) -> np.ndarray:
        return self.surface.evaluate()

    def to_dict(self) -> dict:
        s = self.surface
        return {"type": "bspline", "shape": list(s.shape), "degree": list(s.degree), "dim": self.space.dim,
                "sweep_bound": self.sweep_bound, "z_bound": self.z_bound,
                "lower": self.space.lower.tolist(), "upper": self.space.upper.tolist(),
                "control": s.control.tolist(), "u": s.u.tolist(), "v": s.v.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "BsplineParam":
        surf = BsplineSurfaceDef(np.array(d["control"]), np.array(d["u"]), np.array(d["v"]), tuple(d["degree"]))
        return cls(surface=surf, sweep_bound=d["sweep_bound"], z_bound=d["z_bound"])


# --- FFD-GAN -----------------------------------------------------------------


class GanParam(Parameterization):
    """Latent vector in [-1, 1]^d_z decoded by a trained generator."""

    name = "ffdgan"

    def __init__(self, generator, checkpoint: str | None = None):
        if not getattr(generator, "trained", False):
            raise StateError("generator has not been trained")
        self.generator = generator
        self.checkpoint = checkpoint
        d = generator.latent_dim
        self.space = DesignSpace(-np.ones(d), np.ones(d))

    def decode(self, z) -> np.ndarray:
        z = self.space.check(z)
        return self.generator.forward(z)[1]

    def decode_batch(self, Z) -> np.ndarray:
        Z = self.space.clip(Z)
        return self.generator.forward(np.atleast_2d(Z))[1]

    def to_dict(self) -> dict:
        return {"type": "ffdgan", "dim": self.space.dim, "lower": self.space.lower.tolist(),
                "upper": self.space.upper.tolist(), "checkpoint": self.checkpoint}


class ZeroParam(Parameterization):
    """A degenerate parameterization whose whole range is one fixed shape."""

    name = "fixed"

    def __init__(self, grid, dim: int = 1):
        self.grid = np.asarray(grid, dtype=float)
        self.space = DesignSpace(np.zeros(dim), np.zeros(dim))

    def decode(self, x) -> np.ndarray:
        self.space.check(x)
        return self.grid.copy()

    def to_dict(self) -> dict:
        return {"type": "fixed", "dim": self.space.dim, "grid": self.grid.tolist()}


def param_from_dict(d: dict) -> Parameterization:
    kind = d.get("type")
    if kind == "ffd":
        return FFDParam.from_dict(d)
    if kind == "bspline":
        return BsplineParam.from_dict(d)
    if kind == "fixed":
        return ZeroParam(np.array(d["grid"]), d["dim"])
    if kind == "ffdgan":
        from .neural.train import load_checkpoint

        G, _, _ = load_checkpoint(d["checkpoint"])
        return GanParam(G, d["checkpoint"])
    raise ValueError(f"unknown parameterization type {kind!r}")
