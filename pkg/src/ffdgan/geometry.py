"""FFD kernels, shape metrics and wing preprocessing.

A surface grid is an ``(M, N, 3)`` float array: ``M`` spanwise cross-sections
with ``N`` points each. Sections lie in x-z planes, run TE -> upper -> LE ->
lower -> TE and are closed (first point equals last point).
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DomainError, GeometryError

BOX_MARGIN = 0.05


def check_grid(grid) -> np.ndarray:
    """Validate and return ``grid`` as a float array of shape (M, N, 3)."""
    g = np.asarray(grid, dtype=float)
    if g.ndim != 3 or g.shape[2] != 3:
        raise ValueError(f"surface grid must have shape (M, N, 3), got {g.shape}")
    if g.shape[0] < 2 or g.shape[1] < 4:
        raise ValueError(f"surface grid needs M >= 2 and N >= 4, got {g.shape[:2]}")
    if not np.all(np.isfinite(g)):
        raise ValueError("surface grid contains non-finite coordinates")
    return g


@dataclass(frozen=True)
class BoundingBox:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(3)
        hi = np.asarray(self.hi, dtype=float).reshape(3)
        if np.any(lo > hi):
            raise ValueError("bounding box min exceeds max")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def extent(self) -> np.ndarray:
        return self.hi - self.lo

    @classmethod
    def around(cls, points, margin: float = BOX_MARGIN) -> "BoundingBox":
        """Axis-aligned box of ``points`` grown by ``margin`` * extent on every side."""
        p = np.asarray(points, dtype=float).reshape(-1, 3)
        lo, hi = p.min(axis=0), p.max(axis=0)
        pad = margin * (hi - lo)
        return cls(lo - pad, hi + pad)


@dataclass(frozen=True)
class ControlLattice:
    """Control points of shape ``(l+1, m+1, n+1, 3)`` embedded in ``box``."""

    points: np.ndarray
    box: BoundingBox

    @property
    def degrees(self) -> tuple[int, int, int]:
        l1, m1, n1, _ = self.points.shape
        return l1 - 1, m1 - 1, n1 - 1

    @property
    def size(self) -> int:
        l1, m1, n1, _ = self.points.shape
        return l1 * m1 * n1


def bernstein(i: int, l: int, u):
    """Bernstein polynomial ``C(l, i) u^i (1-u)^(l-i)``; ``u`` may be an array."""
    if l < 0 or not 0 <= i <= l:
        raise ValueError(f"Bernstein index {i} out of range for degree {l}")
    u = np.asarray(u, dtype=float)
    if np.any((u < 0.0) | (u > 1.0)):
        raise DomainError("Bernstein parameter must lie in [0, 1]")
    out = comb(l, i) * u**i * (1.0 - u) ** (l - i)
    return float(out) if out.ndim == 0 else out


def bernstein_matrix(l: int, u) -> np.ndarray:
    """All degree-``l`` Bernstein values at ``u``: shape ``u.shape + (l+1,)``."""
    u = np.asarray(u, dtype=float)[..., None]
    i = np.arange(l + 1)
    coef = np.array([comb(l, k) for k in i], dtype=float)
    return coef * u**i * (1.0 - u) ** (l - i)


def base_lattice(box: BoundingBox, l: int, m: int, n: int) -> ControlLattice:
    """Equally spaced control points filling ``box`` with (l+1)(m+1)(n+1) points."""
    if min(l, m, n) < 1:
        raise ValueError("lattice degrees must be >= 1 on every axis")
    if np.any(box.extent <= 0.0):
        raise ValueError(f"degenerate bounding box axis: extent {box.extent}")
    i = np.arange(l + 1) / l
    j = np.arange(m + 1) / m
    k = np.arange(n + 1) / n
    ii, jj, kk = np.meshgrid(i, j, k, indexing="ij")
    frac = np.stack([ii, jj, kk], axis=-1)
    return ControlLattice(box.lo + frac * box.extent, box)


def param_coords(base, box: BoundingBox, tol: float = 1e-9) -> np.ndarray:
    """Map points (any leading shape, last axis 3) affinely into the unit cube."""
    p = np.asarray(base, dtype=float)
    ext = box.extent
    if np.any(ext <= 0.0):
        raise ValueError(f"degenerate bounding box axis: extent {ext}")
    uvw = (p - box.lo) / ext
    if np.any(uvw < -tol) or np.any(uvw > 1.0 + tol):
        raise DomainError("surface point lies outside the FFD bounding box")
    return np.clip(uvw, 0.0, 1.0)


def ffd_basis(coords, degrees: tuple[int, int, int]) -> np.ndarray:
    """Trivariate Bernstein weights, shape ``(K, (l+1)(m+1)(n+1))`` for K points.

    Row ``p`` holds ``B_i(u_p) B_j(v_p) B_k(w_p)`` in C order over (i, j, k), so
    ``ffd_basis(c, d) @ P.reshape(-1, 3)`` evaluates the deformed points.
    """
    l, m, n = degrees
    c = np.asarray(coords, dtype=float).reshape(-1, 3)
    bu = bernstein_matrix(l, c[:, 0])
    bv = bernstein_matrix(m, c[:, 1])
    bw = bernstein_matrix(n, c[:, 2])
    return np.einsum("pi,pj,pk->pijk", bu, bv, bw).reshape(len(c), -1)


def ffd_deform(base: ControlLattice, delta, coords) -> np.ndarray:
    """Deform the embedded points ``coords`` by control-point offsets ``delta``."""
    delta = np.asarray(delta, dtype=float)
    if delta.shape != base.points.shape:
        raise ValueError(f"offset shape {delta.shape} != lattice shape {base.points.shape}")
    coords = np.asarray(coords, dtype=float)
    phi = ffd_basis(coords, base.degrees)
    out = phi @ (base.points + delta).reshape(-1, 3)
    return out.reshape(coords.shape)


def hausdorff(a, b, chunk: int = 2048) -> float:
    """Symmetric Hausdorff distance between two point sets (grids are flattened)."""
    pa = np.asarray(a, dtype=float).reshape(-1, 3)
    pb = np.asarray(b, dtype=float).reshape(-1, 3)
    if len(pa) == 0 or len(pb) == 0:
        raise ValueError("Hausdorff distance needs non-empty point sets")
    best_b = np.full(len(pb), np.inf)
    worst_a = 0.0
    for s in range(0, len(pa), chunk):
        d2 = cdist(pa[s : s + chunk], pb, "sqeuclidean")
        worst_a = max(worst_a, float(d2.min(axis=1).max()))
        np.minimum(best_b, d2.min(axis=0), out=best_b)
    return float(np.sqrt(max(worst_a, float(best_b.max()))))


def mse_fit_error(a, b) -> float:
    """Mean squared point-to-point distance between two grids of equal size."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"grid shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean(np.sum((a - b) ** 2, axis=-1)))


def mean_shape(grids) -> np.ndarray:
    if len(grids) == 0:
        raise ValueError("mean_shape needs at least one grid")
    stack = np.asarray(grids, dtype=float)
    if stack.ndim != 4:
        raise ValueError("grids must share a common (M, N, 3) shape")
    return stack.mean(axis=0)


def leading_edge_index(section) -> int:
    """Index of the minimum-x point once the section's chord is rotated onto +x.

    The trailing edge is the closing point ``section[0]``. Starts from the point
    farthest from the trailing edge and iterates until the index settles.
    """
    xz = np.asarray(section, dtype=float)[:, [0, 2]]
    te = xz[0]
    rel = xz - te
    idx = int(np.argmax(np.einsum("ij,ij->i", rel, rel)))
    for _ in range(20):
        chord = xz[idx] - te
        if not np.any(chord):
            raise GeometryError("zero-chord section")
        # unit vector from LE towards TE
        d = -chord / np.hypot(*chord)
        new = int(np.argmin(rel @ d))
        if new == idx:
            break
        idx = new
    return idx


def section_frame(section) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Leading edge, trailing edge, chord length and nose-up twist (radians)."""
    s = np.asarray(section, dtype=float)
    le = s[leading_edge_index(s)]
    te = s[0]
    dx, dz = te[0] - le[0], te[2] - le[2]
    chord = float(np.hypot(dx, dz))
    if chord == 0.0:
        raise GeometryError("zero-chord section")
    return le, te, chord, float(np.arctan2(-dz, dx))


def align(grid) -> np.ndarray:
    """Root LE to the origin, root chord onto +x (rotation about y), span scaled to 1."""
    g = check_grid(grid)
    root = g[0]
    try:
        le_idx = leading_edge_index(root)
    except GeometryError:
        raise GeometryError("first section has zero chord") from None
    le = root[le_idx]
    out = g - le
    te = out[0, 0]
    phi = np.arctan2(te[2], te[0])
    if np.hypot(te[0], te[2]) == 0.0:
        raise GeometryError("first section has zero chord")
    c, s = np.cos(phi), np.sin(phi)
    x = out[..., 0] * c + out[..., 2] * s
    z = -out[..., 0] * s + out[..., 2] * c
    out[..., 0] = x
    out[..., 2] = z
    span = out[..., 1].max() - out[..., 1].min()
    if span <= 0.0:
        raise GeometryError("wing has zero span")
    out[..., 1] /= span
    return out


def signed_areas(grid) -> np.ndarray:
    """Shoelace area of every section polygon in the x-z plane (CCW positive)."""
    g = np.asarray(grid, dtype=float)
    x, z = g[..., 0], g[..., 2]
    return 0.5 * np.sum(x[:, :-1] * z[:, 1:] - x[:, 1:] * z[:, :-1], axis=1)


def _crossing_pairs(xz: np.ndarray) -> np.ndarray:
    """Per-section flag: any two non-adjacent polygon edges touch or cross.

    ``xz`` has shape (M, N, 2) with closed sections, giving N-1 edges each.
    """
    p = xz[:, :-1]
    q = xz[:, 1:]
    k = p.shape[1]

    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (
            c[..., 0] - a[..., 0]
        )

    pi, qi = p[:, :, None, :], q[:, :, None, :]
    pj, qj = p[:, None, :, :], q[:, None, :, :]
    o1 = orient(pi, qi, pj)
    o2 = orient(pi, qi, qj)
    o3 = orient(pj, qj, pi)
    o4 = orient(pj, qj, qi)
    lo_i, hi_i = np.minimum(pi, qi), np.maximum(pi, qi)
    lo_j, hi_j = np.minimum(pj, qj), np.maximum(pj, qj)
    boxes = np.all((lo_i <= hi_j) & (lo_j <= hi_i), axis=-1)
    hit = (o1 * o2 <= 0.0) & (o3 * o4 <= 0.0) & boxes

    i, j = np.triu_indices(k, 2)
    keep = ~((i == 0) & (j == k - 1))
    return np.any(hit[:, i[keep], j[keep]], axis=1)


def self_intersection_check(grid) -> bool:
    """True when any section polygon is non-simple or has non-positive area."""
    g = np.asarray(grid, dtype=float)
    if not np.all(np.isfinite(g)):
        return True
    xz = g[..., [0, 2]]
    scale = np.ptp(xz.reshape(-1, 2), axis=0).max() ** 2
    if np.any(signed_areas(g) <= 1e-12 * max(scale, 1e-300)):
        return True
    return bool(np.any(_crossing_pairs(xz)))
