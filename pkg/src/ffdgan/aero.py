"""Lifting-line wing evaluation and the feasibility predicate.

Sections of the surface grid give chord, twist and a thin-airfoil zero-lift
angle; Prandtl's monoplane equation is solved in a sine series with odd terms
only (symmetric flight) at cosine-spaced stations over the half span.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, SolverError
from .geometry import leading_edge_index, self_intersection_check

CD0 = 0.01
LIFT_SLOPE = 2.0 * np.pi


@dataclass(frozen=True)
class FlowCondition:
    alpha: float = 2.0  # degrees
    mach: float = 0.4
    compressible: bool = False


@dataclass(frozen=True)
class AeroResult:
    CL: float
    CDi: float
    CD0: float
    LD: float
    AR: float

    @property
    def CD(self) -> float:
        return self.CDi + self.CD0


def _chord_frame(section) -> tuple[np.ndarray, int, float, float]:
    """Section points in the chord frame (x along LE->TE in [0, 1]), LE index, chord, twist."""
    s = np.asarray(section, dtype=float)
    if s.shape[-1] == 2:
        s = np.insert(s, 1, 0.0, axis=1)
    try:
        i_le = leading_edge_index(s)
    except GeometryError:
        raise GeometryError("degenerate section chord") from None
    le, te = s[i_le], s[0]
    dx, dz = te[0] - le[0], te[2] - le[2]
    chord = float(np.hypot(dx, dz))
    if chord <= 1e-12 * max(1.0, float(np.abs(s).max())):
        raise GeometryError("degenerate section chord")
    c, sn = dx / chord, dz / chord
    rx, rz = s[:, 0] - le[0], s[:, 2] - le[2]
    local = np.stack([(rx * c + rz * sn) / chord, (-rx * sn + rz * c) / chord], axis=1)
    return local, i_le, chord, float(np.arctan2(-dz, dx))


def camber_line(section, n: int = 201) -> tuple[np.ndarray, np.ndarray]:
    """Mean line sampled at cosine-spaced chord stations, in chord units."""
    local, i_le, _, _ = _chord_frame(section)
    upper = local[: i_le + 1][::-1]
    lower = local[i_le:]
    x = 0.5 * (1.0 - np.cos(np.linspace(0.0, np.pi, n)))

    def surf(p):
        order = np.argsort(p[:, 0], kind="stable")
        return np.interp(x, p[order, 0], p[order, 1])

    return x, 0.5 * (surf(upper) + surf(lower))


def zero_lift_angle(x: np.ndarray, zc: np.ndarray) -> float:
    """Thin-airfoil zero-lift angle (radians) of a piecewise-linear mean line.

    With x = (1 - cos t)/2 the angle is -(1/pi) * integral of dz/dx (cos t - 1) dt;
    on each linear piece the weight integral is exact.
    """
    t = np.arccos(np.clip(1.0 - 2.0 * x, -1.0, 1.0))
    slope = np.diff(zc) / np.diff(x)
    w = np.diff(np.sin(t) - t)
    return float(-np.sum(slope * w) / np.pi)


def section_aero_props(section) -> tuple[float, float]:
    """(zero-lift angle in degrees, lift slope per radian) of one section."""
    x, zc = camber_line(section)
    return float(np.degrees(zero_lift_angle(x, zc))), LIFT_SLOPE


def section_cl(section, alpha_deg: float) -> float:
    a0, slope = section_aero_props(section)
    return slope * np.radians(alpha_deg - a0)


def spanwise_properties(grid) -> dict[str, np.ndarray]:
    """Per-section station y, chord, twist (rad) and zero-lift angle (rad).

    Sections whose chord collapses (e.g. a pointed tip) get chord 0 and borrow
    twist and zero-lift angle from the nearest regular section.
    """
    g = np.asarray(grid, dtype=float)
    M = g.shape[0]
    y = g[:, :, 1].mean(axis=1)
    chord = np.zeros(M)
    twist = np.full(M, np.nan)
    a0 = np.full(M, np.nan)
    for k in range(M):
        try:
            x, zc = camber_line(g[k])
            _, _, chord[k], twist[k] = _chord_frame(g[k])
            a0[k] = zero_lift_angle(x, zc)
        except GeometryError:
            chord[k] = 0.0
    ok = np.flatnonzero(~np.isnan(twist))
    if len(ok) == 0:
        raise GeometryError("every section is degenerate")
    for k in np.flatnonzero(np.isnan(twist)):
        j = ok[np.argmin(np.abs(ok - k))]
        twist[k], a0[k] = twist[j], a0[j]
    return {"y": y, "chord": chord, "twist": twist, "alpha0": a0}


def lifting_line_solve(grid, cond: FlowCondition = FlowCondition(), n_terms: int = 16,
                       cd0: float = CD0) -> AeroResult:
    """Prandtl lifting-line solution for the half wing mirrored about its root."""
    if n_terms < 8:
        raise ValueError("n_terms must be >= 8")
    props = spanwise_properties(grid)
    eta = props["y"] - props["y"][0]
    if np.any(np.diff(eta) < 0):
        raise GeometryError("section stations must be ordered root to tip")
    semi = eta[-1]
    if semi <= 0:
        raise GeometryError("wing has zero span")
    b = 2.0 * semi
    area = 2.0 * np.trapezoid(props["chord"], eta)
    if area <= 0:
        raise GeometryError("wing has zero planform area")
    AR = b * b / area

    slope = LIFT_SLOPE
    if cond.compressible:
        slope = slope / np.sqrt(1.0 - cond.mach**2)
    theta = np.arange(1, n_terms + 1) * np.pi / (2 * n_terms)
    ys = semi * np.cos(theta)
    c = np.interp(ys, eta, props["chord"])
    tw = np.interp(ys, eta, props["twist"])
    a0 = np.interp(ys, eta, props["alpha0"])
    alpha_eff = np.radians(cond.alpha) + tw - a0

    n = 2 * np.arange(n_terms) + 1
    mu = slope * c / (4.0 * b)
    sin_nt = np.sin(np.outer(theta, n))
    A_mat = sin_nt * (1.0 + mu[:, None] * n[None, :] / np.sin(theta)[:, None])
    rhs = mu * alpha_eff
    try:
        coef = np.linalg.solve(A_mat, rhs)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"singular collocation system: {exc}") from exc
    if not np.all(np.isfinite(coef)):
        raise SolverError("non-finite lifting-line coefficients")
    CL = float(np.pi * AR * coef[0])
    CDi = float(np.pi * AR * np.sum(n * coef**2))
    return AeroResult(CL, CDi, cd0, CL / (CDi + cd0), float(AR))


def feasibility(grid, alpha: float = 2.0) -> bool:
    """Non-self-intersecting and positive lift-to-drag at ``alpha`` degrees.

    Geometry the evaluator cannot process counts as infeasible.
    """
    if self_intersection_check(grid):
        return False
    try:
        return lifting_line_solve(grid, FlowCondition(alpha=alpha)).LD > 0.0
    except (GeometryError, SolverError, ValueError):
        return False
