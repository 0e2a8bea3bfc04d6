"""Coverage (fitting) test, Monte-Carlo feasibility ratio and latent traversal."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import aero
from .bayes_opt import lhs_sample
from .geometry import hausdorff, mse_fit_error, self_intersection_check
from .neural.tape import Node, grad, matmul
from .parameterizations import BsplineParam, FFDParam, GanParam, Parameterization

log = logging.getLogger(__name__)


@dataclass
class FitResult:
    x: np.ndarray
    mse: float
    hausdorff: float
    ok: bool = True
    message: str = ""


def _lsq_box(A: np.ndarray, b: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Unconstrained least squares, clip to the box, re-solve once on the free set."""
    x = np.linalg.lstsq(A, b, rcond=None)[0]
    clipped = (x < lo) | (x > hi)
    x = np.clip(x, lo, hi)
    free = ~clipped
    if clipped.any() and free.any():
        r = b - A[:, clipped] @ x[clipped]
        x[free] = np.linalg.lstsq(A[:, free], r, rcond=None)[0]
        x = np.clip(x, lo, hi)
    return x


def fit_ffd(param: FFDParam, target) -> np.ndarray:
    J = param.jacobian()
    r = (np.asarray(target, dtype=float) - param.base_grid).ravel()
    return _lsq_box(J, r, param.space.lower, param.space.upper)


def _golden(f, a: float, b: float, iters: int = 40) -> float:
    g = (np.sqrt(5.0) - 1.0) / 2.0
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def fit_bspline(param: BsplineParam, target, rounds: int = 5) -> np.ndarray:
    """Alternate a bounded linear solve for the z variables with golden-section
    searches over each sweep angle."""
    target = np.asarray(target, dtype=float)
    x = np.zeros(param.space.dim)
    lo, hi = param.space.lower, param.space.upper
    Jz = param.z_jacobian()

    def loss(v):
        return mse_fit_error(param.decode(v), target)

    for _ in range(rounds):
        x[2:] = 0.0
        surf = param.decode(x)
        rz = (target[..., 2] - surf[..., 2]).ravel()
        x[2:] = _lsq_box(Jz, rz, lo[2:], hi[2:])
        for k in (0, 1):
            def f(a, k=k):
                trial = x.copy()
                trial[k] = a
                return loss(trial)

            x[k] = _golden(f, lo[k], hi[k])
    return x


def fit_gan(param: GanParam, target, steps: int = 200, restarts: int = 10, lr: float = 0.05,
            seed: int = 0) -> np.ndarray:
    """Projected Adam descent on the latent MSE from LHS starting points (batched)."""
    G = param.generator
    target = np.asarray(target, dtype=float)
    ffd = G.ffd
    base, psi = ffd.channel_map(1, np.float64)
    tflat = target.transpose(2, 0, 1).reshape(1, -1)
    rng = np.random.default_rng([seed, 5])
    Z = 2.0 * lhs_sample(restarts, G.latent_dim, rng) - 1.0
    m = np.zeros_like(Z)
    v = np.zeros_like(Z)
    best_z, best_err = Z.copy(), np.full(restarts, np.inf)
    b1, b2 = 0.9, 0.999
    psi_n, base_n = Node(psi), Node(base[None, :] - tflat)
    for t in range(1, steps + 2):
        z = Node(Z, requires_grad=True)
        diff = base_n + matmul(G.mlp(z), psi_n)
        per = (diff * diff).sum(axis=1) * (3.0 / diff.shape[1])  # per-restart MSE over M*N points
        err = per.value
        better = err < best_err
        best_err[better], best_z[better] = err[better], Z[better]
        if t > steps:
            break
        (g,) = grad(per.sum(), [z])
        g = g.value
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        Z = np.clip(Z - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + 1e-8), -1.0, 1.0)
    return best_z[int(np.argmin(best_err))]


def fit_target(param: Parameterization, target, seed: int = 0) -> FitResult:
    """Least-squares fit of ``param`` to ``target``; Hausdorff distance of the fit.

    The zero vector is kept whenever the optimizer fails to beat it.
    """
    target = np.asarray(target, dtype=float)
    ok, msg = True, ""
    x0 = param.space.clip(np.zeros(param.space.dim))
    try:
        if isinstance(param, FFDParam):
            x = fit_ffd(param, target)
        elif isinstance(param, BsplineParam):
            x = fit_bspline(param, target)
        elif isinstance(param, GanParam):
            x = fit_gan(param, target, seed=seed)
        else:
            x = x0
    except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        log.warning("fit failed for %s: %s", param.name, exc)
        x, ok, msg = x0, False, str(exc)
    x = param.space.clip(x)
    fit = param.decode(x)
    err = mse_fit_error(fit, target)
    zero = param.decode(x0)
    err0 = mse_fit_error(zero, target)
    if err0 < err:
        x, fit, err = x0, zero, err0
    return FitResult(x, err, hausdorff(fit, target), ok, msg)


def coverage_test(param: Parameterization, targets, seed: int = 0) -> list[dict]:
    rows = []
    for i, t in enumerate(targets):
        r = fit_target(param, t, seed=seed + i)
        rows.append({"target_id": i, "param_name": param.name, "dims": param.space.dim, "mse": r.mse,
                     "hausdorff": r.hausdorff})
    return rows


@dataclass
class FeasibilityReport:
    ratio: float
    half_width: float
    n_samples: int
    rows: list[dict] = field(default_factory=list)


def evaluate_sample(grid, alpha: float = 2.0) -> dict:
    geometric_ok = not self_intersection_check(grid)
    CL, LD = float("nan"), float("nan")
    if geometric_ok:
        try:
            res = aero.lifting_line_solve(grid, aero.FlowCondition(alpha=alpha))
            CL, LD = res.CL, res.LD
        except (ValueError, RuntimeError) as exc:
            log.debug("aero failure: %s", exc)
    feasible = bool(geometric_ok and np.isfinite(LD) and LD > 0)
    return {"geometric_ok": geometric_ok, "CL": CL, "LD": LD, "feasible": feasible}


def _decode_many(param: Parameterization, X: np.ndarray, batch: int = 64):
    if isinstance(param, GanParam):
        for s in range(0, len(X), batch):
            yield from param.decode_batch(X[s : s + batch])
    else:
        for x in X:
            yield param.decode(x)


def feasibility_ratio(param: Parameterization, n_samples: int, seed: int, alpha: float = 2.0) -> FeasibilityReport:
    """Fraction of uniform design-space samples that decode to feasible wings."""
    if n_samples < 100:
        raise ValueError("feasibility ratio needs at least 100 samples")
    rng = np.random.default_rng([seed, 7])
    X = param.space.sample(n_samples, rng)
    rows = []
    for i, grid in enumerate(_decode_many(param, X)):
        rows.append({"sample_id": i, **evaluate_sample(grid, alpha)})
    p = float(np.mean([r["feasible"] for r in rows]))
    half = 1.96 * np.sqrt(p * (1 - p) / n_samples)
    return FeasibilityReport(p, float(half), n_samples, rows)


def latent_traverse(generator, dim: int, steps: int, others=None) -> list[np.ndarray]:
    """Sweep latent coordinate ``dim`` over [-1, 1] with the rest held at ``others``."""
    d = generator.latent_dim
    if not 0 <= dim < d:
        raise ValueError(f"latent dimension {dim} out of range for d_z={d}")
    if steps < 2:
        raise ValueError("steps must be >= 2")
    base = np.zeros(d) if others is None else np.asarray(others, dtype=float).copy()
    Z = np.repeat(base[None, :], steps, axis=0)
    Z[:, dim] = np.linspace(-1.0, 1.0, steps)
    return list(generator.forward(Z)[1])
