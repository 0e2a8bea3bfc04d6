"""Latin hypercube designs, a small GP regressor, GP-UCB and the shape optimization loop."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .errors import GeometryError, SolverError

log = logging.getLogger(__name__)

ALPHA_BOUNDS = (-5.0, 10.0)


def lhs_sample(n: int, dims: int, rng: np.random.Generator) -> np.ndarray:
    """n points in [0, 1)^dims with exactly one point per bin along every axis."""
    if n < 1 or dims < 1:
        raise ValueError("lhs_sample needs n >= 1 and dims >= 1")
    u = rng.uniform(0.0, 1.0, (n, dims))
    perm = np.argsort(rng.uniform(size=(n, dims)), axis=0)
    return (perm + u) / n


def se_kernel(A: np.ndarray, B: np.ndarray, length: float, var: float) -> np.ndarray:
    d2 = (np.sum(A * A, 1)[:, None] + np.sum(B * B, 1)[None, :] - 2.0 * A @ B.T).clip(min=0.0)
    return var * np.exp(-0.5 * d2 / length**2)


@dataclass
class GpModel:
    """Isotropic squared-exponential GP on unit-cube inputs with standardized outputs.

    The signal variance is profiled out in closed form for each length scale on
    the grid, so the 16-point search is one-dimensional.
    """

    jitter: float = 1e-6
    max_jitter: float = 1e-2
    n_grid: int = 16
    length_range: tuple[float, float] = (0.02, 5.0)
    X: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    y: np.ndarray = field(default_factory=lambda: np.zeros(0))
    length: float = 1.0
    var: float = 1.0
    y_mean: float = 0.0
    y_std: float = 1.0
    used_jitter: float = 1e-6

    def _chol(self, R: np.ndarray):
        tau = self.jitter
        while tau <= self.max_jitter * (1 + 1e-9):
            try:
                return cho_factor(R + tau * np.eye(len(R)), lower=True), tau
            except np.linalg.LinAlgError:
                tau *= 10.0
        raise SolverError("kernel matrix not positive definite even with maximal jitter")

    def fit(self, X, y) -> "GpModel":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        if len(X) != len(y):
            raise ValueError("X and y differ in length")
        self.X = X
        self.y_mean = float(y.mean()) if len(y) else 0.0
        std = float(y.std()) if len(y) > 1 else 0.0
        self.y_std = std if std > 1e-12 else 1.0
        self.y = (y - self.y_mean) / self.y_std
        if len(y) == 0:
            self.length, self.var = 1.0, 1.0
            return self
        n = len(y)
        best = (-np.inf, None)
        for ell in np.geomspace(*self.length_range, self.n_grid):
            R = se_kernel(X, X, ell, 1.0)
            try:
                (c, low), tau = self._chol(R)
            except SolverError:
                continue
            a = cho_solve((c, low), self.y)
            var = max(float(self.y @ a) / n, 1e-12)
            lml = -0.5 * n * np.log(var) - np.sum(np.log(np.diag(c)))
            if lml > best[0]:
                best = (lml, (ell, var, tau))
        if best[1] is None:
            raise SolverError("no length scale gave a factorizable kernel")
        self.length, self.var, self.used_jitter = best[1]
        (c, low), _ = self._chol(se_kernel(X, X, self.length, 1.0))
        self._L = np.tril(c)
        self._alpha = cho_solve((c, low), self.y)
        return self

    def predict(self, Q) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and latent variance in the original output units."""
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if len(self.y) == 0:
            return np.full(len(Q), self.y_mean), np.full(len(Q), self.var * self.y_std**2)
        r = se_kernel(Q, self.X, self.length, 1.0)
        mean = r @ self._alpha
        v = solve_triangular(self._L, r.T, lower=True)
        var = self.var * np.clip(1.0 - np.sum(v * v, axis=0), 0.0, None)
        return self.y_mean + self.y_std * mean, var * self.y_std**2

    def state(self) -> dict:
        return {"length": self.length, "var": self.var, "y_mean": self.y_mean, "y_std": self.y_std,
                "jitter": self.used_jitter}


def gp_fit_predict(X, y, Q, model: GpModel | None = None) -> tuple[np.ndarray, np.ndarray]:
    if len(y) < 2:
        raise ValueError("gp_fit_predict needs at least 2 observations")
    model = model or GpModel()
    return model.fit(X, y).predict(Q)


def ucb_suggest(model: GpModel, dims: int, kappa: float, rng: np.random.Generator, n_candidates: int = 1024,
                refine_rounds: int = 6, step: float = 0.05) -> np.ndarray:
    """Maximize mean + kappa * std over [0, 1]^dims: random candidates, then
    greedy coordinate moves with a halving step."""

    def acq(P):
        m, v = model.predict(P)
        return m + kappa * np.sqrt(v)

    C = rng.uniform(0.0, 1.0, (n_candidates, dims))
    a = acq(C)
    i = int(np.argmax(a))
    x, fx = C[i].copy(), a[i]
    eye = np.eye(dims)
    for _ in range(refine_rounds):
        moved = True
        while moved:
            P = np.clip(np.concatenate([x + step * eye, x - step * eye]), 0.0, 1.0)
            ap = acq(P)
            j = int(np.argmax(ap))
            moved = ap[j] > fx + 1e-12
            if moved:
                x, fx = P[j], ap[j]
        step *= 0.5
    return np.clip(x, 0.0, 1.0)


@dataclass
class OptBudget:
    n_init: int = 10
    n_seq: int = 90
    kappa: float = 2.0

    def __post_init__(self):
        if self.n_init < 2:
            raise ValueError("n_init must be >= 2")
        if self.n_seq < 0:
            raise ValueError("n_seq must be >= 0")


def evaluate_design(param, x, alpha: float) -> dict:
    """Decode, re-align at zero incidence and run the lifting line; None LD when infeasible."""
    from . import aero
    from .geometry import align, self_intersection_check

    grid = param.decode(x)
    if self_intersection_check(grid):
        return {"CL": float("nan"), "CD": float("nan"), "LD": None, "reason": "self-intersecting"}
    try:
        res = aero.lifting_line_solve(align(grid), aero.FlowCondition(alpha=alpha))
    except (GeometryError, SolverError, ValueError, FloatingPointError) as exc:
        return {"CL": float("nan"), "CD": float("nan"), "LD": None, "reason": str(exc)}
    if not np.isfinite(res.LD):
        return {"CL": res.CL, "CD": res.CD, "LD": None, "reason": "non-finite LD"}
    return {"CL": res.CL, "CD": res.CD, "LD": res.LD, "reason": ""}


@dataclass
class OptState:
    U: list = field(default_factory=list)  # unit-cube points, alpha last
    scores: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    rng_state: dict | None = None


def _row(it, phase, x, alpha, ev, score, best):
    return {"iteration": it, "phase": phase, "x": [float(v) for v in x], "alpha_deg": float(alpha),
            "CL": float(ev["CL"]), "CD": float(ev["CD"]), "LD": float(score), "feasible": ev["LD"] is not None,
            "best_so_far": float(best)}


def optimize_shape(param, budget: OptBudget = OptBudget(), seed: int = 0, checkpoint=None,
                   evaluator=evaluate_design, stop_after: int | None = None) -> list[dict]:
    """LHS then GP-UCB maximization of CL/CD over design variables and alpha.

    Infeasible or failed evaluations score (lowest score so far) - 1. With
    ``checkpoint`` set, the state is saved after every evaluation and an
    existing checkpoint is resumed. ``stop_after`` halts early (for resume tests).
    """
    space = param.space
    dims = space.dim + 1
    st = OptState()
    rng = np.random.default_rng([seed, 11])
    if checkpoint is not None and Path(checkpoint).exists():
        doc = json.loads(Path(checkpoint).read_text())
        st = OptState(doc["U"], doc["scores"], doc["rows"], doc["rng_state"])
        rng.bit_generator.state = st.rng_state
        init = np.asarray(doc["init"])
    else:
        init = lhs_sample(budget.n_init, dims, rng)
    total = budget.n_init + budget.n_seq
    model = GpModel()
    while len(st.scores) < total:
        it = len(st.scores)
        if stop_after is not None and it >= stop_after:
            break
        if it < budget.n_init:
            u, phase = init[it], "lhs"
        else:
            model.fit(np.asarray(st.U), np.asarray(st.scores))
            u, phase = ucb_suggest(model, dims, budget.kappa, rng), "ucb"
        x = space.from_unit(u[:-1])
        alpha = ALPHA_BOUNDS[0] + u[-1] * (ALPHA_BOUNDS[1] - ALPHA_BOUNDS[0])
        try:
            ev = evaluator(param, x, alpha)
        except Exception as exc:  # noqa: BLE001  any evaluator failure is penalized, not fatal
            log.warning("evaluation %d failed: %s", it, exc)
            ev = {"CL": float("nan"), "CD": float("nan"), "LD": None, "reason": str(exc)}
        if ev["LD"] is None:
            score = (min(st.scores) if st.scores else 0.0) - 1.0
            log.info("evaluation %d infeasible (%s); penalty %.4f", it, ev.get("reason", ""), score)
        else:
            score = float(ev["LD"])
        st.U.append([float(v) for v in u])
        st.scores.append(score)
        st.rows.append(_row(it, phase, x, alpha, ev, score, max(st.scores)))
        if checkpoint is not None:
            doc = {"format": "ffdgan-bo", "version": 1, "seed": seed, "init": init.tolist(), "U": st.U,
                   "scores": st.scores, "rows": st.rows, "rng_state": rng.bit_generator.state,
                   "gp": model.state()}
            Path(checkpoint).write_text(json.dumps(doc))
    return st.rows


def best_so_far(rows: list[dict], at: int) -> float:
    """Best score among the first ``at`` evaluations."""
    return max(r["LD"] for r in rows[:at])
