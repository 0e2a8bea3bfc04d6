import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ffdgan import geometry as geo
from ffdgan.bayes_opt import (GpModel, OptBudget, best_so_far, gp_fit_predict, lhs_sample, optimize_shape,
                              ucb_suggest)
from ffdgan.errors import SolverError
from ffdgan.parameterizations import FFDParam


class TestLhs:
    def test_quarters(self):
        x = lhs_sample(4, 1, np.random.default_rng(0))[:, 0]
        assert sorted(np.floor(x * 4).astype(int)) == [0, 1, 2, 3]

    @given(st.integers(1, 40), st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_stratified(self, n, d, seed):
        x = lhs_sample(n, d, np.random.default_rng(seed))
        assert x.shape == (n, d) and np.all((x >= 0) & (x < 1))
        for k in range(d):
            assert np.array_equal(np.sort(np.floor(x[:, k] * n)), np.arange(n))

    def test_deterministic(self):
        a = lhs_sample(10, 3, np.random.default_rng(5))
        b = lhs_sample(10, 3, np.random.default_rng(5))
        assert np.array_equal(a, b)

    def test_bad_n(self):
        with pytest.raises(ValueError):
            lhs_sample(0, 2, np.random.default_rng(0))


def f1(x):
    return np.sin(6 * x) * x + 0.3 * np.sin(25 * x)


class TestGp:
    def test_interpolates(self):
        X = np.array([[0.1], [0.4], [0.7], [0.9]])
        y = np.array([0.2, -0.5, 0.4, 0.1])
        m, v = gp_fit_predict(X, y, X)
        assert np.abs(m - y).max() < 1e-6 and v.max() < 1e-6

    def test_prior_reversion(self):
        X = np.array([[0.1], [0.4], [0.7]])
        model = GpModel().fit(X, np.array([1.0, 3.0, 2.0]))
        _, v = model.predict([[100.0]])
        assert v[0] == pytest.approx(model.var * model.y_std**2, rel=1e-9)

    def test_better_than_prior(self):
        X = np.linspace(0.05, 0.95, 5)[:, None]
        g = lambda x: np.sin(3 * x)
        Q = np.linspace(0, 1, 50)[:, None]
        m, _ = gp_fit_predict(X, g(X[:, 0]), Q)
        prior = np.full(50, g(X[:, 0]).mean())
        assert np.sqrt(np.mean((m - g(Q[:, 0])) ** 2)) < np.sqrt(np.mean((prior - g(Q[:, 0])) ** 2))

    def test_zero_observations_prior(self):
        model = GpModel().fit(np.zeros((0, 2)), np.zeros(0))
        m, v = model.predict(np.random.default_rng(0).uniform(size=(3, 2)))
        np.testing.assert_array_equal(m, 0.0)
        np.testing.assert_array_equal(v, 1.0)

    def test_constant_outputs_guarded(self):
        m, v = gp_fit_predict(np.array([[0.1], [0.5]]), np.array([2.0, 2.0]), [[0.3]])
        assert np.isfinite(m).all() and np.isfinite(v).all()

    def test_requires_two(self):
        with pytest.raises(ValueError):
            gp_fit_predict(np.array([[0.1]]), np.array([1.0]), [[0.2]])

    def test_jitter_escalation(self):
        X = np.zeros((6, 1))  # identical inputs, rank one kernel
        model = GpModel().fit(X, np.arange(6.0))
        assert model.used_jitter >= 1e-6
        with pytest.raises(SolverError):
            GpModel(max_jitter=1e-7)._chol(-np.eye(3))


class TestUcb:
    def _model(self):
        X = np.array([[0.1], [0.35], [0.6], [0.8]])
        return GpModel().fit(X, f1(X[:, 0]))

    def test_kappa_zero_exploits(self):
        model = self._model()
        x = ucb_suggest(model, 1, 0.0, np.random.default_rng(3))
        cand = np.random.default_rng(3).uniform(0, 1, (1024, 1))
        assert model.predict(x[None])[0][0] >= model.predict(cand)[0].max() - 1e-12

    def test_large_kappa_explores(self):
        model = self._model()
        x = ucb_suggest(model, 1, 1e6, np.random.default_rng(4))
        grid = np.linspace(0, 1, 2001)[:, None]
        assert model.predict(x[None])[1][0] >= 0.99 * model.predict(grid)[1].max()

    @given(st.integers(0, 2**32 - 1), st.integers(1, 5))
    def test_in_bounds(self, seed, d):
        rng = np.random.default_rng(seed)
        X = rng.uniform(size=(6, d))
        model = GpModel().fit(X, rng.normal(size=6))
        x = ucb_suggest(model, d, 2.0, rng, n_candidates=64)
        assert x.shape == (d,) and np.all((x >= 0) & (x <= 1))


@pytest.fixture(scope="module")
def ffd(small_wings):
    return FFDParam(geo.mean_shape(small_wings), (1, 1, 1))


class TestOptimize:
    def test_budget_validation(self):
        with pytest.raises(ValueError):
            OptBudget(n_init=1)
        assert (OptBudget().n_init, OptBudget().n_seq, OptBudget().kappa) == (10, 90, 2.0)

    def test_history_and_monotone_best(self, ffd):
        rows = optimize_shape(ffd, OptBudget(4, 4), seed=1)
        assert len(rows) == 8 and [r["phase"] for r in rows] == ["lhs"] * 4 + ["ucb"] * 4
        best = [r["best_so_far"] for r in rows]
        assert all(b >= a for a, b in zip(best, best[1:]))
        assert all(-5 <= r["alpha_deg"] <= 10 for r in rows)
        assert best_so_far(rows, 8) == best[-1]

    def test_deterministic(self, ffd):
        a = optimize_shape(ffd, OptBudget(3, 2), seed=2)
        assert json.dumps(a) == json.dumps(optimize_shape(ffd, OptBudget(3, 2), seed=2))

    def test_resume_bit_exact(self, ffd, tmp_path):
        full = optimize_shape(ffd, OptBudget(3, 3), seed=4)
        ck = tmp_path / "bo.json"
        part = optimize_shape(ffd, OptBudget(3, 3), seed=4, checkpoint=ck, stop_after=4)
        assert len(part) == 4 and json.loads(ck.read_text())["rng_state"]
        resumed = optimize_shape(ffd, OptBudget(3, 3), seed=4, checkpoint=ck)
        assert json.dumps(resumed) == json.dumps(full)  # NaN-safe comparison

    def test_failures_penalized(self, ffd):
        calls = []

        def flaky(param, x, alpha):
            calls.append(alpha)
            if len(calls) % 2 == 0:
                raise RuntimeError("solver blew up")
            return {"CL": 1.0, "CD": 0.1, "LD": float(len(calls)), "reason": ""}

        rows = optimize_shape(ffd, OptBudget(4, 0), seed=0, evaluator=flaky)
        assert [r["LD"] for r in rows] == [1.0, 0.0, 3.0, -1.0]
        assert [r["feasible"] for r in rows] == [True, False, True, False]


def test_gp_ucb_finds_1d_optimum():
    xs = np.linspace(0, 1, 200001)
    xopt = xs[np.argmax(f1(xs))]
    for seed in range(3):
        rng = np.random.default_rng(seed)
        U = list(lhs_sample(5, 1, rng)[:, 0])
        for _ in range(25):
            m = GpModel().fit(np.array(U)[:, None], f1(np.array(U)))
            U.append(ucb_suggest(m, 1, 2.0, rng)[0])
        assert abs(U[int(np.argmax(f1(np.array(U))))] - xopt) < 0.01
