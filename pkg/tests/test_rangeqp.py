import numpy as np
import pytest

from gpttomo.rangeqp import solve_range_qp
from oracles import cvxopt_range_qp


def _random_instance(rng, k, n_c, singular=False):
    rank = k - 1 if singular else k
    base = rng.normal(size=(rank, n_c))
    G = np.vstack([base, base[: k - rank]]).T if singular else rng.normal(size=(n_c, k))
    if singular:
        G = rng.normal(size=(n_c, rank)) @ rng.normal(size=(rank, k))
    w = rng.uniform(0.5, 2.0, n_c)
    f = rng.uniform(0.0, 1.0, n_c)
    Q = (G.T * w) @ G
    c = (G.T * w) @ f
    return Q, c, G


def _objective(Q, c, x):
    return 0.5 * x @ Q @ x - c @ x


class TestAgainstCvxopt:
    @pytest.mark.parametrize("seed", range(12))
    def test_matches_interior_point_solution(self, seed):
        rng = np.random.default_rng(seed)
        k = rng.integers(2, 7)
        n_c = rng.integers(k + 1, 40)
        Q, c, G = _random_instance(rng, int(k), int(n_c))
        x = solve_range_qp(Q, c, G)
        ref = cvxopt_range_qp(Q, c, G)
        v = G @ x
        assert v.min() >= -1e-9 and v.max() <= 1.0 + 1e-9
        assert _objective(Q, c, x) <= _objective(Q, c, ref) + 1e-8 * (1 + abs(_objective(Q, c, ref)))

    def test_active_constraints(self):
        # Pull hard toward a corner so upper bounds activate.
        rng = np.random.default_rng(3)
        G = rng.normal(size=(20, 3))
        Q = G.T @ G
        c = G.T @ np.full(20, 5.0)  # targets far above 1
        x = solve_range_qp(Q, c, G)
        v = G @ x
        assert v.max() <= 1.0 + 1e-9
        ref = cvxopt_range_qp(Q, c, G)
        assert _objective(Q, c, x) <= _objective(Q, c, ref) + 1e-7


class TestEdgeCases:
    def test_unconstrained_interior_optimum(self):
        G = np.eye(2)
        Q = np.eye(2)
        c = np.array([0.25, 0.5])
        x = solve_range_qp(Q, c, G)
        assert np.allclose(x, c, atol=1e-10)

    def test_infeasible_start_is_repaired(self):
        G = np.eye(2)
        Q = np.eye(2)
        c = np.array([0.5, 0.5])
        x = solve_range_qp(Q, c, G, x0=np.array([10.0, -3.0]))
        assert np.allclose(x, c, atol=1e-9)

    def test_singular_curvature(self):
        rng = np.random.default_rng(8)
        Q, c, G = _random_instance(rng, 4, 25, singular=True)
        x = solve_range_qp(Q, c, G)
        v = G @ x
        assert v.min() >= -1e-9 and v.max() <= 1.0 + 1e-9
        ref = cvxopt_range_qp(Q + 1e-12 * np.eye(4), c, G)
        assert _objective(Q, c, x) <= _objective(Q, c, ref) + 1e-7

    def test_kkt_stationarity(self):
        rng = np.random.default_rng(21)
        Q, c, G = _random_instance(rng, 3, 15)
        x = solve_range_qp(Q, c, G)
        grad = Q @ x - c
        v = G @ x
        # Project the gradient off the active-constraint normals; the rest
        # must vanish at a KKT point.
        active = np.abs(v) < 1e-9
        active |= np.abs(v - 1.0) < 1e-9
        A = G[active]
        if A.size:
            coef = np.linalg.lstsq(A.T, grad, rcond=None)[0]
            grad = grad - A.T @ coef
        assert np.max(np.abs(grad)) < 1e-8 * max(1.0, np.abs(Q).max())
