"""Active-set solver for small QPs with two-sided linear constraints.

Solves   minimize  0.5 x'Qx - c'x   subject to  0 <= G x <= 1
for a PSD Q of very low dimension (the see-saw subproblems have at most a
handful of variables but hundreds of constraint rows). Primal active-set
iteration with direct KKT solves; x = 0 is always feasible and serves as the
fallback start.
"""

from __future__ import annotations

import numpy as np

from .errors import SolverFailureError

__all__ = ["solve_range_qp"]

_FEAS_TOL = 1e-12


def _feasible_start(G: np.ndarray, x0: np.ndarray | None) -> np.ndarray:
    k = G.shape[1]
    if x0 is None:
        return np.zeros(k)
    v = G @ x0
    lo, hi = v.min(initial=0.0), v.max(initial=0.0)
    if lo >= -_FEAS_TOL and hi <= 1.0 + _FEAS_TOL:
        return np.asarray(x0, dtype=float).copy()
    if lo >= -_FEAS_TOL and hi > 1.0:
        # Upper-side violations only: shrinking toward the origin repairs them.
        return x0 * ((1.0 - 1e-12) / hi)
    return np.zeros(k)


def _kkt_step(Q, c, x, A_w):
    """Direction p and multipliers mu for the working-set equality QP."""
    k = Q.shape[0]
    nw = A_w.shape[0]
    K = np.zeros((k + nw, k + nw))
    K[:k, :k] = Q
    if nw:
        K[:k, k:] = A_w.T
        K[k:, :k] = A_w
    rhs = np.concatenate([c - Q @ x, np.zeros(nw)])
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:k], sol[k:]


def solve_range_qp(
    Q: np.ndarray,
    c: np.ndarray,
    G: np.ndarray,
    x0: np.ndarray | None = None,
    tol: float = 1e-11,
    max_iter: int | None = None,
) -> np.ndarray:
    """Minimize 0.5 x'Qx - c'x over the region 0 <= Gx <= 1.

    Q must be symmetric positive semidefinite with c in its range (true for
    weighted least-squares data); otherwise the problem could be unbounded
    along directions the constraints do not block.
    """
    Q = np.asarray(Q, dtype=float)
    c = np.asarray(c, dtype=float)
    G = np.asarray(G, dtype=float)
    n_c, k = G.shape
    x = _feasible_start(G, x0)
    if max_iter is None:
        max_iter = 60 * (k + 1) + 2 * n_c

    # Working constraints as (row, side); side 0 means g.x = 0, side 1 g.x = 1.
    working: list[tuple[int, int]] = []
    scale = max(1.0, np.abs(Q).max(), np.abs(c).max())

    for _ in range(max_iter):
        if working:
            A_w = np.array([G[r] if s else -G[r] for r, s in working])
        else:
            A_w = np.zeros((0, k))
        p, mu = _kkt_step(Q, c, x, A_w)

        if np.max(np.abs(p)) <= tol * (1.0 + np.max(np.abs(x))):
            if not working or mu.min() >= -tol * scale:
                return x
            working.pop(int(np.argmin(mu)))
            continue

        # Ratio test against constraints outside the working set.
        gp = G @ p
        gx = G @ x
        alpha = 1.0
        blocking: tuple[int, int] | None = None
        in_set = set(working)
        for r in range(n_c):
            if gp[r] < -1e-14 and (r, 0) not in in_set:
                a = gx[r] / (-gp[r])
                if a < alpha - 1e-15:
                    alpha, blocking = max(a, 0.0), (r, 0)
            elif gp[r] > 1e-14 and (r, 1) not in in_set:
                a = (1.0 - gx[r]) / gp[r]
                if a < alpha - 1e-15:
                    alpha, blocking = max(a, 0.0), (r, 1)
        x = x + alpha * p
        if blocking is not None:
            working.append(blocking)
        elif alpha >= 1.0:
            # Full step with no blocking constraint: next pass finds p ~ 0
            # and either terminates or drops a constraint.
            continue

    raise SolverFailureError(
        f"active-set QP did not converge in {max_iter} iterations "
        f"(k={k}, constraints={n_c})"
    )
