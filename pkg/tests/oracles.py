"""Independent reference implementations used only for cross-checking.

Everything here deliberately avoids the code paths it verifies: the channel
oracle runs a 2x2 density-matrix simulation with Kraus operators, the hull
oracle is gift wrapping in 2-D, volumes are Monte-Carlo membership counts,
and the QP oracle is cvxopt's interior-point solver.
"""

from __future__ import annotations

import numpy as np

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENT = np.eye(2, dtype=complex)


def density_matrix(bloch: np.ndarray) -> np.ndarray:
    x, y, z = bloch
    return 0.5 * (IDENT + x * SIGMA_X + y * SIGMA_Y + z * SIGMA_Z)


def bloch_vector(rho: np.ndarray) -> np.ndarray:
    return np.real(
        np.array([np.trace(rho @ SIGMA_X), np.trace(rho @ SIGMA_Y), np.trace(rho @ SIGMA_Z)])
    )


def kraus_decohere(bloch: np.ndarray, tau: float, t1: float, t2: float) -> np.ndarray:
    """Amplitude damping toward |0> composed with pure dephasing, via Kraus ops."""
    rho = density_matrix(np.asarray(bloch, dtype=float))
    gamma = 1.0 - np.exp(-tau / t1)
    k0 = np.array([[1.0, 0.0], [0.0, np.sqrt(1.0 - gamma)]], dtype=complex)
    k1 = np.array([[0.0, np.sqrt(gamma)], [0.0, 0.0]], dtype=complex)
    rho = k0 @ rho @ k0.conj().T + k1 @ rho @ k1.conj().T
    # Pure-dephasing flip probability p from the leftover transverse decay.
    rate_phi = 1.0 / t2 - 0.5 / t1
    lam = np.exp(-tau * rate_phi)
    p = 0.5 * (1.0 - lam)
    rho = (1.0 - p) * rho + p * SIGMA_Z @ rho @ SIGMA_Z
    return bloch_vector(rho)


def kraus_cell_probability(
    prep: np.ndarray, meas: np.ndarray, tau: float, t1: float, t2: float, fidelity: float
) -> float:
    """Outcome-0 probability from the density-matrix route."""
    evolved = kraus_decohere(prep, tau, t1, t2)
    proj = density_matrix(np.asarray(meas, dtype=float))  # projector onto +meas
    p = float(np.real(np.trace(density_matrix(evolved) @ proj)))
    return fidelity * p + (1.0 - fidelity) * (1.0 - p)


def gift_wrap_2d(points: np.ndarray) -> np.ndarray:
    """Indices of the strict hull corners of 2-D points (collinear excluded)."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n <= 2:
        return np.arange(n)
    start = int(np.lexsort((pts[:, 1], pts[:, 0]))[0])
    hull = [start]
    current = start
    prev_dir = np.array([0.0, -1.0])
    while True:
        best = None
        for cand in range(n):
            if cand == current:
                continue
            v = pts[cand] - pts[current]
            nv = np.linalg.norm(v)
            if nv < 1e-15:
                continue
            if best is None:
                best = cand
                continue
            w = pts[best] - pts[current]
            cross = v[0] * w[1] - v[1] * w[0]
            if cross > 1e-15 or (abs(cross) <= 1e-15 and nv > np.linalg.norm(w)):
                best = cand
        if best == start:
            break
        hull.append(best)
        current = best
        if len(hull) > n:
            raise RuntimeError("gift wrapping failed to close")
    return np.asarray(hull)


def mc_hull_volume(vertices: np.ndarray, n_samples: int = 200_000, seed: int = 0) -> float:
    """Monte-Carlo membership estimate of the hull volume via its facets."""
    from scipy.spatial import ConvexHull

    hull = ConvexHull(vertices)
    lo = vertices.min(axis=0)
    hi = vertices.max(axis=0)
    rng = np.random.default_rng(seed)
    pts = rng.uniform(lo, hi, size=(n_samples, vertices.shape[1]))
    inside = np.all(pts @ hull.equations[:, :-1].T + hull.equations[:, -1] <= 1e-12, axis=1)
    box = float(np.prod(hi - lo))
    return box * inside.mean()


def cvxopt_range_qp(Q: np.ndarray, c: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Reference solution of min 0.5 x'Qx - c'x s.t. 0 <= Gx <= 1 via cvxopt."""
    from cvxopt import matrix, solvers

    n_c, k = G.shape
    big_g = np.vstack([G, -G])
    h = np.concatenate([np.ones(n_c), np.zeros(n_c)])
    solvers.options["show_progress"] = False
    solvers.options["abstol"] = 1e-12
    solvers.options["reltol"] = 1e-12
    solvers.options["feastol"] = 1e-12
    sol = solvers.qp(matrix(Q), matrix(-c), matrix(big_g), matrix(h))
    return np.asarray(sol["x"]).ravel()


def icosphere(level: int) -> np.ndarray:
    """Icosahedron vertices refined by edge midpoints: 12, 42, 162 points."""
    from scipy.spatial import ConvexHull

    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = []
    for a in (-1.0, 1.0):
        for b in (-phi, phi):
            verts += [[0.0, a, b], [a, b, 0.0], [b, 0.0, a]]
    verts = np.array(verts) / np.linalg.norm([1.0, phi])
    for _ in range(level):
        hull = ConvexHull(verts)
        mids = []
        for simplex in hull.simplices:
            for i in range(3):
                mids.append((verts[simplex[i]] + verts[simplex[(i + 1) % 3]]) / 2.0)
        verts = np.vstack([verts, mids])
        verts /= np.linalg.norm(verts, axis=1, keepdims=True)
        seen: set = set()
        out = []
        for v in verts:
            key = tuple(np.round(v, 9))
            if key not in seen:
                seen.add(key)
                out.append(v)
        verts = np.array(out)
    return verts


def bloch_ball_problem(directions: np.ndarray, complements: bool = True):
    """Embedding problem: states on the ball surface, projector effects."""
    from gpttomo.nonclassicality import EmbeddingProblem

    v = np.atleast_2d(directions)
    n = len(v)
    states = np.column_stack([np.ones(n), v])
    projs = np.column_stack([0.5 * np.ones(n), 0.5 * v]).T
    u = np.array([1.0, 0.0, 0.0, 0.0])
    cols = [u[:, None], np.zeros((4, 1)), projs]
    if complements:
        cols.append(u[:, None] - projs)
    return EmbeddingProblem(
        state_vertices=states,
        effect_vertices=np.column_stack(cols),
        unit=u,
        mixed=states.mean(axis=0),
    )
