"""Linear reparametrization bringing a state-space boundary close to a sphere.

The map is mu-centering followed by Sigma V^T, with Sigma a nonnegative
diagonal and V a rotation in Euler-angle form. The six parameters minimize
sum_i (1 - |Sigma V^T s_i|^2)^2 over the boundary points; scales stay
positive by optimizing their logarithms. The same map is then applied to
every realized state space so different waiting times can be compared.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import DegenerateGeometryError

__all__ = [
    "SphereFit",
    "center",
    "euler_rotation",
    "fit_sphere_transform",
    "apply_transform",
    "block_reparametrization",
]


@dataclass(frozen=True)
class SphereFit:
    """Diagonal scales, Euler angles and centering of the fitted map."""

    sigma: np.ndarray
    angles: tuple[float, float, float]
    mean: np.ndarray
    objective: float

    @property
    def linear_map(self) -> np.ndarray:
        """The 3x3 map Sigma V^T applied after centering."""
        return np.diag(self.sigma) @ euler_rotation(*self.angles).T


def center(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Subtract the columnwise mean; returns (centered points, mean)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise ValueError("point set must be nonempty")
    mu = pts.mean(axis=0)
    return pts - mu, mu


def euler_rotation(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Proper z-x-z rotation matrix for the three Euler angles."""
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    cg, sg = np.cos(gamma), np.sin(gamma)
    return np.array(
        [
            [ca * cg - sa * cb * sg, -ca * sg - sa * cb * cg, sa * sb],
            [sa * cg + ca * cb * sg, -sa * sg + ca * cb * cg, -ca * sb],
            [sb * sg, sb * cg, cb],
        ]
    )


def _rotation_derivatives(alpha, beta, gamma):
    def rz(t):
        c, s = np.cos(t), np.sin(t)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

    def drz(t):
        c, s = np.cos(t), np.sin(t)
        return np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])

    def rx(t):
        c, s = np.cos(t), np.sin(t)
        return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])

    def drx(t):
        c, s = np.cos(t), np.sin(t)
        return np.array([[0.0, 0.0, 0.0], [0.0, -s, -c], [0.0, c, -s]])

    return (
        drz(alpha) @ rx(beta) @ rz(gamma),
        rz(alpha) @ drx(beta) @ rz(gamma),
        rz(alpha) @ rx(beta) @ drz(gamma),
    )


def _objective_and_grad(params: np.ndarray, pts: np.ndarray):
    u = params[:3]
    alpha, beta, gamma = params[3:]
    sig2 = np.exp(2.0 * u)
    V = euler_rotation(alpha, beta, gamma)
    T = pts @ V  # t_i = V^T s_i as rows
    q = T**2 @ sig2
    r = 1.0 - q
    f = float(np.sum(r**2))

    grad = np.empty(6)
    grad[:3] = -4.0 * sig2 * ((r[:, None] * T**2).sum(axis=0))
    dVs = _rotation_derivatives(alpha, beta, gamma)
    for a, dV in enumerate(dVs):
        dT = pts @ dV
        dq = 2.0 * ((T * dT) @ sig2)
        grad[3 + a] = float(np.sum(-2.0 * r * dq))
    return f, grad


def fit_sphere_transform(
    points: np.ndarray,
    n_starts: int = 10,
    seed: int = 0,
    mean: np.ndarray | None = None,
) -> SphereFit:
    """Fit Sigma V^T mapping centered boundary points toward the unit sphere.

    Multi-start local optimization: the first start initializes the scales
    from the per-axis extents with zero angles, the rest perturb scales and
    draw angles uniformly from the given seed. The champion is chosen by
    (objective, start index), so the result is deterministic.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] < 6 or pts.shape[1] != 3:
        raise ValueError("need at least 6 points in R^3")
    scale = float(np.max(np.abs(pts)))
    if np.max(np.abs(pts.mean(axis=0))) > 1e-6 * max(scale, 1.0):
        raise ValueError("points must be centered; call center() first")
    s = np.linalg.svd(pts, compute_uv=False)
    if s[2] <= 1e-9 * s[0]:
        raise DegenerateGeometryError("boundary points are coplanar")

    extents = np.abs(pts).max(axis=0)
    u0 = -np.log(np.maximum(extents, 1e-12))
    rng = np.random.default_rng(seed)

    best = None
    for start in range(n_starts):
        if start == 0:
            x0 = np.concatenate([u0, np.zeros(3)])
        else:
            x0 = np.concatenate(
                [u0 + rng.uniform(-0.3, 0.3, 3), rng.uniform(0.0, 2.0 * np.pi, 3)]
            )
        res = minimize(
            _objective_and_grad,
            x0,
            args=(pts,),
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": 1000, "ftol": 1e-16, "gtol": 1e-12},
        )
        f0 = _objective_and_grad(x0, pts)[0]
        x, f = (res.x, float(res.fun)) if res.fun <= f0 else (x0, f0)
        if best is None or (f, start) < (best[0], best[1]):
            best = (f, start, x)

    f, _, x = best
    mu = np.zeros(3) if mean is None else np.asarray(mean, dtype=float)
    return SphereFit(
        sigma=np.exp(x[:3]),
        angles=(float(x[3]), float(x[4]), float(x[5])),
        mean=mu,
        objective=f,
    )


def apply_transform(fit: SphereFit, points: np.ndarray) -> np.ndarray:
    """Map points through Sigma V^T (p - mu)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return (pts - fit.mean) @ fit.linear_map.T


def block_reparametrization(fit: SphereFit) -> np.ndarray:
    """The induced 4x4 map on full state vectors (1, s).

    Identity on the normalization coordinate, Sigma V^T plus the centering
    translation on the rest; feeding it to apply_reparametrization keeps all
    probabilities unchanged.
    """
    M = fit.linear_map
    L = np.zeros((4, 4))
    L[0, 0] = 1.0
    L[0, 1:] = -(M @ fit.mean)
    L[1:, 1:] = M.T
    return L
