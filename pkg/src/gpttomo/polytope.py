"""Convex polytopes and cones: extreme points, H/V conversion, duals, volumes.

V-polytopes are vertex lists, H-polytopes inequality lists a.x <= b. The
conversions go through an interior (Chebyshev) point and the polar-dual hull,
which reduces both directions to a single convex-hull computation; cone facet
enumeration slices the dual cone with a hyperplane through an interior
direction and reuses the same machinery. Everything is floating point with a
1e-9 tolerance relative to the data diameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, Delaunay, QhullError

from .errors import (
    DegenerateGeometryError,
    InfeasibleRegionError,
    UnboundedPolytopeError,
)

__all__ = [
    "VPolytope",
    "HPolytope",
    "ConeFacets",
    "remove_interior",
    "h_to_v",
    "v_to_h",
    "consistent_dual",
    "contains",
    "volume",
    "cone_facets",
]

_LP_OPTS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}
_TOL = 1e-9


def _lex_order(rows: np.ndarray) -> np.ndarray:
    return np.lexsort(rows.T[::-1])


def _dedup_rows(rows: np.ndarray, tol: float) -> np.ndarray:
    """Drop rows closer than tol to an earlier row, preserving first hits."""
    kept: list[np.ndarray] = []
    for r in rows:
        if not any(np.max(np.abs(r - k)) <= tol for k in kept):
            kept.append(r)
    return np.asarray(kept)


@dataclass(frozen=True)
class VPolytope:
    """Convex polytope as the hull of a finite vertex list."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        if v.size == 0:
            raise ValueError("vertex list must be nonempty")
        object.__setattr__(self, "vertices", v)

    @property
    def ambient_dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def dim(self) -> int:
        """Affine dimension of the vertex set."""
        v = self.vertices
        if v.shape[0] == 1:
            return 0
        centered = v - v.mean(axis=0)
        s = np.linalg.svd(centered, compute_uv=False)
        return int(np.sum(s > _TOL * max(s[0], 1.0)))

    @property
    def diameter(self) -> float:
        v = self.vertices
        return float(np.max(v.max(axis=0) - v.min(axis=0), initial=0.0))


@dataclass(frozen=True)
class HPolytope:
    """Region {x : normals @ x <= offsets}."""

    normals: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.normals, dtype=float))
        b = np.atleast_1d(np.asarray(self.offsets, dtype=float))
        if a.shape[0] != b.shape[0]:
            raise ValueError("one offset per inequality row required")
        object.__setattr__(self, "normals", a)
        object.__setattr__(self, "offsets", b)

    @property
    def ambient_dim(self) -> int:
        return self.normals.shape[1]

    def canonical(self, tol: float = _TOL) -> "HPolytope":
        """Unit-norm rows, duplicates merged, lexicographically sorted."""
        norms = np.linalg.norm(self.normals, axis=1)
        keep = norms > tol
        a = self.normals[keep] / norms[keep, None]
        b = self.offsets[keep] / norms[keep]
        rows = _dedup_rows(np.column_stack([a, b]), tol)
        rows = rows[_lex_order(rows)]
        return HPolytope(rows[:, :-1], rows[:, -1])

    def satisfies(self, points: np.ndarray, tol: float = _TOL) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.all(pts @ self.normals.T <= self.offsets + tol, axis=1)


@dataclass(frozen=True)
class ConeFacets:
    """Facet rows h of a cone, with h @ g >= 0 for every generator g.

    When the generators only span a subspace, the facets are computed inside
    that subspace and lifted back; span_basis then records the orthonormal
    basis of the span (None for full-dimensional cones).
    """

    facets: np.ndarray
    span_basis: np.ndarray | None = None


def _feasibility_lp(A_eq: np.ndarray, b_eq: np.ndarray, n_vars: int) -> bool:
    res = linprog(
        c=np.zeros(n_vars),
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=[(0.0, None)] * n_vars,
        method="highs",
        options=_LP_OPTS,
    )
    return res.status == 0


def remove_interior(points: np.ndarray) -> VPolytope:
    """Keep exactly the points not expressible as convex mixtures of the rest.

    Each point is tested in turn with a feasibility LP against the current
    survivor set; removals take effect immediately, so one copy of any
    duplicated extreme point survives. Order is preserved among survivors.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise ValueError("point list must be nonempty")
    survivors = list(range(pts.shape[0]))
    i = 0
    while i < len(survivors):
        others = survivors[:i] + survivors[i + 1 :]
        if not others:
            break
        P = pts[others].T  # (d, n-1)
        A_eq = np.vstack([P, np.ones((1, P.shape[1]))])
        b_eq = np.concatenate([pts[survivors[i]], [1.0]])
        if _feasibility_lp(A_eq, b_eq, P.shape[1]):
            survivors.pop(i)
        else:
            i += 1
    return VPolytope(pts[survivors])


def _recession_ray(h: HPolytope) -> np.ndarray | None:
    """A nonzero direction of unboundedness, or None if the region is bounded."""
    A, d = h.normals, h.ambient_dim
    for axis in range(d):
        for sign in (1.0, -1.0):
            c = np.zeros(d)
            c[axis] = -sign  # maximize sign * x_axis
            res = linprog(
                c,
                A_ub=A,
                b_ub=np.zeros(A.shape[0]),
                bounds=[(-1.0, 1.0)] * d,
                method="highs",
                options=_LP_OPTS,
            )
            if res.status == 0 and -res.fun > 1e-9:
                return res.x / np.linalg.norm(res.x)
    return None


def _chebyshev_center(h: HPolytope) -> tuple[np.ndarray, float]:
    A, b = h.normals, h.offsets
    d = h.ambient_dim
    norms = np.linalg.norm(A, axis=1)
    c = np.zeros(d + 1)
    c[-1] = -1.0
    res = linprog(
        c,
        A_ub=np.column_stack([A, norms]),
        b_ub=b,
        bounds=[(None, None)] * d + [(0.0, None)],
        method="highs",
        options=_LP_OPTS,
    )
    if res.status == 2:
        raise InfeasibleRegionError("inequality system has no solution")
    if res.status != 0:
        raise UnboundedPolytopeError("interior-point search did not converge", ray=None)
    return res.x[:d], float(res.x[d])


def _interval_vertices(h: HPolytope) -> VPolytope:
    a = h.normals[:, 0]
    b = h.offsets
    hi = np.inf
    lo = -np.inf
    for ai, bi in zip(a, b):
        if ai > _TOL:
            hi = min(hi, bi / ai)
        elif ai < -_TOL:
            lo = max(lo, bi / ai)
    if not np.isfinite(hi) or not np.isfinite(lo):
        ray = np.array([1.0 if not np.isfinite(hi) else -1.0])
        raise UnboundedPolytopeError("interval is unbounded", ray=ray)
    if hi < lo - _TOL:
        raise InfeasibleRegionError("interval constraints are contradictory")
    return VPolytope(np.array([[lo], [hi]]))


def h_to_v(h: HPolytope, check_bounded: bool = True) -> VPolytope:
    """Vertices of a bounded, full-dimensional H-polytope.

    The polytope is shifted so its Chebyshev center is the origin; its polar
    dual is the hull of the scaled inequality normals, whose facets map back
    to the vertices. Raises UnboundedPolytopeError with a ray certificate for
    unbounded input and DegenerateGeometryError when no interior ball exists.
    """
    norms = np.linalg.norm(h.normals, axis=1)
    trivial = norms <= 1e-14
    if trivial.any():
        if np.any(h.offsets[trivial] < -1e-12):
            raise InfeasibleRegionError("zero-normal row with negative offset")
        h = HPolytope(h.normals[~trivial], h.offsets[~trivial])
    if h.ambient_dim == 1:
        return _interval_vertices(h)
    if check_bounded:
        ray = _recession_ray(h)
        if ray is not None:
            raise UnboundedPolytopeError("H-polytope has a recession ray", ray=ray)
    center, radius = _chebyshev_center(h)
    scale = max(1.0, float(np.max(np.abs(h.offsets))), float(np.max(np.abs(center))))
    if radius <= 1e-9 * scale:
        raise DegenerateGeometryError(
            f"polytope has no interior (Chebyshev radius {radius:.3g}); "
            "reduce to its affine hull first"
        )
    slack = h.offsets - h.normals @ center
    dual_pts = h.normals / slack[:, None]
    try:
        hull = ConvexHull(dual_pts)
    except QhullError as exc:
        raise DegenerateGeometryError(f"polar hull failed: {exc}") from exc
    eq = hull.equations
    off = -eq[:, -1]
    if np.any(off <= 1e-12):
        idx = int(np.argmin(off))
        ray = eq[idx, :-1] / np.linalg.norm(eq[idx, :-1])
        raise UnboundedPolytopeError("polar facet through the origin", ray=ray)
    verts = eq[:, :-1] / off[:, None] + center
    verts = _dedup_rows(verts, _TOL * max(1.0, float(np.max(np.abs(verts)))))
    return VPolytope(verts[_lex_order(verts)])


def v_to_h(v: VPolytope) -> HPolytope:
    """Facet inequalities of the hull of a full-dimensional vertex set."""
    pts = v.vertices
    if v.ambient_dim == 1:
        lo, hi = float(pts.min()), float(pts.max())
        if hi - lo <= _TOL:
            raise DegenerateGeometryError("vertices span no interval")
        return HPolytope(np.array([[1.0], [-1.0]]), np.array([hi, -lo]))
    if v.dim < v.ambient_dim:
        raise DegenerateGeometryError(
            f"vertex set spans affine dimension {v.dim} < {v.ambient_dim}"
        )
    hull = ConvexHull(pts)
    return HPolytope(hull.equations[:, :-1], -hull.equations[:, -1]).canonical()


def consistent_dual(
    generators: np.ndarray,
    normalization: np.ndarray | None = None,
) -> VPolytope:
    """Vertices of {x : 0 <= <g, x> <= 1 for all generators g}.

    With a normalization covector u, the region is intersected with the
    hyperplane <u, x> = 1 first (the consistent-state construction); the
    returned vertices live in the ambient space and satisfy <u, x> = 1.
    """
    G = np.atleast_2d(np.asarray(generators, dtype=float))
    k = G.shape[1]
    A = np.vstack([G, -G])
    b = np.concatenate([np.ones(G.shape[0]), np.zeros(G.shape[0])])
    if normalization is None:
        return h_to_v(HPolytope(A, b))
    u = np.asarray(normalization, dtype=float)
    if u.shape != (k,) or np.linalg.norm(u) <= _TOL:
        raise ValueError("normalization covector must be a nonzero k-vector")
    x0 = u / float(u @ u)
    basis = np.linalg.qr(np.column_stack([u, np.eye(k)]))[0][:, 1:k]
    reduced = HPolytope(A @ basis, b - A @ x0)
    verts = h_to_v(reduced).vertices
    return VPolytope(verts @ basis.T + x0)


def contains(p: VPolytope, x: np.ndarray, tol: float = _TOL) -> bool:
    """True when x lies within tol of the convex hull of p's vertices."""
    V = p.vertices
    x = np.asarray(x, dtype=float)
    n, d = V.shape
    # min t  s.t.  |V^T lam - x|_inf <= t, sum lam = 1, lam >= 0
    c = np.zeros(n + 1)
    c[-1] = 1.0
    A_ub = np.block([[V.T, -np.ones((d, 1))], [-V.T, -np.ones((d, 1))]])
    b_ub = np.concatenate([x, -x])
    A_eq = np.concatenate([np.ones(n), [0.0]])[None, :]
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=[1.0],
        bounds=[(0.0, None)] * n + [(0.0, None)],
        method="highs",
        options=_LP_OPTS,
    )
    return res.status == 0 and res.fun <= tol


def volume(v: VPolytope) -> float:
    """Hull volume from a boundary triangulation; 0 for degenerate input."""
    pts = v.vertices
    d = v.ambient_dim
    if v.dim < d:
        return 0.0
    if d == 1:
        return float(pts.max() - pts.min())
    try:
        tri = Delaunay(pts)
    except QhullError:
        return 0.0
    total = 0.0
    fact = float(math.factorial(d))
    for simplex in tri.simplices:
        edges = pts[simplex[1:]] - pts[simplex[0]]
        total += abs(np.linalg.det(edges)) / fact
    return total


def _pointed(G_unit: np.ndarray) -> bool:
    """A cone is pointed iff the origin is not a mixture of unit generators."""
    n = G_unit.shape[0]
    A_eq = np.vstack([G_unit.T, np.ones((1, n))])
    b_eq = np.concatenate([np.zeros(G_unit.shape[1]), [1.0]])
    return not _feasibility_lp(A_eq, b_eq, n)


def cone_facets(generators: np.ndarray) -> ConeFacets:
    """Minimal facet description {x : H x >= 0} of cone(generators).

    Facet rows are the extreme rays of the dual cone, found by slicing it
    with a hyperplane through an interior direction of the primal cone and
    enumerating the slice's vertices. Generators spanning only a subspace are
    handled inside that subspace, with the span basis recorded.
    """
    G = np.atleast_2d(np.asarray(generators, dtype=float))
    norms = np.linalg.norm(G, axis=1)
    G = G[norms > 1e-12]
    if G.shape[0] == 0:
        raise ValueError("need at least one nonzero generator")
    G = G / np.linalg.norm(G, axis=1, keepdims=True)
    k = G.shape[1]

    _, s, vt = np.linalg.svd(G, full_matrices=False)
    d = int(np.sum(s > 1e-10 * s[0]))
    if d < k:
        basis = vt[:d].T  # (k, d)
        inner = cone_facets(G @ basis)
        return ConeFacets(facets=inner.facets @ basis.T, span_basis=basis)

    if not _pointed(G):
        raise DegenerateGeometryError(
            "cone contains a line; facet enumeration needs a pointed cone"
        )
    if k == 1:
        return ConeFacets(facets=np.array([[float(np.sign(G[0, 0]))]]))

    c = G.mean(axis=0)
    y0 = c / float(c @ c)
    basis_c = np.linalg.qr(np.column_stack([c, np.eye(k)]))[0][:, 1:k]
    slice_h = HPolytope(-G @ basis_c, G @ y0)
    verts = h_to_v(slice_h, check_bounded=False).vertices
    rays = verts @ basis_c.T + y0
    rays = rays / np.linalg.norm(rays, axis=1, keepdims=True)
    rays = _dedup_rows(rays, _TOL)
    return ConeFacets(facets=rays[_lex_order(rays)])
