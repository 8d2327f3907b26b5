"""Simplex embeddability, robustness of nonclassicality and ontological models.

A fragment (state vertices, effect vertices, unit, average state) embeds into
a classical simplex iff an entrywise-nonnegative matrix sigma exists with

    H_E^T sigma H_O = (1 - r) I + r m u^T      at r = 0,

where H_O and H_E are the facet matrices of the cones spanned by states and
effects. The smallest feasible r is the robustness: the depolarizing weight
toward the average state m needed to make the fragment classical. The LP is
affine in (r, sigma) and solved jointly; a feasible witness also yields an
explicit ontological model with one ontic state per state-cone facet.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import DegenerateWitnessError, SolverFailureError
from .gptmodel import GptModel
from .polytope import cone_facets, remove_interior

__all__ = [
    "EmbeddingProblem",
    "DepolarizationMap",
    "OntologicalModel",
    "RobustnessResult",
    "RobustnessSeries",
    "build_problem",
    "robustness",
    "reconstruct_model",
    "robustness_vs_tau",
]

_LP_OPTS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}
_SNAP_R = 1e-9
_CERT_TOL = 1e-8


@dataclass(frozen=True)
class EmbeddingProblem:
    """Extremal states (rows), effects (columns), unit covector, average state."""

    state_vertices: np.ndarray  # (Ns, k)
    effect_vertices: np.ndarray  # (k, Ne)
    unit: np.ndarray  # (k,)
    mixed: np.ndarray  # (k,)

    def __post_init__(self):
        S = np.atleast_2d(np.asarray(self.state_vertices, dtype=float))
        E = np.atleast_2d(np.asarray(self.effect_vertices, dtype=float))
        u = np.asarray(self.unit, dtype=float)
        m = np.asarray(self.mixed, dtype=float)
        k = S.shape[1]
        if E.shape[0] != k or u.shape != (k,) or m.shape != (k,):
            raise ValueError("state/effect/unit/mixed dimensions are inconsistent")
        norm = S @ u
        if np.max(np.abs(norm - 1.0)) > 1e-6:
            raise ValueError("every state must satisfy <u, s> = 1")
        object.__setattr__(self, "state_vertices", S)
        object.__setattr__(self, "effect_vertices", E)
        object.__setattr__(self, "unit", u)
        object.__setattr__(self, "mixed", m)

    @property
    def dim(self) -> int:
        return self.state_vertices.shape[1]

    def probability_table(self) -> np.ndarray:
        return self.state_vertices @ self.effect_vertices


@dataclass(frozen=True)
class DepolarizationMap:
    """s -> (1 - r) s + r m, mixing toward the average state."""

    r: float
    mixed: np.ndarray

    def apply(self, states: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        return (1.0 - self.r) * states + self.r * np.asarray(self.mixed)[None, :]


@dataclass(frozen=True)
class OntologicalModel:
    """Epistemic states (per preparation) and response functions (per effect)."""

    epistemic_states: np.ndarray  # (Ns, n_ontic)
    response_functions: np.ndarray  # (Ne, n_ontic)

    def reconstructed_table(self) -> np.ndarray:
        return self.epistemic_states @ self.response_functions.T


@dataclass(frozen=True)
class RobustnessResult:
    """Optimal depolarizing weight with its LP certificate.

    witness is the nonnegative sigma matrix indexed (effect facet, state
    facet); reduced is the problem in the coordinates the LP actually ran in
    (identical to the input unless a span reduction was needed).
    """

    r: float
    witness: np.ndarray
    state_facets: np.ndarray
    effect_facets: np.ndarray
    reduced: EmbeddingProblem
    residual: float
    span_basis: np.ndarray | None = None
    model: OntologicalModel | None = field(default=None, compare=False)


def build_problem(model: GptModel, tau: float) -> EmbeddingProblem:
    """Embedding input for one waiting time of a fitted model.

    Keeps only the extremal state rows of the tau block; the average state is
    the mean of those extremal rows. Effects are the full effect matrix
    (unit, zero, outcomes and complements).
    """
    block = model.state_block(tau)
    extremal = remove_interior(block).vertices
    return EmbeddingProblem(
        state_vertices=extremal,
        effect_vertices=model.effects,
        unit=model.unit,
        mixed=extremal.mean(axis=0),
    )


def _span_reduce(problem: EmbeddingProblem):
    """Project onto the common span of states and effects, preserving pairings.

    Alternates projecting onto the state row span (whose projector fixes all
    states) and the effect column span (whose projector fixes all effects,
    including the unit), until both span the ambient space.
    """
    S = problem.state_vertices
    E = problem.effect_vertices
    u = problem.unit
    m = problem.mixed
    basis: np.ndarray | None = None
    for _ in range(2 * problem.dim + 2):
        k = S.shape[1]
        _, sv, vt = np.linalg.svd(S, full_matrices=False)
        d = int(np.sum(sv > 1e-10 * sv[0]))
        if d < k:
            B = vt[:d].T
            S, E, u, m = S @ B, B.T @ E, B.T @ u, B.T @ m
            basis = B if basis is None else basis @ B
            continue
        _, sv, vt = np.linalg.svd(E.T, full_matrices=False)
        d = int(np.sum(sv > 1e-10 * sv[0]))
        if d < k:
            B = vt[:d].T
            S, E, u, m = S @ B, B.T @ E, B.T @ u, B.T @ m
            basis = B if basis is None else basis @ B
            continue
        break
    reduced = EmbeddingProblem(S, E, u, m)
    return reduced, basis


def _embedding_lp(H_E, H_O, unit, mixed, fixed_r: float | None):
    """LP data and solve for min r (or feasibility at fixed r)."""
    k = H_O.shape[1]
    FE, FO = H_E.shape[0], H_O.shape[0]
    sigma_block = np.kron(H_E.T.copy(), H_O.T.copy())  # (k^2, FE*FO)
    target = np.eye(k).ravel()
    depol = (np.eye(k) - np.outer(mixed, unit)).ravel()
    if fixed_r is None:
        A_eq = np.column_stack([depol, sigma_block])
        c = np.zeros(1 + FE * FO)
        c[0] = 1.0
        bounds = [(0.0, 1.0)] + [(0.0, None)] * (FE * FO)
        res = linprog(c, A_eq=A_eq, b_eq=target, bounds=bounds, method="highs",
                      options=_LP_OPTS)
        if res.status != 0:
            return None
        return float(res.x[0]), res.x[1:].reshape(FE, FO)
    b_eq = target - fixed_r * depol
    res = linprog(
        np.zeros(FE * FO), A_eq=sigma_block, b_eq=b_eq,
        bounds=[(0.0, None)] * (FE * FO), method="highs", options=_LP_OPTS,
    )
    if res.status != 0:
        return None
    return float(fixed_r), res.x.reshape(FE, FO)


def _certificate_residual(H_E, H_O, sigma, unit, mixed, r) -> float:
    k = H_O.shape[1]
    lhs = H_E.T @ sigma @ H_O
    rhs = (1.0 - r) * np.eye(k) + r * np.outer(mixed, unit)
    return float(np.max(np.abs(lhs - rhs)))


def robustness(problem: EmbeddingProblem) -> RobustnessResult:
    """Minimal depolarizing weight r making the fragment simplex-embeddable.

    r = 0 means a noncontextual ontological model exists for the raw
    fragment. Solutions with r below 1e-9 are re-solved as a feasibility
    problem at exactly r = 0, so classical fragments report exact zeros.
    """
    reduced, basis = _span_reduce(problem)
    H_O = cone_facets(reduced.state_vertices).facets
    eff = reduced.effect_vertices
    eff = eff[:, np.linalg.norm(eff, axis=0) > 1e-12]
    H_E = cone_facets(eff.T).facets
    out = _embedding_lp(H_E, H_O, reduced.unit, reduced.mixed, fixed_r=None)
    if out is None:
        raise SolverFailureError(
            "embedding LP failed even though full depolarization always embeds "
            f"(facets {H_E.shape[0]}x{H_O.shape[0]}, dim {reduced.dim})"
        )
    r, sigma = out
    if 0.0 < r < _SNAP_R:
        snapped = _embedding_lp(H_E, H_O, reduced.unit, reduced.mixed, fixed_r=0.0)
        if snapped is not None:
            cand_resid = _certificate_residual(H_E, H_O, snapped[1], reduced.unit,
                                               reduced.mixed, 0.0)
            if cand_resid <= _CERT_TOL:
                r, sigma = 0.0, snapped[1]
    residual = _certificate_residual(H_E, H_O, sigma, reduced.unit, reduced.mixed, r)
    if residual > _CERT_TOL:
        raise SolverFailureError(f"certificate residual {residual:.3g} exceeds tolerance")
    return RobustnessResult(
        r=r,
        witness=sigma,
        state_facets=H_O,
        effect_facets=H_E,
        reduced=reduced,
        residual=residual,
        span_basis=basis,
    )


def reconstruct_model(problem: EmbeddingProblem, result: RobustnessResult) -> OntologicalModel:
    """Ontological model realizing the r-depolarized statistics from the witness.

    Ontic states index the state-cone facets. With nu_s = H_O s and
    xi_e = sigma^T H_E e, the epistemic state of s is xi_u * nu_s (it sums to
    one automatically) and the response of e is xi_e / xi_u, which makes the
    unit effect's response identically 1. Facets where xi_u vanishes carry no
    weight in any epistemic state and are dropped.
    """
    red = result.reduced
    H_O, H_E, sigma = result.state_facets, result.effect_facets, result.witness
    nu = red.state_vertices @ H_O.T  # (Ns, FO)
    nu = np.where(nu > 0.0, nu, 0.0)
    xi = sigma.T @ (H_E @ red.effect_vertices)  # (FO, Ne)
    xi_u = sigma.T @ (H_E @ red.unit)  # (FO,)
    keep = xi_u > 1e-12 * max(float(xi_u.max(initial=0.0)), 1.0)
    if not keep.any():
        raise DegenerateWitnessError("unit-effect response vanishes on every ontic state")

    epistemic = nu[:, keep] * xi_u[keep][None, :]
    responses = (xi[keep] / xi_u[keep][:, None]).T  # (Ne, n_ontic)

    row_sums = epistemic.sum(axis=1)
    if np.max(np.abs(row_sums - 1.0)) > _CERT_TOL:
        raise DegenerateWitnessError(
            f"epistemic states are not normalized (max deviation "
            f"{np.max(np.abs(row_sums - 1.0)):.3g})"
        )
    model = OntologicalModel(epistemic_states=epistemic, response_functions=responses)

    depol = DepolarizationMap(result.r, red.mixed)
    target = depol.apply(red.state_vertices) @ red.effect_vertices
    gap = np.max(np.abs(model.reconstructed_table() - target))
    if gap > _CERT_TOL:
        raise DegenerateWitnessError(
            f"reconstructed statistics deviate from the depolarized table by {gap:.3g}"
        )
    return model


@dataclass(frozen=True)
class RobustnessSeries:
    """Robustness per waiting time with spreads across repetitions."""

    taus: tuple[float, ...]
    values: np.ndarray  # (n_tau, n_reps)
    means: np.ndarray
    stds: np.ndarray | None  # None for a single repetition

    @property
    def n_reps(self) -> int:
        return self.values.shape[1]


def robustness_vs_tau(models: list[GptModel]) -> RobustnessSeries:
    """Robustness of every tau block, across repeated fits.

    Each model is one repetition's stacked fit (tau labels required); all
    repetitions must share the tau grid. With a single repetition the spread
    is reported as absent (None), not zero.
    """
    if not models:
        raise ValueError("need at least one model")
    taus = models[0].taus()
    for mod in models[1:]:
        if mod.taus() != taus:
            raise ValueError("all repetitions must share the same tau grid")
    values = np.empty((len(taus), len(models)))
    for j, mod in enumerate(models):
        for i, tau in enumerate(taus):
            values[i, j] = robustness(build_problem(mod, tau)).r
    stds = np.std(values, axis=1, ddof=1) if len(models) > 1 else None
    return RobustnessSeries(
        taus=taus, values=values, means=values.mean(axis=1), stds=stds
    )
