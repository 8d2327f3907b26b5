"""GPT state/effect factorizations of probability tables.

A model holds the state matrix S (one row per preparation, first coordinate
the normalization) and the effect matrix E (one column per effect covector;
the column layout is unit, zero, the n measurement effects, then their
complements). Any two rank-k factorizations of the same table are related by
an invertible k x k map, recoverable through pseudoinverses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr as _qr

from .errors import IncompatibleModelsError, RankMismatchError

__all__ = [
    "GptModel",
    "Reparametrization",
    "normalize_table",
    "factorize",
    "relate_factorizations",
    "apply_reparametrization",
    "distinguishability",
    "max_pairwise_distinguishability",
    "per_state_f",
    "purity_lower_bound",
]

_RANK_RTOL = 1e-8


@dataclass(frozen=True)
class GptModel:
    """State rows, effect columns and the rank of a fitted GPT system.

    tau_labels, when present, tags every state row with its waiting time so
    per-tau blocks of a stacked fit can be extracted.
    """

    states: np.ndarray  # (m, k)
    effects: np.ndarray  # (k, 2n+2): unit, zero, e_1..e_n, complements
    rank: int
    tau_labels: np.ndarray | None = None

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        effects = np.asarray(self.effects, dtype=float)
        if states.ndim != 2 or effects.ndim != 2:
            raise ValueError("states and effects must be 2-D")
        if states.shape[1] != self.rank or effects.shape[0] != self.rank:
            raise ValueError("state/effect dimensions do not match the rank")
        if effects.shape[1] % 2 != 0 or effects.shape[1] < 4:
            raise ValueError("effect matrix must hold unit, zero and complement pairs")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "effects", effects)
        if self.tau_labels is not None:
            labels = np.asarray(self.tau_labels, dtype=float)
            if labels.shape != (states.shape[0],):
                raise ValueError("tau_labels must label every state row")
            object.__setattr__(self, "tau_labels", labels)

    @property
    def n_measurements(self) -> int:
        return self.effects.shape[1] // 2 - 1

    @property
    def unit(self) -> np.ndarray:
        return self.effects[:, 0]

    @property
    def raw_effects(self) -> np.ndarray:
        """The n measurement-outcome effects, without unit/zero/complements."""
        n = self.n_measurements
        return self.effects[:, 2 : 2 + n]

    @property
    def probabilities(self) -> np.ndarray:
        """Pairing table states x effects, (m, 2n+2)."""
        return self.states @ self.effects

    @property
    def d_matrix(self) -> np.ndarray:
        return self.states @ self.raw_effects

    def is_canonical(self, tol: float = 1e-12) -> bool:
        """First state coordinate all ones, unit = (1,0,..), zero column zero."""
        k = self.rank
        e1 = np.zeros(k)
        e1[0] = 1.0
        return (
            np.allclose(self.states[:, 0], 1.0, atol=tol)
            and np.allclose(self.effects[:, 0], e1, atol=tol)
            and np.allclose(self.effects[:, 1], 0.0, atol=tol)
        )

    def taus(self) -> tuple[float, ...]:
        if self.tau_labels is None:
            raise ValueError("model has no tau labels")
        seen: list[float] = []
        for t in self.tau_labels:
            if t not in seen:
                seen.append(float(t))
        return tuple(seen)

    def state_block(self, tau: float, atol: float = 1e-9) -> np.ndarray:
        """State rows whose tau label matches (within atol)."""
        if self.tau_labels is None:
            raise ValueError("model has no tau labels")
        mask = np.abs(self.tau_labels - tau) <= atol
        if not mask.any():
            raise ValueError(f"no state rows labelled tau={tau}")
        return self.states[mask]


@dataclass(frozen=True)
class Reparametrization:
    """Invertible linear map between two factorizations: S' = S L, E' = L^-1 E."""

    linear_map: np.ndarray

    def __post_init__(self):
        L = np.asarray(self.linear_map, dtype=float)
        if L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise ValueError("linear map must be square")
        s = np.linalg.svd(L, compute_uv=False)
        if s[-1] <= 1e-12 * s[0]:
            raise ValueError("linear map is numerically singular")
        object.__setattr__(self, "linear_map", L)


def _numerical_rank(a: np.ndarray) -> tuple[int, np.ndarray]:
    s = np.linalg.svd(a, compute_uv=False)
    return int(np.sum(s > _RANK_RTOL * s[0])), s


def normalize_table(D: np.ndarray, max_residual: float = 0.1) -> np.ndarray:
    """Rescale each row so the unit effect is exactly representable.

    A finite-shot rank-k fit generally has no covector pairing to exactly 1
    with every state, so the ones column is not quite in the table's column
    space. Dividing row i by the best normalization value (B ubar)_i, with B
    a column basis and ubar = argmin |B ubar - 1|, restores it exactly while
    moving each row by the size of the normalization residual (about the
    noise level). Residuals above max_residual indicate the table is not
    close to any normalized model and raise RankMismatchError.
    """
    D = np.asarray(D, dtype=float)
    rank, s = _numerical_rank(D)
    B = np.linalg.svd(D, full_matrices=False)[0][:, :rank]
    ubar = np.linalg.lstsq(B, np.ones(D.shape[0]), rcond=None)[0]
    norms = B @ ubar
    gap = float(np.max(np.abs(norms - 1.0)))
    if gap > max_residual:
        raise RankMismatchError(
            f"normalization residual {gap:.3g} too large; table is not close "
            "to a normalized rank-k model"
        )
    return D / norms[:, None]


def factorize(D: np.ndarray, k: int, method: str = "qr") -> GptModel:
    """Split a rank-k table into state rows and effect columns.

    A column of ones is prepended (the unit-effect probabilities) and the
    augmented table is factored through its numerical column basis; the
    remaining gauge freedom is then fixed so that the first state coordinate
    is identically 1 and the first effect column is the unit covector.
    Complement effects 1 - e_j are appended along with the zero effect.

    method selects the basis construction: "qr" (column-pivoted QR) or "svd".
    The two give different but equivalent factorizations of the same table.
    """
    D = np.asarray(D, dtype=float)
    if D.ndim != 2:
        raise ValueError("D must be a matrix")
    d1 = np.column_stack([np.ones(D.shape[0]), D])
    rank, _ = _numerical_rank(d1)
    if rank != k:
        raise RankMismatchError(
            f"numerical rank of the augmented table is {rank}, expected {k}"
        )

    if method == "qr":
        q = _qr(d1, mode="economic", pivoting=True)[0]
        basis = q[:, :k]
    elif method == "svd":
        basis = np.linalg.svd(d1, full_matrices=False)[0][:, :k]
    else:
        raise ValueError(f"unknown factorization method {method!r}")

    coeff = np.linalg.lstsq(basis, d1, rcond=None)[0]  # k x (n+1)
    # Gauge fix: L's first column carries the ones vector, the rest is an
    # orthonormal completion, so S = basis L has a ones column and E's first
    # column becomes the unit covector automatically.
    v = coeff[:, 0]
    comp = np.linalg.qr(np.column_stack([v, np.eye(len(v))]))[0][:, 1:k]
    L = np.column_stack([v, comp])
    S = basis @ L
    E = np.linalg.solve(L, coeff)

    S[:, 0] = 1.0
    E[:, 0] = 0.0
    E[0, 0] = 1.0
    resid = np.max(np.abs(S @ E - d1))
    if resid > 1e-9:
        raise RankMismatchError(
            f"factorization residual {resid:.3g} exceeds 1e-9; table is not rank {k}"
        )

    unit = E[:, 0]
    raw = E[:, 1:]
    effects = np.column_stack([unit, np.zeros(k), raw, unit[:, None] - raw])
    return GptModel(states=S, effects=effects, rank=k)


def relate_factorizations(model_a: GptModel, model_b: GptModel) -> Reparametrization:
    """Invertible L with S_b = S_a L and E_b = L^-1 E_a, via pseudoinverses.

    Both models must factor the same table at the same rank; the recovered
    map is checked against both residual bounds at 1e-8.
    """
    if model_a.rank != model_b.rank:
        raise IncompatibleModelsError("models have different ranks")
    if model_a.states.shape != model_b.states.shape or model_a.effects.shape != model_b.effects.shape:
        raise IncompatibleModelsError("models have different table dimensions")
    table_gap = np.max(np.abs(model_a.probabilities - model_b.probabilities))
    if table_gap > 1e-8:
        raise IncompatibleModelsError(
            f"models disagree on the probability table by {table_gap:.3g}"
        )
    L = model_a.effects @ np.linalg.pinv(model_b.effects, rcond=1e-12)
    s_resid = np.max(np.abs(model_a.states @ L - model_b.states))
    e_resid = np.max(np.abs(np.linalg.solve(L, model_a.effects) - model_b.effects))
    if s_resid > 1e-8 or e_resid > 1e-8:
        raise IncompatibleModelsError(
            f"recovered map residuals too large (states {s_resid:.3g}, effects {e_resid:.3g})"
        )
    return Reparametrization(linear_map=L)


def apply_reparametrization(model: GptModel, L: np.ndarray | Reparametrization) -> GptModel:
    """Transform states by L and effects by L^-1; all pairings are preserved."""
    if isinstance(L, Reparametrization):
        L = L.linear_map
    L = np.asarray(L, dtype=float)
    s = np.linalg.svd(L, compute_uv=False)
    if s[-1] <= 1e-12 * s[0]:
        raise ValueError("reparametrization map is singular")
    return GptModel(
        states=model.states @ L,
        effects=np.linalg.solve(L, model.effects),
        rank=model.rank,
        tau_labels=model.tau_labels,
    )


def distinguishability(s: np.ndarray, s_prime: np.ndarray, effects: np.ndarray) -> float:
    """max_e |<e, s> - <e, s'>| over the given finite effect columns."""
    effects = np.asarray(effects, dtype=float)
    if effects.size == 0:
        raise ValueError("effect set must be nonempty")
    return float(np.max(np.abs((np.asarray(s) - np.asarray(s_prime)) @ effects)))


def per_state_f(model: GptModel) -> np.ndarray:
    """f(s) = max over other states of the distinguishability, per state."""
    if model.states.shape[0] < 2:
        raise ValueError("need at least 2 states")
    G = model.probabilities
    out = np.empty(G.shape[0])
    for i in range(G.shape[0]):
        out[i] = np.max(np.abs(G[i] - G))
    return out


def max_pairwise_distinguishability(model: GptModel) -> float:
    return float(np.max(per_state_f(model)))


def purity_lower_bound(max_dist: float) -> float:
    """Largest-eigenvalue bound (1 + max distinguishability) / 2."""
    if not 0.0 <= max_dist <= 1.0:
        raise ValueError("distinguishability must lie in [0, 1]")
    return 0.5 * (1.0 + max_dist)
