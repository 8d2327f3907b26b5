"""Rank-k probability-table fits and train/test rank selection.

The fit minimizes the variance-weighted chi-squared between a frequency table
F and a rank-k table D = S E with entries in [0, 1], alternating two convex
half-steps (rows of S with E fixed, then columns of E with S fixed). Each
half-step is a batch of independent weighted least-squares problems; rows or
columns whose unconstrained optimum leaves [0, 1] are re-solved as small QPs.

Rank selection follows the train/test protocol: fit every table at every
rank, evaluate each fitted table on every other table, and look for the rank
where the mean change in test error flips sign.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AmbiguousSelectionError, SolverFailureError
from .rangeqp import solve_range_qp
from .tables import FrequencyTable, StackedFrequencyTable, binomial_variance

__all__ = [
    "FitOptions",
    "FitResult",
    "RankScan",
    "variance_table",
    "chi_squared",
    "fit_rank_k",
    "rank_scan",
    "select_rank",
    "stack_tables",
]

_BOUND_SLACK = 1e-9


@dataclass(frozen=True)
class FitOptions:
    restarts: int = 5
    tol: float = 1e-8
    max_iter: int = 500
    seed: int = 0
    qp_tol: float = 1e-11

    def __post_init__(self):
        if self.restarts < 1 or self.max_iter < 1:
            raise ValueError("restarts and max_iter must be >= 1")


@dataclass(frozen=True)
class FitResult:
    """Best rank-k table found for one frequency table."""

    d_matrix: np.ndarray
    rank: int
    chi2: float
    iterations: int
    converged: bool
    chi2_history: np.ndarray
    restart_index: int


def variance_table(table: FrequencyTable | StackedFrequencyTable) -> np.ndarray:
    """Floored binomial variance F(1-F)/N of every cell."""
    return binomial_variance(table.entries, table.shots)


def chi_squared(F: np.ndarray, D: np.ndarray, variance: np.ndarray) -> float:
    """Weighted residual sum sum_ij (F_ij - D_ij)^2 / variance_ij."""
    F = np.asarray(F, dtype=float)
    D = np.asarray(D, dtype=float)
    variance = np.asarray(variance, dtype=float)
    if F.shape != D.shape or F.shape != variance.shape:
        raise ValueError(
            f"shape mismatch: F {F.shape}, D {D.shape}, variance {variance.shape}"
        )
    return float(np.sum((F - D) ** 2 / variance))


def _svd_factors(F: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    u, s, vt = np.linalg.svd(F, full_matrices=False)
    root = np.sqrt(s[:k])
    return u[:, :k] * root, root[:, None] * vt[:k]


def _initial_factors(F, k, rng, perturb):
    # Truncated SVD of F with entries clamped to [0, 1], re-factored; restarts
    # beyond the first add seeded uniform noise to both factors.
    d0 = np.clip(_svd_factors(F, k)[0] @ _svd_factors(F, k)[1], 0.0, 1.0)
    S, E = _svd_factors(d0, k)
    if perturb > 0.0:
        S = S + rng.uniform(-perturb, perturb, S.shape)
        E = E + rng.uniform(-perturb, perturb, E.shape)
    return S, E


def _solve_rows(A: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Batched solve of A[i] x_i = rhs[i] with a least-squares fallback."""
    try:
        return np.linalg.solve(A, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        out = np.empty_like(rhs)
        for i in range(rhs.shape[0]):
            out[i] = np.linalg.lstsq(A[i], rhs[i], rcond=None)[0]
        return out


def _state_half_step(F, W, E, S_prev, qp_tol):
    """Minimize over S with E fixed; every row is an independent problem."""
    A = np.einsum("ij,aj,bj->iab", W, E, E, optimize=True)
    rhs = np.einsum("ij,ij,aj->ia", W, F, E, optimize=True)
    S = _solve_rows(A, rhs)
    V = S @ E
    bad = np.where((V.min(axis=1) < -_BOUND_SLACK) | (V.max(axis=1) > 1.0 + _BOUND_SLACK))[0]
    if bad.size:
        G = E.T
        for i in bad:
            S[i] = solve_range_qp(A[i], rhs[i], G, x0=S_prev[i], tol=qp_tol)
    return S


def _effect_half_step(F, W, S, E_prev, qp_tol):
    A = np.einsum("ij,ia,ib->jab", W, S, S, optimize=True)
    rhs = np.einsum("ij,ij,ia->ja", W, F, S, optimize=True)
    Et = _solve_rows(A, rhs)  # one row per effect column
    V = S @ Et.T
    bad = np.where((V.min(axis=0) < -_BOUND_SLACK) | (V.max(axis=0) > 1.0 + _BOUND_SLACK))[0]
    if bad.size:
        for j in bad:
            Et[j] = solve_range_qp(A[j], rhs[j], S, x0=E_prev[:, j], tol=qp_tol)
    return Et.T


def _seesaw(F, W, S, E, options):
    variance = 1.0 / W
    chi2 = chi_squared(F, S @ E, variance)
    history = [chi2]
    converged = False
    for _ in range(options.max_iter):
        S = _state_half_step(F, W, E, S, options.qp_tol)
        E = _effect_half_step(F, W, S, E, options.qp_tol)
        new = chi_squared(F, S @ E, variance)
        if new > chi2 + 1e-6 * max(1.0, chi2):
            raise SolverFailureError(
                f"chi2 increased from {chi2:.6g} to {new:.6g} within the see-saw"
            )
        history.append(new)
        if abs(chi2 - new) <= options.tol * max(new, 1e-300) or new < 1e-12:
            chi2 = new
            converged = True
            break
        chi2 = new
    return S, E, np.asarray(history), converged


def fit_rank_k(
    F: np.ndarray,
    variance: np.ndarray,
    k: int,
    options: FitOptions | None = None,
) -> FitResult:
    """Best rank-k table for F under the weighted chi-squared objective.

    Runs ``options.restarts`` see-saw passes from perturbed starts and keeps
    the champion by (chi2, restart index). Non-convergence within max_iter is
    reported through ``converged=False``, not an error.
    """
    options = options or FitOptions()
    F = np.asarray(F, dtype=float)
    variance = np.asarray(variance, dtype=float)
    if F.shape != variance.shape:
        raise ValueError("F and variance shapes differ")
    m, n = F.shape
    if not 2 <= k <= min(m, n):
        raise ValueError(f"rank must satisfy 2 <= k <= min(m, n) = {min(m, n)}")
    W = 1.0 / variance

    best: FitResult | None = None
    for restart in range(options.restarts):
        rng = np.random.default_rng((options.seed, restart))
        S0, E0 = _initial_factors(F, k, rng, 0.0 if restart == 0 else 0.05)
        S, E, history, converged = _seesaw(F, W, S0, E0, options)
        D = S @ E
        if D.min() < -_BOUND_SLACK or D.max() > 1.0 + _BOUND_SLACK:
            raise SolverFailureError("fitted table violates [0, 1] beyond tolerance")
        D = np.clip(D, 0.0, 1.0)
        result = FitResult(
            d_matrix=D,
            rank=k,
            chi2=chi_squared(F, D, variance),
            iterations=len(history) - 1,
            converged=converged,
            chi2_history=history,
            restart_index=restart,
        )
        if best is None or (result.chi2, result.restart_index) < (best.chi2, best.restart_index):
            best = result
    assert best is not None
    return best


@dataclass(frozen=True)
class RankScan:
    """Train/test errors of the rank-k fits over every ordered table pair."""

    ranks: tuple[int, ...]
    train_errors: np.ndarray  # (n_ranks, n_tables)
    test_errors: np.ndarray  # (n_ranks, n_tables, n_tables), NaN on diagonal
    fits: tuple = field(repr=False, default=())

    @property
    def n_tables(self) -> int:
        return self.train_errors.shape[1]

    def _pair_values(self, rank_index: int) -> np.ndarray:
        t = self.test_errors[rank_index]
        mask = ~np.eye(self.n_tables, dtype=bool)
        return t[mask]

    def mean_test_error(self, k: int) -> float:
        return float(np.mean(self._pair_values(self.ranks.index(k))))

    def test_error_diffs(self, k: int) -> np.ndarray:
        """Per-pair change in test error between ranks k and k-1."""
        i = self.ranks.index(k)
        if i == 0:
            raise ValueError(f"no smaller rank than {k} in the scan")
        if self.ranks[i - 1] != k - 1:
            raise ValueError("test-error differences need contiguous ranks")
        return self._pair_values(i) - self._pair_values(i - 1)

    def diff_stats(self, k: int) -> tuple[float, float, float]:
        """(mean, std, standard error) of the test-error change at rank k."""
        d = self.test_error_diffs(k)
        std = float(np.std(d, ddof=1)) if d.size > 1 else 0.0
        return float(np.mean(d)), std, std / np.sqrt(d.size)


def rank_scan(
    tables: list[FrequencyTable],
    ranks: list[int] | tuple[int, ...],
    options: FitOptions | None = None,
) -> RankScan:
    """Fit every table at every rank and cross-evaluate on the other tables.

    Train error is the fit's own chi2; the test error of the pair (train a,
    test b) evaluates the model fitted on table a against table b with table
    b's variances. The diagonal of the test matrix is NaN.
    """
    if len(tables) < 2:
        raise ValueError("rank_scan needs at least 2 tables")
    ranks = tuple(int(k) for k in ranks)
    options = options or FitOptions()
    n_t = len(tables)
    shape = tables[0].entries.shape
    for t in tables:
        if t.entries.shape != shape:
            raise ValueError("all tables must share the same dimensions")

    train = np.zeros((len(ranks), n_t))
    test = np.full((len(ranks), n_t, n_t), np.nan)
    fits: list[list[FitResult]] = []
    for ri, k in enumerate(ranks):
        row_fits = []
        for a, tab in enumerate(tables):
            fit = fit_rank_k(tab.entries, tab.variance, k, options)
            row_fits.append(fit)
            train[ri, a] = fit.chi2
            for b, other in enumerate(tables):
                if b != a:
                    test[ri, a, b] = chi_squared(other.entries, fit.d_matrix, other.variance)
        fits.append(row_fits)
    return RankScan(ranks=ranks, train_errors=train, test_errors=test,
                    fits=tuple(tuple(r) for r in fits))


def select_rank(scan: RankScan) -> int:
    """Rank at which the mean test-error change flips from negative to positive.

    Returns the smallest k with mean diff(k) < 0 and mean diff(k+1) > 0, both
    exceeding one standard error in magnitude. If no clean sign change exists,
    falls back to the arg-min of the mean test error provided that minimum is
    interior to the scanned range; otherwise the selection is ambiguous.
    """
    ranks = scan.ranks
    if any(b - a != 1 for a, b in zip(ranks, ranks[1:])):
        raise ValueError("select_rank needs a contiguous rank range")
    stats = {k: scan.diff_stats(k) for k in ranks[1:]}
    for k in ranks[1:-1]:
        mean_k, _, sem_k = stats[k]
        mean_next, _, sem_next = stats[k + 1]
        if mean_k < 0 < mean_next and abs(mean_k) > sem_k and abs(mean_next) > sem_next:
            return k
    means = {k: scan.mean_test_error(k) for k in ranks}
    k_min = min(means, key=means.get)
    if ranks[0] < k_min < ranks[-1]:
        return k_min
    raise AmbiguousSelectionError(
        "no sign change in test-error differences and the test-error minimum "
        f"sits on the boundary of the scanned range (arg-min {k_min})",
        scan=scan,
    )


def stack_tables(tables: list[FrequencyTable]) -> StackedFrequencyTable:
    """Concatenate per-tau tables row-wise, keeping the input tau order."""
    if not tables:
        raise ValueError("need at least one table to stack")
    n = tables[0].n
    m = tables[0].m
    shots = tables[0].shots
    for t in tables:
        if t.n != n or t.m != m:
            raise ValueError("stacked tables must share dimensions")
        if t.shots != shots:
            raise ValueError("stacked tables must share the shot count")
    return StackedFrequencyTable(
        entries=np.vstack([t.entries for t in tables]),
        shots=shots,
        taus=tuple(t.tau for t in tables),
        block_rows=m,
        seeds=tuple(t.seed for t in tables),
        variance=np.vstack([t.variance for t in tables]),
    )
