"""Synthetic prepare-and-measure data for a decohering two-level system.

Preparations and measurements are unit vectors on the Bloch sphere drawn from
a Fibonacci lattice. The channel between preparation and measurement is
transverse decay exp(-tau/t2) plus longitudinal relaxation toward the ground
pole (0, 0, +1) with rate 1/t1, followed by a symmetric readout bit-flip.
Shot noise is binomial, with one deterministic RNG stream per table cell.

All times are in microseconds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tables import FrequencyTable, binomial_variance

__all__ = [
    "ChannelParams",
    "BumpParams",
    "GROUND_POLE",
    "PAPER_TAUS_US",
    "fibonacci_directions",
    "ideal_probability",
    "apply_decoherence",
    "apply_readout_error",
    "cell_probability",
    "sample_frequency_table",
    "derive_seed",
]

GOLDEN_RATIO = (1.0 + np.sqrt(5.0)) / 2.0

# Ground state |0> sits at +1 on the z axis; fixed convention for determinism.
GROUND_POLE = np.array([0.0, 0.0, 1.0])

PAPER_TAUS_US = (0.0, 5.0, 10.0, 15.0, 20.0, 30.0, 40.0, 50.0)


@dataclass(frozen=True)
class ChannelParams:
    """Relaxation (t1), dephasing (t2) and readout fidelity of the channel."""

    t1: float = 21.9
    t2: float = 12.7
    readout_fidelity: float = 0.85

    def __post_init__(self):
        if self.t1 <= 0.0:
            raise ValueError("t1 must be positive")
        if not 0.0 < self.t2 <= 2.0 * self.t1:
            raise ValueError("t2 must satisfy 0 < t2 <= 2*t1")
        if not 0.5 <= self.readout_fidelity <= 1.0:
            raise ValueError("readout fidelity must lie in [0.5, 1]")


@dataclass(frozen=True)
class BumpParams:
    """Transient transverse re-expansion injected between t_start and t_end.

    A test fixture for non-Markovian behaviour, not a physical model: the
    transverse decay factor is multiplied by 1 + amplitude * ramp(tau), where
    the ramp rises linearly from 0 at t_start to 1 at t_end and stays at 1
    afterwards. The multiplied factor is capped at 1 so states remain valid.
    """

    t_start: float = 20.0
    t_end: float = 30.0
    amplitude: float = 2.5

    def __post_init__(self):
        if not 0.0 <= self.t_start < self.t_end:
            raise ValueError("need 0 <= t_start < t_end")
        if self.amplitude < 0.0:
            raise ValueError("amplitude must be nonnegative")

    def ramp(self, tau: float) -> float:
        return float(np.clip((tau - self.t_start) / (self.t_end - self.t_start), 0.0, 1.0))


def fibonacci_directions(m: int) -> np.ndarray:
    """m approximately uniform unit vectors on the sphere, as an (m, 3) array.

    Point i uses z_i = 1 - 2(i + 0.5)/m and azimuth 2*pi*i / phi^2 with phi
    the golden ratio; deterministic for fixed m.
    """
    if m < 1:
        raise ValueError(f"need m >= 1, got {m}")
    i = np.arange(m, dtype=float)
    z = 1.0 - 2.0 * (i + 0.5) / m
    phi = 2.0 * np.pi * i / GOLDEN_RATIO**2
    rho = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    pts = np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def ideal_probability(prep: np.ndarray, meas: np.ndarray) -> float:
    """Outcome-0 probability (1 + prep.meas)/2 for pure state and projector."""
    p = 0.5 * (1.0 + float(np.dot(prep, meas)))
    return min(max(p, 0.0), 1.0)


def apply_decoherence(
    bloch: np.ndarray,
    tau: float,
    params: ChannelParams,
    bump: BumpParams | None = None,
) -> np.ndarray:
    """Evolve a Bloch vector for waiting time tau under the decay channel.

    Transverse components scale by exp(-tau/t2); the longitudinal component
    relaxes toward the ground pole as z' = 1 + (z - 1) exp(-tau/t1). With a
    bump configured, the transverse factor gains the re-expansion multiplier.
    """
    if tau < 0.0:
        raise ValueError("tau must be nonnegative")
    bloch = np.asarray(bloch, dtype=float)
    g = np.exp(-tau / params.t2)
    if bump is not None:
        g = min(g * (1.0 + bump.amplitude * bump.ramp(tau)), 1.0)
    ez = np.exp(-tau / params.t1)
    pole = GROUND_POLE[2]
    return np.array([g * bloch[0], g * bloch[1], pole + (bloch[2] - pole) * ez])


def apply_readout_error(p: float, fidelity: float) -> float:
    """Symmetric bit-flip: p' = fidelity * p + (1 - fidelity) * (1 - p)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    return fidelity * p + (1.0 - fidelity) * (1.0 - p)


def cell_probability(
    prep: np.ndarray,
    meas: np.ndarray,
    tau: float,
    params: ChannelParams,
    bump: BumpParams | None = None,
) -> float:
    """Deterministic outcome-0 probability: decoherence, Born rule, readout."""
    evolved = apply_decoherence(prep, tau, params, bump)
    p = 0.5 * (1.0 + float(np.dot(evolved, meas)))
    p = min(max(p, 0.0), 1.0)
    return apply_readout_error(p, params.readout_fidelity)


def _cell_rng(seed: int, i: int, j: int, tau: float) -> np.random.Generator:
    # Independent per-cell streams keyed on (seed, i, j, tau bit pattern);
    # cells can therefore be sampled in any order or in parallel.
    tau_bits = int(np.float64(tau).view(np.uint64))
    return np.random.default_rng((int(seed), int(i), int(j), tau_bits))


def sample_frequency_table(
    preps: np.ndarray,
    meas: np.ndarray,
    tau: float,
    shots: int,
    params: ChannelParams,
    seed: int,
    bump: BumpParams | None = None,
) -> FrequencyTable:
    """Draw the m x n table of binomial frequencies for one waiting time.

    Each cell draws binomial(shots, p_ij)/shots from its own stream, where
    p_ij composes decoherence, the Born rule and the readout flip. Identical
    arguments reproduce the table bitwise.
    """
    preps = np.atleast_2d(np.asarray(preps, dtype=float))
    meas = np.atleast_2d(np.asarray(meas, dtype=float))
    if preps.size == 0 or meas.size == 0:
        raise ValueError("direction lists must be nonempty")
    if shots < 1:
        raise ValueError("shots must be >= 1")
    m, n = preps.shape[0], meas.shape[0]

    evolved = np.array([apply_decoherence(p, tau, params, bump) for p in preps])
    probs = 0.5 * (1.0 + evolved @ meas.T)
    probs = np.clip(probs, 0.0, 1.0)
    f = params.readout_fidelity
    probs = f * probs + (1.0 - f) * (1.0 - probs)

    entries = np.empty((m, n))
    for i in range(m):
        for j in range(n):
            rng = _cell_rng(seed, i, j, tau)
            entries[i, j] = rng.binomial(shots, probs[i, j]) / shots
    return FrequencyTable(
        entries=entries,
        shots=shots,
        tau=float(tau),
        seed=int(seed),
        variance=binomial_variance(entries, shots),
    )


def derive_seed(master: int, *path: int) -> int:
    """Deterministic child seed for a labelled position in a run."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, np.uint64)[0])
