"""End-to-end orchestration: simulate, fit, factor, dual, reparam, analyze.

The full run reproduces the analysis chain on synthetic data: pick the rank
by train/test scan on tau=0 tables, fit one stacked table per repetition,
extract the consistent state space, normalize it toward a sphere, then track
robustness of nonclassicality and relative state-space volumes over the
waiting time, including an exponential decay fit and a volume-increase
(non-Markovianity) check. Every stage persists its artifacts; reports carry
input hashes and no timestamps, so a rerun with the same seed is
byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import curve_fit

from .errors import (
    DegenerateGeometryError,
    FitFailureError,
    StageFailureError,
)
from .fileio import file_sha256, save_model, save_polytope, save_scan
from .gptmodel import (
    GptModel,
    factorize,
    max_pairwise_distinguishability,
    normalize_table,
    purity_lower_bound,
)
from .nonclassicality import RobustnessSeries, robustness_vs_tau
from .polytope import VPolytope, consistent_dual, remove_interior, volume
from .reparam import apply_transform, center, fit_sphere_transform
from .synthdata import (
    PAPER_TAUS_US,
    BumpParams,
    ChannelParams,
    derive_seed,
    fibonacci_directions,
    sample_frequency_table,
)
from .tables import FrequencyTable, save_table, table_filename
from .tomofit import FitOptions, fit_rank_k, rank_scan, select_rank, stack_tables

__all__ = [
    "SimulateSection",
    "FitSection",
    "ContextualitySection",
    "VolumesSection",
    "PipelineConfig",
    "VolumeSeries",
    "DecayFit",
    "RunReport",
    "relative_volumes",
    "fit_decay",
    "detect_nonmarkovianity",
    "run_full_pipeline",
    "build_model_for_rep",
    "consistent_state_space",
    "reparametrized_states",
]


# ----------------------------------------------------------------- config --


@dataclass(frozen=True)
class SimulateSection:
    m: int = 100
    n: int = 100
    shots: int = 2000
    taus: tuple[float, ...] = PAPER_TAUS_US
    t1: float = 21.9
    t2: float = 12.7
    fidelity: float = 0.85
    scan_tables: int = 10
    repetitions: int = 7
    bump: BumpParams | None = None

    def channel(self) -> ChannelParams:
        return ChannelParams(t1=self.t1, t2=self.t2, readout_fidelity=self.fidelity)


@dataclass(frozen=True)
class FitSection:
    ranks: tuple[int, ...] = (2, 3, 4, 5, 6)
    restarts: int = 5
    tol: float = 1e-8
    max_iter: int = 500

    def options(self, seed: int = 0) -> FitOptions:
        return FitOptions(restarts=self.restarts, tol=self.tol,
                          max_iter=self.max_iter, seed=seed)


@dataclass(frozen=True)
class ContextualitySection:
    enabled: bool = True


@dataclass(frozen=True)
class VolumesSection:
    enabled: bool = True
    threshold_sigmas: float = 3.0


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    simulate: SimulateSection = field(default_factory=SimulateSection)
    fit: FitSection = field(default_factory=FitSection)
    contextuality: ContextualitySection = field(default_factory=ContextualitySection)
    volumes: VolumesSection = field(default_factory=VolumesSection)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "PipelineConfig":
        sim = dict(doc.get("simulate", {}))
        if "taus" in sim:
            sim["taus"] = tuple(float(t) for t in sim["taus"])
        if sim.get("bump") is not None:
            sim["bump"] = BumpParams(**sim["bump"])
        fit = dict(doc.get("fit", {}))
        if "ranks" in fit:
            fit["ranks"] = tuple(int(k) for k in fit["ranks"])
        return cls(
            seed=int(doc.get("seed", 0)),
            simulate=SimulateSection(**sim),
            fit=FitSection(**fit),
            contextuality=ContextualitySection(**doc.get("contextuality", {})),
            volumes=VolumesSection(**doc.get("volumes", {})),
        )

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["simulate"]["taus"] = list(self.simulate.taus)
        doc["fit"]["ranks"] = list(self.fit.ranks)
        return doc

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


# ------------------------------------------------------------ volume math --


@dataclass(frozen=True)
class VolumeSeries:
    """Relative volumes Vol(realized)/Vol(consistent) per tau, with spreads."""

    taus: tuple[float, ...]
    values: np.ndarray  # (n_tau, n_reps)
    relative_volumes: np.ndarray
    spreads: np.ndarray | None

    def __post_init__(self):
        if np.any(self.values < 0.0):
            raise ValueError("volumes cannot be negative")
        if np.any(self.relative_volumes > 1.0 + 1e-6):
            raise ValueError("relative volume exceeds 1 beyond tolerance")


@dataclass(frozen=True)
class DecayFit:
    """Weighted exponential fit amplitude * exp(-tau / timescale)."""

    amplitude: float
    timescale: float
    covariance: np.ndarray
    residuals: np.ndarray

    @property
    def amplitude_err(self) -> float:
        return float(np.sqrt(self.covariance[0, 0]))

    @property
    def timescale_err(self) -> float:
        return float(np.sqrt(self.covariance[1, 1]))


def relative_volumes(
    state_sets: Sequence[Mapping[float, np.ndarray]],
    consistent_sets: Sequence[np.ndarray],
) -> VolumeSeries:
    """Per-tau volume ratios across repetitions.

    state_sets[rep][tau] holds the realized 3-D state cloud of one repetition,
    consistent_sets[rep] the consistent-space vertices, all already mapped
    into the shared reparametrized frame.
    """
    if len(state_sets) != len(consistent_sets) or not state_sets:
        raise ValueError("need one consistent space per repetition")
    taus = tuple(sorted(state_sets[0]))
    values = np.empty((len(taus), len(state_sets)))
    for rep, (realized, cons) in enumerate(zip(state_sets, consistent_sets)):
        if tuple(sorted(realized)) != taus:
            raise ValueError("repetitions disagree on the tau grid")
        cvol = volume(VPolytope(cons))
        if cvol <= 0.0:
            raise DegenerateGeometryError(
                f"consistent space of repetition {rep} has zero volume"
            )
        for i, tau in enumerate(taus):
            values[i, rep] = volume(VPolytope(realized[tau])) / cvol
    spreads = np.std(values, axis=1, ddof=1) if values.shape[1] > 1 else None
    return VolumeSeries(
        taus=taus,
        values=values,
        relative_volumes=values.mean(axis=1),
        spreads=spreads,
    )


def fit_decay(series: VolumeSeries) -> DecayFit:
    """Weighted least-squares fit of amplitude * exp(-tau/timescale).

    Weights are the inverse variances of the relative volumes; the starting
    amplitude is the first data point and the starting timescale comes from a
    log-linear regression. Non-decaying or non-positive series fail.
    """
    taus = np.asarray(series.taus, dtype=float)
    vols = np.asarray(series.relative_volumes, dtype=float)
    if taus.size < 3:
        raise FitFailureError("need at least 3 tau points", diagnostics={"n": taus.size})
    if np.any(vols <= 0.0):
        raise FitFailureError(
            "volumes must be positive for the exponential fit",
            diagnostics={"volumes": vols.tolist()},
        )
    slope, intercept = np.polyfit(taus, np.log(vols), 1)
    if slope >= -1e-12:
        raise FitFailureError(
            "series does not decay (log-linear slope >= 0)",
            diagnostics={"slope": float(slope)},
        )
    p0 = (float(np.exp(intercept)), float(-1.0 / slope))
    if series.spreads is not None:
        floor = max(1e-12, 1e-6 * float(np.max(series.spreads)))
        sigma = np.maximum(series.spreads, floor)
    else:
        sigma = None
    try:
        popt, pcov = curve_fit(
            lambda t, a, b: a * np.exp(-t / b),
            taus,
            vols,
            p0=p0,
            sigma=sigma,
            absolute_sigma=sigma is not None,
            maxfev=20000,
        )
    except RuntimeError as exc:
        raise FitFailureError(f"curve fit did not converge: {exc}") from exc
    a, b = float(popt[0]), float(popt[1])
    if a <= 0.0 or b <= 0.0 or not np.all(np.isfinite(pcov)):
        raise FitFailureError(
            "fit produced invalid parameters",
            diagnostics={"amplitude": a, "timescale": b},
        )
    residuals = vols - a * np.exp(-taus / b)
    return DecayFit(amplitude=a, timescale=b, covariance=np.asarray(pcov), residuals=residuals)


def detect_nonmarkovianity(
    series: VolumeSeries, threshold_sigmas: float = 3.0
) -> list[tuple[float, float]]:
    """Consecutive tau pairs whose volume increase exceeds the noise threshold.

    The increase between tau_i and tau_{i+1} counts when it is larger than
    threshold_sigmas times the combined spread of the two points.
    """
    if series.spreads is None:
        raise ValueError("series has no spreads; run more than one repetition")
    out = []
    v, s = series.relative_volumes, series.spreads
    for i in range(len(series.taus) - 1):
        combined = float(np.hypot(s[i], s[i + 1]))
        if v[i + 1] - v[i] > threshold_sigmas * combined:
            out.append((series.taus[i], series.taus[i + 1]))
    return out


# ------------------------------------------------------------- run stages --


def simulate_scan_tables(config: PipelineConfig) -> list[FrequencyTable]:
    """tau = 0 tables used by the rank scan (one per scan table index)."""
    sim = config.simulate
    preps = fibonacci_directions(sim.m)
    meas = preps if sim.n == sim.m else fibonacci_directions(sim.n)
    channel = sim.channel()
    return [
        sample_frequency_table(
            preps, meas, 0.0, sim.shots, channel,
            derive_seed(config.seed, 0, q), bump=sim.bump,
        )
        for q in range(sim.scan_tables)
    ]


def simulate_run_tables(config: PipelineConfig, rep: int) -> list[FrequencyTable]:
    """One repetition's tables across the full tau grid."""
    sim = config.simulate
    preps = fibonacci_directions(sim.m)
    meas = preps if sim.n == sim.m else fibonacci_directions(sim.n)
    channel = sim.channel()
    return [
        sample_frequency_table(
            preps, meas, tau, sim.shots, channel,
            derive_seed(config.seed, 1, rep, ti), bump=sim.bump,
        )
        for ti, tau in enumerate(sim.taus)
    ]


def build_model_for_rep(
    tables: list[FrequencyTable], rank: int, options: FitOptions
) -> GptModel:
    """Stack one repetition's tables, fit at the given rank and factorize.

    The fitted table is row-rescaled onto the nearest unit-consistent table
    before factoring, so the normalization coordinate is exact.
    """
    stacked = stack_tables(tables)
    fit = fit_rank_k(stacked.entries, stacked.variance, rank, options)
    model = factorize(normalize_table(fit.d_matrix), rank)
    return GptModel(
        states=model.states,
        effects=model.effects,
        rank=rank,
        tau_labels=stacked.row_taus,
    )


def consistent_state_space(model: GptModel) -> VPolytope:
    """Dual of the realized effects, sliced at <u, s> = 1."""
    return consistent_dual(model.effects.T, normalization=model.unit)


def reparametrized_states(
    model: GptModel, consistent: VPolytope
) -> tuple[dict[float, np.ndarray], np.ndarray]:
    """Map every tau block and the consistent space into the sphere frame.

    The transformation is fitted once, on the consistent-space boundary, and
    applied unchanged to all realized blocks. Requires a rank-4 model (3-D
    normalized state space).
    """
    if model.rank != 4:
        raise ValueError("sphere reparametrization supports rank-4 models only")
    boundary = remove_interior(consistent.vertices[:, 1:]).vertices
    centered, mu = center(boundary)
    fit = fit_sphere_transform(centered, mean=mu)
    realized = {
        tau: apply_transform(fit, model.state_block(tau)[:, 1:]) for tau in model.taus()
    }
    return realized, apply_transform(fit, boundary)


# ----------------------------------------------------------------- report --


@dataclass
class RunReport:
    rank_selection: dict
    robustness: dict
    volumes: dict
    decay: dict
    nonmarkovianity: dict
    purity: dict
    provenance: dict

    def to_dict(self) -> dict:
        return {
            "rank_selection": self.rank_selection,
            "robustness": self.robustness,
            "volumes": self.volumes,
            "decay": self.decay,
            "nonmarkovianity": self.nonmarkovianity,
            "purity": self.purity,
            "provenance": self.provenance,
        }


def _series_dict(taus, means, stds, values) -> dict:
    return {
        "taus": [float(t) for t in taus],
        "mean": [float(x) for x in means],
        "std": None if stds is None else [float(x) for x in stds],
        "values": [[float(x) for x in row] for row in values],
    }


def _write_csv(path: Path, header: str, rows: list[list]) -> None:
    lines = [header] + [",".join(repr(x) if isinstance(x, float) else str(x) for x in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def run_full_pipeline(config: PipelineConfig, out_dir: str | Path) -> RunReport:
    """Run every enabled stage, persisting artifacts under out_dir.

    Raises StageFailureError with the stage tag on the first failing stage;
    artifacts from completed stages remain on disk.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "tables").mkdir(exist_ok=True)
    (out / "models").mkdir(exist_ok=True)
    (out / "polytopes").mkdir(exist_ok=True)
    (out / "reparam").mkdir(exist_ok=True)
    (out / "figures").mkdir(exist_ok=True)

    config_json = json.dumps(config.to_dict(), sort_keys=True)
    provenance: dict = {
        "seed": config.seed,
        "config_sha256": hashlib.sha256(config_json.encode()).hexdigest(),
        "table_files": {},
    }
    fit_options = config.fit.options(seed=config.seed)

    # --- simulate ---------------------------------------------------------
    try:
        scan_tables = simulate_scan_tables(config) if len(config.fit.ranks) > 1 else []
        run_tables = [
            simulate_run_tables(config, rep) for rep in range(config.simulate.repetitions)
        ]
        for q, tab in enumerate(scan_tables):
            p = out / "tables" / ("scan-" + table_filename(q, 0))
            save_table(tab, p)
            provenance["table_files"][p.name] = file_sha256(p)
        for rep, tabs in enumerate(run_tables):
            for ti, tab in enumerate(tabs):
                p = out / "tables" / table_filename(rep, ti)
                save_table(tab, p)
                provenance["table_files"][p.name] = file_sha256(p)
    except Exception as exc:
        raise StageFailureError("simulate", exc) from exc

    # --- rank selection ---------------------------------------------------
    try:
        if len(config.fit.ranks) > 1:
            scan = rank_scan(scan_tables, config.fit.ranks, fit_options)
            selected = select_rank(scan)
            save_scan(scan, out / "figures" / "fig4_errors.csv", out / "scan.json")
            _write_csv(
                out / "figures" / "fig5_test_error_diffs.csv",
                "rank,mean_diff,std,sem",
                [[k, *scan.diff_stats(k)] for k in scan.ranks[1:]],
            )
            rank_section = {
                "selected": selected,
                "ranks": list(scan.ranks),
                "mean_test_errors": [scan.mean_test_error(k) for k in scan.ranks],
                "diffs": {str(k): list(scan.diff_stats(k)) for k in scan.ranks[1:]},
            }
        else:
            selected = config.fit.ranks[0]
            rank_section = {"skipped": "single rank configured", "selected": selected}
    except Exception as exc:
        raise StageFailureError("rank-scan", exc) from exc

    # --- fit + factorize per repetition ------------------------------------
    try:
        models = [
            build_model_for_rep(tabs, selected, fit_options) for tabs in run_tables
        ]
        for rep, model in enumerate(models):
            save_model(
                model,
                out / "models" / f"model-r{rep:03d}.json",
                provenance={"rank": selected, "seed": config.seed, "rep": rep},
            )
    except Exception as exc:
        raise StageFailureError("fit", exc) from exc

    # --- consistent spaces + reparametrization -----------------------------
    try:
        consistent = [consistent_state_space(m) for m in models]
        for rep, poly in enumerate(consistent):
            save_polytope(poly, out / "polytopes" / f"consistent-r{rep:03d}.json")
        frames = [reparametrized_states(m, c) for m, c in zip(models, consistent)]
        for rep, (realized, cons3d) in enumerate(frames):
            for ti, tau in enumerate(sorted(realized)):
                _write_csv(
                    out / "reparam" / f"states-r{rep:03d}-t{ti:02d}.csv",
                    "x,y,z",
                    [list(map(float, row)) for row in realized[tau]],
                )
    except Exception as exc:
        raise StageFailureError("reparam", exc) from exc

    # --- volumes ------------------------------------------------------------
    if config.volumes.enabled:
        try:
            vol_series = relative_volumes(
                [fr[0] for fr in frames], [fr[1] for fr in frames]
            )
            volumes_section = _series_dict(
                vol_series.taus, vol_series.relative_volumes, vol_series.spreads,
                vol_series.values,
            )
            _write_csv(
                out / "figures" / "fig8_volumes.csv",
                "tau_us,relative_volume,std",
                [
                    [t, float(v), float(s) if vol_series.spreads is not None else ""]
                    for t, v, s in zip(
                        vol_series.taus,
                        vol_series.relative_volumes,
                        vol_series.spreads
                        if vol_series.spreads is not None
                        else np.zeros(len(vol_series.taus)),
                    )
                ],
            )
            try:
                decay = fit_decay(vol_series)
                decay_section = {
                    "amplitude": decay.amplitude,
                    "timescale_us": decay.timescale,
                    "amplitude_err": decay.amplitude_err,
                    "timescale_err": decay.timescale_err,
                }
            except FitFailureError as exc:
                decay_section = {"skipped": f"decay fit failed: {exc}"}
            intervals = detect_nonmarkovianity(vol_series, config.volumes.threshold_sigmas) \
                if vol_series.spreads is not None else []
            nonmark_section = {
                "threshold_sigmas": config.volumes.threshold_sigmas,
                "intervals": [[float(a), float(b)] for a, b in intervals],
            }
        except Exception as exc:
            raise StageFailureError("volumes", exc) from exc
    else:
        volumes_section = {"skipped": "disabled in config"}
        decay_section = {"skipped": "volumes disabled"}
        nonmark_section = {"skipped": "volumes disabled"}

    # --- contextuality -------------------------------------------------------
    if config.contextuality.enabled:
        try:
            rob = robustness_vs_tau(models)
            robustness_section = _series_dict(rob.taus, rob.means, rob.stds, rob.values)
            _write_csv(
                out / "figures" / "fig6_robustness.csv",
                "tau_us,r_mean,r_std",
                [
                    [t, float(v), float(s) if rob.stds is not None else ""]
                    for t, v, s in zip(
                        rob.taus, rob.means,
                        rob.stds if rob.stds is not None else np.zeros(len(rob.taus)),
                    )
                ],
            )
        except Exception as exc:
            raise StageFailureError("contextuality", exc) from exc
    else:
        robustness_section = {"skipped": "disabled in config"}

    # --- purity bound --------------------------------------------------------
    try:
        tau0 = min(config.simulate.taus)
        dists = []
        for model in models:
            block = GptModel(
                states=model.state_block(tau0),
                effects=model.effects,
                rank=model.rank,
            )
            dists.append(max_pairwise_distinguishability(block))
        dists = np.asarray(dists)
        purity_section = {
            "max_distinguishability_mean": float(dists.mean()),
            "max_distinguishability_std": float(dists.std(ddof=1)) if dists.size > 1 else None,
            "purity_lower_bound": purity_lower_bound(float(dists.mean())),
        }
    except Exception as exc:
        raise StageFailureError("purity", exc) from exc

    # --- report ---------------------------------------------------------------
    try:
        heat = run_tables[0][0]
        _write_csv(
            out / "figures" / "fig2_frequency_heatmap.csv",
            ",".join(f"m{j}" for j in range(heat.n)),
            [list(map(float, row)) for row in heat.entries],
        )
        report = RunReport(
            rank_selection=rank_section,
            robustness=robustness_section,
            volumes=volumes_section,
            decay=decay_section,
            nonmarkovianity=nonmark_section,
            purity=purity_section,
            provenance=provenance,
        )
        (out / "report.json").write_text(json.dumps(report.to_dict(), sort_keys=True))
    except Exception as exc:
        raise StageFailureError("report", exc) from exc
    return report
