"""Monte Carlo studies over the trial simulator and estimation engine.

Three layers live here. estimate_power and find_sample_size are the
reusable primitives: simulate replicates, fit a model, count Wald
rejections, and (for the search) interpolate a probit line through the
power curve. The run_table* runners assemble those primitives over the
bundled grid of generative configurations and emit result documents whose
layout mirrors the reference tables bundled alongside them.

Reproducibility contract: replicate k of a run with seed path P draws from
numpy SeedSequence(P + (k,)). Results are reduced in replicate order, the
worker count never enters any document, and documents carry no timestamps,
so a rerun with the same seed is byte-identical at any parallelism.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.special import ndtri

from . import gee
from .design import (
    ConditionalScenario,
    ContrastSpec,
    DEFAULT_CONTRAST,
    canonical_json,
    scenario_to_dict,
)
from .formulas import TestSpec, plan_n, predicted_power
from .gee import ModelSpec, NonConvergenceError
from .simulate import (
    GenParamsThreeWave,
    GenParamsTwoWave,
    population_moments,
    simulate_from_scenario,
    simulate_three_wave,
    simulate_two_wave,
    weight_and_replicate,
)

__all__ = [
    "DEFAULT_SEED",
    "CHUNK_SIZE",
    "GENERATIVE_GRID",
    "REFERENCE_POWER",
    "REFERENCE_N",
    "REFERENCE_THREE_WAVE",
    "PowerEstimate",
    "SampleSizeSearch",
    "TableDocument",
    "SimulationFailureError",
    "SearchFailureError",
    "estimate_power",
    "estimate_power_multi",
    "find_sample_size",
    "pilot_marginal_correlation",
    "run_table3",
    "run_table4",
    "run_table5",
]

DEFAULT_SEED = 1729
CHUNK_SIZE = 25
NONCONVERGENCE_WARN_FRACTION = 0.05

GenLike = Union[GenParamsTwoWave, GenParamsThreeWave, ConditionalScenario]

# Bundled grid of two-wave generative configurations, indexed by the nominal
# pretest correlation and the target odds ratio of the (+1,-1) vs (-1,-1)
# comparison. The response model is shared by every configuration.
GENERATIVE_GRID: dict = {
    (0.06, 1.5): GenParamsTwoWave(beta0=-0.44, beta_y0=0.00, beta_a1=0.100),
    (0.06, 2.0): GenParamsTwoWave(beta0=-0.44, beta_y0=0.00, beta_a1=0.250),
    (0.06, 3.0): GenParamsTwoWave(beta0=-0.44, beta_y0=0.00, beta_a1=0.460),
    (0.3, 1.5): GenParamsTwoWave(beta0=-0.90, beta_y0=1.20, beta_a1=0.115),
    (0.3, 2.0): GenParamsTwoWave(beta0=-0.90, beta_y0=1.20, beta_a1=0.290),
    (0.3, 3.0): GenParamsTwoWave(beta0=-0.90, beta_y0=1.20, beta_a1=0.520),
    (0.6, 1.5): GenParamsTwoWave(beta0=-1.55, beta_y0=3.00, beta_a1=0.220),
    (0.6, 2.0): GenParamsTwoWave(beta0=-1.55, beta_y0=3.00, beta_a1=0.450),
    (0.6, 3.0): GenParamsTwoWave(beta0=-1.55, beta_y0=3.00, beta_a1=0.780),
}

GRID_ROW_ORDER = tuple(sorted(GENERATIVE_GRID))

# Reference values bundled for comparison columns in emitted documents and
# for regression checks. Keyed by (pretest corr, odds ratio, n); the six
# entries per key are predicted MPB/CPB and simulated power, one- then
# two-wave.
REFERENCE_POWER: dict = {
    (0.06, 1.5, 300): (0.298, 0.298, 0.296, 0.299, 0.313, 0.298),
    (0.06, 1.5, 500): (0.455, 0.454, 0.457, 0.456, 0.476, 0.458),
    (0.06, 2.0, 300): (0.665, 0.664, 0.667, 0.666, 0.692, 0.667),
    (0.06, 2.0, 500): (0.869, 0.868, 0.876, 0.870, 0.888, 0.878),
    (0.06, 3.0, 300): (0.956, 0.955, 0.961, 0.956, 0.966, 0.962),
    (0.06, 3.0, 500): (0.997, 0.997, 0.999, 0.997, 0.998, 0.998),
    (0.3, 1.5, 300): (0.286, 0.286, 0.279, 0.312, 0.324, 0.305),
    (0.3, 1.5, 500): (0.437, 0.437, 0.449, 0.475, 0.493, 0.484),
    (0.3, 2.0, 300): (0.672, 0.671, 0.677, 0.716, 0.737, 0.722),
    (0.3, 2.0, 500): (0.874, 0.874, 0.880, 0.904, 0.917, 0.908),
    (0.3, 3.0, 300): (0.957, 0.957, 0.963, 0.971, 0.977, 0.976),
    (0.3, 3.0, 500): (0.997, 0.997, 0.999, 0.999, 0.999, 0.999),
    (0.6, 1.5, 300): (0.290, 0.290, 0.291, 0.423, 0.431, 0.427),
    (0.6, 1.5, 500): (0.442, 0.442, 0.450, 0.627, 0.637, 0.641),
    (0.6, 2.0, 300): (0.649, 0.649, 0.652, 0.831, 0.840, 0.848),
    (0.6, 2.0, 500): (0.856, 0.857, 0.861, 0.965, 0.968, 0.968),
    (0.6, 3.0, 300): (0.955, 0.956, 0.962, 0.994, 0.995, 0.996),
    (0.6, 3.0, 500): (0.997, 0.997, 0.998, 1.000, 1.000, 1.000),
}

# Same layout for required sample sizes: predicted MPB/CPB and simulated N,
# one- then two-wave, keyed by (pretest corr, odds ratio).
REFERENCE_N: dict = {
    (0.06, 1.5): (1152, 1154, 1157, 1149, 1087, 1153),
    (0.06, 2.0): (414, 415, 413, 413, 389, 412),
    (0.06, 3.0): (176, 176, 167, 175, 165, 165),
    (0.3, 1.5): (1209, 1211, 1210, 1090, 1040, 1091),
    (0.3, 2.0): (408, 408, 411, 368, 351, 371),
    (0.3, 3.0): (175, 175, 169, 159, 151, 152),
    (0.6, 1.5): (1192, 1191, 1182, 753, 735, 745),
    (0.6, 2.0): (430, 429, 431, 277, 270, 269),
    (0.6, 3.0): (176, 176, 172, 118, 115, 109),
}

# Three-wave reference powers keyed by (delayed, n); columns in the order of
# TABLE5_MODELS below.
REFERENCE_THREE_WAVE: dict = {
    (False, 300): (0.962, 0.997, 0.651, 0.715, 0.651, 0.726, 0.699),
    (False, 500): (0.998, 1.000, 0.859, 0.907, 0.859, 0.909, 0.893),
    (True, 300): (0.961, 0.997, 0.515, 0.517, 0.515, 0.540, 0.521),
    (True, 500): (0.998, 1.000, 0.744, 0.746, 0.744, 0.757, 0.737),
}

TABLE5_MODELS: tuple = (
    ("y1_only", ModelSpec.one_wave(waves=(1,))),
    ("y1_adjusted", ModelSpec.two_wave("exchangeable", waves=(0, 1))),
    ("y2_only", ModelSpec.one_wave(waves=(2,))),
    ("y2_adjusted", ModelSpec.two_wave("exchangeable", waves=(0, 2))),
    ("y2_trajectory_independence", ModelSpec.piecewise("independence")),
    ("y2_trajectory_ar1", ModelSpec.piecewise("ar1")),
    ("y2_trajectory_exchangeable", ModelSpec.piecewise("exchangeable")),
)


class SimulationFailureError(RuntimeError):
    pass


class SearchFailureError(SimulationFailureError):
    def __init__(self, message: str, diagnostics: Optional[dict] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class PowerEstimate:
    """Monte Carlo rejection proportion with its audit trail."""

    power: float
    mc_se: float
    reps: int
    n_converged: int
    n_failed: int
    n_rejected: int
    n: int
    alpha: float
    gen_id: str
    model_id: str
    base_seed: tuple
    nonconverged: str
    warning: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "power": self.power,
            "mc_se": self.mc_se,
            "reps": self.reps,
            "n_converged": self.n_converged,
            "n_failed": self.n_failed,
            "n_rejected": self.n_rejected,
            "n": self.n,
            "alpha": self.alpha,
            "gen_id": self.gen_id,
            "model_id": self.model_id,
            "base_seed": list(self.base_seed),
            "nonconverged": self.nonconverged,
            "warning": self.warning,
        }


@dataclass(frozen=True)
class SampleSizeSearch:
    """Probit-interpolated sample size: grid estimates, fitted line, solved N."""

    n_hat: int
    n_hat_raw: float
    se_n: float
    intercept: float
    slope: float
    residual_deviance: float
    target: float
    points: tuple
    base_seed: tuple
    gen_id: str
    model_id: str

    def to_dict(self) -> dict:
        return {
            "n_hat": self.n_hat,
            "n_hat_raw": self.n_hat_raw,
            "se_n": self.se_n,
            "intercept": self.intercept,
            "slope": self.slope,
            "residual_deviance": self.residual_deviance,
            "target": self.target,
            "points": [dict(p) for p in self.points],
            "base_seed": list(self.base_seed),
            "gen_id": self.gen_id,
            "model_id": self.model_id,
        }


# ---------------------------------------------------------------------------
# replicate execution
# ---------------------------------------------------------------------------


def _simulate_one(gen: GenLike, n: int, seed) :
    if isinstance(gen, GenParamsThreeWave):
        return simulate_three_wave(gen, n, seed)
    if isinstance(gen, GenParamsTwoWave):
        return simulate_two_wave(gen, n, seed)
    if isinstance(gen, ConditionalScenario):
        return simulate_from_scenario(gen, n, seed)
    raise TypeError(f"unsupported generative configuration {type(gen).__name__}")


def _gen_id(gen: GenLike) -> str:
    if isinstance(gen, GenParamsThreeWave):
        return (f"three-wave(delayed={gen.delayed}, base={_gen_id(gen.two_wave)}, "
                f"y2=({gen.y2_intercept}, y1:{gen.resolved_y2_y1}, a1:{gen.resolved_y2_a1}))")
    if isinstance(gen, GenParamsTwoWave):
        return (f"two-wave(beta0={gen.beta0}, beta_y0={gen.beta_y0}, beta_a1={gen.beta_a1}, "
                f"beta_r={gen.beta_r}, beta_a2={gen.beta_a2}, beta_a1a2={gen.beta_a1a2}, "
                f"p_pretest={gen.p_pretest}, resp=({gen.resp_intercept}, {gen.resp_y0}, {gen.resp_a1}))")
    return "scenario:" + canonical_json(scenario_to_dict(gen)).strip()


def _model_id(model: ModelSpec, waves_hint=None) -> str:
    waves = model.waves if model.waves is not None else waves_hint
    return f"{model.variant}/{model.working}" + (f"/waves={list(waves)}" if waves else "")


def _replicate_chunk(args):
    (gen, models, contrast, n, seed_path, start, stop, alpha,
     continuity, collect_rho) = args
    m = len(models)
    out = np.zeros((stop - start, m), dtype=np.int8)
    rhos = []
    for offset, k in enumerate(range(start, stop)):
        data = _simulate_one(gen, n, np.random.SeedSequence(seed_path + (k,)))
        rows = weight_and_replicate(data)
        rho_val = math.nan
        for j, model in enumerate(models):
            try:
                fit_res = gee.fit(rows, model, continuity_correction=continuity)
                res = gee.wald_test(fit_res, contrast, alpha=alpha)
                out[offset, j] = 1 if res.reject else 0
                if collect_rho == j:
                    rho_val = gee.estimate_marginal_correlation(rows, fit_res)
            except NonConvergenceError:
                out[offset, j] = -1
        if collect_rho is not None:
            rhos.append(rho_val)
    return out, rhos


def _run_replicates(gen, models, contrast, n, reps, seed_path, workers, alpha,
                    continuity=False, collect_rho=None, progress=None):
    if reps < 1:
        raise ValueError(f"reps must be at least 1, got {reps}")
    chunks = [(gen, models, contrast, n, tuple(seed_path), lo, min(lo + CHUNK_SIZE, reps),
               alpha, continuity, collect_rho)
              for lo in range(0, reps, CHUNK_SIZE)]
    results = []
    rhos = []
    done = 0
    if workers is not None and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for out, rh in pool.map(_replicate_chunk, chunks):
                results.append(out)
                rhos.extend(rh)
                done += out.shape[0]
                if progress is not None:
                    progress(done / reps)
    else:
        for chunk in chunks:
            out, rh = _replicate_chunk(chunk)
            results.append(out)
            rhos.extend(rh)
            done += out.shape[0]
            if progress is not None:
                progress(done / reps)
    return np.vstack(results), rhos


def _seed_path(seed) -> tuple:
    if isinstance(seed, tuple):
        path = seed
    else:
        path = (int(seed),)
    if any(not isinstance(s, int) or s < 0 for s in path):
        raise ValueError(f"seed path must be non-negative integers, got {path}")
    return path


def _summarize(outcomes: np.ndarray, j: int, reps: int, n: int, alpha: float,
               gen_id: str, model_id: str, seed_path: tuple, nonconverged: str) -> PowerEstimate:
    col = outcomes[:, j]
    n_failed = int(np.sum(col == -1))
    n_converged = reps - n_failed
    n_rejected = int(np.sum(col == 1))
    if nonconverged == "exclude":
        denom = n_converged
    elif nonconverged == "fail":
        denom = reps
    else:
        raise ValueError(f'nonconverged must be "exclude" or "fail", got {nonconverged!r}')
    if denom == 0:
        raise SimulationFailureError(
            f"no replicate converged for {model_id} at n={n}")
    q = n_rejected / denom
    warning = None
    if n_failed > NONCONVERGENCE_WARN_FRACTION * reps:
        warning = (f"{n_failed} of {reps} replicates failed to converge "
                   f"({n_failed / reps:.1%}); estimate may be biased")
        warnings.warn(warning, UserWarning)
    return PowerEstimate(
        power=q,
        mc_se=math.sqrt(q * (1.0 - q) / denom),
        reps=reps,
        n_converged=n_converged,
        n_failed=n_failed,
        n_rejected=n_rejected,
        n=n,
        alpha=alpha,
        gen_id=gen_id,
        model_id=model_id,
        base_seed=seed_path,
        nonconverged=nonconverged,
        warning=warning,
    )


def estimate_power(gen: GenLike, model: ModelSpec, contrast: ContrastSpec = DEFAULT_CONTRAST,
                   n: int = 300, reps: int = 2000, seed=DEFAULT_SEED, workers: Optional[int] = None,
                   alpha: float = 0.05, nonconverged: str = "exclude",
                   continuity_correction: bool = False,
                   progress: Optional[Callable] = None) -> PowerEstimate:
    """Simulate reps trials, fit one model, and report the Wald rejection rate.

    Non-converged replicates are counted and reported; by default they leave
    the denominator ("exclude"), or count as non-rejections with
    nonconverged="fail". More than 5% failures attaches a warning.
    """
    seed_path = _seed_path(seed)
    outcomes, _ = _run_replicates(gen, (model,), contrast, n, reps, seed_path, workers,
                                  alpha, continuity_correction, None, progress)
    return _summarize(outcomes, 0, reps, n, alpha, _gen_id(gen), _model_id(model), seed_path,
                      nonconverged)


def estimate_power_multi(gen: GenLike, models: Sequence, contrast: ContrastSpec = DEFAULT_CONTRAST,
                         n: int = 300, reps: int = 2000, seed=DEFAULT_SEED,
                         workers: Optional[int] = None, alpha: float = 0.05,
                         nonconverged: str = "exclude", continuity_correction: bool = False,
                         progress: Optional[Callable] = None) -> dict:
    """estimate_power for several models on shared simulated datasets.

    models is a sequence of (name, ModelSpec) pairs; each replicate is
    simulated once and fitted by every model, so cross-model comparisons see
    identical data.
    """
    seed_path = _seed_path(seed)
    names = [name for name, _ in models]
    specs = tuple(spec for _, spec in models)
    outcomes, _ = _run_replicates(gen, specs, contrast, n, reps, seed_path, workers,
                                  alpha, continuity_correction, None, progress)
    gen_id = _gen_id(gen)
    return {name: _summarize(outcomes, j, reps, n, alpha, gen_id, _model_id(specs[j]), seed_path,
                             nonconverged)
            for j, name in enumerate(names)}


def pilot_marginal_correlation(gen: GenLike, reps: int = 200, n: int = 1000,
                               seed=DEFAULT_SEED, workers: Optional[int] = None) -> float:
    """Average between-wave correlation estimate over a batch of pilot trials.

    Each pilot trial is fitted with the two-wave repeated-measures model under
    an exchangeable working correlation, and the weighted moment estimates are
    averaged. This provides the marginal rho input for predictions, the same
    way a planner without closed-form moments would obtain it.
    """
    seed_path = _seed_path(seed)
    model = ModelSpec.two_wave("exchangeable")
    outcomes, rhos = _run_replicates(gen, (model,), DEFAULT_CONTRAST, n, reps, seed_path,
                                     workers, 0.05, False, 0, None)
    vals = [r for r in rhos if not math.isnan(r)]
    if not vals:
        raise SimulationFailureError("no pilot replicate produced a correlation estimate")
    return float(np.mean(vals))


# ---------------------------------------------------------------------------
# probit-interpolated sample size search
# ---------------------------------------------------------------------------


def _default_grid(gen: GenLike, model: ModelSpec, contrast: ContrastSpec,
                  spec_target: float, alpha: float, grid_points: int) -> list:
    if isinstance(gen, GenParamsThreeWave):
        raise ValueError("an explicit grid is required for three-wave generative models")
    if isinstance(gen, GenParamsTwoWave):
        scenario = population_moments(gen).conditional_scenario()
    else:
        scenario = gen
    waves = 1 if model.variant == "one_wave_saturated" else 2
    center = plan_n(scenario, contrast, method="cpb", waves=waves,
                    spec=TestSpec(alpha=alpha, power=spec_target),
                    conditional_moments="cell").n
    lo, hi = 0.5 * center, 1.5 * center
    pts = sorted({max(2, int(round(v))) for v in np.linspace(lo, hi, grid_points)})
    if len(pts) < 3:
        pts = sorted({max(2, center // 2), max(3, center), max(4, math.ceil(1.5 * center))})
    return pts


def find_sample_size(gen: GenLike, model: ModelSpec, contrast: ContrastSpec = DEFAULT_CONTRAST,
                     target: float = 0.80, grid: Optional[Sequence[int]] = None,
                     reps_per_point: int = 500, seed=DEFAULT_SEED,
                     workers: Optional[int] = None, alpha: float = 0.05,
                     grid_points: int = 10, continuity_correction: bool = False,
                     progress: Optional[Callable] = None) -> SampleSizeSearch:
    """Estimate power on a grid of sample sizes and solve a probit line for N.

    Power estimates are clamped away from 0 and 1 before the probit
    transform; the line is fitted by weighted least squares with delta-method
    inverse-variance weights, and N is the smallest integer at or above the
    line's crossing of the target. A non-positive slope raises
    SearchFailureError carrying the per-point diagnostics.
    """
    if not 0.0 < target < 1.0:
        raise ValueError(f"target must lie in (0, 1), got {target}")
    seed_path = _seed_path(seed)
    if grid is None:
        grid = _default_grid(gen, model, contrast, target, alpha, grid_points)
    grid = [int(v) for v in grid]
    if len(grid) < 3:
        raise ValueError(f"grid needs at least 3 sizes, got {grid}")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError(f"grid must be strictly increasing, got {grid}")
    if grid[0] < 2:
        raise ValueError(f"grid sizes must be at least 2, got {grid}")

    gen_id = _gen_id(gen)
    model_id = _model_id(model)
    points = []
    zs = []
    ws = []
    for i, n_i in enumerate(grid):
        est = estimate_power(gen, model, contrast, n=n_i, reps=reps_per_point,
                             seed=seed_path + (i,), workers=workers, alpha=alpha,
                             continuity_correction=continuity_correction)
        if progress is not None:
            progress((i + 1) / len(grid))
        lo = 1.0 / (reps_per_point + 2)
        clamped = not lo <= est.power <= 1.0 - lo
        q = min(max(est.power, lo), 1.0 - lo)
        z = float(ndtri(q))
        denom = est.n_converged if est.n_converged > 0 else reps_per_point
        var_z = q * (1.0 - q) / (denom * _phi(z) ** 2)
        points.append({
            "n": n_i,
            "power": est.power,
            "clamped": clamped,
            "probit": z,
            "mc_se": est.mc_se,
            "n_converged": est.n_converged,
            "n_failed": est.n_failed,
        })
        zs.append(z)
        ws.append(1.0 / var_z)

    x = np.array(grid, dtype=float)
    z = np.array(zs)
    w = np.array(ws)
    xtwx = np.array([[np.sum(w), np.sum(w * x)],
                     [np.sum(w * x), np.sum(w * x * x)]])
    xtwz = np.array([np.sum(w * z), np.sum(w * x * z)])
    try:
        coef = np.linalg.solve(xtwx, xtwz)
        cov = np.linalg.inv(xtwx)
    except np.linalg.LinAlgError:
        raise SearchFailureError("probit line fit is singular",
                                 {"grid": grid, "powers": [p["power"] for p in points]})
    a_hat, b_hat = float(coef[0]), float(coef[1])
    fitted = a_hat + b_hat * x
    deviance = float(np.sum(w * (z - fitted) ** 2))
    if b_hat <= 0.0:
        raise SearchFailureError(
            f"probit slope is not positive (b = {b_hat:.4g}); power does not increase over the grid",
            {"grid": grid, "powers": [p["power"] for p in points],
             "intercept": a_hat, "slope": b_hat})
    z_target = float(ndtri(target))
    n_raw = (z_target - a_hat) / b_hat
    n_hat = max(2, math.ceil(n_raw))
    var_n = (cov[0, 0] + n_raw ** 2 * cov[1, 1] + 2.0 * n_raw * cov[0, 1]) / b_hat ** 2
    se_n = math.sqrt(max(var_n, 0.0))
    return SampleSizeSearch(
        n_hat=n_hat,
        n_hat_raw=n_raw,
        se_n=se_n,
        intercept=a_hat,
        slope=b_hat,
        residual_deviance=deviance,
        target=target,
        points=tuple(points),
        base_seed=seed_path,
        gen_id=gen_id,
        model_id=model_id,
    )


def _phi(z: float) -> float:
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# table runners
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TableDocument:
    """A reproduction run: flat display rows plus full per-cell metadata."""

    name: str
    config: dict
    columns: tuple
    rows: tuple
    notes: tuple = ()

    def to_dict(self) -> dict:
        return {
            "table": self.name,
            "config": self.config,
            "columns": list(self.columns),
            "rows": [dict(r) for r in self.rows],
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(_csv_cell(row.get(c)) for c in self.columns))
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        widths = [max(len(c), *(len(_text_cell(r.get(c))) for r in self.rows)) if self.rows else len(c)
                  for c in self.columns]
        header = "  ".join(c.ljust(w) for c, w in zip(self.columns, widths))
        sep = "-" * len(header)
        lines = [f"{self.name}", sep, header, sep]
        for row in self.rows:
            lines.append("  ".join(_text_cell(row.get(c)).ljust(w)
                                   for c, w in zip(self.columns, widths)))
        lines.append(sep)
        for note in self.notes:
            lines.append(f"note: {note}")
        if self.config:
            lines.append("config: " + ", ".join(f"{k}={v}" for k, v in sorted(self.config.items())))
        return "\n".join(lines) + "\n"


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (dict, list)):
        return ""
    return str(value)


def _text_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.3f}"
    if isinstance(value, (dict, list)):
        return ""
    return str(value)


def _select_rows(rows):
    if rows is None:
        return list(GRID_ROW_ORDER)
    keys = []
    for key in rows:
        key = (float(key[0]), float(key[1]))
        if key not in GENERATIVE_GRID:
            raise ValueError(f"unknown generative row {key}; available: {GRID_ROW_ORDER}")
        keys.append(key)
    return keys


def run_table3(reps: int = 2000, seed: int = DEFAULT_SEED, workers: Optional[int] = None,
               paper_scale: bool = False, ns: Sequence[int] = (300, 500),
               rows=None, pilot_reps: int = 200, pilot_n: int = 1000,
               contrast: ContrastSpec = DEFAULT_CONTRAST,
               progress: Optional[Callable] = None) -> TableDocument:
    """Predicted and simulated power over the bundled generative grid.

    Predicted columns come from the four planning formulas with inputs
    derived from the generative model's exact moments, except the marginal
    correlation, which is estimated from a pilot batch of simulated trials.
    Simulated columns fit the saturated single-wave model and the
    pretest-covariate model on shared replicates.
    """
    if paper_scale:
        reps = max(reps, 10000)
        pilot_reps = max(pilot_reps, 1000)
    selected = _select_rows(rows)
    sim_models = (("one_wave", ModelSpec.one_wave()),
                  ("covariate_adjusted", ModelSpec.covariate_adjusted()))
    out_rows = []
    total_cells = sum(1 for key in GRID_ROW_ORDER if key in selected) * len(ns)
    done_cells = 0
    for row_idx, key in enumerate(GRID_ROW_ORDER):
        if key not in selected:
            continue
        params = GENERATIVE_GRID[key]
        moments = population_moments(params)
        rho_hat = pilot_marginal_correlation(params, reps=pilot_reps, n=pilot_n,
                                             seed=(seed, 7000 + row_idx), workers=workers)
        cond = moments.conditional_scenario(rho_marginal=rho_hat)
        marg = moments.marginal_scenario(rho_marginal=rho_hat)
        for n_idx, n in enumerate(ns):
            pred = {
                "pred_mpb_1w": predicted_power(marg, n, contrast, "mpb", 1).power,
                "pred_cpb_1w": predicted_power(cond, n, contrast, "cpb", 1).power,
                "pred_mpb_2w": predicted_power(marg, n, contrast, "mpb", 2).power,
                "pred_cpb_2w": predicted_power(cond, n, contrast, "cpb", 2,
                                               conditional_moments="cell").power,
            }
            sims = estimate_power_multi(params, sim_models, contrast, n=n, reps=reps,
                                        seed=(seed, row_idx, n_idx), workers=workers)
            done_cells += 1
            if progress is not None:
                progress(done_cells / total_cells)
            ref = REFERENCE_POWER.get((key[0], key[1], n))
            row = {
                "pretest_corr": key[0],
                "odds_ratio": key[1],
                "n": n,
                "pred_mpb_1w": pred["pred_mpb_1w"],
                "pred_cpb_1w": pred["pred_cpb_1w"],
                "sim_1w": sims["one_wave"].power,
                "pred_mpb_2w": pred["pred_mpb_2w"],
                "pred_cpb_2w": pred["pred_cpb_2w"],
                "sim_2w": sims["covariate_adjusted"].power,
                "pilot_rho": rho_hat,
                "detail": {
                    "one_wave": sims["one_wave"].to_dict(),
                    "covariate_adjusted": sims["covariate_adjusted"].to_dict(),
                    "reference": list(ref) if ref else None,
                },
            }
            out_rows.append(row)
    return TableDocument(
        name="power-grid",
        config={"reps": reps, "seed": seed, "ns": list(ns), "pilot_reps": pilot_reps,
                "pilot_n": pilot_n, "paper_scale": paper_scale,
                "contrast": {"target": contrast.target, "reference": contrast.reference}},
        columns=("pretest_corr", "odds_ratio", "n", "pred_mpb_1w", "pred_cpb_1w", "sim_1w",
                 "pred_mpb_2w", "pred_cpb_2w", "sim_2w"),
        rows=tuple(out_rows),
        notes=("simulated one-wave column fits the saturated single-wave model",
               "simulated two-wave column fits the pretest-covariate model",
               "predicted columns use pilot-estimated marginal correlation"),
    )


def run_table4(reps_per_point: int = 500, seed: int = DEFAULT_SEED,
               workers: Optional[int] = None, paper_scale: bool = False,
               rows=None, grid_points: int = 10, target: float = 0.80,
               pilot_reps: int = 200, pilot_n: int = 1000,
               contrast: ContrastSpec = DEFAULT_CONTRAST,
               progress: Optional[Callable] = None) -> TableDocument:
    """Predicted and probit-interpolated required sample sizes per grid row."""
    if paper_scale:
        reps_per_point = max(reps_per_point, 2000)
        pilot_reps = max(pilot_reps, 1000)
    selected = _select_rows(rows)
    out_rows = []
    n_selected = sum(1 for key in GRID_ROW_ORDER if key in selected)
    done = 0
    for row_idx, key in enumerate(GRID_ROW_ORDER):
        if key not in selected:
            continue
        params = GENERATIVE_GRID[key]
        moments = population_moments(params)
        rho_hat = pilot_marginal_correlation(params, reps=pilot_reps, n=pilot_n,
                                             seed=(seed, 8000 + row_idx), workers=workers)
        cond = moments.conditional_scenario(rho_marginal=rho_hat)
        marg = moments.marginal_scenario(rho_marginal=rho_hat)
        pred = {
            "pred_mpb_1w": plan_n(marg, contrast, "mpb", 1).n,
            "pred_cpb_1w": plan_n(cond, contrast, "cpb", 1).n,
            "pred_mpb_2w": plan_n(marg, contrast, "mpb", 2).n,
            "pred_cpb_2w": plan_n(cond, contrast, "cpb", 2, conditional_moments="cell").n,
        }
        search_1w = find_sample_size(params, ModelSpec.one_wave(), contrast, target=target,
                                     reps_per_point=reps_per_point, seed=(seed, row_idx, 1),
                                     workers=workers, grid_points=grid_points)
        search_2w = find_sample_size(params, ModelSpec.covariate_adjusted(), contrast, target=target,
                                     reps_per_point=reps_per_point, seed=(seed, row_idx, 2),
                                     workers=workers, grid_points=grid_points)
        done += 1
        if progress is not None:
            progress(done / n_selected)
        ref = REFERENCE_N.get(key)
        out_rows.append({
            "pretest_corr": key[0],
            "odds_ratio": key[1],
            "pred_mpb_1w": pred["pred_mpb_1w"],
            "pred_cpb_1w": pred["pred_cpb_1w"],
            "sim_n_1w": search_1w.n_hat,
            "pred_mpb_2w": pred["pred_mpb_2w"],
            "pred_cpb_2w": pred["pred_cpb_2w"],
            "sim_n_2w": search_2w.n_hat,
            "pilot_rho": rho_hat,
            "detail": {
                "search_1w": search_1w.to_dict(),
                "search_2w": search_2w.to_dict(),
                "reference": list(ref) if ref else None,
            },
        })
    return TableDocument(
        name="samplesize-grid",
        config={"reps_per_point": reps_per_point, "seed": seed, "grid_points": grid_points,
                "target": target, "pilot_reps": pilot_reps, "pilot_n": pilot_n,
                "paper_scale": paper_scale,
                "contrast": {"target": contrast.target, "reference": contrast.reference}},
        columns=("pretest_corr", "odds_ratio", "pred_mpb_1w", "pred_cpb_1w", "sim_n_1w",
                 "pred_mpb_2w", "pred_cpb_2w", "sim_n_2w"),
        rows=tuple(out_rows),
        notes=("simulated columns solve the probit-interpolated search at the target power",),
    )


def run_table5(reps: int = 2000, seed: int = DEFAULT_SEED, workers: Optional[int] = None,
               paper_scale: bool = False, ns: Sequence[int] = (300, 500),
               delayed: Sequence[bool] = (False, True),
               contrast: ContrastSpec = DEFAULT_CONTRAST,
               progress: Optional[Callable] = None) -> TableDocument:
    """Three-wave simulated power for seven analysis models on shared data."""
    if paper_scale:
        reps = max(reps, 10000)
    out_rows = []
    cells = [(d, n) for d in delayed for n in ns]
    for cell_idx, (is_delayed, n) in enumerate(cells):
        gen = GenParamsThreeWave(delayed=is_delayed)
        sims = estimate_power_multi(gen, TABLE5_MODELS, contrast, n=n, reps=reps,
                                    seed=(seed, int(is_delayed), n), workers=workers)
        if progress is not None:
            progress((cell_idx + 1) / len(cells))
        ref = REFERENCE_THREE_WAVE.get((is_delayed, n))
        row = {"delayed": is_delayed, "n": n}
        for name, _ in TABLE5_MODELS:
            row[name] = sims[name].power
        row["detail"] = {name: sims[name].to_dict() for name, _ in TABLE5_MODELS}
        if ref:
            row["detail"]["reference"] = list(ref)
        out_rows.append(row)
    return TableDocument(
        name="threewave-grid",
        config={"reps": reps, "seed": seed, "ns": list(ns),
                "delayed": [bool(d) for d in delayed], "paper_scale": paper_scale,
                "contrast": {"target": contrast.target, "reference": contrast.reference}},
        columns=("delayed", "n") + tuple(name for name, _ in TABLE5_MODELS),
        rows=tuple(out_rows),
        notes=("all seven models are fitted to the same simulated datasets per cell",),
    )
