"""Weighted-and-replicated estimating equations for binary repeated measures.

Fits logistic marginal models to AnalysisRows, where responders already
appear once per consistent AI with halved weight. Scores are weighted per
row but aggregated per participant for the sandwich, which is what makes the
replication trick deliver valid standard errors.

Model variants (ModelSpec.variant):

  one_wave_saturated    one log-odds per AI for a single outcome wave
  two_wave_saturated    a shared pretest log-odds plus one per-AI log-odds
  covariate_adjusted    per-AI log-odds with a shared linear pretest term
  three_wave_piecewise  a shared baseline plus per-AI increments for each
                        of two post-baseline waves (piecewise trajectories)

Working correlation is independence, exchangeable, or ar1; with two waves the
latter two coincide. The canonical logit link makes D^T V^{-1} equal to
X^T G^{1/2} R^{-1} G^{-1/2}, which is used throughout.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import expit, ndtr, ndtri

from .design import AI_ORDER, ContrastSpec, DEFAULT_CONTRAST
from .simulate import AnalysisRows

__all__ = [
    "ModelSpec",
    "GeeFit",
    "WaldResult",
    "GeeError",
    "NonConvergenceError",
    "SeparationError",
    "IterationCapError",
    "DegenerateContrastError",
    "UnsupportedModelError",
    "fit",
    "wald_test",
    "contrast_vector",
    "estimate_marginal_correlation",
]

VARIANTS = ("one_wave_saturated", "two_wave_saturated", "covariate_adjusted", "three_wave_piecewise")
WORKING = ("independence", "exchangeable", "ar1")

SCORE_TOL = 1e-8
STEP_TOL = 1e-10
MAX_ITER = 50


class GeeError(RuntimeError):
    pass


class NonConvergenceError(GeeError):
    pass


class SeparationError(NonConvergenceError):
    """A fitted cell has all-identical outcomes (or no rows at all)."""


class IterationCapError(NonConvergenceError):
    pass


class DegenerateContrastError(GeeError):
    pass


class UnsupportedModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    """What to fit: variant, working correlation, and which outcome columns.

    waves selects columns of AnalysisRows.outcomes in time order; None picks
    the variant's default (final wave for one_wave_saturated, first and final
    for the two-wave variants, the first three for three_wave_piecewise).
    """

    variant: str
    working: str = "independence"
    waves: Optional[tuple] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise UnsupportedModelError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.working not in WORKING:
            raise UnsupportedModelError(f"unknown working correlation {self.working!r}; expected one of {WORKING}")
        if self.waves is not None:
            object.__setattr__(self, "waves", tuple(int(w) for w in self.waves))

    @staticmethod
    def one_wave(working: str = "independence", waves=None) -> "ModelSpec":
        return ModelSpec("one_wave_saturated", working, waves)

    @staticmethod
    def two_wave(working: str = "independence", waves=None) -> "ModelSpec":
        return ModelSpec("two_wave_saturated", working, waves)

    @staticmethod
    def covariate_adjusted(working: str = "independence", waves=None) -> "ModelSpec":
        return ModelSpec("covariate_adjusted", working, waves)

    @staticmethod
    def piecewise(working: str = "independence", waves=None) -> "ModelSpec":
        return ModelSpec("three_wave_piecewise", working, waves)


def _resolve_waves(model: ModelSpec, available: int) -> tuple:
    if model.waves is not None:
        waves = model.waves
    elif model.variant == "one_wave_saturated":
        waves = (available - 1,)
    elif model.variant in ("two_wave_saturated", "covariate_adjusted"):
        waves = (0, available - 1)
    else:
        waves = (0, 1, 2)
    expected = {"one_wave_saturated": 1, "two_wave_saturated": 2,
                "covariate_adjusted": 2, "three_wave_piecewise": 3}[model.variant]
    if len(waves) != expected:
        raise UnsupportedModelError(
            f"{model.variant} needs {expected} wave(s), got {waves}")
    if any(not 0 <= w < available for w in waves) or len(set(waves)) != len(waves):
        raise UnsupportedModelError(
            f"waves {waves} invalid for a dataset with {available} measurement occasions")
    if list(waves) != sorted(waves):
        raise UnsupportedModelError(f"waves must be in time order, got {waves}")
    return waves


@dataclass(frozen=True, eq=False)
class GeeFit:
    model: ModelSpec
    waves: tuple
    theta: np.ndarray
    param_names: tuple
    cov_sandwich: np.ndarray
    cov_model: np.ndarray
    alpha: Optional[float]
    n_iter: int
    n_participants: int
    total_weight: float
    # row-level design pieces kept for residual diagnostics
    _mu: np.ndarray = field(repr=False, default=None)
    _rows_weight: np.ndarray = field(repr=False, default=None)
    _rows_y: np.ndarray = field(repr=False, default=None)


@dataclass(frozen=True)
class WaldResult:
    estimate: float
    se: float
    z: float
    p_value: float
    reject: bool
    alpha: float


def _param_names(variant: str) -> tuple:
    ai_labels = [str(ai) for ai in AI_ORDER]
    if variant == "one_wave_saturated":
        return tuple(f"eta{lab}" for lab in ai_labels)
    if variant == "two_wave_saturated":
        return ("eta_pre",) + tuple(f"eta{lab}" for lab in ai_labels)
    if variant == "covariate_adjusted":
        return tuple(f"eta{lab}" for lab in ai_labels) + ("slope_pre",)
    return (("phi0",) + tuple(f"gain1{lab}" for lab in ai_labels)
            + tuple(f"gain2{lab}" for lab in ai_labels))


def _n_params(variant: str) -> int:
    return {"one_wave_saturated": 4, "two_wave_saturated": 5,
            "covariate_adjusted": 5, "three_wave_piecewise": 9}[variant]


def _build_design(variant: str, ai_index: np.ndarray, pre: Optional[np.ndarray]) -> np.ndarray:
    """Per-row design tensor of shape (rows, modeled waves, params)."""
    n = ai_index.shape[0]
    d = ai_index - 1
    if variant == "one_wave_saturated":
        x = np.zeros((n, 1, 4))
        x[np.arange(n), 0, d] = 1.0
        return x
    if variant == "two_wave_saturated":
        x = np.zeros((n, 2, 5))
        x[:, 0, 0] = 1.0
        x[np.arange(n), 1, 1 + d] = 1.0
        return x
    if variant == "covariate_adjusted":
        x = np.zeros((n, 1, 5))
        x[np.arange(n), 0, d] = 1.0
        x[:, 0, 4] = pre
        return x
    x = np.zeros((n, 3, 9))
    x[:, :, 0] = 1.0
    x[np.arange(n), 1, 1 + d] = 1.0
    x[np.arange(n), 2, 1 + d] = 1.0
    x[np.arange(n), 2, 5 + d] = 1.0
    return x


def _weighted_logit(y: np.ndarray, w: np.ndarray, label: str) -> float:
    if y.size == 0:
        raise SeparationError(f"no analysis rows for {label}")
    m = float(np.average(y, weights=w))
    if not 0.0 < m < 1.0:
        raise SeparationError(f"all outcomes identical in {label} (weighted mean {m:.0f})")
    return math.log(m / (1.0 - m))


def _initial_theta(variant: str, ai_index: np.ndarray, w: np.ndarray, y: np.ndarray,
                   time_labels: tuple) -> np.ndarray:
    """Start at weighted cell-mean logits so saturated fits under working
    independence converge at the first score evaluation."""
    by_ai = {ai: ai_index == ai.index for ai in AI_ORDER}
    if variant == "one_wave_saturated":
        return np.array([
            _weighted_logit(y[by_ai[ai], 0], w[by_ai[ai]], f"AI {ai}, wave {time_labels[0]}")
            for ai in AI_ORDER])
    if variant == "two_wave_saturated":
        pre = _weighted_logit(y[:, 0], w, f"pooled wave {time_labels[0]}")
        post = [
            _weighted_logit(y[by_ai[ai], 1], w[by_ai[ai]], f"AI {ai}, wave {time_labels[1]}")
            for ai in AI_ORDER]
        return np.array([pre] + post)
    if variant == "covariate_adjusted":
        post = [
            _weighted_logit(y[by_ai[ai], 0], w[by_ai[ai]], f"AI {ai}, wave {time_labels[-1]}")
            for ai in AI_ORDER]
        return np.array(post + [0.0])
    phi0 = _weighted_logit(y[:, 0], w, f"pooled wave {time_labels[0]}")
    gain1 = []
    gain2 = []
    for ai in AI_ORDER:
        m1 = _weighted_logit(y[by_ai[ai], 1], w[by_ai[ai]], f"AI {ai}, wave {time_labels[1]}")
        m2 = _weighted_logit(y[by_ai[ai], 2], w[by_ai[ai]], f"AI {ai}, wave {time_labels[2]}")
        gain1.append(m1 - phi0)
        gain2.append(m2 - m1)
    return np.array([phi0] + gain1 + gain2)


def _alpha_pairs(working: str, n_waves: int) -> list:
    if working == "ar1":
        return [(s, s + 1) for s in range(n_waves - 1)]
    return [(s, t) for s in range(n_waves) for t in range(s + 1, n_waves)]


def _moment_alpha(e: np.ndarray, w: np.ndarray, pairs: list, n_params: int) -> float:
    num = 0.0
    wpairs = 0.0
    for s, t in pairs:
        num += float(np.sum(w * e[:, s] * e[:, t]))
        wpairs += float(np.sum(w))
    den = wpairs - n_params
    if den <= 0.0:
        raise NonConvergenceError("too few weighted pairs to estimate the working correlation")
    alpha = num / den
    n_waves = e.shape[1]
    lo = -1.0 / (n_waves - 1) + 1e-6
    return float(min(max(alpha, lo), 1.0 - 1e-6))


def _working_matrix(working: str, alpha: float, n_waves: int) -> np.ndarray:
    if n_waves == 1 or working == "independence":
        return np.eye(n_waves)
    if working == "exchangeable":
        return (1.0 - alpha) * np.eye(n_waves) + alpha * np.ones((n_waves, n_waves))
    idx = np.arange(n_waves)
    return alpha ** np.abs(idx[:, None] - idx[None, :])


def _augment_for_continuity(rows: AnalysisRows) -> AnalysisRows:
    """Append one all-0.5 pseudo row per AI with weight 1: a half success and
    half failure in every fitted cell, keeping weighted means interior."""
    n_extra = len(AI_ORDER)
    participant = np.concatenate([rows.participant,
                                  rows.n_participants + np.arange(n_extra, dtype=np.int64)])
    ai_index = np.concatenate([rows.ai_index,
                               np.array([ai.index for ai in AI_ORDER], dtype=np.int8)])
    weight = np.concatenate([rows.weight, np.ones(n_extra)])
    outcomes = np.vstack([rows.outcomes, np.full((n_extra, rows.waves), 0.5)])
    return AnalysisRows(participant=participant, ai_index=ai_index, weight=weight,
                        outcomes=outcomes, n_participants=rows.n_participants + n_extra)


def fit(rows: AnalysisRows, model: ModelSpec, continuity_correction: bool = False,
        max_iter: int = MAX_ITER, score_tol: float = SCORE_TOL, step_tol: float = STEP_TOL) -> GeeFit:
    """Solve the weighted estimating equations by Fisher scoring, alternating
    with moment updates of the working correlation. Raises SeparationError if
    a fitted cell is degenerate and IterationCapError past max_iter sweeps."""
    if continuity_correction:
        rows = _augment_for_continuity(rows)
    waves = _resolve_waves(model, rows.waves)
    y = rows.outcomes[:, list(waves)]
    w = rows.weight
    ai_index = rows.ai_index
    n_waves = {"one_wave_saturated": 1, "two_wave_saturated": 2,
               "covariate_adjusted": 1, "three_wave_piecewise": 3}[model.variant]

    if model.variant == "covariate_adjusted":
        pre = y[:, 0]
        y_model = y[:, 1:]
        init_labels = (waves[-1],)
    else:
        pre = None
        y_model = y
        init_labels = waves

    x = _build_design(model.variant, ai_index, pre)
    p = _n_params(model.variant)
    theta = _initial_theta(model.variant, ai_index, w, y_model, init_labels)

    use_alpha = model.working != "independence" and n_waves > 1
    pairs = _alpha_pairs(model.working, n_waves) if use_alpha else []
    alpha = 0.0

    def assemble(th, al):
        eta = np.einsum("nwp,p->nw", x, th)
        mu = expit(eta)
        mu = np.clip(mu, 1e-12, 1.0 - 1e-12)
        gvar = mu * (1.0 - mu)
        sg = np.sqrt(gvar)
        e = (y_model - mu) / sg
        r_inv = np.linalg.inv(_working_matrix(model.working, al, n_waves))
        h = x * sg[:, :, None]
        s_row = w[:, None] * np.einsum("nsp,st,nt->np", h, r_inv, e)
        u = s_row.sum(axis=0)
        j = np.einsum("n,nsp,st,ntq->pq", w, h, r_inv, h)
        return u, j, s_row, e

    def update_alpha(th):
        eta = np.einsum("nwp,p->nw", x, th)
        mu = np.clip(expit(eta), 1e-12, 1.0 - 1e-12)
        e = (y_model - mu) / np.sqrt(mu * (1.0 - mu))
        return _moment_alpha(e, w, pairs, p)

    converged = False
    n_iter = 0
    u = j = s_row = None
    for it in range(1, max_iter + 1):
        n_iter = it
        if use_alpha:
            alpha = update_alpha(theta)
        u, j, s_row, _ = assemble(theta, alpha)
        if np.max(np.abs(u)) <= score_tol:
            converged = True
            break
        try:
            step = np.linalg.solve(j, u)
        except np.linalg.LinAlgError:
            raise NonConvergenceError("singular derivative matrix; a fitted cell may be empty")
        theta = theta + step
        if np.max(np.abs(step)) <= step_tol:
            if use_alpha:
                alpha = update_alpha(theta)
            u, j, s_row, _ = assemble(theta, alpha)
            converged = True
            break
    if not converged:
        raise IterationCapError(
            f"estimating equations did not settle within {max_iter} sweeps "
            f"(max score {np.max(np.abs(u)):.3e})")

    s_part = np.zeros((rows.n_participants, p))
    np.add.at(s_part, rows.participant, s_row)
    meat = s_part.T @ s_part
    try:
        bread_inv = np.linalg.inv(j)
    except np.linalg.LinAlgError:
        raise NonConvergenceError("singular derivative matrix at the solution")
    cov_sandwich = bread_inv @ meat @ bread_inv
    eta = np.einsum("nwp,p->nw", x, theta)
    mu = np.clip(expit(eta), 1e-12, 1.0 - 1e-12)
    return GeeFit(
        model=model,
        waves=waves,
        theta=theta,
        param_names=_param_names(model.variant),
        cov_sandwich=cov_sandwich,
        cov_model=bread_inv,
        alpha=alpha if use_alpha else None,
        n_iter=n_iter,
        n_participants=rows.n_participants,
        total_weight=float(w.sum()),
        _mu=mu,
        _rows_weight=w,
        _rows_y=y_model,
    )


def contrast_vector(model: ModelSpec, contrast: ContrastSpec) -> np.ndarray:
    """Coefficient vector testing the final-wave log-odds difference of two AIs."""
    t, r = contrast.target, contrast.reference
    variant = model.variant
    if variant == "one_wave_saturated":
        c = np.zeros(4)
        c[t - 1] = 1.0
        c[r - 1] = -1.0
    elif variant == "two_wave_saturated":
        c = np.zeros(5)
        c[t] = 1.0
        c[r] = -1.0
    elif variant == "covariate_adjusted":
        c = np.zeros(5)
        c[t - 1] = 1.0
        c[r - 1] = -1.0
    else:
        # final-wave log odds is phi0 + gain1 + gain2; phi0 cancels in the difference
        c = np.zeros(9)
        c[1 + t - 1] = 1.0
        c[5 + t - 1] = 1.0
        c[1 + r - 1] = -1.0
        c[5 + r - 1] = -1.0
    return c


def wald_test(fit_result: GeeFit, contrast: Union[ContrastSpec, Sequence[float]] = DEFAULT_CONTRAST,
              alpha: float = 0.05, covariance: str = "sandwich") -> WaldResult:
    """Two-sided Wald test of c^T theta = 0 with the requested covariance."""
    if isinstance(contrast, ContrastSpec):
        c = contrast_vector(fit_result.model, contrast)
    else:
        c = np.asarray(contrast, dtype=float)
        if c.shape != fit_result.theta.shape:
            raise DegenerateContrastError(
                f"contrast length {c.shape} does not match {fit_result.theta.shape[0]} parameters")
    if covariance not in ("sandwich", "model"):
        raise ValueError(f'covariance must be "sandwich" or "model", got {covariance!r}')
    cov = fit_result.cov_sandwich if covariance == "sandwich" else fit_result.cov_model
    est = float(c @ fit_result.theta)
    var = float(c @ cov @ c)
    if not math.isfinite(var) or var <= 0.0:
        raise DegenerateContrastError(f"contrast variance is not positive (got {var})")
    se = math.sqrt(var)
    z = est / se
    p = 2.0 * (1.0 - float(ndtr(abs(z))))
    crit = float(ndtri(1.0 - alpha / 2.0))
    return WaldResult(estimate=est, se=se, z=z, p_value=p, reject=abs(z) > crit, alpha=alpha)


def estimate_marginal_correlation(rows: AnalysisRows, fit_result: GeeFit) -> float:
    """Weighted moment estimate of the between-wave outcome correlation.

    Computed from Pearson residuals at the fitted means over all wave pairs,
    with the same weighted divisor the working-correlation update uses. The
    estimate is clamped into (-1, 1) with a warning if it falls outside.
    """
    if fit_result._mu is None or fit_result._mu.shape[1] < 2:
        raise ValueError("marginal correlation needs a fit spanning at least two waves")
    mu = fit_result._mu
    y = fit_result._rows_y
    w = fit_result._rows_weight
    e = (y - mu) / np.sqrt(mu * (1.0 - mu))
    n_waves = mu.shape[1]
    pairs = [(s, t) for s in range(n_waves) for t in range(s + 1, n_waves)]
    num = sum(float(np.sum(w * e[:, s] * e[:, t])) for s, t in pairs)
    den = len(pairs) * float(np.sum(w)) - fit_result.theta.shape[0]
    if den <= 0.0:
        raise ValueError("too few weighted pairs to estimate a correlation")
    rho = num / den
    limit = 1.0 - 1e-9
    if abs(rho) > limit:
        warnings.warn(f"correlation estimate {rho:.6f} clamped into (-1, 1)", UserWarning)
        rho = math.copysign(limit, rho)
    return float(rho)
