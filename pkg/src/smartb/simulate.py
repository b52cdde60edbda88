"""Trial generation for the two-stage design, plus the exact moments it implies.

Two generative families are provided. The model-based family draws every
variable from logistic conditionals (pretest prevalence, response model,
outcome model), which is what the reproduction grids use; its exact implied
planning quantities are available through population_moments so formulas can
be checked against simulation without Monte Carlo error in the inputs. The
scenario-based family draws directly from elicited conditional cells, so a
planner can stress-test a scenario document it just wrote without inventing
regression coefficients.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.special import expit

from .design import (
    AI_ORDER,
    AdaptiveIntervention,
    ConditionalScenario,
    MarginalScenario,
    ScenarioValidationError,
    Violation,
    validate_scenario,
)

__all__ = [
    "GenParamsTwoWave",
    "GenParamsThreeWave",
    "TrialDataset",
    "AnalysisRows",
    "EmpiricalMarginals",
    "PopulationMoments",
    "simulate_two_wave",
    "simulate_three_wave",
    "simulate_from_scenario",
    "weight_and_replicate",
    "empirical_marginals",
    "population_moments",
    "write_trial_csv",
]

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator]


def _rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class GenParamsTwoWave:
    """Logistic data-generating model for (Y0, A1, R, A2, Y1).

    Y0 ~ Bernoulli(p_pretest); A1 is +1/-1 with equal probability;
    logit P(R = 1) = resp_intercept + resp_y0 Y0 + resp_a1 A1; non-responders
    get A2 +1/-1 with equal probability (responders carry A2 = 0, meaning no
    second randomization); and

        logit E(Y1 | .) = beta0 + beta_y0 Y0 + beta_a1 A1 + beta_r R
                          + (beta_a2 A2 + beta_a1a2 A1 A2) (1 - R).

    Defaults are the high pretest correlation, large effect configuration
    used throughout the reproduction grids.
    """

    p_pretest: float = 0.40
    resp_intercept: float = -0.62
    resp_y0: float = 1.0
    resp_a1: float = 0.5
    beta0: float = -1.55
    beta_y0: float = 3.00
    beta_a1: float = 0.78
    beta_r: float = 1.0
    beta_a2: float = 0.0
    beta_a1a2: float = 0.0

    def __post_init__(self):
        # degenerate pretests are legal for generation; enumeration rejects them
        if not 0.0 <= self.p_pretest <= 1.0:
            raise ValueError(f"p_pretest must lie in [0, 1], got {self.p_pretest}")


@dataclass(frozen=True)
class GenParamsThreeWave:
    """Three-wave extension: a second follow-up Y2 drawn after the two-wave block.

        logit E(Y2 | .) = y2_intercept + y2_y1 Y1 + y2_a1 A1

    When delayed is False the stage-1 effect on Y2 flows entirely through Y1
    (y2_y1 = 3.0, y2_a1 = 0); when True part of it is direct (y2_y1 = 0.5,
    y2_a1 = 0.275). Explicit y2_* values override the flag-derived defaults.
    """

    two_wave: GenParamsTwoWave = GenParamsTwoWave()
    delayed: bool = False
    y2_intercept: float = -1.4
    y2_y1: Optional[float] = None
    y2_a1: Optional[float] = None

    @property
    def resolved_y2_y1(self) -> float:
        if self.y2_y1 is not None:
            return self.y2_y1
        return 0.5 if self.delayed else 3.0

    @property
    def resolved_y2_a1(self) -> float:
        if self.y2_a1 is not None:
            return self.y2_a1
        return 0.275 if self.delayed else 0.0


@dataclass(frozen=True, eq=False)
class TrialDataset:
    """One simulated trial, one row per participant.

    a2 is 0 for responders: they are never re-randomized, and exports leave
    the field blank for them. y2 is None for two-wave trials.
    """

    y0: np.ndarray
    a1: np.ndarray
    r: np.ndarray
    a2: np.ndarray
    y1: np.ndarray
    y2: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.y0.shape[0]
        arrays = {"y0": self.y0, "a1": self.a1, "r": self.r, "a2": self.a2, "y1": self.y1}
        if self.y2 is not None:
            arrays["y2"] = self.y2
        for name, arr in arrays.items():
            if arr.shape != (n,):
                raise ValueError(f"{name} must be a 1-d array of length {n}, got shape {arr.shape}")
        for name in ("y0", "y1") + (("y2",) if self.y2 is not None else ()):
            if not np.isin(arrays[name], (0, 1)).all():
                raise ValueError(f"{name} must be binary")
        if not np.isin(self.r, (0, 1)).all():
            raise ValueError("r must be binary")
        if not np.isin(self.a1, (-1, 1)).all():
            raise ValueError("a1 must be coded +1/-1")
        if not (np.isin(self.a2[self.r == 0], (-1, 1)).all() and (self.a2[self.r == 1] == 0).all()):
            raise ValueError("a2 must be +1/-1 exactly for non-responders and absent (0) for responders")

    @property
    def n(self) -> int:
        return int(self.y0.shape[0])

    @property
    def waves(self) -> int:
        return 3 if self.y2 is not None else 2

    def outcome_matrix(self) -> np.ndarray:
        cols = [self.y0, self.y1] if self.y2 is None else [self.y0, self.y1, self.y2]
        return np.column_stack(cols).astype(float)


def simulate_two_wave(params: GenParamsTwoWave, n: int, seed: SeedLike) -> TrialDataset:
    """Draw one trial. Variables are generated in observation order (y0, a1,
    r, a2, y1), one vectorized uniform draw per variable, so a fixed seed
    yields a reproducible dataset for any Generator-compatible seed."""
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    rng = _rng(seed)
    y0 = (rng.random(n) < params.p_pretest).astype(np.int8)
    a1 = np.where(rng.random(n) < 0.5, 1, -1).astype(np.int8)
    p_resp = expit(params.resp_intercept + params.resp_y0 * y0 + params.resp_a1 * a1)
    r = (rng.random(n) < p_resp).astype(np.int8)
    a2 = np.where(rng.random(n) < 0.5, 1, -1).astype(np.int8)
    a2 = np.where(r == 1, 0, a2).astype(np.int8)
    eta1 = (params.beta0 + params.beta_y0 * y0 + params.beta_a1 * a1 + params.beta_r * r
            + (params.beta_a2 * a2 + params.beta_a1a2 * a1 * a2))
    y1 = (rng.random(n) < expit(eta1)).astype(np.int8)
    return TrialDataset(y0=y0, a1=a1, r=r, a2=a2, y1=y1)


def simulate_three_wave(params: GenParamsThreeWave, n: int, seed: SeedLike) -> TrialDataset:
    """Two-wave draw continued by one more uniform sweep for y2."""
    rng = _rng(seed)
    base = simulate_two_wave(params.two_wave, n, rng)
    eta2 = params.y2_intercept + params.resolved_y2_y1 * base.y1 + params.resolved_y2_a1 * base.a1
    y2 = (rng.random(n) < expit(eta2)).astype(np.int8)
    return TrialDataset(y0=base.y0, a1=base.a1, r=base.r, a2=base.a2, y1=base.y1, y2=y2)


def _joint_bernoulli_split(p_pre: float, p_post: float, rho: float, field_name: str):
    """P(post=1 | pre) pair for a bivariate Bernoulli with given margins and correlation."""
    cov = rho * math.sqrt(p_pre * (1.0 - p_pre) * p_post * (1.0 - p_post))
    p11 = p_pre * p_post + cov
    lo = max(0.0, p_pre + p_post - 1.0)
    hi = min(p_pre, p_post)
    if not lo - 1e-12 <= p11 <= hi + 1e-12:
        raise ScenarioValidationError([Violation(
            field_name,
            f"correlation {rho} infeasible for margins ({p_pre:.6f}, {p_post:.6f})")])
    p11 = min(max(p11, lo), hi)
    given1 = p11 / p_pre if p_pre > 0.0 else 0.0
    given0 = (p_post - p11) / (1.0 - p_pre) if p_pre < 1.0 else 0.0
    return given0, given1


def _joint_from_odds_ratio(p_row: float, p_col: float, odds_ratio: float) -> float:
    """P(row=1, col=1) of the 2x2 table with the given margins and odds ratio."""
    lo = max(0.0, p_row + p_col - 1.0)
    hi = min(p_row, p_col)
    if abs(odds_ratio - 1.0) < 1e-12:
        return p_row * p_col
    a = odds_ratio - 1.0
    s = 1.0 + a * (p_row + p_col)
    disc = s * s - 4.0 * a * odds_ratio * p_row * p_col
    p11 = (s - math.sqrt(max(disc, 0.0))) / (2.0 * a)
    return min(max(p11, lo), hi)


def _pretest_by_arm_and_response(scenario: ConditionalScenario, arm: int):
    """P(pretest=1 | response status, arm), holding the pretest margin at the
    scenario mean within each arm.

    The pretest is measured before randomization, so its mean cannot differ
    between arms even though response rates do. The elicited
    pretest-given-response pair fixes the pretest/response odds ratio; that
    odds ratio is imposed on each arm's own response rate.
    """
    mu0 = scenario.pretest_mean
    r_arm = scenario.resp_rate_for_arm(arm)
    given = scenario.pretest_given_r
    if given is None:
        return mu0, mu0
    psi00, psi01 = given
    if min(psi00, psi01) <= 0.0 or max(psi00, psi01) >= 1.0:
        odds_ratio = 1.0
    else:
        odds_ratio = (psi01 / (1.0 - psi01)) / (psi00 / (1.0 - psi00))
    p11 = _joint_from_odds_ratio(mu0, r_arm, odds_ratio)
    pre_given_resp = p11 / r_arm if r_arm > 0.0 else mu0
    pre_given_nonresp = (mu0 - p11) / (1.0 - r_arm) if r_arm < 1.0 else mu0
    return pre_given_nonresp, pre_given_resp


def simulate_from_scenario(scenario: ConditionalScenario, n: int, seed: SeedLike) -> TrialDataset:
    """Draw a trial directly from elicited conditional cells.

    The pretest margin equals the scenario mean in both arms (it predates
    randomization); pretest/response dependence is imposed per arm through
    the odds ratio implied by the elicited pretest-given-response pair.
    Within each (cell, response status) stratum the pretest and posttest are
    a bivariate Bernoulli with margins (arm pretest given R, cell rate) and
    the scenario's conditional correlation. Draw order: a1, r, a2, y0, y1.
    """
    validate_scenario(scenario)
    if scenario.pretest_mean is None:
        raise ScenarioValidationError([Violation(
            "pretest.mean", "required for scenario-driven simulation")])
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")

    pre_by_arm = {arm: _pretest_by_arm_and_response(scenario, arm) for arm in (1, -1)}

    # conditional split per (AI consistent cell, response status)
    splits = {}
    for r_status in (0, 1):
        rho_r = scenario.rho_given(r_status)
        rho_field = (f"rho_conditional[{r_status}]"
                     if scenario.rho_conditional is not None and r_status in scenario.rho_conditional
                     else "rho")
        if r_status == 1:
            for arm in (1, -1):
                splits[("r", arm)] = _joint_bernoulli_split(
                    pre_by_arm[arm][1], scenario.psi_r_for_arm(arm), rho_r, rho_field)
        else:
            for ai in AI_ORDER:
                splits[("nr", ai)] = _joint_bernoulli_split(
                    pre_by_arm[ai.a1][0], scenario.psi_nr_for_ai(ai), rho_r, rho_field)

    rng = _rng(seed)
    a1 = np.where(rng.random(n) < 0.5, 1, -1).astype(np.int8)
    p_resp = np.where(a1 == 1, scenario.resp_rate_for_arm(1), scenario.resp_rate_for_arm(-1))
    r = (rng.random(n) < p_resp).astype(np.int8)
    a2 = np.where(rng.random(n) < 0.5, 1, -1).astype(np.int8)
    a2 = np.where(r == 1, 0, a2).astype(np.int8)

    p_pre_vec = np.empty(n)
    for arm in (1, -1):
        mask = a1 == arm
        nonresp, resp = pre_by_arm[arm]
        p_pre_vec[mask] = np.where(r[mask] == 1, resp, nonresp)
    y0 = (rng.random(n) < p_pre_vec).astype(np.int8)

    p_post = np.empty(n)
    for arm in (1, -1):
        mask = (r == 1) & (a1 == arm)
        given0, given1 = splits[("r", arm)]
        p_post[mask] = np.where(y0[mask] == 1, given1, given0)
    for ai in AI_ORDER:
        mask = (r == 0) & (a1 == ai.a1) & (a2 == ai.a2)
        given0, given1 = splits[("nr", ai)]
        p_post[mask] = np.where(y0[mask] == 1, given1, given0)
    y1 = (rng.random(n) < p_post).astype(np.int8)
    return TrialDataset(y0=y0, a1=a1, r=r, a2=a2, y1=y1)


# ---------------------------------------------------------------------------
# weighting and replication
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AnalysisRows:
    """Analysis-ready rows: responders appear once per consistent AI.

    Responders are consistent with both AIs of their stage-1 arm, so each
    contributes two rows with weight 2; non-responders contribute one row
    with weight 4 (inverse of the 1/2 x 1/2 randomization path). Summed
    weights therefore equal 4n exactly. Rows are ordered by participant,
    a responder's pair ordered by AI index. outcomes has one column per
    measurement wave in time order.
    """

    participant: np.ndarray
    ai_index: np.ndarray
    weight: np.ndarray
    outcomes: np.ndarray
    n_participants: int

    @property
    def n_rows(self) -> int:
        return int(self.participant.shape[0])

    @property
    def waves(self) -> int:
        return int(self.outcomes.shape[1])


_AI_INDEX_BY_ARMPAIR = {(1, 1): 1, (1, -1): 2, (-1, 1): 3, (-1, -1): 4}


def ai_index_codes(a1: np.ndarray, a2: np.ndarray) -> np.ndarray:
    """Canonical AI index 1..4 from signed arm codes."""
    return ((a1 < 0) * 2 + (a2 < 0) + 1).astype(np.int8)


def weight_and_replicate(data: TrialDataset) -> AnalysisRows:
    n = data.n
    reps = np.where(data.r == 1, 2, 1)
    total = int(reps.sum())
    participant = np.repeat(np.arange(n, dtype=np.int64), reps)
    weight = np.repeat(np.where(data.r == 1, 2.0, 4.0), reps)
    starts = np.cumsum(reps) - reps
    ai = np.zeros(total, dtype=np.int8)
    resp = data.r == 1
    base = np.where(data.a1 == 1, 1, 3).astype(np.int8)
    ai[starts[resp]] = base[resp]
    ai[starts[resp] + 1] = base[resp] + 1
    nonresp = ~resp
    ai[starts[nonresp]] = ai_index_codes(data.a1[nonresp], data.a2[nonresp])
    outcomes = data.outcome_matrix()[participant]
    return AnalysisRows(participant=participant, ai_index=ai, weight=weight,
                        outcomes=outcomes, n_participants=n)


@dataclass(frozen=True)
class EmpiricalMarginals:
    """Weighted summary statistics of one trial on the replicated scale."""

    ai_means: dict
    resp_rate: dict
    pretest_mean: float
    pretest_final_corr: Optional[float]
    n: int


def empirical_marginals(data: TrialDataset) -> EmpiricalMarginals:
    """Weighted AI means of the final wave, per-arm response rates, and the
    weighted pretest/final-wave correlation."""
    rows = weight_and_replicate(data)
    final = rows.outcomes[:, -1]
    pre = rows.outcomes[:, 0]
    w = rows.weight
    means = {}
    for ai in AI_ORDER:
        mask = rows.ai_index == ai.index
        means[ai] = float(np.average(final[mask], weights=w[mask])) if mask.any() else None
    resp = {arm: float(np.mean(data.r[data.a1 == arm])) if (data.a1 == arm).any() else None
            for arm in (1, -1)}
    wsum = w.sum()
    mean_pre = float((w * pre).sum() / wsum)
    mean_fin = float((w * final).sum() / wsum)
    var_pre = float((w * (pre - mean_pre) ** 2).sum() / wsum)
    var_fin = float((w * (final - mean_fin) ** 2).sum() / wsum)
    if var_pre > 0.0 and var_fin > 0.0:
        cov = float((w * (pre - mean_pre) * (final - mean_fin)).sum() / wsum)
        corr = cov / math.sqrt(var_pre * var_fin)
    else:
        corr = None
    return EmpiricalMarginals(ai_means=means, resp_rate=resp, pretest_mean=mean_pre,
                              pretest_final_corr=corr, n=data.n)


# ---------------------------------------------------------------------------
# exact implied moments of the logistic generative model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PopulationMoments:
    """Exact planning quantities implied by a GenParamsTwoWave configuration.

    Correlations keyed by response status are averages of the per-AI values;
    the per-AI maps keep the unaveraged numbers for inspection. pretest_given_r
    is the design-average pretest rate within each response status.
    """

    mu: dict
    resp_rate: dict
    psi_nr: dict
    psi_r: dict
    pretest_mean: float
    pretest_given_r: tuple
    rho_marginal: float
    rho_marginal_by_ai: dict
    rho_conditional: dict
    rho_conditional_by_ai: dict
    corr_pretest_response: float

    def conditional_scenario(self, rho_marginal: Optional[float] = None) -> ConditionalScenario:
        return ConditionalScenario(
            psi_nr=dict(self.psi_nr),
            psi_r=dict(self.psi_r),
            resp_rate=dict(self.resp_rate),
            pretest_mean=self.pretest_mean,
            pretest_given_r=self.pretest_given_r,
            rho_marginal=self.rho_marginal if rho_marginal is None else rho_marginal,
            rho_conditional=dict(self.rho_conditional),
        )

    def marginal_scenario(self, rho_marginal: Optional[float] = None) -> MarginalScenario:
        return MarginalScenario(
            mu=dict(self.mu),
            resp_rate=dict(self.resp_rate),
            pretest_mean=self.pretest_mean,
            rho_marginal=self.rho_marginal if rho_marginal is None else rho_marginal,
        )


def population_moments(params: GenParamsTwoWave) -> PopulationMoments:
    """Enumerate the finite outcome space of the generative model exactly."""
    if not 0.0 < params.p_pretest < 1.0:
        raise ValueError(
            f"pretest correlations are undefined for a degenerate pretest, got {params.p_pretest}")
    p_y0 = np.array([1.0 - params.p_pretest, params.p_pretest])
    mu = {}
    resp_rate = {}
    psi_nr = {}
    psi_r = {}
    rho_marg = {}
    rho_cond_by_ai = {1: {}, 0: {}}
    for ai in AI_ORDER:
        a1, a2 = ai.a1, ai.a2
        p_resp = np.array([float(expit(params.resp_intercept + params.resp_y0 * y0 + params.resp_a1 * a1))
                           for y0 in (0, 1)])
        resp_rate[a1] = float(p_y0 @ p_resp)
        mu_d = 0.0
        e_pre_post = 0.0
        for r_status in (0, 1):
            joint = p_y0 * (p_resp if r_status == 1 else 1.0 - p_resp)
            p_r = joint.sum()
            cond = joint / p_r
            a2_term = 0.0 if r_status == 1 else params.beta_a2 * a2 + params.beta_a1a2 * a1 * a2
            p_post = np.array([float(expit(params.beta0 + params.beta_y0 * y0 + params.beta_a1 * a1
                                           + params.beta_r * r_status + a2_term))
                               for y0 in (0, 1)])
            psi = float(cond @ p_post)
            pre_given = float(cond[1])
            e_joint = float(cond[1] * p_post[1])
            denom = math.sqrt(pre_given * (1.0 - pre_given) * psi * (1.0 - psi))
            rho_cond_by_ai[r_status][ai] = (e_joint - pre_given * psi) / denom if denom > 0 else 0.0
            if r_status == 1:
                psi_r[a1] = psi
            else:
                psi_nr[ai] = psi
            mu_d += p_r * psi
            e_pre_post += p_r * e_joint
        mu[ai] = mu_d
        v_d = mu_d * (1.0 - mu_d)
        rho_marg[ai] = ((e_pre_post - params.p_pretest * mu_d)
                        / math.sqrt(params.p_pretest * (1.0 - params.p_pretest) * v_d))

    pretest_given = []
    for r_status in (0, 1):
        num = den = 0.0
        for a1 in (1, -1):
            for y0 in (0, 1):
                p_resp = float(expit(params.resp_intercept + params.resp_y0 * y0 + params.resp_a1 * a1))
                p = 0.5 * p_y0[y0] * (p_resp if r_status == 1 else 1.0 - p_resp)
                den += p
                num += p * y0
        pretest_given.append(num / den)

    r_bar = 0.5 * (resp_rate[1] + resp_rate[-1])
    e_pre_resp = sum(0.5 * p_y0[y0] * y0 * float(expit(params.resp_intercept + params.resp_y0 * y0
                                                       + params.resp_a1 * a1))
                     for y0 in (0, 1) for a1 in (1, -1))
    corr_pre_resp = ((e_pre_resp - params.p_pretest * r_bar)
                     / math.sqrt(params.p_pretest * (1.0 - params.p_pretest) * r_bar * (1.0 - r_bar)))

    return PopulationMoments(
        mu=mu,
        resp_rate=resp_rate,
        psi_nr=psi_nr,
        psi_r=psi_r,
        pretest_mean=params.p_pretest,
        pretest_given_r=(pretest_given[0], pretest_given[1]),
        rho_marginal=float(np.mean([rho_marg[ai] for ai in AI_ORDER])),
        rho_marginal_by_ai=rho_marg,
        rho_conditional={r: float(np.mean([rho_cond_by_ai[r][ai] for ai in AI_ORDER])) for r in (0, 1)},
        rho_conditional_by_ai=rho_cond_by_ai,
        corr_pretest_response=corr_pre_resp,
    )


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def write_trial_csv(data: TrialDataset, path) -> None:
    """Comma-separated export, one participant per row. Responders have an
    empty a2 field since they receive no second randomization."""
    buf = io.StringIO()
    header = ["id", "y0", "a1", "r", "a2", "y1"]
    if data.y2 is not None:
        header.append("y2")
    buf.write(",".join(header) + "\n")
    for i in range(data.n):
        a2 = "" if data.r[i] == 1 else str(int(data.a2[i]))
        fields = [str(i + 1), str(int(data.y0[i])), str(int(data.a1[i])),
                  str(int(data.r[i])), a2, str(int(data.y1[i]))]
        if data.y2 is not None:
            fields.append(str(int(data.y2[i])))
        buf.write(",".join(fields) + "\n")
    Path(path).write_text(buf.getvalue())
