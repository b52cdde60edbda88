"""Closed-form sample size and power for comparing two embedded AIs on log odds.

The planning target is Delta = logit(mu_target) - logit(mu_reference) for a
pair of embedded adaptive interventions, tested two-sided at level alpha with
a Wald statistic whose variance comes from the weighted-and-replicated
estimator's sandwich. Four planning variances are available, crossed by
elicitation style and number of measurement waves:

  conditional cells, one wave   -> cpb_n_onewave
  marginal rates, one wave      -> mpb_n_onewave
  conditional cells, two waves  -> cpb_n_twowave
  marginal rates, two waves     -> mpb_n_twowave

All four share n = ceil((z_power + z_alpha)^2 * sigma2_delta / Delta^2) and
differ only in sigma2_delta. Ceiling is applied exactly once, at the end.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

import numpy as np
from scipy.special import ndtr, ndtri

from . import matkit
from .design import (
    AI_ORDER,
    AdaptiveIntervention,
    ConditionalScenario,
    ContrastSpec,
    DEFAULT_CONTRAST,
    MarginalScenario,
    Scenario,
    ScenarioValidationError,
    Violation,
    log_odds_ratio,
    validate_scenario,
)

__all__ = [
    "TestSpec",
    "NullEffectError",
    "AdjustedVariances",
    "SampleSizeResult",
    "PowerResult",
    "adjusted_conditional_variances",
    "required_n",
    "power_given_n",
    "cpb_sigma2_onewave",
    "mpb_sigma2_onewave",
    "cpb_sigma2_twowave",
    "mpb_sigma2_twowave",
    "cpb_n_onewave",
    "mpb_n_onewave",
    "cpb_n_twowave",
    "mpb_n_twowave",
    "cpb_twowave_matrices",
    "plan_n",
    "predicted_power",
    "inflate_for_attrition",
]


class NullEffectError(ValueError):
    """The contrasted AIs have identical implied marginals; no finite n exists."""


@dataclass(frozen=True)
class TestSpec:
    """Two-sided level and target power for the planning Wald test."""

    __test__ = False  # not a test case despite the name

    alpha: float = 0.05
    power: float = 0.80

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 < self.power < 1.0:
            raise ValueError(f"power must lie in (0, 1), got {self.power}")

    @property
    def z_alpha(self) -> float:
        return float(ndtri(1.0 - self.alpha / 2.0))

    @property
    def z_power(self) -> float:
        return float(ndtri(self.power))

    @property
    def factor(self) -> float:
        """(z_power + z_alpha)^2, the numerator constant of the n formula."""
        return (self.z_power + self.z_alpha) ** 2


@dataclass(frozen=True)
class AdjustedVariances:
    """Conditional outcome variances inflated for the spread around the marginal.

    v_nonresponder = psi0 (1 - psi0) + r^2 (psi1 - psi0)^2
    v_responder    = psi1 (1 - psi1) + (1 - r)^2 (psi1 - psi0)^2

    mu is the implied marginal (1 - r) psi0 + r psi1. The adjustment terms are
    the squared deviations of each conditional mean from mu, which is what
    makes the weighted estimator's variance exceed the naive binomial one.
    """

    v_nonresponder: float
    v_responder: float
    mu: float


def adjusted_conditional_variances(psi_nr: float, psi_r: float, resp_rate: float) -> AdjustedVariances:
    for name, p in (("psi_nr", psi_nr), ("psi_r", psi_r)):
        if not 0.0 < p < 1.0:
            raise ValueError(f"{name} must lie strictly inside (0, 1), got {p}")
    if not 0.0 <= resp_rate <= 1.0:
        raise ValueError(f"resp_rate must lie in [0, 1], got {resp_rate}")
    gap = psi_r - psi_nr
    mu = (1.0 - resp_rate) * psi_nr + resp_rate * psi_r
    v0 = psi_nr * (1.0 - psi_nr) + resp_rate ** 2 * gap ** 2
    v1 = psi_r * (1.0 - psi_r) + (1.0 - resp_rate) ** 2 * gap ** 2
    return AdjustedVariances(v_nonresponder=v0, v_responder=v1, mu=mu)


@dataclass(frozen=True)
class SampleSizeResult:
    """A planned per-trial sample size with its audit trail."""

    method: str
    n: int
    n_raw: float
    sigma2_delta: float
    delta: float
    alpha: float
    power: float
    intermediates: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "n": self.n,
            "n_raw": self.n_raw,
            "sigma2_delta": self.sigma2_delta,
            "delta": self.delta,
            "alpha": self.alpha,
            "power": self.power,
            "intermediates": self.intermediates,
        }


@dataclass(frozen=True)
class PowerResult:
    """Predicted power of the planning Wald test at a fixed n."""

    method: str
    power: float
    n: int
    sigma2_delta: float
    delta: float
    alpha: float
    intermediates: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "power": self.power,
            "n": self.n,
            "sigma2_delta": self.sigma2_delta,
            "delta": self.delta,
            "alpha": self.alpha,
            "intermediates": self.intermediates,
        }


def required_n(sigma2_delta: float, delta: float, spec: TestSpec = TestSpec()) -> int:
    """Smallest n with predicted power at least the target; never below 2."""
    if not math.isfinite(sigma2_delta) or sigma2_delta <= 0.0:
        raise ValueError(f"sigma2_delta must be positive and finite, got {sigma2_delta}")
    if not math.isfinite(delta):
        raise ValueError(f"delta must be finite, got {delta}")
    if delta == 0.0:
        raise NullEffectError("effect size is zero; no finite sample size achieves the target power")
    raw = spec.factor * sigma2_delta / delta ** 2
    return max(2, math.ceil(raw))


def power_given_n(sigma2_delta: float, delta: float, n: int, alpha: float = 0.05) -> float:
    """Predicted power at sample size n; equals alpha/2 when delta is zero."""
    if not math.isfinite(sigma2_delta) or sigma2_delta <= 0.0:
        raise ValueError(f"sigma2_delta must be positive and finite, got {sigma2_delta}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    z_alpha = float(ndtri(1.0 - alpha / 2.0))
    return float(ndtr(math.sqrt(n * delta ** 2 / sigma2_delta) - z_alpha))


def inflate_for_attrition(n: int, attrition: float) -> int:
    """Recruitment target whose retained fraction still meets the analysis n."""
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    if not 0.0 <= attrition < 1.0:
        raise ValueError(f"attrition must lie in [0, 1), got {attrition}")
    return math.ceil(n / (1.0 - attrition))


# ---------------------------------------------------------------------------
# sigma2 builders
# ---------------------------------------------------------------------------


def _contrast_ais(contrast: ContrastSpec):
    return contrast.target_ai, contrast.reference_ai


def cpb_sigma2_onewave(scenario: ConditionalScenario, contrast: ContrastSpec = DEFAULT_CONTRAST):
    """Single-wave planning variance from conditional cell inputs.

    sigma2 = sum over the two contrasted AIs of
             (4 (1 - r_d) V_d0 + 2 r_d V_d1) / V_d^2
    with V_d = mu_d (1 - mu_d) and the adjusted conditional variances V_dr.
    Returns (sigma2, delta, intermediates).
    """
    validate_scenario(scenario)
    per_ai = {}
    total = 0.0
    mus = {}
    for ai in _contrast_ais(contrast):
        r = scenario.resp_rate_for_arm(ai.a1)
        adj = adjusted_conditional_variances(
            scenario.psi_nr_for_ai(ai), scenario.psi_r_for_arm(ai.a1), r)
        v_marg = adj.mu * (1.0 - adj.mu)
        term = (4.0 * (1.0 - r) * adj.v_nonresponder + 2.0 * r * adj.v_responder) / v_marg ** 2
        total += term
        mus[ai] = adj.mu
        per_ai[str(ai)] = {
            "mu": adj.mu,
            "V": v_marg,
            "V_nonresponder": adj.v_nonresponder,
            "V_responder": adj.v_responder,
            "resp_rate": r,
            "term": term,
        }
    delta = log_odds_ratio(mus[contrast.target_ai], mus[contrast.reference_ai])
    return total, delta, {"per_ai": per_ai}


def mpb_sigma2_onewave(scenario: MarginalScenario, contrast: ContrastSpec = DEFAULT_CONTRAST):
    """Single-wave planning variance from marginal inputs.

    sigma2 = 2 (2 - r_d) / V_d + 2 (2 - r_ref) / V_ref. The (2 - r) factor is
    the design effect of weighting: responders count double, non-responders
    quadruple, so lower response rates cost more information.
    """
    validate_scenario(scenario)
    per_ai = {}
    total = 0.0
    for ai in _contrast_ais(contrast):
        mu = scenario.mu_for_ai(ai)
        r = scenario.resp_rate_for_arm(ai.a1)
        v = mu * (1.0 - mu)
        term = 2.0 * (2.0 - r) / v
        total += term
        per_ai[str(ai)] = {"mu": mu, "V": v, "resp_rate": r, "term": term}
    delta = log_odds_ratio(scenario.mu_for_ai(contrast.target_ai), scenario.mu_for_ai(contrast.reference_ai))
    return total, delta, {"per_ai": per_ai}


def _require_pretest(scenario: ConditionalScenario):
    if scenario.pretest_mean is None:
        raise ScenarioValidationError([Violation("pretest.mean", "required for two-wave planning")])


def _conditional_second_moment(scenario, ai, r_status, mu_pre, mu_post, conditional_moments):
    """2 x 2 second-moment block of centered (pretest, posttest) given response status."""
    psi_pre = scenario.pretest_given(r_status)
    psi_post = scenario.psi_r_for_arm(ai.a1) if r_status == 1 else scenario.psi_nr_for_ai(ai)
    rho_r = scenario.rho_given(r_status)
    cv_pre = psi_pre * (1.0 - psi_pre)
    cv_post = psi_post * (1.0 - psi_post)
    dev_pre = psi_pre - mu_pre
    dev_post = psi_post - mu_post
    cross = rho_r * math.sqrt(cv_pre * cv_post)
    if conditional_moments == "adjusted":
        return np.array([
            [cv_pre + dev_pre ** 2, cross + dev_pre * dev_post],
            [cross + dev_pre * dev_post, cv_post + dev_post ** 2],
        ])
    if conditional_moments == "cell":
        return np.array([
            [cv_pre + dev_pre ** 2, cross],
            [cross, cv_post],
        ])
    raise ValueError(f'conditional_moments must be "adjusted" or "cell", got {conditional_moments!r}')


def cpb_twowave_matrices(scenario: ConditionalScenario,
                         conditional_moments: str = "adjusted"):
    """The 5 x 5 bread and meat behind the two-wave conditional planning variance.

    Coordinates are (pretest log odds, AI 1..4 posttest log odds). The bread
    is the arrowhead expected derivative matrix under an exchangeable working
    correlation equal to the elicited marginal rho; the meat accumulates each
    AI's weighted score covariance from the conditional second-moment blocks.

    conditional_moments picks how those blocks treat the deviation of the
    conditional means from the marginals: "adjusted" carries the deviation
    product into every entry, "cell" keeps the posttest variance and the
    cross moment at their raw conditional values. "adjusted" is the faithful
    second-moment expansion; "cell" matches the published reference grids and
    is what the reproduction runners use.
    """
    validate_scenario(scenario)
    _require_pretest(scenario)
    rho = scenario.rho_marginal
    mu_pre = scenario.pretest_mean
    v_pre = mu_pre * (1.0 - mu_pre)
    one_minus = 1.0 - rho ** 2

    mus = {ai: scenario.mu(ai) for ai in AI_ORDER}
    v_post = {ai: mus[ai] * (1.0 - mus[ai]) for ai in AI_ORDER}

    bread = np.zeros((5, 5))
    meat = np.zeros((5, 5))
    bread[0, 0] = 4.0 * v_pre / one_minus
    for ai in AI_ORDER:
        j = ai.index
        vj = v_post[ai]
        bread[j, j] = vj / one_minus
        wing = -rho * math.sqrt(v_pre * vj) / one_minus
        bread[0, j] = wing
        bread[j, 0] = wing

        r = scenario.resp_rate_for_arm(ai.a1)
        # A maps raw residuals to weighted score scale: G^{1/2} R^{-1} G^{-1/2}
        a_mat = np.array([
            [1.0, -rho * math.sqrt(v_pre / vj)],
            [-rho * math.sqrt(vj / v_pre), 1.0],
        ]) / one_minus
        tot = (4.0 * (1.0 - r) * _conditional_second_moment(scenario, ai, 0, mu_pre, mus[ai], conditional_moments)
               + 2.0 * r * _conditional_second_moment(scenario, ai, 1, mu_pre, mus[ai], conditional_moments))
        q = a_mat @ tot @ a_mat.T
        meat[0, 0] += q[0, 0]
        meat[0, j] = q[0, 1]
        meat[j, 0] = q[1, 0]
        meat[j, j] = q[1, 1]
    return bread, meat


def cpb_sigma2_twowave(scenario: ConditionalScenario, contrast: ContrastSpec = DEFAULT_CONTRAST,
                       conditional_moments: str = "adjusted"):
    """Two-wave planning variance from conditional inputs: c^T B^{-1} M B^{-1} c."""
    bread, meat = cpb_twowave_matrices(scenario, conditional_moments)
    bread_inv = matkit.arrowhead_inverse(bread)
    c = np.asarray(ContrastSpec(contrast.target, contrast.reference).vector(include_pretest=True))
    sigma2 = matkit.quadratic_form(c, bread_inv, meat)
    mu_t = scenario.mu(contrast.target_ai)
    mu_r = scenario.mu(contrast.reference_ai)
    delta = log_odds_ratio(mu_t, mu_r)
    inter = {
        "rho": scenario.rho_marginal,
        "pretest_mean": scenario.pretest_mean,
        "conditional_moments": conditional_moments,
        "per_ai": {},
    }
    for ai in AI_ORDER:
        r = scenario.resp_rate_for_arm(ai.a1)
        mu = scenario.mu(ai)
        inter["per_ai"][str(ai)] = {
            "mu": mu,
            "V": mu * (1.0 - mu),
            "resp_rate": r,
            "psi_nonresponder": scenario.psi_nr_for_ai(ai),
            "psi_responder": scenario.psi_r_for_arm(ai.a1),
        }
    return sigma2, delta, inter


def mpb_sigma2_twowave(scenario: MarginalScenario, contrast: ContrastSpec = DEFAULT_CONTRAST,
                       r_reduction: str = "mean"):
    """Two-wave planning variance from marginal inputs.

    sigma2 = (2 - r) [ (4 - 3 rho^2) / (2 V_d)
                       - rho^2 / sqrt(V_d V_ref)
                       + (4 - 3 rho^2) / (2 V_ref) ]

    A single response probability r is assumed; a per-arm map is reduced to
    its mean. At rho = 0 this collapses to the single-wave expression.
    """
    validate_scenario(scenario)
    rho = scenario.rho_marginal
    r = scenario.common_resp_rate(reduction=r_reduction)
    t_ai, r_ai = _contrast_ais(contrast)
    mu_t = scenario.mu_for_ai(t_ai)
    mu_r = scenario.mu_for_ai(r_ai)
    v_t = mu_t * (1.0 - mu_t)
    v_r = mu_r * (1.0 - mu_r)
    bulk = (4.0 - 3.0 * rho ** 2)
    sigma2 = (2.0 - r) * (bulk / (2.0 * v_t) - rho ** 2 / math.sqrt(v_t * v_r) + bulk / (2.0 * v_r))
    delta = log_odds_ratio(mu_t, mu_r)
    inter = {
        "rho": rho,
        "resp_rate_common": r,
        "r_reduction": r_reduction if isinstance(scenario.resp_rate, dict) else "none",
        "per_ai": {
            str(t_ai): {"mu": mu_t, "V": v_t},
            str(r_ai): {"mu": mu_r, "V": v_r},
        },
    }
    return sigma2, delta, inter


# ---------------------------------------------------------------------------
# sample size wrappers
# ---------------------------------------------------------------------------


def _finish(method: str, sigma2: float, delta: float, inter: dict, spec: TestSpec) -> SampleSizeResult:
    if delta == 0.0:
        raise NullEffectError(
            "effect size is zero; no finite sample size achieves the target power")
    raw = spec.factor * sigma2 / delta ** 2
    n = max(2, math.ceil(raw))
    return SampleSizeResult(
        method=method, n=n, n_raw=raw, sigma2_delta=sigma2, delta=delta,
        alpha=spec.alpha, power=spec.power, intermediates=inter)


def cpb_n_onewave(scenario: ConditionalScenario, contrast: ContrastSpec = DEFAULT_CONTRAST,
                  spec: TestSpec = TestSpec()) -> SampleSizeResult:
    sigma2, delta, inter = cpb_sigma2_onewave(scenario, contrast)
    return _finish("cpb-1w", sigma2, delta, inter, spec)


def mpb_n_onewave(scenario: MarginalScenario, contrast: ContrastSpec = DEFAULT_CONTRAST,
                  spec: TestSpec = TestSpec()) -> SampleSizeResult:
    sigma2, delta, inter = mpb_sigma2_onewave(scenario, contrast)
    return _finish("mpb-1w", sigma2, delta, inter, spec)


def cpb_n_twowave(scenario: ConditionalScenario, contrast: ContrastSpec = DEFAULT_CONTRAST,
                  spec: TestSpec = TestSpec(), conditional_moments: str = "adjusted") -> SampleSizeResult:
    sigma2, delta, inter = cpb_sigma2_twowave(scenario, contrast, conditional_moments)
    return _finish("cpb-2w", sigma2, delta, inter, spec)


def mpb_n_twowave(scenario: MarginalScenario, contrast: ContrastSpec = DEFAULT_CONTRAST,
                  spec: TestSpec = TestSpec(), r_reduction: str = "mean") -> SampleSizeResult:
    sigma2, delta, inter = mpb_sigma2_twowave(scenario, contrast, r_reduction)
    return _finish("mpb-2w", sigma2, delta, inter, spec)


# ---------------------------------------------------------------------------
# dispatch helpers used by the CLI and service
# ---------------------------------------------------------------------------


def _resolve_scenario(scenario: Scenario, method: str):
    if method == "cpb":
        if not isinstance(scenario, ConditionalScenario):
            raise ScenarioValidationError([Violation(
                "mode", "conditional cell inputs are required for the cpb method")])
        return scenario, False
    if method == "mpb":
        if isinstance(scenario, ConditionalScenario):
            return scenario.marginal(), True
        return scenario, False
    raise ValueError(f'method must be "cpb" or "mpb", got {method!r}')


def plan_n(scenario: Scenario, contrast: ContrastSpec = DEFAULT_CONTRAST, method: str = "cpb",
           waves: int = 1, spec: TestSpec = TestSpec(),
           conditional_moments: str = "adjusted") -> SampleSizeResult:
    """Route to the matching sigma2 builder and finish with the shared n formula."""
    resolved, derived = _resolve_scenario(scenario, method)
    if waves == 1:
        result = (cpb_n_onewave(resolved, contrast, spec) if method == "cpb"
                  else mpb_n_onewave(resolved, contrast, spec))
    elif waves == 2:
        result = (cpb_n_twowave(resolved, contrast, spec, conditional_moments) if method == "cpb"
                  else mpb_n_twowave(resolved, contrast, spec))
    else:
        raise ValueError(f"waves must be 1 or 2, got {waves!r}")
    if derived:
        inter = dict(result.intermediates)
        inter["derived_marginals"] = True
        result = SampleSizeResult(
            method=result.method, n=result.n, n_raw=result.n_raw,
            sigma2_delta=result.sigma2_delta, delta=result.delta,
            alpha=result.alpha, power=result.power, intermediates=inter)
    return result


def predicted_power(scenario: Scenario, n: int, contrast: ContrastSpec = DEFAULT_CONTRAST,
                    method: str = "cpb", waves: int = 1, alpha: float = 0.05,
                    conditional_moments: str = "adjusted") -> PowerResult:
    """Closed-form power at a fixed n for the requested method and wave count."""
    resolved, derived = _resolve_scenario(scenario, method)
    if waves == 1:
        sigma2, delta, inter = (cpb_sigma2_onewave(resolved, contrast) if method == "cpb"
                                else mpb_sigma2_onewave(resolved, contrast))
    elif waves == 2:
        sigma2, delta, inter = (cpb_sigma2_twowave(resolved, contrast, conditional_moments)
                                if method == "cpb" else mpb_sigma2_twowave(resolved, contrast))
    else:
        raise ValueError(f"waves must be 1 or 2, got {waves!r}")
    if derived:
        inter = dict(inter)
        inter["derived_marginals"] = True
    return PowerResult(
        method=f"{method}-{waves}w",
        power=power_given_n(sigma2, delta, n, alpha),
        n=n, sigma2_delta=sigma2, delta=delta, alpha=alpha, intermediates=inter)
