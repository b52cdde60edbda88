"""Design vocabulary for the prototypical two-stage SMART with a binary end-of-study outcome.

Stage 1 randomizes everyone to an arm a1 in {+1, -1}. Responders to stage 1
stay the course; non-responders are re-randomized to a2 in {+1, -1}. That
yields four embedded adaptive interventions (AIs) and six observed cells.
This module encodes those objects, the elicited planning inputs built on
them, and the validation rules every downstream consumer relies on.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

PROB_TOL = 1e-12
PRETEST_CONSISTENCY_TOL = 1e-9

__all__ = [
    "AdaptiveIntervention",
    "AI_ORDER",
    "CELLS",
    "CELL_PATH",
    "cells_for_ai",
    "ai_for_cell",
    "ContrastSpec",
    "ConditionalScenario",
    "MarginalScenario",
    "ScenarioDocument",
    "Violation",
    "ScenarioValidationError",
    "list_violations",
    "validate_scenario",
    "marginalize",
    "log_odds_ratio",
    "odds_ratio",
    "scenario_from_dict",
    "scenario_to_dict",
    "document_from_dict",
    "document_to_dict",
    "load_document",
    "dump_document",
    "canonical_json",
]


def _sign_label(v: int) -> str:
    return "+1" if v > 0 else "-1"


@dataclass(frozen=True, order=True)
class AdaptiveIntervention:
    """One embedded AI (a1, a2): treat with a1 first, switch non-responders to a2."""

    a1: int
    a2: int

    def __post_init__(self):
        if self.a1 not in (-1, 1) or self.a2 not in (-1, 1):
            raise ValueError(f"arm codes must be +1 or -1, got ({self.a1}, {self.a2})")

    @property
    def index(self) -> int:
        """Canonical 1-based position: (+,+)=1, (+,-)=2, (-,+)=3, (-,-)=4."""
        return AI_ORDER.index(self) + 1

    def __str__(self) -> str:
        return f"({_sign_label(self.a1)},{_sign_label(self.a2)})"

    @staticmethod
    def from_index(index: int) -> "AdaptiveIntervention":
        if index not in (1, 2, 3, 4):
            raise ValueError(f"AI index must be 1..4, got {index!r}")
        return AI_ORDER[index - 1]


AI_ORDER: tuple = (
    AdaptiveIntervention(1, 1),
    AdaptiveIntervention(1, -1),
    AdaptiveIntervention(-1, 1),
    AdaptiveIntervention(-1, -1),
)

CELLS = ("A", "B", "C", "D", "E", "F")

# cell -> (a1, responder flag, a2 or None); responders are never re-randomized
CELL_PATH = {
    "A": (-1, 1, None),
    "B": (-1, 0, 1),
    "C": (-1, 0, -1),
    "D": (1, 1, None),
    "E": (1, 0, 1),
    "F": (1, 0, -1),
}


def cells_for_ai(ai: AdaptiveIntervention) -> tuple:
    """The (responder cell, non-responder cell) pair consistent with an AI.

    Both AIs sharing a1 contain that arm's responder cell, which is why
    responders get replicated during analysis.
    """
    responder = "D" if ai.a1 == 1 else "A"
    nonresponder = {(1, 1): "E", (1, -1): "F", (-1, 1): "B", (-1, -1): "C"}[(ai.a1, ai.a2)]
    return responder, nonresponder


def ai_for_cell(cell: str) -> tuple:
    """All AIs whose regime is consistent with one observed cell."""
    a1, r, a2 = CELL_PATH[cell]
    if r == 1:
        return tuple(ai for ai in AI_ORDER if ai.a1 == a1)
    return (AdaptiveIntervention(a1, a2),)


def marginalize(psi_nr: float, psi_r: float, resp_rate: float) -> float:
    """AI-level end-of-study success rate from its conditional pieces.

    mu = (1 - r) * psi_nr + r * psi_r.
    """
    for name, v in (("psi_nr", psi_nr), ("psi_r", psi_r)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {v}")
    if not 0.0 <= resp_rate <= 1.0:
        raise ValueError(f"resp_rate must lie in [0, 1], got {resp_rate}")
    return (1.0 - resp_rate) * psi_nr + resp_rate * psi_r


def log_odds_ratio(p_target: float, p_reference: float) -> float:
    """logit(p_target) - logit(p_reference); the planning effect size."""
    for name, p in (("p_target", p_target), ("p_reference", p_reference)):
        if not PROB_TOL < p < 1.0 - PROB_TOL:
            raise ValueError(f"{name} must lie strictly inside (0, 1), got {p}")
    return math.log(p_target / (1.0 - p_target)) - math.log(p_reference / (1.0 - p_reference))


def odds_ratio(p_target: float, p_reference: float) -> float:
    return math.exp(log_odds_ratio(p_target, p_reference))


@dataclass(frozen=True)
class Violation:
    """One validation failure, addressed by a dotted/bracketed field path."""

    field: str
    message: str

    def __str__(self) -> str:
        return f"{self.field}: {self.message}"


class ScenarioValidationError(ValueError):
    def __init__(self, violations: Sequence[Violation]):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


@dataclass(frozen=True)
class ContrastSpec:
    """Which pair of AIs to compare, on the log-odds scale, target minus reference."""

    target: int
    reference: int

    def __post_init__(self):
        if self.target not in (1, 2, 3, 4) or self.reference not in (1, 2, 3, 4):
            raise ValueError("contrast endpoints must be AI indices 1..4")
        if self.target == self.reference:
            raise ValueError("contrast endpoints must differ")
        if AI_ORDER[self.target - 1].a1 == AI_ORDER[self.reference - 1].a1:
            raise ValueError(
                "contrast endpoints must differ in the stage-1 option; "
                "AIs sharing a1 share responders and are not comparable this way")

    @property
    def target_ai(self) -> AdaptiveIntervention:
        return AdaptiveIntervention.from_index(self.target)

    @property
    def reference_ai(self) -> AdaptiveIntervention:
        return AdaptiveIntervention.from_index(self.reference)

    def vector(self, include_pretest: bool = False):
        """Coefficient vector over per-AI log-odds, optionally led by a pretest slot."""
        c = [0.0] * (5 if include_pretest else 4)
        off = 1 if include_pretest else 0
        c[off + self.target - 1] = 1.0
        c[off + self.reference - 1] = -1.0
        return tuple(c)


DEFAULT_CONTRAST = ContrastSpec(target=2, reference=4)


def _as_arm_key(key) -> int:
    if key in (1, -1):
        return int(key)
    if isinstance(key, str):
        s = key.strip()
        if s in ("+1", "1", "plus", "plus_arm"):
            return 1
        if s in ("-1", "minus", "minus_arm"):
            return -1
    raise ValueError(f"stage-1 arm key must be +1 or -1, got {key!r}")


def _as_ai_key(key) -> AdaptiveIntervention:
    if isinstance(key, AdaptiveIntervention):
        return key
    if isinstance(key, int):
        return AdaptiveIntervention.from_index(key)
    if isinstance(key, str):
        s = key.strip()
        if s in _AI_NAME_TO_INDEX:
            return AdaptiveIntervention.from_index(_AI_NAME_TO_INDEX[s])
        if s in ("1", "2", "3", "4"):
            return AdaptiveIntervention.from_index(int(s))
    raise ValueError(f"cannot interpret {key!r} as an adaptive intervention")


_AI_NAMES = ("plus_plus", "plus_minus", "minus_plus", "minus_minus")
_AI_NAME_TO_INDEX = {name: i + 1 for i, name in enumerate(_AI_NAMES)}


def ai_name(ai: AdaptiveIntervention) -> str:
    return _AI_NAMES[ai.index - 1]


@dataclass(frozen=True)
class ConditionalScenario:
    """Planning inputs elicited cell by cell.

    psi_nr maps each AI to its non-responder success rate psi^(d0); psi_r maps
    each stage-1 arm to the responder success rate psi^(d1) shared by the two
    AIs starting with that arm (it may also be keyed per AI, in which case
    validation insists the two values within an arm agree). resp_rate maps the
    stage-1 arm to r_d. The pretest block is optional until two-wave planning
    needs it: pretest_mean is the time-0 success rate, pretest_given_r the
    pair (among non-responders, among responders). rho_marginal is the
    pretest/posttest correlation ignoring response status; rho_conditional
    optionally refines it per response status (keys 0 and 1) and defaults to
    the marginal value.
    """

    psi_nr: Mapping
    psi_r: Mapping
    resp_rate: Mapping
    pretest_mean: float = None
    pretest_given_r: tuple = None
    rho_marginal: float = 0.0
    rho_conditional: Mapping = None

    def __post_init__(self):
        object.__setattr__(self, "psi_nr", {_as_ai_key(k): float(v) for k, v in dict(self.psi_nr).items()})
        raw_r = dict(self.psi_r)
        keyed_by_ai = any(isinstance(k, AdaptiveIntervention) or k in (2, 3, 4, "2", "3", "4") or
                          (isinstance(k, str) and k.strip() in _AI_NAME_TO_INDEX) for k in raw_r)
        if keyed_by_ai:
            object.__setattr__(self, "psi_r", {_as_ai_key(k): float(v) for k, v in raw_r.items()})
        else:
            object.__setattr__(self, "psi_r", {_as_arm_key(k): float(v) for k, v in raw_r.items()})
        object.__setattr__(self, "resp_rate", {_as_arm_key(k): float(v) for k, v in dict(self.resp_rate).items()})
        if self.pretest_given_r is not None:
            pg = tuple(float(v) for v in self.pretest_given_r)
            if len(pg) != 2:
                raise ValueError("pretest_given_r must be (non-responder rate, responder rate)")
            object.__setattr__(self, "pretest_given_r", pg)
        if self.rho_conditional is not None:
            object.__setattr__(self, "rho_conditional",
                               {int(k): float(v) for k, v in dict(self.rho_conditional).items()})

    # ---- resolved accessors used by the planning formulas ----

    def psi_r_for_arm(self, a1: int) -> float:
        if a1 in self.psi_r:
            return self.psi_r[a1]
        # keyed per AI; both entries for this arm are validated equal
        for ai, v in self.psi_r.items():
            if isinstance(ai, AdaptiveIntervention) and ai.a1 == a1:
                return v
        raise KeyError(f"no responder rate recorded for arm {a1}")

    def psi_nr_for_ai(self, ai: AdaptiveIntervention) -> float:
        return self.psi_nr[ai]

    def resp_rate_for_arm(self, a1: int) -> float:
        return self.resp_rate[a1]

    @property
    def resp_rate_mean(self) -> float:
        return 0.5 * (self.resp_rate[1] + self.resp_rate[-1])

    def mu(self, ai: AdaptiveIntervention) -> float:
        """Implied marginal success rate for one AI."""
        return marginalize(self.psi_nr_for_ai(ai), self.psi_r_for_arm(ai.a1), self.resp_rate_for_arm(ai.a1))

    def pretest_given(self, r: int) -> float:
        if self.pretest_given_r is not None:
            return self.pretest_given_r[r]
        return self.pretest_mean

    def rho_given(self, r: int) -> float:
        if self.rho_conditional is not None and r in self.rho_conditional:
            return self.rho_conditional[r]
        return self.rho_marginal

    def marginal(self) -> "MarginalScenario":
        return MarginalScenario(
            mu={ai: self.mu(ai) for ai in AI_ORDER},
            resp_rate=dict(self.resp_rate),
            pretest_mean=self.pretest_mean,
            rho_marginal=self.rho_marginal,
        )


@dataclass(frozen=True)
class MarginalScenario:
    """Planning inputs elicited directly as AI-level success rates.

    mu maps each AI to its marginal end-of-study success rate. resp_rate is
    either a single shared response probability or a per-arm map; the
    single-wave formula applies each arm's own rate, while the two-wave
    formula assumes one shared rate and reduces a per-arm map to its mean.
    pretest_mean and rho_marginal play the same roles as in
    ConditionalScenario.
    """

    mu: Mapping
    resp_rate: Union[float, Mapping]
    pretest_mean: float = None
    rho_marginal: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mu", {_as_ai_key(k): float(v) for k, v in dict(self.mu).items()})
        rr = self.resp_rate
        if isinstance(rr, Mapping):
            object.__setattr__(self, "resp_rate", {_as_arm_key(k): float(v) for k, v in dict(rr).items()})
        else:
            object.__setattr__(self, "resp_rate", float(rr))

    def mu_for_ai(self, ai: AdaptiveIntervention) -> float:
        return self.mu[ai]

    def resp_rate_for_arm(self, a1: int) -> float:
        if isinstance(self.resp_rate, dict):
            return self.resp_rate[a1]
        return self.resp_rate

    def common_resp_rate(self, reduction: str = "mean") -> float:
        """Collapse per-arm response rates to the single r the formulas assume."""
        if not isinstance(self.resp_rate, dict):
            return self.resp_rate
        if reduction != "mean":
            raise ValueError(f"unknown reduction {reduction!r}")
        return 0.5 * (self.resp_rate[1] + self.resp_rate[-1])


Scenario = Union[ConditionalScenario, MarginalScenario]


def _check_prob(violations, path, value, lo=0.0, hi=1.0, strict=False):
    if value is None:
        violations.append(Violation(path, "missing value"))
        return
    try:
        v = float(value)
    except (TypeError, ValueError):
        violations.append(Violation(path, f"not a number: {value!r}"))
        return
    if math.isnan(v) or math.isinf(v):
        violations.append(Violation(path, "must be finite"))
        return
    if strict:
        if not lo + PROB_TOL < v < hi - PROB_TOL:
            violations.append(Violation(path, f"must lie strictly inside ({lo}, {hi}), got {v}"))
    else:
        if not lo <= v <= hi:
            violations.append(Violation(path, f"must lie in [{lo}, {hi}], got {v}"))


def list_violations(scenario: Scenario) -> list:
    """All validation failures for a scenario, each with a field path."""
    v: list = []
    if isinstance(scenario, ConditionalScenario):
        for ai in AI_ORDER:
            if ai not in scenario.psi_nr:
                v.append(Violation(f"psi_nr[{ai}]", "missing value"))
            else:
                _check_prob(v, f"psi_nr[{ai}]", scenario.psi_nr[ai], strict=True)
        psi_r_by_ai = any(isinstance(k, AdaptiveIntervention) for k in scenario.psi_r)
        if psi_r_by_ai:
            for ai in AI_ORDER:
                if ai not in scenario.psi_r:
                    v.append(Violation(f"psi_r[{ai}]", "missing value"))
                else:
                    _check_prob(v, f"psi_r[{ai}]", scenario.psi_r[ai], strict=True)
            for a1 in (1, -1):
                vals = [scenario.psi_r.get(ai) for ai in AI_ORDER if ai.a1 == a1]
                if None not in vals and abs(vals[0] - vals[1]) > PROB_TOL:
                    v.append(Violation(f"psi_r[a1={_sign_label(a1)}]",
                                       "responder mean must not depend on a2"))
        else:
            for a1 in (1, -1):
                if a1 not in scenario.psi_r:
                    v.append(Violation(f"psi_r[{_sign_label(a1)}]", "missing value"))
                else:
                    _check_prob(v, f"psi_r[{_sign_label(a1)}]", scenario.psi_r[a1], strict=True)
        for a1 in (1, -1):
            if a1 not in scenario.resp_rate:
                v.append(Violation(f"resp_rate[{_sign_label(a1)}]", "missing value"))
            else:
                _check_prob(v, f"resp_rate[{_sign_label(a1)}]", scenario.resp_rate[a1])
        if scenario.pretest_mean is not None:
            _check_prob(v, "pretest.mean", scenario.pretest_mean, strict=True)
        if scenario.pretest_given_r is not None:
            _check_prob(v, "pretest.given_nonresponder", scenario.pretest_given_r[0], strict=True)
            _check_prob(v, "pretest.given_responder", scenario.pretest_given_r[1], strict=True)
            if scenario.pretest_mean is None:
                v.append(Violation("pretest.mean", "required when conditional pretest rates are given"))
            elif not any(x.field.startswith("pretest") or x.field.startswith("resp_rate") for x in v):
                # the design-average identity ties the three pretest numbers together
                rbar = scenario.resp_rate_mean
                implied = (1.0 - rbar) * scenario.pretest_given_r[0] + rbar * scenario.pretest_given_r[1]
                if abs(implied - scenario.pretest_mean) > PRETEST_CONSISTENCY_TOL:
                    v.append(Violation(
                        "pretest",
                        f"mean {scenario.pretest_mean} inconsistent with conditional rates "
                        f"(implied {implied:.10f})"))
        if not (math.isfinite(scenario.rho_marginal) and 0.0 <= scenario.rho_marginal < 1.0):
            v.append(Violation("rho", f"must lie in [0, 1), got {scenario.rho_marginal}"))
        if scenario.rho_conditional is not None:
            for r, val in sorted(scenario.rho_conditional.items()):
                if r not in (0, 1):
                    v.append(Violation(f"rho_conditional[{r}]", "keys must be response statuses 0 or 1"))
                elif not (math.isfinite(val) and -1.0 < val < 1.0):
                    v.append(Violation(f"rho_conditional[{r}]", f"must lie in (-1, 1), got {val}"))
    elif isinstance(scenario, MarginalScenario):
        for ai in AI_ORDER:
            if ai not in scenario.mu:
                v.append(Violation(f"mu[{ai}]", "missing value"))
            else:
                _check_prob(v, f"mu[{ai}]", scenario.mu[ai], strict=True)
        if isinstance(scenario.resp_rate, dict):
            for a1 in (1, -1):
                if a1 not in scenario.resp_rate:
                    v.append(Violation(f"resp_rate[{_sign_label(a1)}]", "missing value"))
                else:
                    _check_prob(v, f"resp_rate[{_sign_label(a1)}]", scenario.resp_rate[a1])
        else:
            _check_prob(v, "resp_rate", scenario.resp_rate)
        if scenario.pretest_mean is not None:
            _check_prob(v, "pretest.mean", scenario.pretest_mean, strict=True)
        if not (math.isfinite(scenario.rho_marginal) and 0.0 <= scenario.rho_marginal < 1.0):
            v.append(Violation("rho", f"must lie in [0, 1), got {scenario.rho_marginal}"))
    else:
        v.append(Violation("scenario", f"unsupported scenario type {type(scenario).__name__}"))
    return v


def validate_scenario(scenario: Scenario) -> Scenario:
    """Return the scenario unchanged, or raise with every violation listed."""
    violations = list_violations(scenario)
    if violations:
        raise ScenarioValidationError(violations)
    return scenario


# ---------------------------------------------------------------------------
# JSON scenario documents
# ---------------------------------------------------------------------------
#
# {
#   "mode": "conditional",
#   "cells": {"A": .., "B": .., "C": .., "D": .., "E": .., "F": ..},
#   "response_rates": {"plus_arm": .., "minus_arm": ..},
#   "pretest": {"mean": .., "given_responder": .., "given_nonresponder": ..},
#   "rho": ..,
#   "rho_conditional": {"responder": .., "nonresponder": ..},
#   "contrast": {"target": 2, "reference": 4},
#   "alpha": 0.05,
#   "power": 0.80
# }
#
# or "mode": "marginal" with "marginals": {"plus_plus": .., "plus_minus": ..,
# "minus_plus": .., "minus_minus": ..} (AI index strings "1".."4" also accepted)
# and "response_rates" either the per-arm map above or {"common": ..}.
#
# Cells translate to conditional pieces as: A and D are the responder rates of
# the -1 and +1 arms; E, F, B, C are the non-responder rates of AIs 1..4.

_CELL_TO_AI_NR = {"E": 1, "F": 2, "B": 3, "C": 4}


@dataclass(frozen=True)
class ScenarioDocument:
    scenario: Scenario
    contrast: ContrastSpec = DEFAULT_CONTRAST
    alpha: float = 0.05
    power: float = 0.80

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ScenarioValidationError([Violation("alpha", f"must lie in (0, 1), got {self.alpha}")])
        if not 0.0 < self.power < 1.0:
            raise ScenarioValidationError([Violation("power", f"must lie in (0, 1), got {self.power}")])


def _doc_error(field: str, message: str):
    raise ScenarioValidationError([Violation(field, message)])


def _get_prob(d: Mapping, field_path: str, key: str, required=True):
    if key not in d:
        if required:
            _doc_error(f"{field_path}.{key}", "missing value")
        return None
    val = d[key]
    if not isinstance(val, (int, float)) or isinstance(val, bool):
        _doc_error(f"{field_path}.{key}", f"not a number: {val!r}")
    return float(val)


def scenario_from_dict(data: Mapping) -> Scenario:
    """Build a scenario from parsed JSON, reporting failures by field path."""
    if not isinstance(data, Mapping):
        _doc_error("scenario", "document must be a JSON object")
    mode = data.get("mode")
    if mode not in ("conditional", "marginal"):
        _doc_error("mode", f'must be "conditional" or "marginal", got {mode!r}')

    rr_raw = data.get("response_rates")
    if not isinstance(rr_raw, Mapping):
        _doc_error("response_rates", "must be an object")

    pretest_mean = None
    pretest_given = None
    if "pretest" in data and data["pretest"] is not None:
        p = data["pretest"]
        if not isinstance(p, Mapping):
            _doc_error("pretest", "must be an object")
        pretest_mean = _get_prob(p, "pretest", "mean")
        if "given_responder" in p or "given_nonresponder" in p:
            pretest_given = (
                _get_prob(p, "pretest", "given_nonresponder"),
                _get_prob(p, "pretest", "given_responder"),
            )

    rho = data.get("rho", 0.0)
    if not isinstance(rho, (int, float)) or isinstance(rho, bool):
        _doc_error("rho", f"not a number: {rho!r}")

    if mode == "conditional":
        cells = data.get("cells")
        if not isinstance(cells, Mapping):
            _doc_error("cells", "must be an object with keys A..F")
        for c in CELLS:
            if c not in cells:
                _doc_error(f"cells.{c}", "missing value")
        cell_vals = {c: _get_prob(cells, "cells", c) for c in CELLS}
        rr = {
            1: _get_prob(rr_raw, "response_rates", "plus_arm"),
            -1: _get_prob(rr_raw, "response_rates", "minus_arm"),
        }
        rho_cond = None
        if "rho_conditional" in data and data["rho_conditional"] is not None:
            rc = data["rho_conditional"]
            if not isinstance(rc, Mapping):
                _doc_error("rho_conditional", "must be an object")
            rho_cond = {}
            if "nonresponder" in rc:
                rho_cond[0] = _get_prob(rc, "rho_conditional", "nonresponder")
            if "responder" in rc:
                rho_cond[1] = _get_prob(rc, "rho_conditional", "responder")
        return ConditionalScenario(
            psi_nr={AdaptiveIntervention.from_index(i): cell_vals[c] for c, i in _CELL_TO_AI_NR.items()},
            psi_r={1: cell_vals["D"], -1: cell_vals["A"]},
            resp_rate=rr,
            pretest_mean=pretest_mean,
            pretest_given_r=pretest_given,
            rho_marginal=float(rho),
            rho_conditional=rho_cond,
        )

    marg = data.get("marginals")
    if not isinstance(marg, Mapping):
        _doc_error("marginals", "must be an object keyed by adaptive intervention")
    mu = {}
    for key, val in marg.items():
        try:
            ai = _as_ai_key(key)
        except ValueError:
            _doc_error(f"marginals.{key}", "unknown adaptive intervention key")
        if not isinstance(val, (int, float)) or isinstance(val, bool):
            _doc_error(f"marginals.{key}", f"not a number: {val!r}")
        mu[ai] = float(val)
    for ai in AI_ORDER:
        if ai not in mu:
            _doc_error(f"marginals.{ai_name(ai)}", "missing value")
    if "common" in rr_raw:
        rr = _get_prob(rr_raw, "response_rates", "common")
    else:
        rr = {
            1: _get_prob(rr_raw, "response_rates", "plus_arm"),
            -1: _get_prob(rr_raw, "response_rates", "minus_arm"),
        }
    return MarginalScenario(mu=mu, resp_rate=rr, pretest_mean=pretest_mean, rho_marginal=float(rho))


def scenario_to_dict(scenario: Scenario) -> dict:
    if isinstance(scenario, ConditionalScenario):
        cells = {
            "A": scenario.psi_r_for_arm(-1),
            "D": scenario.psi_r_for_arm(1),
        }
        for c, i in _CELL_TO_AI_NR.items():
            cells[c] = scenario.psi_nr_for_ai(AdaptiveIntervention.from_index(i))
        out: dict = {
            "mode": "conditional",
            "cells": {c: cells[c] for c in CELLS},
            "response_rates": {"plus_arm": scenario.resp_rate[1], "minus_arm": scenario.resp_rate[-1]},
            "rho": scenario.rho_marginal,
        }
        if scenario.pretest_mean is not None:
            pre = {"mean": scenario.pretest_mean}
            if scenario.pretest_given_r is not None:
                pre["given_nonresponder"] = scenario.pretest_given_r[0]
                pre["given_responder"] = scenario.pretest_given_r[1]
            out["pretest"] = pre
        if scenario.rho_conditional is not None:
            rc = {}
            if 0 in scenario.rho_conditional:
                rc["nonresponder"] = scenario.rho_conditional[0]
            if 1 in scenario.rho_conditional:
                rc["responder"] = scenario.rho_conditional[1]
            out["rho_conditional"] = rc
        return out
    if isinstance(scenario, MarginalScenario):
        out = {
            "mode": "marginal",
            "marginals": {ai_name(ai): scenario.mu[ai] for ai in AI_ORDER},
            "rho": scenario.rho_marginal,
        }
        if isinstance(scenario.resp_rate, dict):
            out["response_rates"] = {"plus_arm": scenario.resp_rate[1], "minus_arm": scenario.resp_rate[-1]}
        else:
            out["response_rates"] = {"common": scenario.resp_rate}
        if scenario.pretest_mean is not None:
            out["pretest"] = {"mean": scenario.pretest_mean}
        return out
    raise TypeError(f"unsupported scenario type {type(scenario).__name__}")


def document_from_dict(data: Mapping) -> ScenarioDocument:
    scenario = scenario_from_dict(data)
    validate_scenario(scenario)
    contrast = DEFAULT_CONTRAST
    if "contrast" in data and data["contrast"] is not None:
        c = data["contrast"]
        if not isinstance(c, Mapping) or "target" not in c or "reference" not in c:
            _doc_error("contrast", "must be an object with target and reference AI indices")
        try:
            contrast = ContrastSpec(target=int(c["target"]), reference=int(c["reference"]))
        except (TypeError, ValueError) as exc:
            _doc_error("contrast", str(exc))
    alpha = data.get("alpha", 0.05)
    power = data.get("power", 0.80)
    for fname, val in (("alpha", alpha), ("power", power)):
        if not isinstance(val, (int, float)) or isinstance(val, bool):
            _doc_error(fname, f"not a number: {val!r}")
    return ScenarioDocument(scenario=scenario, contrast=contrast, alpha=float(alpha), power=float(power))


def document_to_dict(doc: ScenarioDocument) -> dict:
    out = scenario_to_dict(doc.scenario)
    out["contrast"] = {"target": doc.contrast.target, "reference": doc.contrast.reference}
    out["alpha"] = doc.alpha
    out["power"] = doc.power
    return out


def canonical_json(obj) -> str:
    """Stable serialization: sorted keys, fixed separators, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def load_document(path) -> ScenarioDocument:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioValidationError([Violation("document", f"invalid JSON: {exc}")])
    return document_from_dict(data)


def dump_document(doc: ScenarioDocument, path) -> None:
    Path(path).write_text(canonical_json(document_to_dict(doc)))
