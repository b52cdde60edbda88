"""Design vocabulary: AIs, cells, effect scales, scenario validation, documents."""
import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smartb import (
    AI_ORDER,
    AdaptiveIntervention,
    ConditionalScenario,
    ContrastSpec,
    DEFAULT_CONTRAST,
    MarginalScenario,
    ScenarioDocument,
    ScenarioValidationError,
    ai_for_cell,
    canonical_json,
    cells_for_ai,
    document_from_dict,
    document_to_dict,
    dump_document,
    list_violations,
    load_document,
    log_odds_ratio,
    marginalize,
    odds_ratio,
    scenario_from_dict,
    scenario_to_dict,
    validate_scenario,
)

probs = st.floats(min_value=0.01, max_value=0.99)


def make_conditional(**overrides):
    base = dict(
        psi_nr={1: 0.45, 2: 0.45, 3: 0.33, 4: 0.33},
        psi_r={1: 0.69, -1: 0.58},
        resp_rate={1: 0.565, -1: 0.336},
        pretest_mean=0.4,
        rho_marginal=0.6,
    )
    base.update(overrides)
    return ConditionalScenario(**base)


class TestAdaptiveInterventions:
    def test_canonical_order(self):
        assert [(ai.a1, ai.a2) for ai in AI_ORDER] == [(1, 1), (1, -1), (-1, 1), (-1, -1)]
        assert [ai.index for ai in AI_ORDER] == [1, 2, 3, 4]

    def test_from_index_round_trip(self):
        for i in (1, 2, 3, 4):
            assert AdaptiveIntervention.from_index(i).index == i
        with pytest.raises(ValueError):
            AdaptiveIntervention.from_index(0)
        with pytest.raises(ValueError):
            AdaptiveIntervention.from_index(5)

    def test_arm_codes_validated(self):
        with pytest.raises(ValueError):
            AdaptiveIntervention(0, 1)
        with pytest.raises(ValueError):
            AdaptiveIntervention(1, 2)

    def test_str_labels(self):
        assert str(AdaptiveIntervention(1, -1)) == "(+1,-1)"
        assert str(AdaptiveIntervention(-1, 1)) == "(-1,+1)"

    def test_cells_for_ai(self):
        assert cells_for_ai(AdaptiveIntervention(1, 1)) == ("D", "E")
        assert cells_for_ai(AdaptiveIntervention(1, -1)) == ("D", "F")
        assert cells_for_ai(AdaptiveIntervention(-1, 1)) == ("A", "B")
        assert cells_for_ai(AdaptiveIntervention(-1, -1)) == ("A", "C")

    def test_shared_responder_cell_distinct_nonresponder_cells(self):
        pairs = [cells_for_ai(ai) for ai in AI_ORDER]
        for ai, (resp, _) in zip(AI_ORDER, pairs):
            partner = next(b for b in AI_ORDER if b.a1 == ai.a1 and b != ai)
            assert cells_for_ai(partner)[0] == resp
        nonresp = [nr for _, nr in pairs]
        assert len(set(nonresp)) == 4

    def test_ai_for_cell_inverts_membership(self):
        assert ai_for_cell("A") == (AdaptiveIntervention(-1, 1), AdaptiveIntervention(-1, -1))
        assert ai_for_cell("D") == (AdaptiveIntervention(1, 1), AdaptiveIntervention(1, -1))
        assert ai_for_cell("B") == (AdaptiveIntervention(-1, 1),)
        assert ai_for_cell("F") == (AdaptiveIntervention(1, -1),)
        for cell in "ABCDEF":
            for ai in ai_for_cell(cell):
                assert cell in cells_for_ai(ai)


class TestEffectScales:
    def test_marginalize_examples(self):
        assert marginalize(0.3, 0.5, 0.0) == pytest.approx(0.3)
        assert marginalize(0.3, 0.5, 1.0) == pytest.approx(0.5)
        assert marginalize(0.3, 0.5, 0.45) == pytest.approx(0.39)

    @given(psi0=probs, psi1=probs, r=st.floats(min_value=0.0, max_value=1.0))
    @settings(max_examples=80, derandomize=True)
    def test_marginalize_stays_between_pieces(self, psi0, psi1, r):
        mu = marginalize(psi0, psi1, r)
        assert min(psi0, psi1) - 1e-12 <= mu <= max(psi0, psi1) + 1e-12

    @given(psi0=probs, psi1=probs, r1=probs, r2=probs)
    @settings(max_examples=80, derandomize=True)
    def test_marginalize_monotone_in_response_rate(self, psi0, psi1, r1, r2):
        lo, hi = sorted((r1, r2))
        diff = marginalize(psi0, psi1, hi) - marginalize(psi0, psi1, lo)
        if psi1 >= psi0:
            assert diff >= -1e-12
        else:
            assert diff <= 1e-12

    def test_marginalize_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            marginalize(-0.1, 0.5, 0.5)
        with pytest.raises(ValueError):
            marginalize(0.3, 0.5, 1.5)

    def test_log_odds_ratio_values(self):
        assert odds_ratio(0.55, 0.45) == pytest.approx(1.493827, abs=1e-6)
        assert log_odds_ratio(0.59, 0.42) == pytest.approx(0.686739, abs=1e-6)
        assert log_odds_ratio(0.37, 0.37) == 0.0

    @given(a=probs, b=probs)
    @settings(max_examples=80, derandomize=True)
    def test_log_odds_ratio_antisymmetric(self, a, b):
        assert log_odds_ratio(a, b) == -log_odds_ratio(b, a)

    def test_log_odds_ratio_rejects_boundaries(self):
        with pytest.raises(ValueError):
            log_odds_ratio(0.0, 0.5)
        with pytest.raises(ValueError):
            log_odds_ratio(0.5, 1.0)


class TestContrastSpec:
    def test_default_compares_across_arms(self):
        assert (DEFAULT_CONTRAST.target, DEFAULT_CONTRAST.reference) == (2, 4)
        assert DEFAULT_CONTRAST.target_ai.a1 != DEFAULT_CONTRAST.reference_ai.a1

    def test_vector_layout(self):
        assert ContrastSpec(2, 4).vector() == (0.0, 1.0, 0.0, -1.0)
        assert ContrastSpec(2, 4).vector(include_pretest=True) == (0.0, 0.0, 1.0, 0.0, -1.0)
        assert ContrastSpec(4, 2).vector() == (0.0, -1.0, 0.0, 1.0)

    def test_rejects_bad_indices(self):
        with pytest.raises(ValueError):
            ContrastSpec(0, 4)
        with pytest.raises(ValueError):
            ContrastSpec(2, 5)
        with pytest.raises(ValueError):
            ContrastSpec(3, 3)

    def test_rejects_contrasts_within_one_arm(self):
        # AIs sharing a1 share responders; their difference is not the planned effect
        with pytest.raises(ValueError):
            ContrastSpec(1, 2)
        with pytest.raises(ValueError):
            ContrastSpec(3, 4)
        ContrastSpec(1, 3)
        ContrastSpec(2, 3)
        ContrastSpec(1, 4)


class TestScenarioValidation:
    def test_valid_scenario_passes(self):
        sc = make_conditional()
        assert list_violations(sc) == []
        assert validate_scenario(sc) is sc

    def test_responder_rate_must_not_depend_on_a2(self):
        sc = make_conditional(psi_r={1: 0.69, 2: 0.70, 3: 0.58, 4: 0.58})
        fields = {v.field: v.message for v in list_violations(sc)}
        assert fields["psi_r[a1=+1]"] == "responder mean must not depend on a2"
        assert "psi_r[a1=-1]" not in fields

    def test_boundary_probability_rejected(self):
        sc = make_conditional(psi_nr={1: 0.45, 2: 1.0, 3: 0.33, 4: 0.33})
        violations = list_violations(sc)
        assert any(v.field == "psi_nr[(+1,-1)]" for v in violations)

    def test_pretest_consistency(self):
        sc = make_conditional(pretest_mean=0.4, pretest_given_r=(0.30, 0.52))
        # implied mean = 0.5497*0.30 + 0.4503*0.52 is nowhere near 0.4
        assert any(v.field == "pretest" for v in list_violations(sc))
        rbar = 0.5 * (0.565 + 0.336)
        mean = (1 - rbar) * 0.30 + rbar * 0.52
        ok = make_conditional(pretest_mean=mean, pretest_given_r=(0.30, 0.52))
        assert list_violations(ok) == []

    def test_rho_range(self):
        assert any(v.field == "rho" for v in list_violations(make_conditional(rho_marginal=1.0)))
        assert any(v.field == "rho" for v in list_violations(make_conditional(rho_marginal=-0.2)))

    def test_missing_response_rate_reported_by_arm(self):
        sc = ConditionalScenario(
            psi_nr={1: 0.45, 2: 0.45, 3: 0.33, 4: 0.33},
            psi_r={1: 0.69, -1: 0.58},
            resp_rate={1: 0.565},
        )
        assert any(v.field == "resp_rate[-1]" for v in list_violations(sc))

    def test_validate_raises_with_all_violations(self):
        sc = make_conditional(
            psi_nr={1: 0.45, 2: 1.0, 3: 0.33, 4: 0.33}, rho_marginal=2.0)
        with pytest.raises(ScenarioValidationError) as exc:
            validate_scenario(sc)
        fields = {v.field for v in exc.value.violations}
        assert {"psi_nr[(+1,-1)]", "rho"} <= fields

    def test_marginal_scenario_validation(self):
        ok = MarginalScenario(mu={1: 0.59, 2: 0.59, 3: 0.42, 4: 0.42}, resp_rate=0.45)
        assert list_violations(ok) == []
        bad = MarginalScenario(mu={1: 0.59, 2: 0.59, 3: 0.42, 4: 1.0}, resp_rate=1.2)
        fields = {v.field for v in list_violations(bad)}
        assert "mu[(-1,-1)]" in fields
        assert "resp_rate" in fields


class TestScenarioAccessors:
    def test_implied_marginals(self):
        sc = make_conditional()
        ai2 = AdaptiveIntervention(1, -1)
        assert sc.mu(ai2) == pytest.approx((1 - 0.565) * 0.45 + 0.565 * 0.69)
        marg = sc.marginal()
        for ai in AI_ORDER:
            assert marg.mu_for_ai(ai) == pytest.approx(sc.mu(ai))
        assert marg.common_resp_rate() == pytest.approx(0.5 * (0.565 + 0.336))

    def test_psi_r_accepts_per_ai_keys(self):
        sc = make_conditional(psi_r={1: 0.69, 2: 0.69, 3: 0.58, 4: 0.58})
        assert list_violations(sc) == []
        assert sc.psi_r_for_arm(1) == pytest.approx(0.69)
        assert sc.psi_r_for_arm(-1) == pytest.approx(0.58)

    def test_rho_given_falls_back_to_marginal(self):
        sc = make_conditional(rho_marginal=0.6)
        assert sc.rho_given(0) == 0.6
        both = make_conditional(rho_marginal=0.6, rho_conditional={0: 0.59, 1: 0.57})
        assert both.rho_given(0) == 0.59
        assert both.rho_given(1) == 0.57


class TestDocuments:
    def doc_dict(self):
        return {
            "mode": "conditional",
            "cells": {"A": 0.58, "B": 0.33, "C": 0.33, "D": 0.69, "E": 0.45, "F": 0.45},
            "response_rates": {"plus_arm": 0.565, "minus_arm": 0.336},
            "pretest": {"mean": 0.4},
            "rho": 0.6,
            "contrast": {"target": 2, "reference": 4},
            "alpha": 0.05,
            "power": 0.80,
        }

    def test_conditional_round_trip(self):
        data = self.doc_dict()
        doc = document_from_dict(data)
        sc = doc.scenario
        assert isinstance(sc, ConditionalScenario)
        assert sc.psi_r_for_arm(-1) == 0.58
        assert sc.psi_nr_for_ai(AdaptiveIntervention(1, -1)) == 0.45
        assert sc.psi_nr_for_ai(AdaptiveIntervention(-1, 1)) == 0.33
        out = document_to_dict(doc)
        assert out == self.doc_dict()

    def test_marginal_round_trip(self):
        data = {
            "mode": "marginal",
            "marginals": {"plus_plus": 0.59, "plus_minus": 0.59,
                          "minus_plus": 0.42, "minus_minus": 0.42},
            "response_rates": {"common": 0.45},
            "rho": 0.0,
        }
        doc = document_from_dict(data)
        assert isinstance(doc.scenario, MarginalScenario)
        assert doc.scenario.resp_rate == 0.45
        assert doc.contrast == DEFAULT_CONTRAST
        again = document_from_dict(document_to_dict(doc))
        assert again.scenario == doc.scenario

    def test_marginals_accept_index_keys(self):
        sc = scenario_from_dict({
            "mode": "marginal",
            "marginals": {"1": 0.59, "2": 0.59, "3": 0.42, "4": 0.42},
            "response_rates": {"common": 0.45},
        })
        assert sc.mu_for_ai(AdaptiveIntervention(1, 1)) == 0.59

    def test_errors_carry_field_paths(self):
        bad = self.doc_dict()
        del bad["cells"]["E"]
        with pytest.raises(ScenarioValidationError) as exc:
            document_from_dict(bad)
        assert exc.value.violations[0].field == "cells.E"

        bad = self.doc_dict()
        bad["mode"] = "hybrid"
        with pytest.raises(ScenarioValidationError) as exc:
            document_from_dict(bad)
        assert exc.value.violations[0].field == "mode"

        bad = self.doc_dict()
        bad["cells"]["A"] = "high"
        with pytest.raises(ScenarioValidationError) as exc:
            document_from_dict(bad)
        assert exc.value.violations[0].field == "cells.A"

        bad = self.doc_dict()
        bad["alpha"] = 1.5
        with pytest.raises(ScenarioValidationError) as exc:
            document_from_dict(bad)
        assert exc.value.violations[0].field == "alpha"

        bad = self.doc_dict()
        bad["contrast"] = {"target": 1, "reference": 2}
        with pytest.raises(ScenarioValidationError) as exc:
            document_from_dict(bad)
        assert exc.value.violations[0].field == "contrast"

    def test_invalid_scenario_values_rejected_on_parse(self):
        bad = self.doc_dict()
        bad["cells"]["A"] = 1.0
        with pytest.raises(ScenarioValidationError) as exc:
            document_from_dict(bad)
        assert any(v.field == "psi_r[-1]" for v in exc.value.violations)

    def test_file_round_trip(self, tmp_path):
        doc = document_from_dict(self.doc_dict())
        path = tmp_path / "scenario.json"
        dump_document(doc, path)
        loaded = load_document(path)
        assert loaded == doc
        # canonical form is stable under a second serialization
        assert path.read_text() == canonical_json(document_to_dict(loaded))

    def test_load_rejects_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ScenarioValidationError) as exc:
            load_document(path)
        assert exc.value.violations[0].field == "document"

    def test_canonical_json_is_sorted_and_newline_terminated(self):
        text = canonical_json({"b": 1, "a": {"d": 2, "c": 3}})
        assert text.endswith("\n")
        assert text.index('"a"') < text.index('"b"')
        assert json.loads(text) == {"a": {"c": 3, "d": 2}, "b": 1}

    def test_document_defaults(self):
        data = self.doc_dict()
        for key in ("contrast", "alpha", "power"):
            del data[key]
        doc = document_from_dict(data)
        assert doc.contrast == DEFAULT_CONTRAST
        assert doc.alpha == 0.05
        assert doc.power == 0.80
