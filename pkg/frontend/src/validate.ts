// Client-side mirror of the scenario rules, so the form can flag problems
// before a request is made. The service re-validates everything; this layer
// exists for immediate feedback, not authority.
import { AI_TABLE, CellKey, FieldError, MarginalKey, ScenarioDraft } from "./types.js";

const CELL_KEYS: CellKey[] = ["A", "B", "C", "D", "E", "F"];
const MARGINAL_KEYS: MarginalKey[] = ["plus_plus", "plus_minus", "minus_plus", "minus_minus"];
const PRETEST_CONSISTENCY_TOL = 1e-9;

function openUnit(errors: FieldError[], field: string, value: number | undefined,
                  what: string): value is number {
  if (value === undefined || Number.isNaN(value)) {
    errors.push({ field, message: `${what} is required` });
    return false;
  }
  if (!(value > 0 && value < 1)) {
    errors.push({ field, message: `${what} must lie strictly between 0 and 1` });
    return false;
  }
  return true;
}

function armFor(index: number): 1 | -1 {
  const ai = AI_TABLE.find((a) => a.index === index);
  return ai ? ai.a1 : 1;
}

export function validateDraft(draft: ScenarioDraft): FieldError[] {
  const errors: FieldError[] = [];

  if (draft.mode === "conditional") {
    for (const key of CELL_KEYS) {
      openUnit(errors, `cells.${key}`, draft.cells[key], `cell ${key}`);
    }
    openUnit(errors, "response_rates.plus_arm", draft.responseRates.plusArm,
             "response rate (+1 arm)");
    openUnit(errors, "response_rates.minus_arm", draft.responseRates.minusArm,
             "response rate (-1 arm)");
  } else {
    for (const key of MARGINAL_KEYS) {
      openUnit(errors, `marginals.${key}`, draft.marginals[key], `marginal ${key}`);
    }
    const { common, plusArm, minusArm } = draft.responseRates;
    if (common !== undefined) {
      openUnit(errors, "response_rates.common", common, "response rate");
    } else {
      openUnit(errors, "response_rates.plus_arm", plusArm, "response rate (+1 arm)");
      openUnit(errors, "response_rates.minus_arm", minusArm, "response rate (-1 arm)");
    }
  }

  const pre = draft.pretest;
  const needsPretest = pre.mean !== undefined || pre.givenResponder !== undefined
    || pre.givenNonresponder !== undefined;
  if (needsPretest) {
    openUnit(errors, "pretest.mean", pre.mean, "pretest mean");
    const hasSplit = pre.givenResponder !== undefined || pre.givenNonresponder !== undefined;
    if (hasSplit && draft.mode === "conditional") {
      const okR = openUnit(errors, "pretest.given_responder", pre.givenResponder,
                           "pretest mean among responders");
      const okN = openUnit(errors, "pretest.given_nonresponder", pre.givenNonresponder,
                           "pretest mean among non-responders");
      const { plusArm, minusArm } = draft.responseRates;
      if (okR && okN && pre.mean !== undefined
          && plusArm !== undefined && minusArm !== undefined) {
        const rBar = 0.5 * (plusArm + minusArm);
        const implied = (1 - rBar) * pre.givenNonresponder! + rBar * pre.givenResponder!;
        if (Math.abs(implied - pre.mean) > PRETEST_CONSISTENCY_TOL) {
          errors.push({
            field: "pretest.mean",
            message: `inconsistent with the responder split (implied ${implied.toFixed(10)})`,
          });
        }
      }
    }
  }

  if (draft.rho !== undefined && !(draft.rho >= 0 && draft.rho < 1)) {
    errors.push({ field: "rho", message: "correlation must lie in [0, 1)" });
  }
  const rc = draft.rhoConditional;
  if (rc) {
    for (const [key, value] of Object.entries(rc)) {
      if (value !== undefined && !(value > -1 && value < 1)) {
        errors.push({ field: `rho_conditional.${key}`, message: "correlation must lie in (-1, 1)" });
      }
    }
  }

  const { target, reference } = draft.contrast;
  if (![1, 2, 3, 4].includes(target) || ![1, 2, 3, 4].includes(reference)) {
    errors.push({ field: "contrast", message: "AIs are indexed 1 through 4" });
  } else if (target === reference) {
    errors.push({ field: "contrast", message: "contrast needs two distinct AIs" });
  } else if (armFor(target) === armFor(reference)) {
    errors.push({
      field: "contrast",
      message: "AIs sharing a first-stage arm are not identified for comparison",
    });
  }

  if (!(draft.alpha > 0 && draft.alpha < 1)) {
    errors.push({ field: "alpha", message: "alpha must lie strictly between 0 and 1" });
  }
  if (!(draft.power > 0 && draft.power < 1)) {
    errors.push({ field: "power", message: "target power must lie strictly between 0 and 1" });
  }

  return errors;
}

export function isSubmittable(draft: ScenarioDraft): boolean {
  return validateDraft(draft).length === 0;
}

/** Two-wave methods additionally need the pretest distribution and a
 *  marginal correlation; report which fields block them. */
export function twoWaveBlockers(draft: ScenarioDraft): FieldError[] {
  const errors: FieldError[] = [];
  if (draft.pretest.mean === undefined) {
    errors.push({ field: "pretest.mean", message: "required for two-wave planning" });
  }
  if (draft.rho === undefined) {
    errors.push({ field: "rho", message: "required for two-wave planning" });
  }
  return errors;
}

/** Map a service-side field path (e.g. "scenario.psi_r[a1=+1]") onto the
 *  closest form field so 400 responses can highlight inputs. */
export function mapServerField(field: string): string {
  let path = field.startsWith("scenario.") ? field.slice("scenario.".length) : field;
  const psiR = path.match(/^psi_r\[(?:a1=)?([+-]1)\]/);
  if (psiR) return psiR[1] === "+1" ? "cells.D" : "cells.A";
  const psiNr = path.match(/^psi_nr\[\(([+-]1),([+-]1)\)\]/);
  if (psiNr) {
    const ai = AI_TABLE.find((a) => a.a1 === Number(psiNr[1]) && a.a2 === Number(psiNr[2]));
    if (ai) return `cells.${ai.nonresponderCell}`;
  }
  const resp = path.match(/^resp_rate\[([+-]1)\]/);
  if (resp) return resp[1] === "+1" ? "response_rates.plus_arm" : "response_rates.minus_arm";
  const mu = path.match(/^mu\[\(([+-]1),([+-]1)\)\]/);
  if (mu) {
    const ai = AI_TABLE.find((a) => a.a1 === Number(mu[1]) && a.a2 === Number(mu[2]));
    if (ai) return `marginals.${ai.index === 1 ? "plus_plus" : ai.index === 2 ? "plus_minus" : ai.index === 3 ? "minus_plus" : "minus_minus"}`;
  }
  return path;
}
