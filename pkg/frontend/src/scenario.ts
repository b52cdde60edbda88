// Draft <-> document conversion and the conditional/marginal mode switch.
import {
  AI_TABLE,
  MARGINAL_FOR_AI,
  MarginalKey,
  Mode,
  ScenarioDocument,
  ScenarioDraft,
} from "./types.js";

export function emptyDraft(mode: Mode = "conditional"): ScenarioDraft {
  return {
    mode,
    cells: {},
    marginals: {},
    responseRates: {},
    pretest: {},
    contrast: { target: 2, reference: 4 },
    alpha: 0.05,
    power: 0.8,
    derived: [],
  };
}

/** Serialize a draft to the flat document the service and CLI accept.
 *  Call validateDraft first; this assumes required fields are present. */
export function toDocument(draft: ScenarioDraft): ScenarioDocument {
  const doc: ScenarioDocument = { mode: draft.mode };
  if (draft.mode === "conditional") {
    doc.cells = { ...draft.cells };
    doc.response_rates = {
      plus_arm: draft.responseRates.plusArm,
      minus_arm: draft.responseRates.minusArm,
    };
  } else {
    doc.marginals = { ...draft.marginals };
    doc.response_rates = draft.responseRates.common !== undefined
      ? { common: draft.responseRates.common }
      : {
          plus_arm: draft.responseRates.plusArm,
          minus_arm: draft.responseRates.minusArm,
        };
  }
  if (draft.pretest.mean !== undefined) {
    const pretest: Record<string, number> = { mean: draft.pretest.mean };
    if (draft.mode === "conditional") {
      if (draft.pretest.givenResponder !== undefined) {
        pretest.given_responder = draft.pretest.givenResponder;
      }
      if (draft.pretest.givenNonresponder !== undefined) {
        pretest.given_nonresponder = draft.pretest.givenNonresponder;
      }
    }
    doc.pretest = pretest;
  }
  if (draft.rho !== undefined) doc.rho = draft.rho;
  if (draft.mode === "conditional" && draft.rhoConditional
      && (draft.rhoConditional.responder !== undefined
          || draft.rhoConditional.nonresponder !== undefined)) {
    doc.rho_conditional = { ...draft.rhoConditional };
  }
  doc.contrast = { ...draft.contrast };
  doc.alpha = draft.alpha;
  doc.power = draft.power;
  return doc;
}

/** Load a stored document back into an editable draft. */
export function fromDocument(doc: ScenarioDocument): ScenarioDraft {
  const draft = emptyDraft(doc.mode as Mode);
  const rates = (doc.response_rates ?? {}) as Record<string, number>;
  if (draft.mode === "conditional") {
    draft.cells = { ...(doc.cells as Record<string, number> ?? {}) };
    draft.responseRates = { plusArm: rates.plus_arm, minusArm: rates.minus_arm };
  } else {
    draft.marginals = { ...(doc.marginals as Record<MarginalKey, number> ?? {}) };
    draft.responseRates = rates.common !== undefined
      ? { common: rates.common }
      : { plusArm: rates.plus_arm, minusArm: rates.minus_arm };
  }
  const pretest = doc.pretest as Record<string, number> | undefined;
  if (pretest) {
    draft.pretest = {
      mean: pretest.mean,
      givenResponder: pretest.given_responder,
      givenNonresponder: pretest.given_nonresponder,
    };
  }
  if (typeof doc.rho === "number") draft.rho = doc.rho;
  const rhoCond = doc.rho_conditional as Record<string, number> | undefined;
  if (rhoCond) {
    draft.rhoConditional = {
      responder: rhoCond.responder,
      nonresponder: rhoCond.nonresponder,
    };
  }
  const contrast = doc.contrast as { target: number; reference: number } | undefined;
  if (contrast) draft.contrast = { ...contrast };
  if (typeof doc.alpha === "number") draft.alpha = doc.alpha;
  if (typeof doc.power === "number") draft.power = doc.power;
  return draft;
}

/** Switch editing modes, carrying over every field meaningful in both and
 *  deriving what the target mode can display read-only. Conditional cells
 *  imply the AI marginals; the reverse is under-determined, so a switch to
 *  conditional leaves the cells to be entered. */
export function switchMode(draft: ScenarioDraft, to: Mode): ScenarioDraft {
  if (to === draft.mode) return draft;
  const next: ScenarioDraft = {
    ...emptyDraft(to),
    responseRates: { ...draft.responseRates },
    pretest: { mean: draft.pretest.mean },
    rho: draft.rho,
    contrast: { ...draft.contrast },
    alpha: draft.alpha,
    power: draft.power,
  };
  if (to === "marginal") {
    const derived: string[] = [];
    for (const ai of AI_TABLE) {
      const r = ai.a1 === 1 ? draft.responseRates.plusArm : draft.responseRates.minusArm;
      const psiR = draft.cells[ai.responderCell];
      const psiNr = draft.cells[ai.nonresponderCell];
      if (r !== undefined && psiR !== undefined && psiNr !== undefined) {
        const key = MARGINAL_FOR_AI[ai.index]!;
        next.marginals[key] = (1 - r) * psiNr + r * psiR;
        derived.push(`marginals.${key}`);
      }
    }
    next.derived = derived;
  } else {
    next.rhoConditional = draft.rhoConditional ? { ...draft.rhoConditional } : undefined;
    if (next.responseRates.common !== undefined) {
      next.responseRates = {
        plusArm: next.responseRates.common,
        minusArm: next.responseRates.common,
      };
    }
  }
  return next;
}
