import { describe, expect, it } from "vitest";
import { ScenarioDraft } from "../src/types.js";
import { emptyDraft } from "../src/scenario.js";
import { isSubmittable, mapServerField, twoWaveBlockers, validateDraft } from "../src/validate.js";

function validConditional(): ScenarioDraft {
  const draft = emptyDraft("conditional");
  draft.cells = { A: 0.61, B: 0.31, C: 0.31, D: 0.71, E: 0.42, F: 0.42 };
  draft.responseRates = { plusArm: 0.56, minusArm: 0.34 };
  return draft;
}

function fields(draft: ScenarioDraft): string[] {
  return validateDraft(draft).map((e) => e.field);
}

describe("validateDraft", () => {
  it("accepts a complete conditional draft", () => {
    expect(validateDraft(validConditional())).toEqual([]);
    expect(isSubmittable(validConditional())).toBe(true);
  });

  it("flags a cell on the boundary of the unit interval", () => {
    const draft = validConditional();
    draft.cells.E = 1.0;
    const errors = validateDraft(draft);
    expect(errors).toHaveLength(1);
    expect(errors[0]!.field).toBe("cells.E");
    expect(errors[0]!.message).toContain("strictly between 0 and 1");
  });

  it("requires every cell and both arm response rates", () => {
    const draft = emptyDraft("conditional");
    const missing = fields(draft);
    for (const cell of ["A", "B", "C", "D", "E", "F"]) {
      expect(missing).toContain(`cells.${cell}`);
    }
    expect(missing).toContain("response_rates.plus_arm");
    expect(missing).toContain("response_rates.minus_arm");
  });

  it("checks the pretest mean against the responder split", () => {
    const draft = validConditional();
    draft.responseRates = { plusArm: 0.5, minusArm: 0.5 };
    draft.pretest = { mean: 0.4, givenResponder: 0.6, givenNonresponder: 0.3 };
    const errors = validateDraft(draft);
    expect(errors).toHaveLength(1);
    expect(errors[0]!.field).toBe("pretest.mean");
    expect(errors[0]!.message).toContain("0.4500000000");

    draft.pretest.mean = 0.45;
    expect(validateDraft(draft)).toEqual([]);
  });

  it("keeps the marginal correlation in [0, 1)", () => {
    const draft = validConditional();
    draft.rho = -0.2;
    expect(fields(draft)).toEqual(["rho"]);
    draft.rho = 1.0;
    expect(fields(draft)).toEqual(["rho"]);
    draft.rho = 0.0;
    expect(validateDraft(draft)).toEqual([]);
  });

  it("rejects contrasts that are not identified", () => {
    const draft = validConditional();
    draft.contrast = { target: 1, reference: 2 };
    expect(validateDraft(draft)[0]!.message).toContain("first-stage arm");
    draft.contrast = { target: 3, reference: 3 };
    expect(validateDraft(draft)[0]!.message).toContain("distinct");
    draft.contrast = { target: 0, reference: 5 };
    expect(validateDraft(draft)[0]!.message).toContain("indexed 1 through 4");
  });

  it("validates marginal mode with a common response rate", () => {
    const draft = emptyDraft("marginal");
    draft.marginals = {
      plus_plus: 0.58, plus_minus: 0.58, minus_plus: 0.41, minus_minus: 0.41,
    };
    draft.responseRates = { common: 0.45 };
    expect(validateDraft(draft)).toEqual([]);
    draft.responseRates = {};
    expect(fields(draft)).toContain("response_rates.plus_arm");
  });
});

describe("twoWaveBlockers", () => {
  it("names the missing two-wave inputs", () => {
    const draft = validConditional();
    expect(twoWaveBlockers(draft).map((e) => e.field)).toEqual(["pretest.mean", "rho"]);
    draft.pretest.mean = 0.4;
    draft.rho = 0.6;
    expect(twoWaveBlockers(draft)).toEqual([]);
  });
});

describe("mapServerField", () => {
  it("maps responder cells by arm", () => {
    expect(mapServerField("scenario.psi_r[+1]")).toBe("cells.D");
    expect(mapServerField("psi_r[-1]")).toBe("cells.A");
    expect(mapServerField("psi_r[a1=+1]")).toBe("cells.D");
  });

  it("maps non-responder cells by intervention", () => {
    expect(mapServerField("scenario.psi_nr[(+1,-1)]")).toBe("cells.F");
    expect(mapServerField("psi_nr[(+1,+1)]")).toBe("cells.E");
    expect(mapServerField("psi_nr[(-1,+1)]")).toBe("cells.B");
    expect(mapServerField("psi_nr[(-1,-1)]")).toBe("cells.C");
  });

  it("maps response rates and marginal means", () => {
    expect(mapServerField("resp_rate[-1]")).toBe("response_rates.minus_arm");
    expect(mapServerField("scenario.resp_rate[+1]")).toBe("response_rates.plus_arm");
    expect(mapServerField("mu[(-1,+1)]")).toBe("marginals.minus_plus");
    expect(mapServerField("mu[(+1,+1)]")).toBe("marginals.plus_plus");
  });

  it("passes through fields without a better match", () => {
    expect(mapServerField("alpha")).toBe("alpha");
    expect(mapServerField("scenario.pretest.mean")).toBe("pretest.mean");
  });
});
