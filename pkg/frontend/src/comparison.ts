// Side-by-side planning calls: every method/wave combination on one scenario.
import { PlannerClient, ServiceError } from "./api.js";
import { Method, PlanResponse, ScenarioDocument, Waves } from "./types.js";

export interface MethodPlan {
  method: Method;
  waves: Waves;
  label: string;
  plan?: PlanResponse;
  /** Set when the scenario lacks the inputs this combination needs; the
   *  service was not called. */
  blocked?: string;
  /** Set when the service rejected the request. */
  error?: string;
}

export interface CompareOptions {
  alpha?: number;
  power?: number;
  attrition?: number;
  contrast?: { target: number; reference: number };
  conditionalMoments?: "adjusted" | "cell";
}

const COMBOS: readonly { method: Method; waves: Waves; label: string }[] = [
  { method: "mpb", waves: 1, label: "marginal, posttest only" },
  { method: "cpb", waves: 1, label: "conditional, posttest only" },
  { method: "mpb", waves: 2, label: "marginal, pretest and posttest" },
  { method: "cpb", waves: 2, label: "conditional, pretest and posttest" },
];

/** Reasons a document cannot support two-wave planning, empty when it can. */
export function missingTwoWaveInputs(doc: ScenarioDocument): string[] {
  const reasons: string[] = [];
  const pretest = doc.pretest as Record<string, unknown> | undefined;
  if (typeof pretest?.mean !== "number") {
    reasons.push("pretest mean is required for two-wave planning");
  }
  if (typeof doc.rho !== "number") {
    reasons.push("pretest-posttest correlation is required for two-wave planning");
  }
  return reasons;
}

/** Plan the sample size under all four method/wave combinations. Combinations
 *  the scenario cannot support come back blocked; per-combination service
 *  rejections come back as errors so the rest of the grid still renders. */
export async function compareMethods(
  client: PlannerClient,
  doc: ScenarioDocument,
  options: CompareOptions = {},
): Promise<MethodPlan[]> {
  const blockers = missingTwoWaveInputs(doc);
  const rows = await Promise.all(COMBOS.map(async (combo): Promise<MethodPlan> => {
    if (combo.waves === 2 && blockers.length > 0) {
      return { ...combo, blocked: blockers.join("; ") };
    }
    try {
      const plan = await client.planSampleSize({
        scenario: doc,
        method: combo.method,
        waves: combo.waves,
        alpha: options.alpha,
        power: options.power,
        attrition: options.attrition,
        contrast: options.contrast,
        conditionalMoments: options.conditionalMoments,
      });
      return { ...combo, plan };
    } catch (err) {
      if (err instanceof ServiceError) {
        return { ...combo, error: err.message };
      }
      throw err;
    }
  }));
  return rows;
}

export interface CurvePoint {
  n: number;
  power: number;
}

/** Predicted power across a range of sample sizes for one method. */
export async function powerCurve(
  client: PlannerClient,
  doc: ScenarioDocument,
  method: Method,
  waves: Waves,
  ns: readonly number[],
  options: Pick<CompareOptions, "alpha" | "contrast" | "conditionalMoments"> = {},
): Promise<CurvePoint[]> {
  const points: CurvePoint[] = [];
  for (const n of ns) {
    const response = await client.predictPower({
      scenario: doc,
      method,
      waves,
      n,
      alpha: options.alpha,
      contrast: options.contrast,
      conditionalMoments: options.conditionalMoments,
    });
    points.push({ n, power: response.power });
  }
  return points;
}

/** Evenly spaced candidate sizes around a planned n, for curve plotting. */
export function curveGrid(center: number, span = 0.5, points = 11): number[] {
  const lo = Math.max(2, Math.round(center * (1 - span)));
  const hi = Math.round(center * (1 + span));
  const ns: number[] = [];
  for (let i = 0; i < points; i++) {
    ns.push(Math.round(lo + (i * (hi - lo)) / (points - 1)));
  }
  return [...new Set(ns)];
}
