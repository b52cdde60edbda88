// Agreement check between a simulated power estimate and the formula value.
import { PowerSimResult } from "./types.js";

export interface Verdict {
  /** Simulated minus predicted power. */
  gap: number;
  /** The gap in Monte Carlo standard errors. */
  gapSes: number;
  /** Whether the gap stays within k standard errors. */
  withinK: boolean;
  k: number;
  mcSe: number;
}

/** Judge whether a simulation confirms the closed-form prediction. When the
 *  Monte Carlo SE is zero (power 0 or 1 in every replicate), only an exact
 *  match counts as agreement. */
export function simulationVerdict(sim: PowerSimResult, predicted: number, k = 3): Verdict {
  if (!(k > 0)) throw new Error(`k must be positive, got ${k}`);
  if (!(predicted >= 0 && predicted <= 1)) {
    throw new Error(`predicted power must lie in [0, 1], got ${predicted}`);
  }
  const gap = sim.power - predicted;
  const gapSes = sim.mc_se > 0 ? Math.abs(gap) / sim.mc_se : (gap === 0 ? 0 : Infinity);
  return {
    gap,
    gapSes,
    withinK: gapSes <= k,
    k,
    mcSe: sim.mc_se,
  };
}

export function describeVerdict(verdict: Verdict): string {
  const ses = Number.isFinite(verdict.gapSes) ? verdict.gapSes.toFixed(2) : "inf";
  const sign = verdict.gap >= 0 ? "+" : "";
  if (verdict.withinK) {
    return `consistent: simulated power differs by ${sign}${verdict.gap.toFixed(4)} `
      + `(${ses} MC standard errors, within ${verdict.k})`;
  }
  return `inconsistent: simulated power differs by ${sign}${verdict.gap.toFixed(4)} `
    + `(${ses} MC standard errors, beyond ${verdict.k})`;
}
