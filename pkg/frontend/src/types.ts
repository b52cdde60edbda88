// Shared domain and wire types for the planner.

export type CellKey = "A" | "B" | "C" | "D" | "E" | "F";
export type MarginalKey = "plus_plus" | "plus_minus" | "minus_plus" | "minus_minus";
export type Mode = "conditional" | "marginal";
export type Method = "cpb" | "mpb";
export type Waves = 1 | 2;

/** One embedded adaptive intervention: first-stage option and the
 *  second-stage option applied to non-responders. */
export interface AiComposition {
  index: 1 | 2 | 3 | 4;
  a1: 1 | -1;
  a2: 1 | -1;
  label: string;
  responderCell: CellKey;
  nonresponderCell: CellKey;
}

/** Canonical AI table shown inline in the editor: responders to an arm share
 *  one cell; each (a1, a2) pair of non-responders has its own. */
export const AI_TABLE: readonly AiComposition[] = [
  { index: 1, a1: 1, a2: 1, label: "(+1,+1)", responderCell: "D", nonresponderCell: "E" },
  { index: 2, a1: 1, a2: -1, label: "(+1,-1)", responderCell: "D", nonresponderCell: "F" },
  { index: 3, a1: -1, a2: 1, label: "(-1,+1)", responderCell: "A", nonresponderCell: "B" },
  { index: 4, a1: -1, a2: -1, label: "(-1,-1)", responderCell: "A", nonresponderCell: "C" },
] as const;

export const MARGINAL_FOR_AI: Record<number, MarginalKey> = {
  1: "plus_plus",
  2: "plus_minus",
  3: "minus_plus",
  4: "minus_minus",
};

/** Editable scenario state. Numeric fields are undefined while empty; the
 *  draft is submittable only once validation passes. */
export interface ScenarioDraft {
  mode: Mode;
  cells: Partial<Record<CellKey, number>>;
  marginals: Partial<Record<MarginalKey, number>>;
  responseRates: { plusArm?: number; minusArm?: number; common?: number };
  pretest: { mean?: number; givenResponder?: number; givenNonresponder?: number };
  rho?: number;
  rhoConditional?: { responder?: number; nonresponder?: number };
  contrast: { target: number; reference: number };
  alpha: number;
  power: number;
  /** Fields whose values were derived by a mode switch; shown read-only. */
  derived: string[];
}

export interface FieldError {
  field: string;
  message: string;
}

// ---------------------------------------------------------------------------
// wire types (service /v1)
// ---------------------------------------------------------------------------

export type ScenarioDocument = Record<string, unknown>;

export interface PlanResponse {
  method: string;
  n: number;
  n_raw: number;
  n_inflated?: number;
  attrition?: number;
  alpha: number;
  power: number;
  delta: number;
  sigma2_delta: number;
  intermediates: Record<string, unknown>;
}

export interface PowerResponse {
  method: string;
  power: number;
  n: number;
  alpha: number;
  delta: number;
  sigma2_delta: number;
  intermediates: Record<string, unknown>;
}

export type JobStatus = "queued" | "running" | "done" | "failed";

export interface JobRecord {
  id: string;
  kind: string;
  status: JobStatus;
  progress: number;
  error: string | null;
  config: Record<string, unknown>;
}

export interface PowerSimResult {
  power: number;
  mc_se: number;
  reps: number;
  n: number;
  alpha: number;
  n_converged: number;
  n_failed: number;
  n_rejected: number;
  base_seed: number[];
  gen_id: string;
  model_id: string;
  warning: string | null;
}

export interface ValidationBody {
  error: "validation";
  fields: FieldError[];
}
