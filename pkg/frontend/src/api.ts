// Typed client for the planning service /v1 endpoints.
import {
  JobRecord,
  Method,
  PlanResponse,
  PowerResponse,
  PowerSimResult,
  ScenarioDocument,
  Waves,
} from "./types.js";

export type FetchLike = (url: string, init?: {
  method?: string;
  headers?: Record<string, string>;
  body?: string;
}) => Promise<{ status: number; text(): Promise<string> }>;

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly body: unknown,
    message?: string,
  ) {
    super(message ?? `service responded with status ${status}`);
    this.name = "ServiceError";
  }
}

export interface PlanRequest {
  scenario: ScenarioDocument;
  method: Method;
  waves: Waves;
  alpha?: number;
  power?: number;
  attrition?: number;
  contrast?: { target: number; reference: number };
  conditionalMoments?: "adjusted" | "cell";
}

export interface PowerRequest {
  scenario: ScenarioDocument;
  method: Method;
  waves: Waves;
  n: number;
  alpha?: number;
  contrast?: { target: number; reference: number };
  conditionalMoments?: "adjusted" | "cell";
}

export interface SimulationRequest {
  kind: "power" | "samplesize";
  scenario?: ScenarioDocument;
  scenarioName?: string;
  n?: number;
  reps: number;
  grid?: number[];
  target?: number;
  seed?: number;
  model?: "auto" | { variant: string; working?: string; waves?: number[] };
}

function formulaBody(req: PlanRequest | PowerRequest): Record<string, unknown> {
  const body: Record<string, unknown> = {
    scenario: req.scenario,
    method: req.method,
    waves: req.waves,
  };
  if (req.alpha !== undefined) body.alpha = req.alpha;
  if (req.contrast !== undefined) body.contrast = req.contrast;
  if (req.conditionalMoments !== undefined) body.conditional_moments = req.conditionalMoments;
  return body;
}

export class PlannerClient {
  private readonly base: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl: string, fetchImpl?: FetchLike) {
    this.base = baseUrl.replace(/\/+$/, "");
    this.fetchImpl = fetchImpl ?? (globalThis.fetch as unknown as FetchLike);
    if (typeof this.fetchImpl !== "function") {
      throw new Error("no fetch implementation available");
    }
  }

  private async request(method: string, path: string, body?: unknown): Promise<unknown> {
    const text = await this.requestText(method, path, body);
    return text === "" ? null : JSON.parse(text);
  }

  /** Like request() but returns the raw body, preserving the service's
   *  canonical byte form (used for stored scenario round-trips). */
  private async requestText(method: string, path: string, body?: unknown): Promise<string> {
    const init: Parameters<FetchLike>[1] = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchImpl(this.base + path, init);
    const text = await response.text();
    if (response.status >= 400) {
      let parsed: unknown = text;
      try {
        parsed = JSON.parse(text);
      } catch {
        // keep the raw text when the body is not JSON
      }
      throw new ServiceError(response.status, parsed, describeFailure(response.status, parsed));
    }
    return text;
  }

  async planSampleSize(req: PlanRequest): Promise<PlanResponse> {
    const body = formulaBody(req);
    if (req.power !== undefined) body.power = req.power;
    if (req.attrition !== undefined) body.attrition = req.attrition;
    return await this.request("POST", "/v1/formula/samplesize", body) as PlanResponse;
  }

  async predictPower(req: PowerRequest): Promise<PowerResponse> {
    const body = formulaBody(req);
    body.n = req.n;
    return await this.request("POST", "/v1/formula/power", body) as PowerResponse;
  }

  async putScenario(name: string, doc: ScenarioDocument): Promise<string> {
    return await this.requestText("PUT", `/v1/scenarios/${name}`, doc);
  }

  async getScenario(name: string): Promise<string> {
    return await this.requestText("GET", `/v1/scenarios/${name}`);
  }

  async listScenarios(): Promise<string[]> {
    const body = await this.request("GET", "/v1/scenarios") as { scenarios: string[] };
    return body.scenarios;
  }

  async submitSimulation(req: SimulationRequest): Promise<JobRecord> {
    const body: Record<string, unknown> = { kind: req.kind, reps: req.reps };
    if (req.scenario !== undefined) body.scenario = req.scenario;
    if (req.scenarioName !== undefined) body.scenario_name = req.scenarioName;
    if (req.n !== undefined) body.n = req.n;
    if (req.grid !== undefined) body.grid = req.grid;
    if (req.target !== undefined) body.target = req.target;
    if (req.seed !== undefined) body.seed = req.seed;
    if (req.model !== undefined) body.model = req.model;
    return await this.request("POST", "/v1/simulate", body) as JobRecord;
  }

  async getJob(jobId: string): Promise<JobRecord> {
    return await this.request("GET", `/v1/jobs/${jobId}`) as JobRecord;
  }

  async getJobResult(jobId: string): Promise<Record<string, unknown>> {
    return await this.request("GET", `/v1/jobs/${jobId}/result`) as Record<string, unknown>;
  }

  /** Poll until the job leaves the queue, reporting progress along the way.
   *  Resolves with the result for done jobs and rejects for failed ones. */
  async pollJob(
    jobId: string,
    options: { intervalMs?: number; timeoutMs?: number; onProgress?: (record: JobRecord) => void } = {},
  ): Promise<PowerSimResult> {
    const interval = options.intervalMs ?? 250;
    const deadline = Date.now() + (options.timeoutMs ?? 600_000);
    for (;;) {
      const record = await this.getJob(jobId);
      options.onProgress?.(record);
      if (record.status === "done") {
        return await this.getJobResult(jobId) as unknown as PowerSimResult;
      }
      if (record.status === "failed") {
        throw new ServiceError(500, record, `simulation failed: ${record.error ?? "unknown error"}`);
      }
      if (Date.now() >= deadline) {
        throw new ServiceError(408, record, `timed out waiting for job ${jobId}`);
      }
      await new Promise((resolve) => setTimeout(resolve, interval));
    }
  }
}

function describeFailure(status: number, body: unknown): string {
  if (body && typeof body === "object") {
    const rec = body as Record<string, unknown>;
    if (rec.error === "validation" && Array.isArray(rec.fields)) {
      const parts = (rec.fields as { field: string; message: string }[])
        .map((f) => `${f.field}: ${f.message}`);
      return `validation failed (${parts.join("; ")})`;
    }
    if (typeof rec.message === "string") {
      return `${rec.error ?? status}: ${rec.message}`;
    }
  }
  return `service responded with status ${status}`;
}
