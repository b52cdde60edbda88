// End-to-end checks against a real service process: the planner client must
// reproduce the CLI's numbers exactly, the rho=0 overlay must collapse the
// one- and two-wave marginal curves, and a launched simulation must land
// within three Monte Carlo standard errors of the matching formula value.
import { ChildProcess, execFileSync, spawn } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { PlannerClient } from "../src/api.js";
import { compareMethods, powerCurve } from "../src/comparison.js";
import { JobRecord, PowerSimResult, ScenarioDocument } from "../src/types.js";
import { simulationVerdict } from "../src/verdict.js";

const here = dirname(fileURLToPath(import.meta.url));
const fixturePath = join(here, "fixtures", "scenario-or2.json");
const fixture: ScenarioDocument = JSON.parse(readFileSync(fixturePath, "utf-8"));

let server: ChildProcess;
let dataDir: string;
let client: PlannerClient;

function startService(): Promise<string> {
  dataDir = mkdtempSync(join(tmpdir(), "planner-roundtrip-"));
  server = spawn("python3", ["-m", "smartb.cli", "serve", "--port", "0", "--data-dir", dataDir], {
    env: { ...process.env, PYTHONUNBUFFERED: "1" },
    stdio: ["ignore", "pipe", "pipe"],
  });
  return new Promise((resolve, reject) => {
    let seen = "";
    const timer = setTimeout(
      () => reject(new Error(`service did not start; output so far: ${seen}`)), 20_000);
    server.stdout!.on("data", (chunk: Buffer) => {
      seen += chunk.toString();
      const match = seen.match(/listening on (http:\/\/127\.0\.0\.1:\d+)/);
      if (match) {
        clearTimeout(timer);
        resolve(match[1]!);
      }
    });
    server.stderr!.on("data", (chunk: Buffer) => { seen += chunk.toString(); });
    server.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`service exited with code ${code}: ${seen}`));
    });
  });
}

function cliPlan(method: string, waves: number): { n: number; n_raw: number } {
  const out = execFileSync("python3", [
    "-m", "smartb.cli", "n",
    "--scenario", fixturePath,
    "--method", method,
    "--waves", String(waves),
    "--format", "json",
  ], { encoding: "utf-8" });
  return JSON.parse(out) as { n: number; n_raw: number };
}

beforeAll(async () => {
  const base = await startService();
  client = new PlannerClient(base);
}, 30_000);

afterAll(() => {
  server?.kill();
  if (dataDir) rmSync(dataDir, { recursive: true, force: true });
});

describe("planning round-trip", () => {
  it("reproduces the CLI sample sizes for all four method and wave combinations", async () => {
    const rows = await compareMethods(client, fixture, { alpha: 0.05, power: 0.8 });
    expect(rows).toHaveLength(4);
    for (const row of rows) {
      expect(row.plan, `${row.method} ${row.waves}w: ${row.blocked ?? row.error ?? ""}`).toBeDefined();
      const cli = cliPlan(row.method, row.waves);
      expect(row.plan!.n, `${row.method} ${row.waves}w`).toBe(cli.n);
      expect(row.plan!.n_raw).toBeCloseTo(cli.n_raw, 9);
    }
    const byCombo = Object.fromEntries(rows.map((r) => [`${r.method}-${r.waves}`, r.plan!.n]));
    expect(byCombo).toEqual({ "mpb-1": 430, "cpb-1": 430, "mpb-2": 273, "cpb-2": 273 });
  }, 60_000);

  it("stores and returns scenarios byte-identically", async () => {
    const stored = await client.putScenario("roundtrip-fixture", fixture);
    const fetched = await client.getScenario("roundtrip-fixture");
    expect(fetched).toBe(stored);
    expect(await client.listScenarios()).toContain("roundtrip-fixture");
  }, 30_000);
});

describe("power curve overlay", () => {
  it("collapses the one- and two-wave marginal curves at rho zero", async () => {
    // the single-wave formula applies each arm's own response rate while the
    // two-wave formula assumes one shared rate, so the exact coincidence is
    // stated for a scenario whose arms respond at the same rate
    const doc: ScenarioDocument = {
      ...fixture,
      response_rates: { plus_arm: 0.45, minus_arm: 0.45 },
      rho: 0.0,
    };
    const ns = [100, 150, 200, 250, 300, 350, 400, 450];
    const oneWave = await powerCurve(client, doc, "mpb", 1, ns);
    const twoWave = await powerCurve(client, doc, "mpb", 2, ns);
    expect(oneWave).toHaveLength(ns.length);
    for (let i = 0; i < ns.length; i++) {
      expect(Math.abs(oneWave[i]!.power - twoWave[i]!.power)).toBeLessThanOrEqual(1e-9);
    }
    // the same scenario with the observed correlation separates the curves
    const withRho = await powerCurve(client, { ...doc, rho: 0.6 }, "mpb", 2, [300]);
    expect(withRho[0]!.power).toBeGreaterThan(twoWave[ns.indexOf(300)]!.power + 0.05);
  }, 60_000);
});

describe("simulation launcher", () => {
  it("returns a verdict within three Monte Carlo standard errors of the formula", async () => {
    const record = await client.submitSimulation({
      kind: "power", scenario: fixture, n: 300, reps: 500, seed: 20260814, model: "auto",
    });
    expect(record.status).toBe("queued");
    expect(record.kind).toBe("power-sim");

    const progress: number[] = [];
    const result = await client.pollJob(record.id, {
      intervalMs: 100,
      timeoutMs: 120_000,
      onProgress: (r: JobRecord) => progress.push(r.progress),
    }) as PowerSimResult;
    expect(result.reps).toBe(500);
    expect(result.n_converged).toBe(500);
    expect(progress[progress.length - 1]).toBe(1);

    // the launched job fits the pretest-adjusted model, so the matching
    // closed-form prediction is the conditional two-wave one with cell moments
    const prediction = await client.predictPower({
      scenario: fixture, method: "cpb", waves: 2, n: 300, conditionalMoments: "cell",
    });
    expect(prediction.power).toBeCloseTo(0.84, 1);

    const verdict = simulationVerdict(result, prediction.power, 3);
    expect(verdict.mcSe).toBeGreaterThan(0);
    expect(verdict.gapSes).toBeLessThanOrEqual(3);
    expect(verdict.withinK).toBe(true);
  }, 120_000);

  it("returns the identical record and result on revisit", async () => {
    const record = await client.submitSimulation({
      kind: "power", scenario: fixture, n: 120, reps: 40, seed: 7, model: "auto",
    });
    const first = await client.pollJob(record.id, { intervalMs: 50, timeoutMs: 60_000 });
    const revisit = await client.getJobResult(record.id);
    expect(revisit).toEqual(first);
    const status = await client.getJob(record.id);
    expect(status.status).toBe("done");
    expect(status.progress).toBe(1);
  }, 90_000);
});
