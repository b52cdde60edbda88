// Single-page planner: scenario editor, method comparison, power curves, and
// a simulation launcher. Every displayed number comes from a service response;
// this file only collects inputs and renders what the service returns.
import { PlannerClient, ServiceError } from "./api.js";
import { compareMethods, curveGrid, powerCurve, CurvePoint, MethodPlan } from "./comparison.js";
import { emptyDraft, switchMode, toDocument } from "./scenario.js";
import { AI_TABLE, CellKey, FieldError, MARGINAL_FOR_AI, Method, Mode, ScenarioDraft, Waves } from "./types.js";
import { isSubmittable, validateDraft } from "./validate.js";
import { describeVerdict, simulationVerdict } from "./verdict.js";

interface AppState {
  draft: ScenarioDraft;
  errors: FieldError[];
  attrition: number;
  rhoOverride: number | null;
  comparison: MethodPlan[] | null;
  curves: { label: string; points: CurvePoint[] }[];
  rawResponses: string[];
  jobNote: string;
  jobProgress: number | null;
}

function debounce<A extends unknown[]>(fn: (...args: A) => void, ms: number): (...args: A) => void {
  let handle: ReturnType<typeof setTimeout> | undefined;
  return (...args: A) => {
    if (handle !== undefined) clearTimeout(handle);
    handle = setTimeout(() => fn(...args), ms);
  };
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  node.append(...children);
  return node;
}

function numberOrUndefined(raw: string): number | undefined {
  if (raw.trim() === "") return undefined;
  const value = Number(raw);
  return Number.isFinite(value) ? value : undefined;
}

export function mountPlanner(root: HTMLElement, client: PlannerClient): void {
  const state: AppState = {
    draft: emptyDraft("conditional"),
    errors: [],
    attrition: 0,
    rhoOverride: null,
    comparison: null,
    curves: [],
    rawResponses: [],
    jobNote: "",
    jobProgress: null,
  };

  const errorFor = (field: string): string =>
    state.errors.filter((e) => e.field === field).map((e) => e.message).join("; ");

  function numberField(
    label: string,
    field: string,
    value: number | undefined,
    onChange: (value: number | undefined) => void,
  ): HTMLElement {
    const input = el("input", {
      type: "number",
      step: "0.001",
      value: value === undefined ? "" : String(value),
      "data-field": field,
    });
    if (state.draft.derived.includes(field)) input.setAttribute("readonly", "readonly");
    input.addEventListener("input", () => {
      onChange(numberOrUndefined(input.value));
      state.errors = validateDraft(state.draft);
      renderErrors();
    });
    const message = el("span", { class: "field-error", "data-error-for": field }, errorFor(field));
    return el("label", { class: "field" }, `${label} `, input, message);
  }

  function renderErrors(): void {
    for (const span of root.querySelectorAll<HTMLElement>("[data-error-for]")) {
      span.textContent = errorFor(span.dataset.errorFor ?? "");
    }
    const compute = root.querySelector<HTMLButtonElement>("#compute");
    if (compute) compute.disabled = !isSubmittable(state.draft);
  }

  function editorSection(): HTMLElement {
    const d = state.draft;
    const section = el("section", { id: "editor" }, el("h2", {}, "Scenario"));

    const toggle = el("div", { class: "mode-toggle" });
    for (const mode of ["conditional", "marginal"] as Mode[]) {
      const button = el("button", { type: "button" }, mode);
      if (mode === d.mode) button.setAttribute("disabled", "disabled");
      button.addEventListener("click", () => {
        state.draft = switchMode(state.draft, mode);
        state.errors = validateDraft(state.draft);
        render();
      });
      toggle.append(button);
    }
    section.append(toggle);

    if (d.mode === "conditional") {
      const table = el("table", { class: "ai-table" },
        el("tr", {}, el("th", {}, "AI"), el("th", {}, "responders"), el("th", {}, "non-responders")));
      for (const ai of AI_TABLE) {
        table.append(el("tr", {},
          el("td", {}, ai.label),
          el("td", {}, `cell ${ai.responderCell}`),
          el("td", {}, `cell ${ai.nonresponderCell}`)));
      }
      section.append(table);
      const cellGrid = el("div", { class: "cells" });
      for (const cell of ["A", "B", "C", "D", "E", "F"] as CellKey[]) {
        cellGrid.append(numberField(`cell ${cell}`, `cells.${cell}`, d.cells[cell],
          (v) => { state.draft.cells[cell] = v; }));
      }
      section.append(cellGrid,
        numberField("response rate, +1 arm", "response_rates.plus_arm",
          d.responseRates.plusArm, (v) => { state.draft.responseRates.plusArm = v; }),
        numberField("response rate, -1 arm", "response_rates.minus_arm",
          d.responseRates.minusArm, (v) => { state.draft.responseRates.minusArm = v; }));
    } else {
      const grid = el("div", { class: "marginals" });
      for (const ai of AI_TABLE) {
        const marginalKey = MARGINAL_FOR_AI[ai.index]!;
        grid.append(numberField(`mean, AI ${ai.label}`, `marginals.${marginalKey}`,
          d.marginals[marginalKey], (v) => { state.draft.marginals[marginalKey] = v; }));
      }
      section.append(grid,
        numberField("response rate (common)", "response_rates.common",
          d.responseRates.common, (v) => { state.draft.responseRates.common = v; }));
    }

    section.append(
      numberField("pretest mean", "pretest.mean", d.pretest.mean,
        (v) => { state.draft.pretest.mean = v; }),
      numberField("pretest-posttest correlation", "rho", d.rho,
        (v) => { state.draft.rho = v; }),
      numberField("alpha", "alpha", d.alpha,
        (v) => { state.draft.alpha = v ?? 0.05; }),
      numberField("target power", "power", d.power,
        (v) => { state.draft.power = v ?? 0.8; }),
    );

    const attrition = el("input", {
      type: "range", min: "0", max: "0.5", step: "0.05", value: String(state.attrition),
    });
    const attritionLabel = el("span", {}, ` attrition ${state.attrition.toFixed(2)}`);
    attrition.addEventListener("input", () => {
      state.attrition = Number(attrition.value);
      attritionLabel.textContent = ` attrition ${state.attrition.toFixed(2)}`;
      scheduleCompute();
    });
    section.append(el("div", { class: "attrition" }, attrition, attritionLabel));

    const compute = el("button", { type: "button", id: "compute" }, "compute");
    compute.disabled = !isSubmittable(state.draft);
    compute.addEventListener("click", () => void runComparison());
    const save = el("button", { type: "button", id: "save" }, "save scenario");
    save.addEventListener("click", () => void saveScenario());
    const exportBtn = el("button", { type: "button", id: "export" }, "export file");
    exportBtn.addEventListener("click", exportScenario);
    section.append(el("div", { class: "actions" }, compute, " ", save, " ", exportBtn));
    return section;
  }

  async function runComparison(): Promise<void> {
    const doc = toDocument(state.draft);
    try {
      state.comparison = await compareMethods(client, doc, {
        alpha: state.draft.alpha,
        power: state.draft.power,
        attrition: state.attrition > 0 ? state.attrition : undefined,
      });
      state.rawResponses = state.comparison
        .filter((row) => row.plan)
        .map((row) => JSON.stringify(row.plan, null, 2));
      await refreshCurves();
    } catch (err) {
      state.jobNote = err instanceof Error ? err.message : String(err);
    }
    render();
  }

  const scheduleCompute = debounce(() => {
    if (isSubmittable(state.draft)) void runComparison();
  }, 300);

  async function refreshCurves(): Promise<void> {
    const planned = state.comparison?.find((row) => row.plan)?.plan?.n ?? 300;
    const ns = curveGrid(planned);
    const doc = toDocument(state.draft);
    if (state.rhoOverride !== null) doc.rho = state.rhoOverride;
    const curves: { label: string; points: CurvePoint[] }[] = [];
    const combos: { method: Method; waves: Waves; label: string }[] = [
      { method: "mpb", waves: 1, label: "MPB one-wave" },
      { method: "mpb", waves: 2, label: "MPB two-wave" },
    ];
    for (const combo of combos) {
      if (combo.waves === 2 && (doc.pretest === undefined || doc.rho === undefined)) continue;
      try {
        curves.push({
          label: combo.label,
          points: await powerCurve(client, doc, combo.method, combo.waves, ns,
            { alpha: state.draft.alpha }),
        });
      } catch (err) {
        if (!(err instanceof ServiceError)) throw err;
      }
    }
    state.curves = curves;
  }

  function comparisonSection(): HTMLElement {
    const section = el("section", { id: "comparison" }, el("h2", {}, "Required sample size"));
    if (!state.comparison) {
      section.append(el("p", {}, "enter a scenario and press compute"));
      return section;
    }
    const table = el("table", { class: "comparison" },
      el("tr", {}, el("th", {}, "method"), el("th", {}, "n"), el("th", {}, "with attrition")));
    for (const row of state.comparison) {
      const n = row.plan ? String(row.plan.n) : (row.blocked ?? row.error ?? "");
      const inflated = row.plan?.n_inflated !== undefined ? String(row.plan.n_inflated) : "";
      table.append(el("tr", { "data-method": `${row.method}-${row.waves}w` },
        el("td", {}, row.label), el("td", {}, n), el("td", {}, inflated)));
    }
    const inspector = el("details", {},
      el("summary", {}, "raw responses"),
      el("pre", {}, state.rawResponses.join("\n\n")));
    section.append(table, inspector);
    return section;
  }

  function curveSection(): HTMLElement {
    const section = el("section", { id: "curves" }, el("h2", {}, "Power vs n"));
    const rho = el("input", {
      type: "range", min: "0", max: "0.9", step: "0.05",
      value: String(state.rhoOverride ?? state.draft.rho ?? 0),
    });
    const label = el("span", {}, ` rho ${(state.rhoOverride ?? state.draft.rho ?? 0).toFixed(2)}`);
    rho.addEventListener("input", () => {
      state.rhoOverride = Number(rho.value);
      label.textContent = ` rho ${state.rhoOverride.toFixed(2)}`;
      scheduleCompute();
    });
    section.append(el("div", {}, rho, label));
    if (state.curves.length === 0) {
      section.append(el("p", {}, "curves appear after a comparison"));
      return section;
    }
    const width = 480;
    const height = 200;
    const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
    svg.setAttribute("width", String(width));
    svg.setAttribute("height", String(height));
    const allNs = state.curves.flatMap((c) => c.points.map((p) => p.n));
    const lo = Math.min(...allNs);
    const hi = Math.max(...allNs);
    for (const [index, curve] of state.curves.entries()) {
      const path = curve.points
        .map((p) => {
          const x = hi === lo ? width / 2 : ((p.n - lo) / (hi - lo)) * width;
          const y = height - p.power * height;
          return `${x.toFixed(1)},${y.toFixed(1)}`;
        })
        .join(" ");
      const line = document.createElementNS("http://www.w3.org/2000/svg", "polyline");
      line.setAttribute("points", path);
      line.setAttribute("fill", "none");
      line.setAttribute("stroke", index === 0 ? "#1f77b4" : "#d62728");
      line.setAttribute("data-curve", curve.label);
      svg.append(line);
    }
    section.append(svg);
    return section;
  }

  async function saveScenario(): Promise<void> {
    const name = (root.querySelector<HTMLInputElement>("#scenario-name")?.value ?? "").trim()
      || "draft";
    try {
      await client.putScenario(name, toDocument(state.draft));
      state.jobNote = `saved scenario ${name}`;
    } catch (err) {
      state.jobNote = err instanceof Error ? err.message : String(err);
    }
    render();
  }

  function exportScenario(): void {
    const text = JSON.stringify(toDocument(state.draft), null, 2);
    const blob = new Blob([text], { type: "application/json" });
    const link = el("a", { href: URL.createObjectURL(blob), download: "scenario.json" });
    link.click();
    URL.revokeObjectURL(link.href);
  }

  async function launchSimulation(reps: number, n: number, seed: number): Promise<void> {
    const doc = toDocument(state.draft);
    state.jobNote = "submitting simulation";
    state.jobProgress = 0;
    render();
    try {
      const record = await client.submitSimulation({
        kind: "power", scenario: doc, n, reps, seed, model: "auto",
      });
      const result = await client.pollJob(record.id, {
        onProgress: (r) => {
          state.jobProgress = r.progress;
          const bar = root.querySelector<HTMLElement>("#job-progress");
          if (bar) bar.style.width = `${Math.round(r.progress * 100)}%`;
        },
      });
      const prediction = await client.predictPower({
        scenario: doc,
        method: "cpb",
        waves: doc.pretest !== undefined && doc.rho !== undefined ? 2 : 1,
        n,
        alpha: state.draft.alpha,
        conditionalMoments: "cell",
      });
      const verdict = simulationVerdict(result, prediction.power);
      state.jobNote = describeVerdict(verdict);
      state.rawResponses = [JSON.stringify(result, null, 2), JSON.stringify(prediction, null, 2)];
    } catch (err) {
      state.jobNote = err instanceof Error ? err.message : String(err);
    }
    state.jobProgress = null;
    render();
  }

  function simulationSection(): HTMLElement {
    const section = el("section", { id: "simulate" }, el("h2", {}, "Verify by simulation"));
    const reps = el("input", { type: "number", id: "sim-reps", value: "500", min: "1" });
    const n = el("input", { type: "number", id: "sim-n", value: "300", min: "2" });
    const seed = el("input", { type: "number", id: "sim-seed", value: "1" });
    const name = el("input", { type: "text", id: "scenario-name", placeholder: "scenario name" });
    const launch = el("button", { type: "button", id: "launch" }, "launch");
    launch.addEventListener("click", () =>
      void launchSimulation(Number(reps.value), Number(n.value), Number(seed.value)));
    const progressOuter = el("div", { class: "progress" },
      el("div", { id: "job-progress", style: `width:${Math.round((state.jobProgress ?? 0) * 100)}%` }));
    section.append(
      el("div", {}, "reps ", reps, " n ", n, " seed ", seed, " ", name, " ", launch),
      progressOuter,
      el("p", { id: "job-note" }, state.jobNote),
    );
    return section;
  }

  function render(): void {
    root.replaceChildren(
      el("h1", {}, "SMART planner"),
      editorSection(),
      comparisonSection(),
      curveSection(),
      simulationSection(),
    );
    renderErrors();
  }

  render();
}

export function main(): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app mount point");
  const base = root.dataset.serviceUrl ?? window.location.origin;
  mountPlanner(root, new PlannerClient(base));
}
