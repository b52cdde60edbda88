"""Command-line driver for planning, simulation studies, and the service.

Every output is self-describing: the header echoes the scenario path, the
resolved method, the seed, and every default that shaped the run, so an
artifact can be reproduced from its own text. Exit codes: 2 invalid input,
3 null effect, 4 simulation failure, 5 serve failure.
"""
from __future__ import annotations

import json
import socket
import sys
from pathlib import Path

import click

from .design import (
    DEFAULT_CONTRAST,
    ConditionalScenario,
    ContrastSpec,
    ScenarioValidationError,
    canonical_json,
    document_from_dict,
)
from .experiments import (
    DEFAULT_SEED,
    GENERATIVE_GRID,
    GRID_ROW_ORDER,
    SimulationFailureError,
    estimate_power,
    find_sample_size,
    run_table3,
    run_table4,
    run_table5,
)
from .formulas import NullEffectError, TestSpec, inflate_for_attrition, plan_n, predicted_power
from .gee import ModelSpec

EXIT_INVALID = 2
EXIT_NULL_EFFECT = 3
EXIT_SIMULATION = 4
EXIT_SERVE = 5

_MODEL_TOKENS = {
    "one-wave": lambda working: ModelSpec.one_wave(),
    "two-wave": lambda working: ModelSpec.two_wave(working),
    "covariate": lambda working: ModelSpec.covariate_adjusted(),
    "piecewise": lambda working: ModelSpec.piecewise(working),
}


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_document(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        _fail(EXIT_INVALID, f"cannot read scenario file {path}: {exc}")
    try:
        payload = json.loads(text)
    except ValueError as exc:
        _fail(EXIT_INVALID, f"scenario file {path} is not valid JSON: {exc}")
    try:
        return document_from_dict(payload)
    except ScenarioValidationError as exc:
        lines = "; ".join(f"{v.field}: {v.message}" for v in exc.violations)
        _fail(EXIT_INVALID, f"invalid scenario in {path}: {lines}")
    except (TypeError, KeyError, ValueError) as exc:
        _fail(EXIT_INVALID, f"invalid scenario document in {path}: {exc}")


def _resolve_test(doc, alpha, power):
    resolved_alpha = alpha if alpha is not None else doc.alpha
    resolved_power = power if power is not None else doc.power
    try:
        return TestSpec(alpha=resolved_alpha, power=resolved_power)
    except ValueError as exc:
        _fail(EXIT_INVALID, str(exc))


def _echo_header(title: str, pairs):
    click.echo(title)
    for key, value in pairs:
        click.echo(f"  {key}: {value}")


def _echo_intermediates(inter: dict):
    scalars = {k: v for k, v in inter.items() if isinstance(v, (int, float, str, bool))}
    for key in sorted(scalars):
        value = scalars[key]
        click.echo(f"  {key}: {value:.6f}" if isinstance(value, float) else f"  {key}: {value}")
    per_ai = inter.get("per_ai")
    if isinstance(per_ai, dict):
        for ai_label in sorted(per_ai):
            vals = per_ai[ai_label]
            parts = ", ".join(f"{k}={v:.6f}" for k, v in sorted(vals.items())
                              if isinstance(v, float))
            click.echo(f"  {ai_label}: {parts}")


@click.group()
@click.version_option(package_name="smartb", message="%(version)s")
def main():
    """Planning and verification tools for two-stage adaptive trials with
    binary outcomes."""


@main.command("n")
@click.option("--scenario", "scenario_path", required=True, type=click.Path(),
              help="Scenario document (JSON).")
@click.option("--method", type=click.Choice(["cpb", "mpb"]), default="cpb", show_default=True)
@click.option("--waves", type=click.Choice(["1", "2"]), default="1", show_default=True)
@click.option("--alpha", type=float, default=None, help="Override document alpha.")
@click.option("--power", type=float, default=None, help="Override document power.")
@click.option("--attrition", type=float, default=None,
              help="Inflate n for an expected dropout fraction in [0, 1).")
@click.option("--conditional-moments", type=click.Choice(["adjusted", "cell"]),
              default="adjusted", show_default=True,
              help="Second-moment convention for the two-wave conditional method.")
@click.option("--format", "fmt", type=click.Choice(["table", "json"]),
              default="table", show_default=True)
def n_command(scenario_path, method, waves, alpha, power, attrition, conditional_moments, fmt):
    """Required sample size from the closed-form planning formulas."""
    doc = _load_document(scenario_path)
    spec = _resolve_test(doc, alpha, power)
    waves = int(waves)
    if attrition is not None and not 0.0 <= attrition < 1.0:
        _fail(EXIT_INVALID, f"attrition must lie in [0, 1), got {attrition}")
    try:
        result = plan_n(doc.scenario, doc.contrast, method, waves, spec=spec,
                        conditional_moments=conditional_moments)
    except NullEffectError as exc:
        _fail(EXIT_NULL_EFFECT, str(exc))
    except ScenarioValidationError as exc:
        _fail(EXIT_INVALID, "; ".join(f"{v.field}: {v.message}" for v in exc.violations))
    payload = result.to_dict()
    if attrition is not None:
        payload["attrition"] = attrition
        payload["n_inflated"] = inflate_for_attrition(result.n, attrition)
    if fmt == "json":
        click.echo(canonical_json(payload), nl=False)
        return
    _echo_header("sample size", [
        ("scenario", scenario_path),
        ("method", result.method),
        ("contrast", f"{doc.contrast.target_ai} vs {doc.contrast.reference_ai}"),
        ("alpha", f"{spec.alpha:.3f}"),
        ("target power", f"{spec.power:.3f}"),
        ("delta", f"{result.delta:.6f}"),
        ("sigma2_delta", f"{result.sigma2_delta:.6f}"),
        ("n_raw", f"{result.n_raw:.4f}"),
        ("n", result.n),
    ])
    if attrition is not None:
        click.echo(f"  n with attrition {attrition:g}: {payload['n_inflated']}")
    _echo_intermediates(result.intermediates)


@main.command("power")
@click.option("--scenario", "scenario_path", required=True, type=click.Path())
@click.option("--n", "n_value", required=True, type=int, help="Participants enrolled.")
@click.option("--method", type=click.Choice(["cpb", "mpb"]), default="cpb", show_default=True)
@click.option("--waves", type=click.Choice(["1", "2"]), default="1", show_default=True)
@click.option("--alpha", type=float, default=None, help="Override document alpha.")
@click.option("--conditional-moments", type=click.Choice(["adjusted", "cell"]),
              default="adjusted", show_default=True)
@click.option("--format", "fmt", type=click.Choice(["table", "json"]),
              default="table", show_default=True)
def power_command(scenario_path, n_value, method, waves, alpha, conditional_moments, fmt):
    """Predicted power at a given sample size."""
    doc = _load_document(scenario_path)
    resolved_alpha = alpha if alpha is not None else doc.alpha
    if not 0.0 < resolved_alpha < 1.0:
        _fail(EXIT_INVALID, f"alpha must lie in (0, 1), got {resolved_alpha}")
    if n_value < 2:
        _fail(EXIT_INVALID, f"--n must be at least 2, got {n_value}")
    try:
        result = predicted_power(doc.scenario, n_value, doc.contrast, method, int(waves),
                                 alpha=resolved_alpha, conditional_moments=conditional_moments)
    except ScenarioValidationError as exc:
        _fail(EXIT_INVALID, "; ".join(f"{v.field}: {v.message}" for v in exc.violations))
    if fmt == "json":
        click.echo(canonical_json(result.to_dict()), nl=False)
        return
    _echo_header("predicted power", [
        ("scenario", scenario_path),
        ("method", result.method),
        ("contrast", f"{doc.contrast.target_ai} vs {doc.contrast.reference_ai}"),
        ("alpha", f"{resolved_alpha:.3f}"),
        ("n", n_value),
        ("delta", f"{result.delta:.6f}"),
        ("sigma2_delta", f"{result.sigma2_delta:.6f}"),
        ("power", f"{result.power:.6f}"),
    ])
    _echo_intermediates(result.intermediates)


def _parse_row(row: str):
    try:
        parts = [float(v) for v in row.split(",")]
        key = (parts[0], parts[1])
    except (ValueError, IndexError):
        _fail(EXIT_INVALID, f"--row expects 'pretest_corr,odds_ratio', got {row!r}")
    if key not in GENERATIVE_GRID:
        rows = ", ".join(f"{a:g},{b:g}" for a, b in GRID_ROW_ORDER)
        _fail(EXIT_INVALID, f"unknown generative row {row!r}; available: {rows}")
    return GENERATIVE_GRID[key]


def _resolve_gen(scenario_path, row):
    if (scenario_path is None) == (row is None):
        _fail(EXIT_INVALID, "exactly one of --scenario or --row is required")
    if row is not None:
        return _parse_row(row)
    doc = _load_document(scenario_path)
    scenario = doc.scenario
    if not isinstance(scenario, ConditionalScenario):
        _fail(EXIT_INVALID, "simulation requires a conditional scenario")
    if scenario.pretest_mean is None:
        _fail(EXIT_INVALID, "simulation requires a pretest distribution (pretest.mean)")
    return scenario


def _parse_grid(grid: str):
    try:
        values = [int(v) for v in grid.split(",")]
    except ValueError:
        _fail(EXIT_INVALID, f"--grid expects comma-separated integers, got {grid!r}")
    return values


def _write_outputs(doc, out_base: str, fmt: str):
    base = Path(out_base)
    base.parent.mkdir(parents=True, exist_ok=True)
    json_path = base.with_suffix(".json")
    json_path.write_text(doc.to_json(), encoding="utf-8")
    paths = [json_path]
    if fmt == "csv":
        table_path = base.with_suffix(".csv")
        table_path.write_text(doc.to_csv(), encoding="utf-8")
        paths.append(table_path)
    else:
        table_path = base.with_suffix(".txt")
        table_path.write_text(doc.to_text(), encoding="utf-8")
        paths.append(table_path)
    return paths


@main.command("simulate")
@click.argument("kind", type=click.Choice(["power", "samplesize", "table3", "table4", "table5"]))
@click.option("--scenario", "scenario_path", type=click.Path(), default=None,
              help="Conditional scenario to simulate (power/samplesize).")
@click.option("--row", type=str, default=None,
              help="Bundled generative row as 'pretest_corr,odds_ratio' (power/samplesize).")
@click.option("--model", type=click.Choice(sorted(_MODEL_TOKENS)), default="covariate",
              show_default=True, help="Analysis model (power/samplesize).")
@click.option("--working", type=click.Choice(["independence", "exchangeable", "ar1"]),
              default="independence", show_default=True)
@click.option("--n", "n_value", type=int, default=300, show_default=True,
              help="Sample size (power).")
@click.option("--reps", type=int, default=None,
              help="Replicates per estimate (power/table: 2000; samplesize: 500/point).")
@click.option("--seed", type=int, default=DEFAULT_SEED, show_default=True)
@click.option("--grid", type=str, default=None,
              help="Comma-separated sample sizes for the search (samplesize).")
@click.option("--target", type=float, default=0.80, show_default=True,
              help="Target power (samplesize).")
@click.option("--workers", type=int, default=None, help="Parallel worker processes.")
@click.option("--paper-scale", is_flag=True, default=False,
              help="Full-scale replicate counts for table runs.")
@click.option("--out", "out_base", type=click.Path(), default=None,
              help="Output base path; defaults to smartb-<kind> for table runs.")
@click.option("--format", "fmt", type=click.Choice(["table", "csv", "json"]),
              default="table", show_default=True)
def simulate_command(kind, scenario_path, row, model, working, n_value, reps, seed, grid,
                     target, workers, paper_scale, out_base, fmt):
    """Monte Carlo power, sample-size search, or a full reproduction grid."""
    if seed < 0:
        _fail(EXIT_INVALID, f"--seed must be non-negative, got {seed}")
    if reps is not None and reps < 1:
        _fail(EXIT_INVALID, f"--reps must be at least 1, got {reps}")
    if workers is not None and workers < 1:
        _fail(EXIT_INVALID, f"--workers must be at least 1, got {workers}")

    if kind in ("power", "samplesize"):
        gen = _resolve_gen(scenario_path, row)
        model_spec = _MODEL_TOKENS[model](working)
        try:
            if kind == "power":
                est = estimate_power(gen, model_spec, n=n_value,
                                     reps=reps if reps is not None else 2000,
                                     seed=seed, workers=workers)
                payload = est.to_dict()
                summary = (f"power {est.power:.4f} (mc se {est.mc_se:.4f}, "
                           f"{est.n_converged}/{est.reps} converged) at n={est.n}")
            else:
                grid_values = _parse_grid(grid) if grid is not None else None
                search = find_sample_size(gen, model_spec, target=target, grid=grid_values,
                                          reps_per_point=reps if reps is not None else 500,
                                          seed=seed, workers=workers)
                payload = search.to_dict()
                summary = (f"n_hat {search.n_hat} (se {search.se_n:.1f}) "
                           f"for target power {search.target:g}")
        except (ValueError, ScenarioValidationError) as exc:
            _fail(EXIT_INVALID, str(exc))
        except SimulationFailureError as exc:
            _fail(EXIT_SIMULATION, str(exc))
        _echo_header(f"simulate {kind}", [
            ("seed", seed),
            ("model", payload["model_id"]),
            ("generative", payload["gen_id"]),
        ])
        click.echo(f"  {summary}")
        if out_base is not None:
            path = Path(out_base).with_suffix(".json")
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(canonical_json(payload), encoding="utf-8")
            click.echo(f"  wrote {path}")
        elif fmt == "json":
            click.echo(canonical_json(payload), nl=False)
        return

    runners = {"table3": run_table3, "table4": run_table4, "table5": run_table5}
    kwargs = {"seed": seed, "workers": workers, "paper_scale": paper_scale}
    if reps is not None:
        kwargs["reps_per_point" if kind == "table4" else "reps"] = reps
    try:
        doc = runners[kind](**kwargs)
    except SimulationFailureError as exc:
        _fail(EXIT_SIMULATION, str(exc))
    base = out_base if out_base is not None else f"smartb-{kind}"
    paths = _write_outputs(doc, base, fmt)
    _echo_header(f"simulate {kind}", [
        ("seed", seed),
        ("config", ", ".join(f"{k}={v}" for k, v in sorted(doc.config.items()))),
    ])
    for path in paths:
        click.echo(f"  wrote {path}")
    if fmt == "json":
        click.echo(doc.to_json(), nl=False)
    else:
        click.echo(doc.to_text(), nl=False)


@main.command("serve")
@click.option("--port", type=int, default=None,
              help="Port to listen on; 0 asks the OS for a free port. "
                   "Defaults to SMARTB_PORT or 8787.")
@click.option("--data-dir", type=click.Path(), default=None,
              help="Persistence directory. Defaults to SMARTB_DATA_DIR or ./data.")
@click.option("--host", type=str, default="127.0.0.1", show_default=True)
def serve_command(port, data_dir, host):
    """Run the HTTP planning service until interrupted."""
    import os

    import uvicorn

    from .service import DEFAULT_PORT, create_app

    if port is None:
        port = int(os.environ.get("SMARTB_PORT", DEFAULT_PORT))
    try:
        app = create_app(data_dir=data_dir)
    except OSError as exc:
        _fail(EXIT_SERVE, f"cannot prepare data directory: {exc}")
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind((host, port))
        sock.listen(128)
    except OSError as exc:
        sock.close()
        _fail(EXIT_SERVE, f"cannot listen on {host}:{port}: {exc}")
    actual_port = sock.getsockname()[1]
    click.echo(f"listening on http://{host}:{actual_port}")
    try:
        uvicorn.run(app, fd=sock.fileno(), log_level="warning")
    except (OSError, SystemExit) as exc:
        _fail(EXIT_SERVE, f"server stopped abnormally: {exc}")
    finally:
        sock.close()


if __name__ == "__main__":
    main()
