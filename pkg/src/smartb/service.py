"""HTTP facade over the planning formulas and the Monte Carlo runners.

Synchronous formula endpoints wrap the closed-form calculators; simulation
runs go through a FIFO job queue executed by a single background worker.
Scenarios and completed job results are persisted as one JSON document per
item under a data directory, written atomically, so a restart loses nothing
that had finished. All JSON produced here is canonically serialized: same
request, same bytes.
"""
from __future__ import annotations

import json
import os
import queue
import re
import threading
import uuid
from contextlib import asynccontextmanager
from pathlib import Path
from typing import Optional

from fastapi import Body, FastAPI
from fastapi.responses import Response

from .design import (
    DEFAULT_CONTRAST,
    ConditionalScenario,
    ContrastSpec,
    ScenarioValidationError,
    canonical_json,
    document_from_dict,
    document_to_dict,
    scenario_from_dict,
)
from .experiments import (
    DEFAULT_SEED,
    SimulationFailureError,
    estimate_power,
    find_sample_size,
)
from .formulas import (
    NullEffectError,
    TestSpec,
    inflate_for_attrition,
    plan_n,
    predicted_power,
)
from .gee import ModelSpec

DEFAULT_DATA_DIR = "./data"
DEFAULT_PORT = 8787
DEFAULT_MAX_REPS = 20000
NAME_PATTERN = re.compile(r"[a-z0-9_-]{1,64}")

_METHODS = ("cpb", "mpb")
_WAVE_TOKENS = {1: 1, 2: 2, "1": 1, "2": 2, "onewave": 1, "twowave": 2}


class _RequestError(Exception):
    """Maps directly to an HTTP error response."""

    def __init__(self, status: int, payload: dict):
        super().__init__(payload.get("message", str(status)))
        self.status = status
        self.payload = payload


def _json(payload: dict, status: int = 200) -> Response:
    return Response(canonical_json(payload), status_code=status,
                    media_type="application/json")


def _validation_error(fields) -> _RequestError:
    return _RequestError(400, {
        "error": "validation",
        "fields": [{"field": f, "message": m} for f, m in fields],
    })


def _atomic_write(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# request parsing
# ---------------------------------------------------------------------------


def _parse_scenario_block(raw: dict, waves: int):
    if not isinstance(raw.get("scenario"), dict):
        raise _validation_error([("scenario", "a scenario object is required")])
    sdict = raw["scenario"]
    fields = []
    if waves == 2:
        if "rho" not in sdict:
            fields.append(("scenario.rho", "required for two-wave planning"))
        pretest = sdict.get("pretest")
        if not isinstance(pretest, dict) or "mean" not in pretest:
            fields.append(("scenario.pretest.mean", "required for two-wave planning"))
    if fields:
        raise _validation_error(fields)
    try:
        return scenario_from_dict(sdict)
    except ScenarioValidationError as exc:
        raise _validation_error([("scenario." + v.field, v.message) for v in exc.violations])
    except (TypeError, KeyError, ValueError) as exc:
        raise _validation_error([("scenario", str(exc))])


def _parse_common(raw: dict):
    errors = []
    method = raw.get("method", "cpb")
    if method not in _METHODS:
        errors.append(("method", f'must be one of {"|".join(_METHODS)}, got {method!r}'))
    waves = _WAVE_TOKENS.get(raw.get("waves", 1))
    if waves is None:
        errors.append(("waves", 'must be 1, 2, "onewave" or "twowave"'))
    alpha = raw.get("alpha", 0.05)
    if not (isinstance(alpha, (int, float)) and 0.0 < alpha < 1.0):
        errors.append(("alpha", "must lie in (0, 1)"))
    contrast = DEFAULT_CONTRAST
    if "contrast" in raw:
        c = raw["contrast"]
        try:
            contrast = ContrastSpec(int(c["target"]), int(c["reference"]))
        except (TypeError, KeyError, ValueError) as exc:
            errors.append(("contrast", str(exc)))
    moments = raw.get("conditional_moments", "adjusted")
    if moments not in ("adjusted", "cell"):
        errors.append(("conditional_moments", 'must be "adjusted" or "cell"'))
    if errors:
        raise _validation_error(errors)
    return method, waves, float(alpha), contrast, moments


# ---------------------------------------------------------------------------
# job manager
# ---------------------------------------------------------------------------


class JobManager:
    """FIFO queue of simulation jobs executed by one background thread."""

    def __init__(self, jobs_dir: Path, max_reps: int):
        self.jobs_dir = jobs_dir
        self.max_reps = max_reps
        self._lock = threading.Lock()
        self._queue: queue.Queue = queue.Queue()
        self._records: dict = {}
        self._results: dict = {}
        self._work: dict = {}
        self._thread: Optional[threading.Thread] = None
        self._stop = threading.Event()
        self.jobs_dir.mkdir(parents=True, exist_ok=True)
        self._load()

    def _load(self):
        for path in sorted(self.jobs_dir.glob("*.json")):
            try:
                doc = json.loads(path.read_text(encoding="utf-8"))
            except (OSError, ValueError):
                continue
            record = doc.get("record")
            if isinstance(record, dict) and record.get("status") in ("done", "failed"):
                self._records[record["id"]] = record
                if doc.get("result") is not None:
                    self._results[record["id"]] = doc["result"]

    def start(self):
        if self._thread is None:
            self._thread = threading.Thread(target=self._run, daemon=True,
                                            name="smartb-jobs")
            self._thread.start()

    def stop(self):
        self._stop.set()
        self._queue.put(None)
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None
        self._stop.clear()

    def submit(self, kind: str, config: dict, work) -> dict:
        self.start()
        job_id = uuid.uuid4().hex
        record = {"id": job_id, "kind": kind, "status": "queued",
                  "config": config, "progress": 0.0, "error": None}
        with self._lock:
            self._records[job_id] = record
            self._work[job_id] = work
        self._queue.put(job_id)
        return dict(record)

    def get(self, job_id: str) -> Optional[dict]:
        with self._lock:
            record = self._records.get(job_id)
            return dict(record) if record else None

    def result(self, job_id: str):
        with self._lock:
            return self._results.get(job_id)

    def _set(self, job_id: str, **updates):
        with self._lock:
            self._records[job_id].update(updates)

    def _persist(self, job_id: str):
        with self._lock:
            doc = {"record": dict(self._records[job_id]),
                   "result": self._results.get(job_id)}
        _atomic_write(self.jobs_dir / f"{job_id}.json", canonical_json(doc))

    def _run(self):
        while not self._stop.is_set():
            job_id = self._queue.get()
            if job_id is None:
                break
            work = self._work.pop(job_id, None)
            if work is None:
                continue
            self._set(job_id, status="running")

            def on_progress(fraction, _id=job_id):
                self._set(_id, progress=float(fraction))

            try:
                result = work(on_progress)
            except (SimulationFailureError, ScenarioValidationError, ValueError) as exc:
                self._set(job_id, status="failed", error=str(exc))
            else:
                with self._lock:
                    self._results[job_id] = result
                self._set(job_id, status="done", progress=1.0)
            self._persist(job_id)


class ScenarioStore:
    """One canonical JSON document per named scenario, written atomically."""

    def __init__(self, scenarios_dir: Path):
        self.dir = scenarios_dir
        self.dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def put(self, name: str, text: str):
        with self._lock:
            _atomic_write(self.dir / f"{name}.json", text)

    def get(self, name: str) -> Optional[str]:
        path = self.dir / f"{name}.json"
        with self._lock:
            if not path.is_file():
                return None
            return path.read_text(encoding="utf-8")

    def names(self) -> list:
        with self._lock:
            return sorted(p.stem for p in self.dir.glob("*.json"))


# ---------------------------------------------------------------------------
# application
# ---------------------------------------------------------------------------


def create_app(data_dir=None, max_reps: Optional[int] = None) -> FastAPI:
    if data_dir is None:
        data_dir = os.environ.get("SMARTB_DATA_DIR", DEFAULT_DATA_DIR)
    if max_reps is None:
        max_reps = int(os.environ.get("SMARTB_MAX_REPS", DEFAULT_MAX_REPS))
    base = Path(data_dir)
    store = ScenarioStore(base / "scenarios")
    jobs = JobManager(base / "jobs", max_reps)

    @asynccontextmanager
    async def lifespan(_app):
        jobs.start()
        yield
        jobs.stop()

    app = FastAPI(title="smartb", version="1", docs_url=None, redoc_url=None,
                  lifespan=lifespan)
    app.state.store = store
    app.state.jobs = jobs

    @app.exception_handler(_RequestError)
    async def _handle_request_error(_request, exc: _RequestError):
        return _json(exc.payload, exc.status)

    @app.post("/v1/formula/samplesize")
    def formula_samplesize(raw: dict = Body(...)):
        method, waves, alpha, contrast, moments = _parse_common(raw)
        power = raw.get("power", 0.80)
        if not (isinstance(power, (int, float)) and 0.0 < power < 1.0):
            raise _validation_error([("power", "must lie in (0, 1)")])
        scenario = _parse_scenario_block(raw, waves)
        try:
            result = plan_n(scenario, contrast, method, waves,
                            spec=TestSpec(alpha=alpha, power=float(power)),
                            conditional_moments=moments)
        except NullEffectError as exc:
            raise _RequestError(422, {"error": "null-effect", "message": str(exc)})
        except ScenarioValidationError as exc:
            raise _validation_error([("scenario." + v.field, v.message)
                                     for v in exc.violations])
        attrition = raw.get("attrition")
        payload = result.to_dict()
        if attrition is not None:
            if not (isinstance(attrition, (int, float)) and 0.0 <= attrition < 1.0):
                raise _validation_error([("attrition", "must lie in [0, 1)")])
            payload["n_inflated"] = inflate_for_attrition(result.n, float(attrition))
            payload["attrition"] = float(attrition)
        return _json(payload)

    @app.post("/v1/formula/power")
    def formula_power(raw: dict = Body(...)):
        method, waves, alpha, contrast, moments = _parse_common(raw)
        n = raw.get("n")
        if not (isinstance(n, int) and not isinstance(n, bool) and n >= 2):
            raise _validation_error([("n", "an integer sample size of at least 2 is required")])
        scenario = _parse_scenario_block(raw, waves)
        try:
            result = predicted_power(scenario, n, contrast, method, waves,
                                     alpha=alpha, conditional_moments=moments)
        except ScenarioValidationError as exc:
            raise _validation_error([("scenario." + v.field, v.message)
                                     for v in exc.violations])
        return _json(result.to_dict())

    def _resolve_job_scenario(raw: dict) -> ConditionalScenario:
        if "scenario_name" in raw:
            name = raw["scenario_name"]
            if not isinstance(name, str) or not NAME_PATTERN.fullmatch(name):
                raise _validation_error([("scenario_name", "invalid scenario name")])
            text = store.get(name)
            if text is None:
                raise _RequestError(404, {"error": "not-found",
                                          "message": f"no stored scenario named {name!r}"})
            doc = document_from_dict(json.loads(text))
            scenario = doc.scenario
        else:
            scenario = _parse_scenario_block(raw, waves=1)
        if not isinstance(scenario, ConditionalScenario):
            raise _validation_error([
                ("scenario.mode", "simulation requires a conditional scenario")])
        if scenario.pretest_mean is None:
            raise _validation_error([
                ("scenario.pretest.mean", "simulation requires a pretest distribution")])
        return scenario

    def _parse_model(raw: dict) -> ModelSpec:
        spec = raw.get("model")
        if spec is None or spec == "auto":
            return ModelSpec.covariate_adjusted()
        if not isinstance(spec, dict) or "variant" not in spec:
            raise _validation_error([("model", "expected an object with a variant")])
        try:
            waves = spec.get("waves")
            return ModelSpec(variant=spec["variant"],
                             working=spec.get("working", "independence"),
                             waves=tuple(waves) if waves is not None else None)
        except ValueError as exc:
            raise _validation_error([("model", str(exc))])

    @app.post("/v1/simulate")
    def submit_simulation(raw: dict = Body(...)):
        kind = raw.get("kind", "power")
        if kind not in ("power", "samplesize"):
            raise _validation_error([("kind", 'must be "power" or "samplesize"')])
        reps = raw.get("reps", 2000)
        if not (isinstance(reps, int) and not isinstance(reps, bool) and reps >= 1):
            raise _validation_error([("reps", "a positive integer is required")])
        if reps > max_reps:
            raise _RequestError(409, {
                "error": "reps-cap",
                "message": f"reps={reps} exceeds the server cap of {max_reps}"})
        seed = raw.get("seed", DEFAULT_SEED)
        if not (isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0):
            raise _validation_error([("seed", "a non-negative integer is required")])
        alpha = raw.get("alpha", 0.05)
        if not (isinstance(alpha, (int, float)) and 0.0 < alpha < 1.0):
            raise _validation_error([("alpha", "must lie in (0, 1)")])
        contrast = DEFAULT_CONTRAST
        if "contrast" in raw:
            c = raw["contrast"]
            try:
                contrast = ContrastSpec(int(c["target"]), int(c["reference"]))
            except (TypeError, KeyError, ValueError) as exc:
                raise _validation_error([("contrast", str(exc))])
        scenario = _resolve_job_scenario(raw)
        model = _parse_model(raw)

        if kind == "power":
            n = raw.get("n", 300)
            if not (isinstance(n, int) and not isinstance(n, bool) and n >= 2):
                raise _validation_error([("n", "an integer sample size of at least 2 is required")])

            def work(progress, scenario=scenario, model=model, n=n, reps=reps,
                     seed=seed, alpha=alpha, contrast=contrast):
                est = estimate_power(scenario, model, contrast, n=n, reps=reps,
                                     seed=seed, alpha=alpha, progress=progress)
                return est.to_dict()
            kind_name = "power-sim"
        else:
            grid = raw.get("grid")
            if grid is not None:
                if (not isinstance(grid, list) or len(grid) < 3
                        or any(not isinstance(v, int) or isinstance(v, bool) for v in grid)):
                    raise _validation_error([("grid", "a list of at least 3 integer sizes is required")])
            target = raw.get("target", 0.80)
            if not (isinstance(target, (int, float)) and 0.0 < target < 1.0):
                raise _validation_error([("target", "must lie in (0, 1)")])

            def work(progress, scenario=scenario, model=model, grid=grid, reps=reps,
                     seed=seed, alpha=alpha, contrast=contrast, target=target):
                search = find_sample_size(scenario, model, contrast, target=float(target),
                                          grid=grid, reps_per_point=reps, seed=seed,
                                          alpha=alpha, progress=progress)
                return search.to_dict()
            kind_name = "samplesize-sim"

        record = jobs.submit(kind_name, raw, work)
        return _json(record, status=202)

    @app.get("/v1/jobs/{job_id}")
    def get_job(job_id: str):
        record = jobs.get(job_id)
        if record is None:
            raise _RequestError(404, {"error": "not-found",
                                      "message": f"unknown job {job_id!r}"})
        return _json(record)

    @app.get("/v1/jobs/{job_id}/result")
    def get_job_result(job_id: str):
        record = jobs.get(job_id)
        if record is None:
            raise _RequestError(404, {"error": "not-found",
                                      "message": f"unknown job {job_id!r}"})
        if record["status"] != "done":
            raise _RequestError(409, {
                "error": "not-done",
                "message": f"job {job_id!r} is {record['status']}; result exists only when done"})
        return _json(jobs.result(job_id))

    @app.get("/v1/scenarios")
    def list_scenarios():
        return _json({"scenarios": store.names()})

    @app.put("/v1/scenarios/{name}")
    def put_scenario(name: str, raw: dict = Body(...)):
        if not NAME_PATTERN.fullmatch(name):
            raise _validation_error([
                ("name", "names are 1-64 characters of a-z, 0-9, hyphen, underscore")])
        try:
            doc = document_from_dict(raw)
        except ScenarioValidationError as exc:
            raise _validation_error([(v.field, v.message) for v in exc.violations])
        except (TypeError, KeyError, ValueError) as exc:
            raise _validation_error([("document", str(exc))])
        text = canonical_json(document_to_dict(doc))
        store.put(name, text)
        return Response(text, status_code=200, media_type="application/json")

    @app.get("/v1/scenarios/{name}")
    def get_scenario(name: str):
        if not NAME_PATTERN.fullmatch(name):
            raise _validation_error([
                ("name", "names are 1-64 characters of a-z, 0-9, hyphen, underscore")])
        text = store.get(name)
        if text is None:
            raise _RequestError(404, {"error": "not-found",
                                      "message": f"no stored scenario named {name!r}"})
        return Response(text, media_type="application/json")

    return app


def main(port: Optional[int] = None, data_dir=None, host: str = "127.0.0.1"):
    """Run the service with uvicorn until interrupted."""
    import uvicorn

    if port is None:
        port = int(os.environ.get("SMARTB_PORT", DEFAULT_PORT))
    app = create_app(data_dir=data_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
