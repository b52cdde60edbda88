"""The HTTP API end to end, in process.

Stores a scenario, asks the formula endpoint for n and power, submits a
simulation job, polls it to completion, and compares the simulated power
against the closed-form prediction. Uses the in-process test client; point
an HTTP client at `smartb serve` for the real thing.
"""
import tempfile
import time

from fastapi.testclient import TestClient

from smartb import GENERATIVE_GRID, population_moments, scenario_to_dict
from smartb.service import create_app

scenario = scenario_to_dict(
    population_moments(GENERATIVE_GRID[(0.6, 2.0)]).conditional_scenario())

with tempfile.TemporaryDirectory() as tmp, TestClient(create_app(data_dir=tmp)) as client:
    client.put("/v1/scenarios/demo", json=scenario)
    print("stored scenario:", client.get("/v1/scenarios").json()["scenarios"])

    plan = client.post("/v1/formula/samplesize",
                       json={"scenario": scenario, "method": "cpb", "waves": 2,
                             "conditional_moments": "cell"}).json()
    print(f"formula: n = {plan['n']} for power {plan['power']:.2f}")

    pred = client.post("/v1/formula/power",
                       json={"scenario": scenario, "method": "cpb", "waves": 2,
                             "conditional_moments": "cell", "n": 300}).json()
    print(f"formula: power {pred['power']:.3f} at n = 300")

    job = client.post("/v1/simulate",
                      json={"kind": "power", "scenario_name": "demo",
                            "n": 300, "reps": 300, "seed": 5}).json()
    print(f"submitted job {job['id'][:8]}... ({job['kind']})")
    while True:
        record = client.get(f"/v1/jobs/{job['id']}").json()
        if record["status"] in ("done", "failed"):
            break
        time.sleep(0.1)
    result = client.get(f"/v1/jobs/{job['id']}/result").json()
    gap = abs(result["power"] - pred["power"]) / result["mc_se"]
    print(f"simulated: {result['power']:.3f} +/- {result['mc_se']:.3f} "
          f"({gap:.1f} MC SEs from the formula)")
