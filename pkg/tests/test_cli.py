import copy
import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

import bgknet.cli as cli
from bgknet.errors import ConfigurationError, StepError
from bgknet.gas_core import riemann_invariants
from bgknet.scenario import parse_scenario

BASE = {
    "version": 1,
    "name": "wall",
    "gas": {"gamma": 2.0, "kappa": 1.0},
    "velocity_grid": {"nodes": 48},
    "hull": [-3.0, 3.0],
    "pipes": [{"id": "p", "interval": [0.0, 1.0], "cells": 30,
               "initial": [{"from": 0.0, "to": 0.5, "rho": 1.0, "u": 0.0},
                           {"from": 0.5, "to": 1.0, "rho": 0.25, "u": 0.0}]}],
    "junctions": [{"id": "left", "ends": [{"pipe": "p", "end": "minus"}], "coupling": {"type": "reflection_wall"}},
                  {"id": "right", "ends": [{"pipe": "p", "end": "plus"}], "coupling": {"type": "reflection_wall"}}],
    "epsilon": 0.01,
    "steps": 40,
}


def scenario(**changes):
    s = copy.deepcopy(BASE)
    s.update(changes)
    return s


def write(tmp_path, data, name="s.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# -- parsing ------------------------------------------------------------------------------------


def test_minimal_scenario_parses():
    sc = parse_scenario(json.dumps(BASE))
    assert sc.topology.pipe_ids == ["p"]
    assert sc.grid.symmetric and sc.grid.hi == pytest.approx(3.6)
    assert [p.eps for p in sc.plans()] == [0.01] and sc.plans()[0].label == ""


def test_sweep_gives_one_plan_per_epsilon():
    sc = parse_scenario(json.dumps(scenario(epsilon=[0.1, 0.01, 0.001])))
    assert [p.label for p in sc.plans()] == ["eps_0.1", "eps_0.01", "eps_0.001"]


def test_linear_violation_names_the_sum():
    data = scenario()
    data["pipes"].append({"id": "q", "interval": [1.0, 2.0], "cells": 10,
                          "initial": [{"from": 1.0, "to": 2.0, "rho": 0.5}]})
    data["junctions"][1] = {"id": "J", "ends": [{"pipe": "p", "end": "plus"}, {"pipe": "q", "end": "minus"}],
                            "coupling": {"type": "linear", "matrix": [[0.5, 0.4], [0.5, 0.6]]}}
    data["junctions"].append({"id": "R", "ends": [{"pipe": "q", "end": "plus"}],
                              "coupling": {"type": "reflection_wall"}})
    with pytest.raises(ConfigurationError) as err:
        parse_scenario(json.dumps(data))
    assert any("junction J" in v and "row sum 0" in v for v in err.value.violations)


@pytest.mark.parametrize("mutate,needle", [
    (lambda d: d.update(bogus=1), "$: Additional properties"),
    (lambda d: d["pipes"][0]["initial"][0].update(rh=1.0), "$.pipes[0].initial[0]"),
    (lambda d: d["junctions"][0]["coupling"].update(type="teleport"), "$.junctions[0].coupling.type"),
    (lambda d: d["junctions"][0]["coupling"].update(matrix=[[1]]), "$.junctions[0].coupling"),
    (lambda d: d.update(version=2), "$.version"),
])
def test_schema_errors_carry_paths(mutate, needle):
    data = scenario()
    mutate(data)
    with pytest.raises(ConfigurationError) as err:
        parse_scenario(json.dumps(data))
    assert any(v.startswith(needle) for v in err.value.violations), err.value.violations


@pytest.mark.parametrize("mutate,needle", [
    (lambda d: d.update(t_end=0.1), "exactly one of"),
    (lambda d: d["junctions"][0]["ends"][0].update(pipe="zz"), "unknown pipe(s) ['zz']"),
    (lambda d: d.pop("hull"), "give 'bound'"),
])
def test_semantic_errors(mutate, needle):
    data = scenario()
    mutate(data)
    with pytest.raises(ConfigurationError) as err:
        parse_scenario(json.dumps(data))
    assert needle in str(err.value) + " ".join(err.value.violations or [])


def test_invalid_json():
    with pytest.raises(ConfigurationError, match="not valid JSON"):
        parse_scenario("{")


def test_every_coupling_type_parses():
    n_out = parse_scenario(json.dumps(BASE)).grid.positive.sum()
    two = scenario()
    two["pipes"].append({"id": "q", "interval": [1.0, 2.0], "cells": 10,
                         "initial": [{"from": 1.0, "to": 2.0, "rho": 0.5}]})
    kernel = np.zeros((2, 2, n_out, n_out))
    two["junctions"] = [
        {"id": "in", "ends": [{"pipe": "p", "end": "minus"}],
         "coupling": {"type": "maxwellian_inflow", "rho": [[0, 1.0], [1, 0.5]], "u": 0.1}},
        {"id": "J", "ends": [{"pipe": "p", "end": "plus"}, {"pipe": "q", "end": "minus"}],
         "coupling": {"type": "maxwellian_projection",
                      "inner": {"type": "convolution", "from_linear": [[0, 1], [1, 0]]}}},
        {"id": "out", "ends": [{"pipe": "q", "end": "plus"}], "coupling": {"type": "free_outflow"}},
    ]
    sc = parse_scenario(json.dumps(two))
    assert [j.coupling.kind for j in sc.topology.junctions] == ["maxwellian_inflow", "maxwellian_projection",
                                                                 "free_outflow"]
    two["junctions"][1]["coupling"] = {"type": "convolution", "kernel": kernel.tolist()}
    with pytest.raises(ConfigurationError, match="invalid junctions"):
        parse_scenario(json.dumps(two))


# -- runs ---------------------------------------------------------------------------------------


def test_equilibrium_run_outputs(tmp_path):
    data = scenario(pipes=[{"id": "p", "interval": [0.0, 1.0], "cells": 20,
                            "initial": [{"from": 0.0, "to": 1.0, "rho": 1.0, "u": 0.0}]}],
                    snapshots=[0.05])
    out = tmp_path / "out"
    assert cli.main(["run", write(tmp_path, data), "--output", str(out)]) == cli.EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["mass_drift"] <= 1e-10
    assert abs(summary["energy_drift"]) <= 1e-7
    assert summary["exit_code"] == 0 and summary["csv_version"] == cli.CSV_VERSION
    header, rows = read_csv(out / "ledger_ends.csv")
    assert header[:5] == ["step", "t", "window", "pipe", "end"] and "psi[v^2]" in header
    assert len(rows) == 40 * 2
    _, jrows = read_csv(out / "ledger_junctions.csv")
    assert len(jrows) == 40 * 2
    _, trows = read_csv(out / "ledger_totals.csv")
    assert len(trows) == 41
    header, snaps = read_csv(out / "snapshots_p.csv")
    assert header == ["t", "x", "rho", "rhou", "omega1", "omega2"]
    assert sorted({float(r[0]) for r in snaps})[:2] == [0.0, 0.05]


def test_reference_adds_columns(tmp_path):
    out = tmp_path / "out"
    data = scenario(snapshots=[0.02], reference={"closure": ["wall", "wall"]})
    assert cli.main(["run", write(tmp_path, data), "--reference", "--output", str(out)]) == cli.EXIT_OK
    header, rows = read_csv(out / "snapshots_p.csv")
    assert header[-2:] == ["rho_ref", "rhou_ref"]
    header, l1 = read_csv(out / "l1.csv")
    assert header == ["t", "pipe", "l1_rho", "l1_rhou"]
    assert float(l1[0][2]) == 0.0 and float(l1[-1][2]) > 0.0


def test_reference_rejected_for_networks(tmp_path):
    data = scenario()
    data["pipes"].append({"id": "q", "interval": [1.0, 2.0], "cells": 10,
                          "initial": [{"from": 1.0, "to": 2.0, "rho": 0.5}]})
    data["junctions"] += [{"id": "q-", "ends": [{"pipe": "q", "end": "minus"}], "coupling": {"type": "reflection_wall"}},
                          {"id": "q+", "ends": [{"pipe": "q", "end": "plus"}], "coupling": {"type": "reflection_wall"}}]
    assert cli.run(write(tmp_path, data), reference=True, output=str(tmp_path / "o")) == cli.EXIT_VALIDATION


def test_seed_is_reproducible(tmp_path):
    data = scenario(perturbation={"amplitude": 0.1}, steps=10)
    path = write(tmp_path, data)
    for name, seed in (("a", 3), ("b", 3), ("c", 4)):
        assert cli.run(path, seed=seed, output=str(tmp_path / name)) == cli.EXIT_OK
    same = [(tmp_path / k / "ledger_totals.csv").read_bytes() for k in "ab"]
    assert same[0] == same[1]
    assert (tmp_path / "c" / "ledger_totals.csv").read_bytes() != same[0]


def test_sweep_with_jobs_matches_sequential(tmp_path):
    data = scenario(epsilon=[0.1, 0.01], steps=15)
    path = write(tmp_path, data)
    assert cli.run(path, jobs=1, output=str(tmp_path / "seq")) == cli.EXIT_OK
    assert cli.run(path, jobs=2, output=str(tmp_path / "par")) == cli.EXIT_OK
    sweep = json.loads((tmp_path / "seq" / "sweep.json").read_text())
    assert [s["directory"] for s in sweep] == ["eps_0.1", "eps_0.01"]
    for d in ("eps_0.1", "eps_0.01"):
        for f in ("ledger_ends.csv", "ledger_junctions.csv", "ledger_totals.csv", "snapshots_p.csv"):
            assert (tmp_path / "seq" / d / f).read_bytes() == (tmp_path / "par" / d / f).read_bytes()


def test_full_fields_are_saved(tmp_path):
    out = tmp_path / "out"
    assert cli.run(write(tmp_path, scenario(full_fields=True, steps=5)), output=str(out)) == cli.EXIT_OK
    with np.load(out / "fields.npz") as z:
        assert z["p_f0_0"].shape == (30, 48) and "xi" in z


# -- exit codes ---------------------------------------------------------------------------------


def test_exit_io_and_validation(tmp_path):
    assert cli.run(str(tmp_path / "missing.json")) == cli.EXIT_IO
    assert cli.run(write(tmp_path, scenario(bogus=True))) == cli.EXIT_VALIDATION
    assert cli.main(["run", write(tmp_path, BASE), "--jobs", "0"]) == cli.EXIT_VALIDATION


def test_exit_runtime(tmp_path, monkeypatch):
    def broken(*args, **kwargs):
        raise StepError("step 1, junction left: no root")

    monkeypatch.setattr(cli, "simulate", broken)
    out = tmp_path / "out"
    assert cli.run(write(tmp_path, BASE), output=str(out)) == cli.EXIT_RUNTIME
    summary = json.loads((out / "summary.json").read_text())
    assert "junction left" in summary["error"] and summary["exit_code"] == cli.EXIT_RUNTIME


def test_exit_invariant(tmp_path, monkeypatch):
    monkeypatch.setattr(cli, "MASS_LEDGER_TOL", -1.0)
    out = tmp_path / "out"
    assert cli.run(write(tmp_path, BASE), output=str(out)) == cli.EXIT_INVARIANT
    assert json.loads((out / "summary.json").read_text())["invariant_failures"]


def test_membership_defect():
    assert cli.membership_defect(np.array([0.0, 1.0]), np.array([0.0, -2.0])) == 0.0
    assert cli.membership_defect(np.array([-1e-3, 1.0]), np.zeros(2)) == pytest.approx(1e-3)
    assert cli.membership_defect(np.array([0.0, 1.0]), np.array([0.5, 0.0])) == 0.5


def test_module_entry_point(tmp_path):
    out = tmp_path / "out"
    proc = subprocess.run([sys.executable, "-m", "bgknet", "run", write(tmp_path, scenario(steps=3)),
                           "--output", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (out / "summary.json").exists()
    proc = subprocess.run([sys.executable, "-m", "bgknet", "run", write(tmp_path, scenario(bogus=1), "b.json")],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and "$: Additional properties" in proc.stderr


DEMOS = sorted((Path(__file__).resolve().parents[1] / "demos" / "scenarios").glob("*.json"))


@pytest.mark.parametrize("path", DEMOS, ids=lambda p: p.stem)
def test_demo_scenarios_start_inside_their_hulls(path):
    sc = parse_scenario(path.read_text())
    assert sc.warnings == []
    blocks = sc.initial_blocks()
    for pipe in sc.topology.pipes:
        if pipe.hull is None:
            continue
        for _, _, rho, u in blocks[pipe.id]:
            w1, w2 = riemann_invariants(sc.params, rho, u)
            assert pipe.hull[0] < w1 < w2 < pipe.hull[1]
