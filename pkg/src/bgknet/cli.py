"""Command-line front end: ``bgknet run <scenario.json> [--reference] [--jobs N] [--seed S] [--output DIR]``.

Exit status:

* 0: every run finished and passed the hard checks
* 1: the scenario could not be read or outputs could not be written
* 2: the scenario failed validation
* 3: a run stopped on a solver or step failure
* 4: a run finished but broke a hard invariant (mass ledger closure or
  membership of the kinetic state space)

Output files (CSV column contracts, version 1) are described in
``docs/scenario.md``.
"""

from __future__ import annotations

import argparse
from concurrent.futures import ProcessPoolExecutor
import csv
import json
import logging
from pathlib import Path
import sys

import numpy as np

from .diagnostics import TraceLedger, l1_distance
from .errors import BGKError, ConfigurationError
from .gas_core import VACUUM_FLOOR, riemann_invariants
from .macro_reference import MacroField, macro_solve
from .network import network_mass, simulate
from .pipeline import field_moments, initial_field
from .scenario import Scenario, parse_scenario

log = logging.getLogger("bgknet")

EXIT_OK = 0
EXIT_IO = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3
EXIT_INVARIANT = 4

CSV_VERSION = 1
MASS_LEDGER_TOL = 1e-10


def _rows_to_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([float(v) if isinstance(v, (float, np.floating)) else v for v in r])


def membership_defect(f0, f1) -> float:
    """Largest violation of ``f0 >= 0`` and ``f0 = 0 => f1 = 0`` (0 when the state is admissible)."""
    neg = float(np.max(-f0, initial=0.0))
    empty = f0 <= 0.0
    stray = float(np.max(np.abs(f1[empty]), initial=0.0))
    return max(neg, stray) + 0.0 if max(neg, stray) > 0.0 else 0.0


def snapshot_rows(scenario: Scenario, pipe, field, t):
    rho, u = field_moments(scenario.grid, field)
    live = rho >= VACUUM_FLOOR
    w1, w2 = riemann_invariants(scenario.params, np.where(live, rho, 1.0), u)
    w1 = np.where(live, w1, 0.0)
    w2 = np.where(live, w2, 0.0)
    return [(t, x, r, r * v, a, b) for x, r, v, a, b in zip(pipe.grid.centers, rho, u, w1, w2)]


def execute(scenario: Scenario, eps: float, out: Path, reference: bool = False,
            seed: int | None = None) -> dict:
    """Run one plan, write its artifacts under ``out`` and return the summary dict."""
    out.mkdir(parents=True, exist_ok=True)
    top, params, grid = scenario.topology, scenario.params, scenario.grid
    blocks = scenario.initial_blocks(seed)
    eps_of = {p.id: scenario.pipe_eps.get(p.id, eps) for p in top.pipes}
    fields = {p.id: initial_field(p.grid, grid, params, blocks[p.id], eps_of[p.id], method=scenario.matching)
              for p in top.pipes}
    ledger = TraceLedger(params, grid, scenario.entropies, every=scenario.record_every)
    snaps = {p.id: [] for p in top.pipes}
    times = [0.0]
    saved_fields = []
    worst_membership = [max(membership_defect(f.f0, f.f1) for f in fields.values())]
    stop_times = [t for t in scenario.snapshots if scenario.t_end is None or t < scenario.t_end]

    def take(fs, t):
        for p in top.pipes:
            snaps[p.id].extend(snapshot_rows(scenario, p, fs[p.id], t))
        if scenario.full_fields:
            saved_fields.append((t, {pid: (f.f0.copy(), f.f1.copy()) for pid, f in fs.items()}))

    take(fields, 0.0)

    def on_step(state, rec):
        worst_membership[0] = max(worst_membership[0],
                                  max(membership_defect(f.f0, f.f1) for f in state.fields.values()))
        if any(state.t == s for s in stop_times):
            times.append(state.t)
            take(state.fields, state.t)

    summary = {"scenario": scenario.name, "epsilon": eps, "seed": scenario.seed if seed is None else seed,
               "csv_version": CSV_VERSION, "warnings": list(scenario.warnings)}
    status = EXIT_OK
    state = None
    try:
        state = simulate(top, params, grid, fields, eps_of, t_end=scenario.t_end, n_steps=scenario.steps,
                         cfl=scenario.cfl, recorder=ledger, method=scenario.matching, callback=on_step,
                         validate=False, stops=stop_times)
        if times[-1] != state.t:
            times.append(state.t)
            take(state.fields, state.t)
    except BGKError as exc:
        status = EXIT_RUNTIME
        summary["error"] = str(exc)
        log.error("%s", exc)
    run = ledger.summary()
    summary.update(run.as_dict())
    summary["steps"] = state.step if state is not None else None
    summary["max_membership_defect"] = worst_membership[0]
    if state is not None:
        summary["mass_final_direct"] = network_mass(top, grid, state.fields)

    with_reference = reference and state is not None
    if with_reference:
        summary["l1"] = _reference(scenario, blocks, times, snaps, out)

    ends_header = ["step", "t", "window", "pipe", "end", "mass_flux", "momentum_flux", "energy_flux"]
    ends_header += [f"psi[{n}]" for n in ledger.names] + [f"G[{n}]" for n in ledger.names]
    ends_header += ["mass_flux_integral"] + [f"psi_integral[{n}]" for n in ledger.names]
    _rows_to_csv(out / "ledger_ends.csv", ends_header, (
        [r.step, r.t, r.window, r.pipe, r.end, r.mass_flux, r.momentum_flux, r.energy_flux]
        + [r.psi[n] for n in ledger.names] + [r.g_macro[n] for n in ledger.names]
        + [r.mass_integral] + [r.psi_integral[n] for n in ledger.names] for r in ledger.end_rows))
    jn_header = ["step", "t", "window", "junction", "mass_in", "mass_out", "mass_slack", "energy_in",
                 "energy_out", "energy_slack", "omega_in", "omega_out", "omega_slack",
                 "mass_slack_integral", "energy_slack_integral"] + [f"psi_sum[{n}]" for n in ledger.names]
    _rows_to_csv(out / "ledger_junctions.csv", jn_header, (
        [r.step, r.t, r.window, r.junction, r.mass_in, r.mass_out, r.mass_slack, r.energy_in, r.energy_out,
         r.energy_slack, r.omega_in, r.omega_out, r.omega_slack, r.mass_slack_integral,
         r.energy_slack_integral] + [r.psi_sum[n] for n in ledger.names] for r in ledger.junction_rows))
    _rows_to_csv(out / "ledger_totals.csv",
                 ["step", "t", "mass", "energy", "max_violation", "slack_mass", "slack_energy", "vacuum_loss"],
                 ([r.step, r.t, r.mass, r.energy, r.violation, r.slack_mass, r.slack_energy, r.vacuum_loss]
                  for r in ledger.totals))
    if not with_reference:
        for p in top.pipes:
            _rows_to_csv(out / f"snapshots_{p.id}.csv", ["t", "x", "rho", "rhou", "omega1", "omega2"], snaps[p.id])
    if saved_fields:
        arrays = {}
        for k, (t, fs) in enumerate(saved_fields):
            arrays[f"t_{k}"] = np.array(t)
            for pid, (f0, f1) in fs.items():
                arrays[f"{pid}_f0_{k}"] = f0
                arrays[f"{pid}_f1_{k}"] = f1
        arrays["xi"] = grid.nodes
        np.savez(out / "fields.npz", **arrays)

    if status == EXIT_OK:
        broken = []
        if not run.mass_residual <= MASS_LEDGER_TOL:
            broken.append(f"mass ledger residual {run.mass_residual:.3e} > {MASS_LEDGER_TOL:g}")
        if worst_membership[0] > 0.0:
            broken.append(f"kinetic state left the admissible set by {worst_membership[0]:.3e}")
        if broken:
            status = EXIT_INVARIANT
            summary["invariant_failures"] = broken
            for b in broken:
                log.error("%s", b)
    summary["exit_code"] = status
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")
    return summary


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, tuple):
        return list(v)
    raise TypeError(f"cannot serialise {type(v).__name__}")


def _reference(scenario: Scenario, blocks, times, snaps, out: Path) -> list:
    """Macroscopic reference run on the same pipe grid; adds ``*_ref`` columns and L1 rows."""
    pipe = scenario.topology.pipes[0]
    closure = tuple((scenario.reference or {}).get("closure", ["wall", "wall"]))
    mf = MacroField.from_blocks(pipe.grid, blocks[pipe.id])
    rows = []
    ref_cols = {}
    for t in times:
        mf = macro_solve(scenario.params, scenario.grid, mf, t, cfl=scenario.cfl, closure=closure,
                         method=scenario.matching)
        ref_cols[t] = (mf.rho.copy(), mf.q.copy())
    snap = snaps[pipe.id]
    n = pipe.grid.cells
    table = []
    for k, t in enumerate(times):
        chunk = snap[k * n:(k + 1) * n]
        rho = np.array([r[2] for r in chunk])
        q = np.array([r[3] for r in chunk])
        rr, qr = ref_cols[t]
        l1_rho, l1_q = l1_distance(pipe.grid.dx, rho, q, rr, qr)
        rows.append({"t": t, "pipe": pipe.id, "l1_rho": l1_rho, "l1_rhou": l1_q})
        table.extend(tuple(r) + (a, b) for r, a, b in zip(chunk, rr, qr))
    _rows_to_csv(out / f"snapshots_{pipe.id}.csv",
                 ["t", "x", "rho", "rhou", "omega1", "omega2", "rho_ref", "rhou_ref"], table)
    _rows_to_csv(out / "l1.csv", ["t", "pipe", "l1_rho", "l1_rhou"],
                 ([r["t"], r["pipe"], r["l1_rho"], r["l1_rhou"]] for r in rows))
    return rows


def _worker(args):
    text, eps, out, reference, seed = args
    scenario = parse_scenario(text)
    return execute(scenario, eps, Path(out), reference, seed)["exit_code"]


def run(path: str, reference: bool = False, jobs: int = 1, seed: int | None = None,
        output: str | None = None) -> int:
    """Parse ``path``, execute every plan and return the exit status."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        log.error("cannot read scenario: %s", exc)
        return EXIT_IO
    try:
        scenario = parse_scenario(text)
    except ConfigurationError as exc:
        log.error("%s", exc)
        for v in exc.violations or []:
            log.error("  %s", v)
        return EXIT_VALIDATION
    if reference and len(scenario.topology.pipes) != 1:
        log.error("--reference needs a single-pipe scenario")
        return EXIT_VALIDATION
    root = Path(output if output is not None else scenario.output)
    plans = scenario.plans()
    tasks = [(text, p.eps, str(root / p.label) if p.label else str(root), reference, seed) for p in plans]
    try:
        if jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                codes = list(pool.map(_worker, tasks))
        else:
            codes = [execute(scenario, eps, Path(out), ref, s)["exit_code"] for _, eps, out, ref, s in tasks]
        if len(plans) > 1:
            with open(root / "sweep.json", "w") as fh:
                json.dump([{"epsilon": p.eps, "directory": p.label, "exit_code": c}
                           for p, c in zip(plans, codes)], fh, indent=2)
                fh.write("\n")
    except OSError as exc:
        log.error("cannot write outputs: %s", exc)
        return EXIT_IO
    if EXIT_RUNTIME in codes:
        return EXIT_RUNTIME
    if EXIT_INVARIANT in codes:
        return EXIT_INVARIANT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bgknet", description="Kinetic BGK simulations on pipe networks.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress information")
    sub = parser.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario file")
    r.add_argument("scenario", help="path to a JSON scenario")
    r.add_argument("--reference", action="store_true",
                   help="also run the macroscopic reference and write L1 distances (single pipe only)")
    r.add_argument("--jobs", type=int, default=1, help="worker processes for epsilon sweeps")
    r.add_argument("--seed", type=int, default=None, help="seed for randomised initial perturbations")
    r.add_argument("--output", default=None, help="output directory (overrides the scenario)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        log.error("--jobs must be at least 1")
        return EXIT_VALIDATION
    return run(args.scenario, args.reference, args.jobs, args.seed, args.output)


if __name__ == "__main__":
    sys.exit(main())
