"""Pipe networks: topology, validation and the global time loop.

Each step gathers the boundary traces of every pipe, evaluates every
junction's coupling once from those traces, turns the outputs into ghost data
and advances all pipes with one shared ``dt``. Couplings only ever see the
gathered beginning-of-step traces, so the result does not depend on the order
in which pipes or junctions are listed.
"""

from __future__ import annotations

from dataclasses import dataclass
import logging
from typing import Callable, Mapping, NamedTuple

import numpy as np

from .coupling import (MINUS, PLUS, CouplingSpec, JunctionInput, budget_report, canonical_hull,
                       outputs_to_pipe_frame)
from .errors import BGKError, ConfigurationError, StepError
from .gas_core import GasParams
from .pipeline import (GhostData, KineticField, PipeGrid, cfl_timestep, extract_traces,
                       initial_field, interface_values, relax_step, transport_step)
from .velocity_grid import VelocityGrid

log = logging.getLogger(__name__)

SHORT_PIPE_CELLS = 4


@dataclass(frozen=True)
class Pipe:
    id: str
    grid: PipeGrid
    hull: tuple | None = None

    def __post_init__(self):
        if self.hull is not None and not self.hull[0] < self.hull[1]:
            raise ConfigurationError(f"pipe {self.id}: hull must satisfy w_min < w_max")


@dataclass(frozen=True)
class Junction:
    id: str
    ends: tuple
    coupling: CouplingSpec

    def __post_init__(self):
        object.__setattr__(self, "ends", tuple((str(p), e) for p, e in self.ends))


@dataclass
class NetworkTopology:
    pipes: list
    junctions: list

    def __post_init__(self):
        self._by_id = {p.id: p for p in self.pipes}

    def pipe(self, pid: str) -> Pipe:
        try:
            return self._by_id[pid]
        except KeyError:
            raise ConfigurationError(f"unknown pipe {pid!r}") from None

    @property
    def pipe_ids(self) -> list[str]:
        return [p.id for p in self.pipes]


def validate_topology(topology: NetworkTopology, grid: VelocityGrid | None = None,
                      warnings: list | None = None) -> list[str]:
    """Structural violations; soft issues go to ``warnings`` (and the log)."""
    out: list[str] = []
    soft: list[str] = []
    ids = [p.id for p in topology.pipes]
    for pid in sorted({i for i in ids if ids.count(i) > 1}):
        out.append(f"pipe id {pid!r} is used more than once")
    jids = [j.id for j in topology.junctions]
    for jid in sorted({i for i in jids if jids.count(i) > 1}):
        out.append(f"junction id {jid!r} is used more than once")
    known = set(ids)
    seen: dict = {}
    for j in topology.junctions:
        for pid, end in j.ends:
            if end not in (MINUS, PLUS):
                out.append(f"junction {j.id}: end {end!r} of pipe {pid!r} must be 'minus' or 'plus'")
                continue
            if pid not in known:
                out.append(f"junction {j.id}: unknown pipe {pid!r}")
                continue
            seen.setdefault((pid, end), []).append(j.id)
    for (pid, end), js in sorted(seen.items()):
        if len(js) > 1:
            out.append(f"pipe {pid} {end} end is attached to junctions {js}")
    for pid in ids:
        for end in (MINUS, PLUS):
            if (pid, end) not in seen:
                out.append(f"pipe {pid} {end} end is not attached to any junction")
    for p in topology.pipes:
        if p.grid.cells < SHORT_PIPE_CELLS:
            soft.append(f"pipe {p.id} has only {p.grid.cells} cell(s)")
    for j in topology.junctions:
        try:
            ends = [(pid, end) for pid, end in j.ends if pid in known and end in (MINUS, PLUS)]
            if len(ends) != len(j.ends):
                continue
            areas = [topology.pipe(pid).grid.area for pid, _ in ends]
            hulls = [canonical_hull(topology.pipe(pid).hull, end) for pid, end in ends]
            for v in j.coupling.validate(areas, hulls):
                out.append(f"junction {j.id}: {v}")
        except BGKError as exc:
            out.append(f"junction {j.id}: {exc}")
    if grid is not None and not grid.symmetric:
        out.append("velocity grid must be symmetric about 0 for junction couplings")
    if grid is not None:
        for p in topology.pipes:
            if p.hull is not None and not grid.covers(*p.hull):
                soft.append(f"pipe {p.id}: velocity grid does not cover hull {p.hull} with a cell of margin")
    for s in soft:
        log.warning(s)
    if warnings is not None:
        warnings.extend(soft)
    return out


class StepRecord(NamedTuple):
    step: int
    t: float
    dt: float
    interfaces: dict
    transport: dict
    relax: dict
    budgets: dict
    vacuum_loss: float


@dataclass
class SimulationState:
    fields: dict
    t: float = 0.0
    step: int = 0
    ledger: object = None


def _initial_fields(topology, params, grid, initial, eps, method):
    fields = {}
    for p in topology.pipes:
        e = eps[p.id] if isinstance(eps, Mapping) else eps
        data = initial[p.id]
        if isinstance(data, KineticField):
            fields[p.id] = data.copy()
        else:
            fields[p.id] = initial_field(p.grid, grid, params, data, e, method=method)
    return fields


def network_step(topology: NetworkTopology, params: GasParams, grid: VelocityGrid, fields: dict,
                 t: float, dt: float, step: int, method: str | None = "parameter"):
    """One global step; returns the new fields and a :class:`StepRecord`."""
    traces = {pid: extract_traces(grid, f) for pid, f in fields.items()}
    ghosts: dict = {}
    budgets: dict = {}
    for j in topology.junctions:
        try:
            pipes = [topology.pipe(pid) for pid, _ in j.ends]
            ends = [end for _, end in j.ends]
            tr = [traces[pid].minus if end == MINUS else traces[pid].plus for pid, end in j.ends]
            inp = JunctionInput.from_pipe_frame(t, grid, tr, [p.grid.area for p in pipes], ends,
                                                [p.hull for p in pipes])
            out = j.coupling.apply(params, inp)
            budgets[j.id] = budget_report(params, inp, out)
            for (pid, end), g in zip(j.ends, outputs_to_pipe_frame(grid, out, ends)):
                ghosts[(pid, end)] = g
        except BGKError as exc:
            raise StepError(f"step {step}, junction {j.id}: {exc}") from exc
    new: dict = {}
    interfaces: dict = {}
    transport: dict = {}
    relax: dict = {}
    vacuum = 0.0
    for p in topology.pipes:
        f = fields[p.id]
        gh = GhostData(ghosts[(p.id, MINUS)], ghosts[(p.id, PLUS)])
        try:
            left, right = interface_values(grid, f, gh)
            moved, trec = transport_step(params, p.grid, grid, f, gh, dt)
            relaxed, rrec = relax_step(params, grid, moved, dt, method=method)
        except BGKError as exc:
            raise StepError(f"step {step}, pipe {p.id}: {exc}") from exc
        interfaces[(p.id, MINUS)] = left
        interfaces[(p.id, PLUS)] = right
        transport[p.id] = trec
        relax[p.id] = rrec
        new[p.id] = relaxed
    for p in sorted(topology.pipes, key=lambda p: p.id):
        vacuum += p.grid.area * p.grid.dx * relax[p.id].vacuum_mass
    return new, StepRecord(step, t + dt, dt, interfaces, transport, relax, budgets, vacuum)


def simulate(topology: NetworkTopology, params: GasParams, grid: VelocityGrid, initial: Mapping,
             eps, t_end: float | None = None, cfl: float = 0.9, recorder=None,
             n_steps: int | None = None, method: str | None = "parameter",
             callback: Callable | None = None, validate: bool = True,
             stops=()) -> SimulationState:
    """Advance the network to ``t_end`` (last step shortened) or by ``n_steps``.

    ``initial`` maps pipe ids to ``(x_lo, x_hi, rho, u)`` block lists or to
    :class:`KineticField` objects. ``eps`` is a number or a per-pipe mapping.
    ``callback(state, record)`` runs after each step. Steps are shortened so
    that the run passes exactly through every time in ``stops``.
    """
    if validate:
        bad = validate_topology(topology, grid)
        if bad:
            raise ConfigurationError("invalid network topology", bad)
    if (t_end is None) == (n_steps is None):
        raise ConfigurationError("give exactly one of t_end and n_steps")
    fields = _initial_fields(topology, params, grid, initial, eps, method)
    dt_max = min(cfl_timestep(p.grid, grid, cfl) for p in topology.pipes)
    state = SimulationState(fields, 0.0, 0, recorder)
    pending = sorted(float(s) for s in stops if s > 0)
    if recorder is not None:
        recorder.record_initial(topology, fields, 0.0)
    while True:
        if n_steps is not None:
            if state.step >= n_steps:
                break
            dt = dt_max
        else:
            remaining = t_end - state.t
            if remaining <= 1e-12 * max(1.0, abs(t_end)):
                break
            dt = min(dt_max, remaining)
        while pending and pending[0] <= state.t + 1e-12 * max(1.0, pending[0]):
            pending.pop(0)
        if pending:
            dt = min(dt, pending[0] - state.t)
        fields, rec = network_step(topology, params, grid, state.fields, state.t, dt,
                                   state.step + 1, method=method)
        t_new = rec.t
        if pending and abs(t_new - pending[0]) <= 1e-12 * max(1.0, pending[0]):
            t_new = pending[0]
        state = SimulationState(fields, t_new, state.step + 1, recorder)
        if recorder is not None:
            recorder.record_step(topology, fields, rec)
        if callback is not None:
            callback(state, rec)
    return state


def network_mass(topology: NetworkTopology, grid: VelocityGrid, fields: dict) -> float:
    return float(sum(p.grid.area * p.grid.dx * np.sum(fields[p.id].f0) * grid.dxi
                     for p in sorted(topology.pipes, key=lambda p: p.id)))
