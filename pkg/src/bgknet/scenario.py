"""JSON scenario files: schema, strict parsing and run plans.

A scenario (schema version 1) looks like::

    {
      "version": 1,
      "gas": {"gamma": 2.0, "kappa": 1.0},
      "velocity_grid": {"nodes": 128, "bound": 3.6},
      "hull": [-3.0, 3.0],
      "pipes": [
        {"id": "p", "interval": [0.0, 1.0], "cells": 200,
         "initial": [{"from": 0.0, "to": 0.5, "rho": 1.0, "u": 0.0},
                     {"from": 0.5, "to": 1.0, "rho": 0.25, "u": 0.0}]}
      ],
      "junctions": [
        {"id": "left", "ends": [{"pipe": "p", "end": "minus"}],
         "coupling": {"type": "reflection_wall"}},
        {"id": "right", "ends": [{"pipe": "p", "end": "plus"}],
         "coupling": {"type": "reflection_wall"}}
      ],
      "epsilon": [0.1, 0.01, 0.001],
      "t_end": 0.1
    }

Unknown keys are rejected everywhere. See ``docs/scenario.md`` for the full
list of fields and coupling types.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import json

import jsonschema
import numpy as np

from .coupling import (ConvolutionCoupling, CouplingSpec, FreeOutflow, LinearCoupling,
                       MaxwellianInflow, MaxwellianProjection, MaxwellianWall, ReflectionWall)
from .errors import BGKError, ConfigurationError
from .gas_core import S_ENERGY, S_LINEAR, S_ONE, S_SQUARE, GasParams, derive_constants
from .network import Junction, NetworkTopology, Pipe, validate_topology
from .pipeline import PipeGrid
from .velocity_grid import VelocityGrid

SCHEMA_VERSION = 1
ENTROPIES = {S.name: S for S in (S_ONE, S_LINEAR, S_ENERGY, S_SQUARE)}

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_pair = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_schedule = {"oneOf": [_num, {"type": "array", "minItems": 1,
                              "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}}]}
_matrix = {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": _num}}

_COUPLING_FIELDS = {
    "linear": ({"matrix": _matrix}, ["matrix"]),
    "reflection_wall": ({}, []),
    "maxwellian_wall": ({}, []),
    "free_outflow": ({}, []),
    "maxwellian_inflow": ({"rho": _schedule, "u": _schedule}, ["rho"]),
    "maxwellian_projection": ({"inner": {"$ref": "#/$defs/coupling"}}, ["inner"]),
    "convolution": ({"kernel": {"type": "array", "items": {"type": "array", "items": _matrix}},
                     "from_linear": _matrix}, []),
}

COUPLING_SCHEMA = {
    "type": "object",
    "required": ["type"],
    "properties": {"type": {"enum": sorted(_COUPLING_FIELDS)}},
    "allOf": [
        {"if": {"properties": {"type": {"const": kind}}},
         "then": {"properties": {"type": True, **props}, "required": req, "additionalProperties": False}}
        for kind, (props, req) in _COUPLING_FIELDS.items()
    ] + [{"if": {"properties": {"type": {"const": "convolution"}}},
          "then": {"oneOf": [{"required": ["kernel"]}, {"required": ["from_linear"]}]}}],
}

SCHEMA = {
    "$defs": {"coupling": COUPLING_SCHEMA},
    "type": "object",
    "additionalProperties": False,
    "required": ["version", "gas", "velocity_grid", "pipes", "junctions", "epsilon"],
    "properties": {
        "version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "gas": {"type": "object", "additionalProperties": False, "required": ["gamma"],
                "properties": {"gamma": _num, "kappa": _pos}},
        "velocity_grid": {"type": "object", "additionalProperties": False, "required": ["nodes"],
                          "properties": {"nodes": {"type": "integer", "minimum": 2},
                                         "bound": _pos, "factor": _pos}},
        "hull": _pair,
        "pipes": {"type": "array", "minItems": 1, "items": {
            "type": "object", "additionalProperties": False,
            "required": ["id", "interval", "cells", "initial"],
            "properties": {
                "id": {"type": "string", "minLength": 1},
                "interval": _pair,
                "cells": {"type": "integer", "minimum": 1},
                "area": _pos,
                "hull": {"oneOf": [_pair, {"type": "null"}]},
                "epsilon": _pos,
                "initial": {"type": "array", "items": {
                    "type": "object", "additionalProperties": False,
                    "required": ["from", "to", "rho"],
                    "properties": {"from": _num, "to": _num, "rho": {"type": "number", "minimum": 0},
                                   "u": _num}}},
            }}},
        "junctions": {"type": "array", "items": {
            "type": "object", "additionalProperties": False, "required": ["id", "ends", "coupling"],
            "properties": {
                "id": {"type": "string", "minLength": 1},
                "ends": {"type": "array", "minItems": 1, "items": {
                    "type": "object", "additionalProperties": False, "required": ["pipe", "end"],
                    "properties": {"pipe": {"type": "string"}, "end": {"enum": ["minus", "plus"]}}}},
                "coupling": {"$ref": "#/$defs/coupling"},
            }}},
        "epsilon": {"oneOf": [_pos, {"type": "array", "minItems": 1, "items": _pos}]},
        "t_end": _pos,
        "steps": {"type": "integer", "minimum": 1},
        "cfl": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "record_every": {"type": "integer", "minimum": 1},
        "snapshots": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "entropies": {"type": "array", "items": {"enum": sorted(ENTROPIES)}},
        "matching": {"enum": ["parameter", "scale", "none"]},
        "reference": {"type": "object", "additionalProperties": False,
                      "properties": {"closure": {"type": "array", "minItems": 2, "maxItems": 2,
                                                 "items": {"enum": ["wall", "outflow", "vacuum"]}}}},
        "perturbation": {"type": "object", "additionalProperties": False, "required": ["amplitude"],
                         "properties": {"amplitude": {"type": "number", "minimum": 0, "maximum": 1}}},
        "seed": {"type": "integer", "minimum": 0},
        "output": {"type": "string"},
        "full_fields": {"type": "boolean"},
    },
}


def _path(err) -> str:
    out = "$"
    for p in err.absolute_path:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


@dataclass
class RunPlan:
    eps: float
    label: str


@dataclass
class Scenario:
    name: str
    params: GasParams
    grid: VelocityGrid
    topology: NetworkTopology
    initial: dict
    eps: list
    pipe_eps: dict
    t_end: float | None
    steps: int | None
    cfl: float
    record_every: int
    snapshots: list
    entropies: tuple
    matching: str | None
    reference: dict | None
    perturbation: float
    seed: int
    output: str
    full_fields: bool
    warnings: list = field(default_factory=list)

    def plans(self) -> list[RunPlan]:
        if len(self.eps) == 1:
            return [RunPlan(self.eps[0], "")]
        return [RunPlan(e, f"eps_{e:g}") for e in self.eps]

    def initial_blocks(self, seed: int | None = None) -> dict:
        """Per-pipe blocks; with a perturbation, one seeded block per cell."""
        if not self.perturbation:
            return self.initial
        rng = np.random.default_rng(self.seed if seed is None else seed)
        out = {}
        for p in self.topology.pipes:
            x = p.grid.centers
            rho = np.zeros(x.size)
            u = np.zeros(x.size)
            for lo, hi, r, v in self.initial[p.id]:
                sel = (x >= lo) & (x < hi)
                rho[sel], u[sel] = r, v
            rho = rho * (1.0 + self.perturbation * rng.uniform(-1.0, 1.0, x.size))
            edges = p.grid.a_minus + p.grid.dx * np.arange(x.size + 1)
            out[p.id] = [(edges[k], edges[k + 1], rho[k], u[k]) for k in range(x.size)]
        return out


def build_coupling(spec: dict, grid: VelocityGrid, areas) -> CouplingSpec:
    kind = spec["type"]
    if kind == "linear":
        return LinearCoupling(np.array(spec["matrix"], dtype=float))
    if kind == "reflection_wall":
        return ReflectionWall()
    if kind == "maxwellian_wall":
        return MaxwellianWall()
    if kind == "free_outflow":
        return FreeOutflow()
    if kind == "maxwellian_inflow":
        return MaxwellianInflow(spec["rho"], spec.get("u", 0.0))
    if kind == "maxwellian_projection":
        return MaxwellianProjection(build_coupling(spec["inner"], grid, areas))
    if kind == "convolution":
        if "from_linear" in spec:
            return ConvolutionCoupling.from_linear(np.array(spec["from_linear"], dtype=float), grid, areas)
        return ConvolutionCoupling(_full_kernel(spec["kernel"], grid, len(areas)), grid, areas)
    raise ConfigurationError(f"unknown coupling type {kind!r}")


def _full_kernel(nested, grid: VelocityGrid, d: int) -> np.ndarray:
    """Scatter a ``d x d x n_out x n_in`` half-grid kernel onto full node indices."""
    pos = np.flatnonzero(grid.positive)
    neg = np.flatnonzero(grid.negative)
    a = np.zeros((d, d, grid.size, grid.size))
    if len(nested) != d or any(len(row) != d for row in nested):
        raise ConfigurationError(f"kernel must be {d}x{d} blocks")
    for i in range(d):
        for j in range(d):
            blk = np.array(nested[i][j], dtype=float)
            if blk.shape != (pos.size, neg.size):
                raise ConfigurationError(
                    f"kernel block [{i}][{j}] has shape {blk.shape}, expected {(pos.size, neg.size)}")
            a[i, j][np.ix_(pos, neg)] = blk
    return a


def parse_scenario(text: str, base_output: str | None = None) -> Scenario:
    """Strictly parse and validate a JSON scenario; raises :class:`ConfigurationError`."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"scenario is not valid JSON: {exc}") from None
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = [f"{_path(e)}: {e.message}" for e in errors]
        raise ConfigurationError("scenario does not match the schema", msgs)
    bad: list[str] = []
    try:
        params = derive_constants(raw["gas"]["gamma"], raw["gas"].get("kappa", 1.0))
    except BGKError as exc:
        raise ConfigurationError(f"$.gas: {exc}") from None
    hull = tuple(raw["hull"]) if "hull" in raw else None
    vg = raw["velocity_grid"]
    pipes = []
    initial = {}
    pipe_eps = {}
    for k, p in enumerate(raw["pipes"]):
        where = f"$.pipes[{k}] (pipe {p['id']})"
        a, b = p["interval"]
        try:
            grid = PipeGrid(float(a), float(b), int(p["cells"]), float(p.get("area", 1.0)))
            ph = p.get("hull", hull)
            pipes.append(Pipe(p["id"], grid, tuple(ph) if ph is not None else None))
        except BGKError as exc:
            bad.append(f"{where}: {exc}")
            continue
        initial[p["id"]] = [(blk["from"], blk["to"], blk["rho"], blk.get("u", 0.0)) for blk in p["initial"]]
        for m, blk in enumerate(p["initial"]):
            if not blk["from"] < blk["to"]:
                bad.append(f"{where}.initial[{m}]: 'from' must be below 'to'")
        if "epsilon" in p:
            pipe_eps[p["id"]] = float(p["epsilon"])
    if bad:
        raise ConfigurationError("invalid pipes", bad)
    hulls = [p.hull for p in pipes if p.hull is not None]
    if "bound" in vg:
        bound = float(vg["bound"])
    elif hulls:
        bound = vg.get("factor", 1.2) * max(max(abs(h[0]), abs(h[1])) for h in hulls)
    else:
        raise ConfigurationError("$.velocity_grid: give 'bound' or a hull to derive it from")
    grid = VelocityGrid.uniform(int(vg["nodes"]), -bound, bound)
    by_id = {p.id: p for p in pipes}
    junctions = []
    for k, j in enumerate(raw["junctions"]):
        where = f"$.junctions[{k}] (junction {j['id']})"
        ends = [(e["pipe"], e["end"]) for e in j["ends"]]
        missing = [pid for pid, _ in ends if pid not in by_id]
        if missing:
            bad.append(f"{where}: unknown pipe(s) {missing}")
            continue
        try:
            areas = [by_id[pid].grid.area for pid, _ in ends]
            junctions.append(Junction(j["id"], ends, build_coupling(j["coupling"], grid, areas)))
        except BGKError as exc:
            bad.append(f"{where}: {exc}" + (f" {exc.violations}" if getattr(exc, "violations", None) else ""))
    if bad:
        raise ConfigurationError("invalid junctions", bad)
    topology = NetworkTopology(pipes, junctions)
    warnings: list[str] = []
    bad = validate_topology(topology, grid, warnings)
    if bad:
        raise ConfigurationError("invalid network", bad)
    if ("t_end" in raw) == ("steps" in raw):
        raise ConfigurationError("$: give exactly one of 't_end' and 'steps'")
    eps = raw["epsilon"]
    eps = [float(e) for e in eps] if isinstance(eps, list) else [float(eps)]
    ref = raw.get("reference")
    if ref is not None and len(pipes) != 1:
        raise ConfigurationError("$.reference: comparison mode needs a single-pipe scenario")
    matching = raw.get("matching", "parameter")
    output = raw.get("output", base_output or "output")
    return Scenario(
        name=raw.get("name", "scenario"), params=params, grid=grid, topology=topology, initial=initial,
        eps=eps, pipe_eps=pipe_eps, t_end=raw.get("t_end"), steps=raw.get("steps"),
        cfl=float(raw.get("cfl", 0.9)), record_every=int(raw.get("record_every", 1)),
        snapshots=sorted(float(t) for t in raw.get("snapshots", [])),
        entropies=tuple(ENTROPIES[n] for n in raw.get("entropies", ["1", "v", "v^2/2", "v^2"])),
        matching=None if matching == "none" else matching, reference=ref,
        perturbation=float(raw.get("perturbation", {}).get("amplitude", 0.0)),
        seed=int(raw.get("seed", 0)), output=output, full_fields=bool(raw.get("full_fields", False)),
        warnings=warnings)
