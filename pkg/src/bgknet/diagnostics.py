"""Ledgers and certificates for network runs.

The :class:`TraceLedger` is fed once per step by :func:`bgknet.network.simulate`.
It stores, per pipe end, the fluxes of the interface profile used by the
transport step (outgoing trace on one half-grid, ghost on the other), the
entropy-flux traces ``psi_S`` and a first-cell macroscopic surrogate
``G_S``; per junction the coupling budgets; and per step the area-weighted
totals of mass and energy together with the invariant-domain violation.
Rows are appended every ``every``-th step, with all fluxes integrated exactly
over the skipped steps so the ledger closes regardless of cadence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError
from .gas_core import (S_ENERGY, S_LINEAR, S_ONE, S_SQUARE, VACUUM_FLOOR, EntropyGenerator,
                       GasParams, _q_unchecked, entropy_pair, kinetic_energy, kinetic_entropy_s)
from .velocity_grid import VelocityGrid, moments

DEFAULT_ENTROPIES = (S_ONE, S_LINEAR, S_ENERGY, S_SQUARE)


def psi_s(params: GasParams, grid: VelocityGrid, profile, entropies: Sequence[EntropyGenerator]):
    """Signed full-grid fluxes ``sum_k xi_k w H_S(f_k, xi_k)``, one per generator.

    ``profile`` is the pipe-frame interface value at one end: the stored
    outgoing trace on one half-grid and the applied ghost on the other.
    """
    f0, f1 = (np.asarray(a, dtype=float) for a in profile)
    wx = grid.nodes * grid.dxi
    return [float(kinetic_entropy_s(params, f0, f1, grid.nodes, S) @ wx) for S in entropies]


def invariant_violation(params: GasParams, grid: VelocityGrid, f0, f1, hull) -> float:
    """``max (omega2 - w_max)_+ + (w_min - omega1)_+`` over nonvacuum entries."""
    if hull is None:
        return 0.0
    f0 = np.asarray(f0, dtype=float)
    f1 = np.asarray(f1, dtype=float)
    live = f0 >= VACUUM_FLOOR
    if not np.any(live):
        return 0.0
    xi = np.broadcast_to(grid.nodes, f0.shape)
    w1, w2 = _q_unchecked(params, f0[live], f1[live], xi[live])
    excess = np.maximum(w2 - hull[1], 0.0) + np.maximum(hull[0] - w1, 0.0)
    return float(np.max(excess))


def restrict(values, factor: int) -> np.ndarray:
    """Cell-average restriction of a fine 1-d profile by an integer factor."""
    values = np.asarray(values, dtype=float)
    if factor < 1 or values.size % factor:
        raise ConfigurationError(f"cannot restrict {values.size} cells by a factor {factor}")
    return values.reshape(-1, factor).mean(axis=1)


def l1_distance(dx: float, rho, q, rho_ref, q_ref) -> tuple[float, float]:
    """``(dx sum |rho - rho_ref|, dx sum |q - q_ref|)``; finer references are restricted."""
    rho, q = np.asarray(rho, dtype=float), np.asarray(q, dtype=float)
    rho_ref, q_ref = np.asarray(rho_ref, dtype=float), np.asarray(q_ref, dtype=float)
    if rho_ref.size != rho.size:
        if rho_ref.size % rho.size:
            raise ConfigurationError(f"reference grid of {rho_ref.size} cells does not refine {rho.size}")
        k = rho_ref.size // rho.size
        rho_ref, q_ref = restrict(rho_ref, k), restrict(q_ref, k)
    return float(dx * np.sum(np.abs(rho - rho_ref))), float(dx * np.sum(np.abs(q - q_ref)))


@dataclass
class EndRow:
    step: int
    t: float
    window: float
    pipe: str
    end: str
    mass_flux: float
    momentum_flux: float
    energy_flux: float
    psi: dict
    g_macro: dict
    # time integrals over the window ending at this row
    mass_integral: float = 0.0
    psi_integral: dict = field(default_factory=dict)


@dataclass
class JunctionRow:
    step: int
    t: float
    window: float
    junction: str
    mass_in: float
    mass_out: float
    energy_in: float
    energy_out: float
    omega_in: float
    omega_out: float
    psi_sum: dict
    mass_slack_integral: float = 0.0
    energy_slack_integral: float = 0.0

    @property
    def mass_slack(self) -> float:
        return self.mass_out - self.mass_in

    @property
    def energy_slack(self) -> float:
        return self.energy_out - self.energy_in

    @property
    def omega_slack(self) -> float:
        return self.omega_out - self.omega_in


@dataclass
class TotalsRow:
    step: int
    t: float
    mass: float
    energy: float
    violation: float
    slack_mass: float
    slack_energy: float
    vacuum_loss: float


class TraceLedger:
    """Append-only per-end, per-junction and total time series."""

    def __init__(self, params: GasParams, grid: VelocityGrid,
                 entropies: Sequence[EntropyGenerator] = DEFAULT_ENTROPIES, every: int = 1,
                 macro_nodes: int = 32):
        if every < 1:
            raise ConfigurationError("recording cadence must be >= 1")
        self.params = params
        self.grid = grid
        self.entropies = tuple(entropies)
        self.every = every
        self.macro_nodes = macro_nodes
        self.end_rows: list[EndRow] = []
        self.junction_rows: list[JunctionRow] = []
        self.totals: list[TotalsRow] = []
        self.max_violation = 0.0
        self.max_step_energy_increase = 0.0
        self.fallbacks = 0
        self.max_overflow = 0.0
        self._acc: dict = {}
        self._window = 0.0
        self._slack_mass = 0.0
        self._slack_energy = 0.0
        self._vacuum = 0.0
        self._last_energy = None

    @property
    def names(self) -> list[str]:
        return [S.name for S in self.entropies]

    def record_initial(self, topology, fields: dict, t: float = 0.0):
        mass, energy, viol = self._totals(topology, fields)
        self.max_violation = max(self.max_violation, viol)
        self._last_energy = energy
        self.totals.append(TotalsRow(0, t, mass, energy, viol, 0.0, 0.0, 0.0))

    def _totals(self, topology, fields):
        mass = energy = viol = 0.0
        # fixed summation order keeps totals independent of how pipes are listed
        for pipe in sorted(topology.pipes, key=lambda p: p.id):
            f = fields[pipe.id]
            area, dx = pipe.grid.area, pipe.grid.dx
            mass += area * dx * float(np.sum(f.f0)) * self.grid.dxi
            energy += area * dx * float(np.sum(kinetic_energy(self.params, f.f0, f.f1, self.grid.nodes))) * self.grid.dxi
            viol = max(viol, invariant_violation(self.params, self.grid, f.f0, f.f1, pipe.hull))
        return mass, energy, viol

    def _g_macro(self, f0, f1):
        rho, u = moments(self.grid, f0, f1)
        out = {}
        for S in self.entropies:
            if rho > 0:
                out[S.name] = float(entropy_pair(self.params, float(rho), float(u), S, self.macro_nodes)[1])
            else:
                out[S.name] = 0.0
        return out

    def record_step(self, topology, fields: dict, rec) -> None:
        """Accumulate one network step ``rec``; append rows on cadence."""
        dt = rec.dt
        self._window += dt
        names = self.names
        inst_end = {}
        for pipe in topology.pipes:
            for end in ("minus", "plus"):
                prof = rec.interfaces[(pipe.id, end)]
                psi = dict(zip(names, psi_s(self.params, self.grid, prof, self.entropies)))
                tr = rec.transport[pipe.id]
                flux = tr.minus if end == "minus" else tr.plus
                inst_end[(pipe.id, end)] = (flux, psi)
                acc = self._acc.setdefault(("end", pipe.id, end), {"mass": 0.0, **{n: 0.0 for n in names}})
                acc["mass"] += dt * flux.mass
                for n in names:
                    acc[n] += dt * psi[n]
        inst_j = {}
        for j in topology.junctions:
            rep = rec.budgets[j.id]
            sums = {n: 0.0 for n in names}
            for pid, end in j.ends:
                area = topology.pipe(pid).grid.area
                sign = 1.0 if end == "minus" else -1.0
                for n in names:
                    sums[n] += area * sign * inst_end[(pid, end)][1][n]
            inst_j[j.id] = (rep, sums)
            acc = self._acc.setdefault(("junction", j.id), {"mass": 0.0, "energy": 0.0})
            acc["mass"] += dt * rep.mass_slack
            acc["energy"] += dt * rep.energy_slack
            self._slack_mass += dt * rep.mass_slack
            self._slack_energy += dt * rep.energy_slack
        self._vacuum += rec.vacuum_loss
        for rr in rec.relax.values():
            self.fallbacks += rr.fallbacks
            self.max_overflow = max(self.max_overflow, rr.overflow_mass)

        mass, energy, viol = self._totals(topology, fields)
        self.max_violation = max(self.max_violation, viol)
        if self._last_energy is not None:
            slack = sum(max(inst_j[j.id][0].energy_slack, 0.0) for j in topology.junctions) * dt
            self.max_step_energy_increase = max(self.max_step_energy_increase,
                                                energy - self._last_energy - slack)
        self._last_energy = energy
        if rec.step % self.every:
            return
        window = self._window
        for pipe in topology.pipes:
            for end in ("minus", "plus"):
                flux, psi = inst_end[(pipe.id, end)]
                f = fields[pipe.id]
                cell = 0 if end == "minus" else -1
                acc = self._acc.pop(("end", pipe.id, end))
                self.end_rows.append(EndRow(rec.step, rec.t, window, pipe.id, end, flux.mass,
                                            flux.momentum, flux.energy, psi,
                                            self._g_macro(f.f0[cell], f.f1[cell]),
                                            acc["mass"], {n: acc[n] for n in names}))
        for j in topology.junctions:
            rep, sums = inst_j[j.id]
            acc = self._acc.pop(("junction", j.id))
            self.junction_rows.append(JunctionRow(rec.step, rec.t, window, j.id, rep.mass_in, rep.mass_out,
                                                  rep.energy_in, rep.energy_out, rep.omega_in,
                                                  rep.omega_out, sums, acc["mass"], acc["energy"]))
        self.totals.append(TotalsRow(rec.step, rec.t, mass, energy, viol, self._slack_mass,
                                     self._slack_energy, self._vacuum))
        self._window = 0.0

    def summary(self) -> "RunSummary":
        return RunSummary.from_ledger(self)


@dataclass
class RunSummary:
    t: np.ndarray
    mass: np.ndarray
    energy: np.ndarray
    max_violation: float
    slack_mass: float
    slack_energy: float
    vacuum_loss: float
    junction_slacks: dict
    max_step_energy_increase: float
    fallbacks: int
    max_overflow: float = 0.0
    l1: dict = field(default_factory=dict)

    @classmethod
    def from_ledger(cls, ledger: TraceLedger) -> "RunSummary":
        tot = ledger.totals
        js: dict = {}
        for row in ledger.junction_rows:
            m, e = js.get(row.junction, (0.0, 0.0))
            js[row.junction] = (m + row.mass_slack_integral, e + row.energy_slack_integral)
        last = tot[-1] if tot else None
        return cls(np.array([r.t for r in tot]), np.array([r.mass for r in tot]),
                   np.array([r.energy for r in tot]), ledger.max_violation,
                   last.slack_mass if last else 0.0, last.slack_energy if last else 0.0,
                   last.vacuum_loss if last else 0.0, js, ledger.max_step_energy_increase,
                   ledger.fallbacks, ledger.max_overflow)

    @property
    def mass_residual(self) -> float:
        """Relative ledger closure error ``|M(t) - M(0) - slacks + losses| / M(0)``."""
        if self.mass.size == 0:
            return 0.0
        ref = max(abs(self.mass[0]), np.finfo(float).tiny)
        return float(abs(self.mass[-1] - self.mass[0] - self.slack_mass + self.vacuum_loss) / ref)

    @property
    def mass_drift(self) -> float:
        if self.mass.size == 0:
            return 0.0
        return float(abs(self.mass[-1] - self.mass[0]) / max(abs(self.mass[0]), np.finfo(float).tiny))

    @property
    def energy_drift(self) -> float:
        if self.energy.size == 0:
            return 0.0
        return float((self.energy[-1] - self.energy[0]) / max(abs(self.energy[0]), np.finfo(float).tiny))

    def as_dict(self) -> dict:
        return {
            "t_final": float(self.t[-1]) if self.t.size else 0.0,
            "mass_initial": float(self.mass[0]) if self.mass.size else 0.0,
            "mass_final": float(self.mass[-1]) if self.mass.size else 0.0,
            "mass_drift": self.mass_drift,
            "mass_ledger_residual": self.mass_residual,
            "energy_initial": float(self.energy[0]) if self.energy.size else 0.0,
            "energy_final": float(self.energy[-1]) if self.energy.size else 0.0,
            "energy_drift": self.energy_drift,
            "max_step_energy_increase": self.max_step_energy_increase,
            "max_invariant_violation": self.max_violation,
            "slack_mass": self.slack_mass,
            "slack_energy": self.slack_energy,
            "vacuum_loss": self.vacuum_loss,
            "matching_fallbacks": self.fallbacks,
            "max_support_overflow": self.max_overflow,
            "junction_slacks": {k: {"mass": v[0], "energy": v[1]} for k, v in self.junction_slacks.items()},
            "l1": self.l1,
        }
