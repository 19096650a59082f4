"""Transport-relaxation time stepping of one pipe's kinetic field.

One step is first-order Lie splitting: upwind free transport with ghost data
at both ends, then the exact exponential relaxation
``f <- M[f] + (f - M[f]) exp(-dt/eps)`` toward the moment-matched Maxwellian.
Arrays ``f0, f1`` have shape ``(cells, velocity nodes)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError, DomainError, StepError
from .gas_core import VACUUM_FLOOR, GasParams, KineticPair, kinetic_energy
from .velocity_grid import (VelocityGrid, conserved_moments, matched_maxwellian, moments,
                            project_maxwellian, support_overflow)

CFL_SLACK = 1e-12
# entries this small are flushed to exact vacuum so f0 = 0 implies f1 = 0
UNDERFLOW = 1e-300


@dataclass(frozen=True)
class PipeGrid:
    a_minus: float
    a_plus: float
    cells: int
    area: float = 1.0

    def __post_init__(self):
        if not self.a_minus < self.a_plus:
            raise ConfigurationError("pipe interval must satisfy a_minus < a_plus")
        if self.cells < 1:
            raise ConfigurationError("pipe needs at least one cell")
        if not self.area > 0:
            raise ConfigurationError("pipe area must be positive")

    @property
    def length(self) -> float:
        return self.a_plus - self.a_minus

    @property
    def dx(self) -> float:
        return (self.a_plus - self.a_minus) / self.cells

    @property
    def centers(self) -> np.ndarray:
        return self.a_minus + (np.arange(self.cells) + 0.5) * self.dx


@dataclass
class KineticField:
    """Per-cell discrete kinetic state of one pipe."""

    f0: np.ndarray
    f1: np.ndarray
    eps: float
    t: float = 0.0
    # last matched Maxwellian parameters, used as a Newton warm start
    match_cache: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.eps > 0:
            raise DomainError("relaxation time eps must be positive")
        if self.f0.shape != self.f1.shape or self.f0.ndim != 2:
            raise DomainError("f0 and f1 must be arrays of shape (cells, nodes)")

    @property
    def cells(self) -> int:
        return self.f0.shape[0]

    def copy(self) -> "KineticField":
        return replace(self, f0=self.f0.copy(), f1=self.f1.copy())


class GhostData(NamedTuple):
    """Inflow values at both ends: ``minus`` on xi > 0, ``plus`` on xi < 0."""

    minus: KineticPair
    plus: KineticPair


class BoundaryTrace(NamedTuple):
    """Outgoing values: first cell on xi < 0, last cell on xi > 0."""

    minus: KineticPair
    plus: KineticPair


class EndFlux(NamedTuple):
    """Signed (rightward positive) fluxes through one pipe end."""

    mass: float
    momentum: float
    energy: float


class TransportRecord(NamedTuple):
    dt: float
    minus: EndFlux
    plus: EndFlux


class RelaxRecord(NamedTuple):
    vacuum_mass: float
    overflow_mass: float
    fallbacks: int


def cfl_timestep(grid: PipeGrid, vgrid: VelocityGrid, cfl: float) -> float:
    if not 0 < cfl <= 1:
        raise ConfigurationError("cfl must lie in (0, 1]")
    speed = vgrid.max_speed
    if speed <= 0:
        raise ConfigurationError("velocity grid has no nonzero node")
    return cfl * grid.dx / speed


def zero_ghost(vgrid: VelocityGrid) -> KineticPair:
    return KineticPair(np.zeros(vgrid.size), np.zeros(vgrid.size))


def initial_field(grid: PipeGrid, vgrid: VelocityGrid, params: GasParams, blocks, eps: float,
                  method: str | None = "parameter") -> KineticField:
    """Project piecewise-constant ``(x_lo, x_hi, rho, u)`` blocks to Maxwellians.

    Cells take the block containing their center; uncovered cells are vacuum.
    """
    x = grid.centers
    rho = np.zeros(grid.cells)
    u = np.zeros(grid.cells)
    for x_lo, x_hi, r, v in blocks:
        sel = (x >= x_lo) & (x < x_hi)
        rho[sel] = r
        u[sel] = v
    f0, f1 = project_maxwellian(vgrid, params, rho, u, method=method)
    return KineticField(np.array(f0), np.array(f1), eps)


def _flush(f0, f1):
    tiny = f0 < UNDERFLOW
    if np.any(tiny):
        f0 = np.where(tiny, 0.0, f0)
        f1 = np.where(tiny, 0.0, f1)
    return f0, f1


def _end_flux(params, vgrid, f0, f1) -> EndFlux:
    wx = vgrid.nodes * vgrid.dxi
    h = kinetic_energy(params, f0, f1, vgrid.nodes)
    return EndFlux(float(f0 @ wx), float(f1 @ wx), float(h @ wx))


def interface_values(vgrid: VelocityGrid, field: KineticField, ghosts: GhostData):
    """Full-grid upwind values at the ``a_minus`` and ``a_plus`` interfaces."""
    pos = vgrid.positive
    left0 = np.where(pos, ghosts.minus.f0, field.f0[0])
    left1 = np.where(pos, ghosts.minus.f1, field.f1[0])
    right0 = np.where(pos, field.f0[-1], ghosts.plus.f0)
    right1 = np.where(pos, field.f1[-1], ghosts.plus.f1)
    return KineticPair(left0, left1), KineticPair(right0, right1)


def transport_step(params: GasParams, grid: PipeGrid, vgrid: VelocityGrid, field: KineticField,
                   ghosts: GhostData, dt: float) -> tuple[KineticField, TransportRecord]:
    """First-order upwind transport, written as a per-node convex combination."""
    nu = vgrid.nodes * dt / grid.dx
    if np.max(np.abs(nu)) > 1.0 + CFL_SLACK:
        raise StepError(f"CFL violated: max |nu| = {np.max(np.abs(nu)):.6g} > 1")
    nu_p = np.maximum(nu, 0.0)
    nu_m = np.maximum(-nu, 0.0)
    stay = 1.0 - np.abs(nu)
    pos = vgrid.positive
    neg = vgrid.negative
    out = []
    for c, gm, gp in ((field.f0, ghosts.minus.f0, ghosts.plus.f0),
                      (field.f1, ghosts.minus.f1, ghosts.plus.f1)):
        ext = np.vstack([np.where(pos, gm, 0.0), c, np.where(neg, gp, 0.0)])
        out.append(stay * c + nu_p * ext[:-2] + nu_m * ext[2:])
    left, right = interface_values(vgrid, field, ghosts)
    record = TransportRecord(dt, _end_flux(params, vgrid, *left), _end_flux(params, vgrid, *right))
    f0, f1 = _flush(out[0], out[1])
    new = replace(field, f0=f0, f1=f1, t=field.t + dt)
    return new, record


def relax_step(params: GasParams, vgrid: VelocityGrid, field: KineticField, dt: float,
               method: str | None = "parameter") -> tuple[KineticField, RelaxRecord]:
    """Exact exponential relaxation toward the moment-matched Maxwellian.

    Cells below the vacuum floor relax toward zero; the mass removed there is
    reported in the record.
    """
    rho, q = conserved_moments(vgrid, field.f0, field.f1)
    live = rho >= VACUUM_FLOOR
    decay = np.exp(-dt / field.eps)
    rho_l = np.where(live, rho, 0.0)
    u = np.where(live, q / np.where(live, rho, 1.0), 0.0)
    fallbacks = 0
    cache = None
    if method == "parameter":
        guess = None
        if field.match_cache is not None:
            # last matched parameters, shifted by the change in (rho, u)
            g_rho, g_u, old_rho, old_u = field.match_cache
            guess = (g_rho + (rho_l - old_rho), g_u + (u - old_u))
        m0, m1, rt, ut, ok = matched_maxwellian(vgrid, params, rho_l, u, guess=guess)
        fallbacks = int(np.sum(~ok))
        cache = (rt, ut, rho_l, u)
        overflow = support_overflow(vgrid, params, rt, ut)
    else:
        m0, m1 = project_maxwellian(vgrid, params, rho_l, u, method=method)
        overflow = support_overflow(vgrid, params, rho_l, u)
    f0 = m0 + (field.f0 - m0) * decay
    f1 = m1 + (field.f1 - m1) * decay
    f0, f1 = _flush(f0, f1)
    vac_mass = float(np.sum(np.where(live, 0.0, rho)) * (1.0 - decay))
    new = replace(field, f0=f0, f1=f1, match_cache=cache)
    return new, RelaxRecord(vac_mass, float(np.max(overflow, initial=0.0)), fallbacks)


def extract_traces(vgrid: VelocityGrid, field: KineticField) -> BoundaryTrace:
    neg = vgrid.negative
    pos = vgrid.positive
    minus = KineticPair(np.where(neg, field.f0[0], 0.0), np.where(neg, field.f1[0], 0.0))
    plus = KineticPair(np.where(pos, field.f0[-1], 0.0), np.where(pos, field.f1[-1], 0.0))
    return BoundaryTrace(minus, plus)


def field_mass(vgrid: VelocityGrid, grid: PipeGrid, field: KineticField) -> float:
    """Discrete mass ``dx sum_j sum_k w f0`` (area not included)."""
    return float(np.sum(field.f0) * vgrid.dxi * grid.dx)


def field_energy(params: GasParams, vgrid: VelocityGrid, grid: PipeGrid, field: KineticField) -> float:
    h = kinetic_energy(params, field.f0, field.f1, vgrid.nodes)
    return float(np.sum(h) * vgrid.dxi * grid.dx)


def field_moments(vgrid: VelocityGrid, field: KineticField):
    return moments(vgrid, field.f0, field.f1)


def step(params: GasParams, grid: PipeGrid, vgrid: VelocityGrid, field: KineticField,
         ghosts: GhostData, dt: float, method: str | None = "parameter"):
    """Transport then relax; returns the new field and both records."""
    moved, trec = transport_step(params, grid, vgrid, field, ghosts, dt)
    relaxed, rrec = relax_step(params, vgrid, moved, dt, method=method)
    return relaxed, trec, rrec
