"""First-order kinetic flux-vector splitting for the isentropic gas equations.

The interface flux is assembled from the upwinded half-moments of the same
discrete Maxwellians the kinetic solver relaxes to,

    F(L, R) = sum_{xi_k > 0} xi_k w M(L, xi_k) + sum_{xi_k < 0} xi_k w M(R, xi_k),

so as ``eps -> 0`` the kinetic scheme and this one differ only by the
relaxation error.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, DomainError, StepError
from .gas_core import VACUUM_FLOOR, GasParams
from .pipeline import CFL_SLACK, PipeGrid
from .velocity_grid import VelocityGrid, matched_maxwellian, project_maxwellian

WALL = "wall"
OUTFLOW = "outflow"
VACUUM = "vacuum"
CLOSURES = (WALL, OUTFLOW, VACUUM)


@dataclass
class MacroField:
    """Cell averages of ``rho`` and ``q = rho u`` on a :class:`PipeGrid`."""

    grid: PipeGrid
    rho: np.ndarray
    q: np.ndarray
    t: float = 0.0
    # matched Maxwellian parameters of the last step (ghosts included), a warm start
    match_cache: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        if self.rho.shape != (self.grid.cells,) or self.q.shape != (self.grid.cells,):
            raise DomainError("rho and q must have one value per cell")

    @classmethod
    def from_blocks(cls, grid: PipeGrid, blocks) -> "MacroField":
        x = grid.centers
        rho = np.zeros(grid.cells)
        q = np.zeros(grid.cells)
        for x_lo, x_hi, r, u in blocks:
            sel = (x >= x_lo) & (x < x_hi)
            rho[sel] = r
            q[sel] = r * u
        return cls(grid, rho, q)

    @property
    def u(self) -> np.ndarray:
        live = self.rho >= VACUUM_FLOOR
        return np.where(live, self.q / np.where(live, self.rho, 1.0), 0.0)

    def mass(self) -> float:
        return float(self.grid.area * self.grid.dx * np.sum(self.rho))

    def entropy(self, params: GasParams) -> float:
        """Total mechanical energy ``dx sum eta(rho, u)`` (area weighted)."""
        eta = 0.5 * self.rho * self.u**2 + params.kappa / (params.gamma - 1.0) * self.rho**params.gamma
        return float(self.grid.area * self.grid.dx * np.sum(eta))


def _half_moments(params, vgrid, rho, u, method, cache=None):
    """Signed half-grid fluxes of the discrete Maxwellians; also returns a warm-start cache."""
    new_cache = None
    if method == "parameter":
        rho_l = np.where(rho >= VACUUM_FLOOR, rho, 0.0)
        guess = None
        if cache is not None and cache[0].shape == rho.shape:
            g_rho, g_u, old_rho, old_u = cache
            guess = (g_rho + (rho_l - old_rho), g_u + (u - old_u))
        f0, f1, rt, ut, _ = matched_maxwellian(vgrid, params, rho_l, u, guess=guess)
        new_cache = (rt, ut, rho_l, u)
    else:
        f0, f1 = project_maxwellian(vgrid, params, rho, u, method=method)
    wx = vgrid.nodes * vgrid.dxi
    wp = np.where(vgrid.positive, wx, 0.0)
    wn = np.where(vgrid.negative, wx, 0.0)
    return (f0 @ wp, f1 @ wp), (f0 @ wn, f1 @ wn), new_cache


def kfvs_flux(params: GasParams, left, right, vgrid: VelocityGrid,
              method: str | None = "parameter") -> tuple[np.ndarray, np.ndarray]:
    """Interface fluxes for (arrays of) ``left = (rho, u)`` and ``right = (rho, u)``.

    ``method`` selects how the Maxwellians are sampled (see
    :func:`bgknet.velocity_grid.project_maxwellian`); ``None`` uses raw node
    values.
    """
    lr, lu = np.broadcast_arrays(np.asarray(left[0], float), np.asarray(left[1], float))
    rr, ru = np.broadcast_arrays(np.asarray(right[0], float), np.asarray(right[1], float))
    pos, _, _ = _half_moments(params, vgrid, lr.ravel(), lu.ravel(), method)
    _, neg, _ = _half_moments(params, vgrid, rr.ravel(), ru.ravel(), method)
    shape = np.broadcast_shapes(lr.shape, rr.shape)
    if shape == ():
        return float(pos[0][0] + neg[0][0]), float(pos[1][0] + neg[1][0])
    return (pos[0] + neg[0]).reshape(shape), (pos[1] + neg[1]).reshape(shape)


def _ghosts(field, closure):
    rho, u = field.rho, field.u
    out = []
    for end, idx in (("minus", 0), ("plus", -1)):
        kind = closure[end]
        if kind == WALL:
            out.append((rho[idx], -u[idx]))
        elif kind == OUTFLOW:
            out.append((rho[idx], u[idx]))
        elif kind == VACUUM:
            out.append((0.0, 0.0))
        else:
            raise ConfigurationError(f"unknown boundary closure {kind!r}; choose from {CLOSURES}")
    return out


def macro_step(params: GasParams, vgrid: VelocityGrid, field: MacroField, dt: float,
               closure=(WALL, WALL), method: str | None = "parameter") -> MacroField:
    """Conservative update ``U_j -= dt/dx (F_{j+1/2} - F_{j-1/2})``.

    ``closure`` gives the ``(minus, plus)`` treatment: ``"wall"`` mirrors the
    adjacent cell with reversed velocity, ``"outflow"`` copies it and
    ``"vacuum"`` uses the empty state.
    """
    if isinstance(closure, str):
        closure = (closure, closure)
    closure = {"minus": closure[0], "plus": closure[1]}
    grid = field.grid
    speed = vgrid.max_speed
    if dt * speed > grid.dx * (1.0 + CFL_SLACK):
        raise StepError(f"CFL violated: dt max|xi| / dx = {dt * speed / grid.dx:.6g} > 1")
    (gl, gr) = _ghosts(field, closure)
    rho = np.concatenate([[gl[0]], field.rho, [gr[0]]])
    u = np.concatenate([[gl[1]], field.u, [gr[1]]])
    (p0, p1), (n0, n1), cache = _half_moments(params, vgrid, rho, u, method, field.match_cache)
    f0 = p0[:-1] + n0[1:]
    f1 = p1[:-1] + n1[1:]
    lam = dt / grid.dx
    new_rho = field.rho - lam * np.diff(f0)
    new_q = field.q - lam * np.diff(f1)
    # roundoff can leave -1e-17 in emptied cells
    new_rho = np.where(np.abs(new_rho) < 1e-300, 0.0, new_rho)
    if np.any(new_rho < -1e-14):
        raise StepError("negative density in macroscopic update")
    new_rho = np.maximum(new_rho, 0.0)
    return replace(field, rho=new_rho, q=np.where(new_rho > 0, new_q, 0.0), t=field.t + dt,
                   match_cache=cache)


def macro_solve(params: GasParams, vgrid: VelocityGrid, field: MacroField, t_end: float,
                cfl: float = 0.9, closure=(WALL, WALL), method: str | None = "parameter") -> MacroField:
    """March :func:`macro_step` to ``t_end`` with ``dt = cfl dx / max|xi|``."""
    dt_max = cfl * field.grid.dx / vgrid.max_speed
    while t_end - field.t > 1e-12 * max(1.0, t_end):
        field = macro_step(params, vgrid, field, min(dt_max, t_end - field.t), closure, method)
    return field

