"""Kinetic coupling functions at junctions.

Every coupling works in a canonical frame in which each attached pipe starts
at the junction: incoming traces live on ``xi < 0`` and outgoing ghost data on
``xi > 0``. A pipe attached by its ``plus`` end is mirrored,
``g(xi) = (f0(-xi), -f1(-xi))``, on the way in and on the way out, so its
hull ``[w_min, w_max]`` becomes ``[-w_max, -w_min]`` in that frame.

All moment sums use the ``|xi|``-weighted half-grid quadrature, so mass flux
balances of the linear family hold to roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass
import logging
from typing import Callable

import numpy as np
from scipy.optimize import brentq
from scipy.special import beta

from .errors import ConfigurationError, DomainError, SolverError
from .gas_core import (GasParams, KineticPair, MacroState, kinetic_energy, kinetic_entropy_s,
                       maxwellian, s_omega, state_from_invariants)
from .velocity_grid import VelocityGrid

log = logging.getLogger(__name__)

MINUS = "minus"
PLUS = "plus"
LINEAR_TOL = 1e-12
KERNEL_TOL = 1e-10
HALF_FLUX_TOL = 1e-10
NEWTON_MAXITER = 100


def check_end(end: str) -> str:
    if end not in (MINUS, PLUS):
        raise ConfigurationError(f"pipe end must be 'minus' or 'plus', got {end!r}")
    return end


def to_canonical(grid: VelocityGrid, pair, end: str) -> KineticPair:
    """Map pipe-frame values at ``end`` to the canonical frame (an involution)."""
    f0, f1 = pair
    if check_end(end) == MINUS:
        return KineticPair(np.asarray(f0), np.asarray(f1))
    m = grid.mirror
    return KineticPair(np.asarray(f0)[..., m], -np.asarray(f1)[..., m])


from_canonical = to_canonical


def canonical_hull(hull, end: str):
    if hull is None:
        return None
    lo, hi = hull
    return (lo, hi) if check_end(end) == MINUS else (-hi, -lo)


@dataclass(frozen=True)
class JunctionInput:
    """Canonical-frame incoming traces of the ``d`` pipe ends at a junction."""

    t: float
    grid: VelocityGrid
    traces: tuple
    areas: tuple
    ends: tuple
    hulls: tuple = ()

    def __post_init__(self):
        d = len(self.traces)
        if len(self.areas) != d or len(self.ends) != d:
            raise ConfigurationError("traces, areas and ends must have equal length")
        if self.hulls and len(self.hulls) != d:
            raise ConfigurationError("one hull per attached end required")

    @classmethod
    def from_pipe_frame(cls, t, grid, traces, areas, ends, hulls=None) -> "JunctionInput":
        """Build from pipe-frame traces; picks the outgoing half of each."""
        canon = []
        neg = grid.negative
        for pair, end in zip(traces, ends):
            g0, g1 = to_canonical(grid, pair, end)
            canon.append(KineticPair(np.where(neg, g0, 0.0), np.where(neg, g1, 0.0)))
        ch = tuple(canonical_hull(h, e) for h, e in zip(hulls, ends)) if hulls else ()
        return cls(t, grid, tuple(canon), tuple(float(a) for a in areas), tuple(ends), ch)

    @property
    def d(self) -> int:
        return len(self.traces)

    def zero_output(self) -> list[KineticPair]:
        n = self.grid.size
        return [KineticPair(np.zeros(n), np.zeros(n)) for _ in range(self.d)]


def outputs_to_pipe_frame(grid: VelocityGrid, outputs, ends) -> list[KineticPair]:
    return [from_canonical(grid, out, end) for out, end in zip(outputs, ends)]


def _half(grid, f0, f1, side="positive"):
    mask = grid.positive if side == "positive" else grid.negative
    return KineticPair(np.where(mask, f0, 0.0), np.where(mask, f1, 0.0))


def half_flux(grid: VelocityGrid, f0, f1, side: str = "positive") -> tuple[float, float]:
    """``sum |xi| w (f0, f1)`` over one half-grid."""
    mask = grid.positive if side == "positive" else grid.negative
    wx = np.where(mask, grid.flux_weights, 0.0)
    return float(np.asarray(f0) @ wx), float(np.asarray(f1) @ wx)


# --------------------------------------------------------------------------
# linear family
# --------------------------------------------------------------------------

def validate_linear(c, areas, tol: float = LINEAR_TOL) -> list[str]:
    """Violations of ``c >= 0``, unit row sums and ``sum_i A^i c^ij = A^j``."""
    c = np.asarray(c, dtype=float)
    areas = np.asarray(areas, dtype=float)
    d = areas.size
    if c.shape != (d, d):
        return [f"matrix shape {c.shape} does not match {d} attached ends"]
    out = []
    for i, j in zip(*np.nonzero(c < 0)):
        out.append(f"c[{i}][{j}] = {c[i, j]:g} is negative")
    for i, r in enumerate(c.sum(axis=1)):
        if abs(r - 1.0) > tol:
            out.append(f"row sum {i}: sum_j c[{i}][j] = {r:.15g} != 1")
    cols = areas @ c
    for j in range(d):
        if abs(cols[j] - areas[j]) > tol * max(1.0, abs(areas[j])):
            out.append(f"column sum {j}: sum_i A[i] c[i][{j}] = {cols[j]:.15g} != A[{j}] = {areas[j]:.15g}")
    return out


def _reflect(grid, g0, g1):
    m = grid.mirror
    pos = grid.positive
    return np.where(pos, g0[..., m], 0.0), np.where(pos, -g1[..., m], 0.0)


def apply_linear(c, inp: JunctionInput) -> list[KineticPair]:
    """``out^i(xi) = sum_j c^ij (g0^j(-xi), -g1^j(-xi))`` for ``xi > 0``."""
    c = np.asarray(c, dtype=float)
    g0 = np.array([t.f0 for t in inp.traces])
    g1 = np.array([t.f1 for t in inp.traces])
    r0, r1 = _reflect(inp.grid, g0, g1)
    o0, o1 = c @ r0, c @ r1
    return [KineticPair(o0[i], o1[i]) for i in range(inp.d)]


def apply_reflection_wall(inp: JunctionInput) -> list[KineticPair]:
    if inp.d != 1:
        raise ConfigurationError("a wall attaches to exactly one pipe end")
    return apply_linear([[1.0]], inp)


def degenerate_kernel(c, grid: VelocityGrid) -> np.ndarray:
    """Node kernel ``a^ij_kl = c^ij / (xi_k w) [l = mirror(k)]`` reproducing ``c``."""
    c = np.asarray(c, dtype=float)
    d = c.shape[0]
    n = grid.size
    a = np.zeros((d, d, n, n))
    m = grid.mirror
    for k in np.flatnonzero(grid.positive):
        a[:, :, k, m[k]] = c / (grid.nodes[k] * grid.dxi)
    return a


def validate_kernel(a, grid: VelocityGrid, areas, tol: float = KERNEL_TOL) -> list[str]:
    a = np.asarray(a, dtype=float)
    areas = np.asarray(areas, dtype=float)
    d, n = areas.size, grid.size
    if a.shape != (d, d, n, n):
        return [f"kernel shape {a.shape} != {(d, d, n, n)}"]
    out = []
    if np.any(a < 0):
        out.append("kernel has negative entries")
    wx = np.where(grid.positive, grid.flux_weights, 0.0)
    # sum_i A^i sum_k xi_k w a^ij_kl for each (j, l)
    s = np.einsum("i,ijkl,k->jl", areas, a, wx)
    for j in range(d):
        for l in np.flatnonzero(grid.negative):
            if abs(s[j, l] - areas[j]) > tol * areas[j]:
                out.append(f"kernel constraint for pipe {j} at incoming node {l}: {s[j, l]:.12g} != A[{j}] = {areas[j]:.12g}")
                break
    return out


def apply_convolution(a, inp: JunctionInput) -> list[KineticPair]:
    """``out^i_k = sum_j sum_l |xi_l| w a^ij_kl (g0^j_l, -g1^j_l)`` on outgoing nodes."""
    grid = inp.grid
    a = np.asarray(a, dtype=float)
    wx = np.where(grid.negative, grid.flux_weights, 0.0)
    g0 = np.array([t.f0 for t in inp.traces]) * wx
    g1 = np.array([t.f1 for t in inp.traces]) * wx
    o0 = np.einsum("ijkl,jl->ik", a, g0)
    o1 = -np.einsum("ijkl,jl->ik", a, g1)
    pos = grid.positive
    return [KineticPair(np.where(pos, o0[i], 0.0), np.where(pos, o1[i], 0.0)) for i in range(inp.d)]


# --------------------------------------------------------------------------
# Maxwellian family
# --------------------------------------------------------------------------

def _wall_mass_flux(params, grid, rho):
    f0, _ = maxwellian(params, rho, 0.0, grid.nodes)
    return half_flux(grid, f0, f0)[0]


def wall_density(params: GasParams, grid: VelocityGrid, target: float) -> float:
    """``rho_w`` with ``sum_{xi>0} xi w M0(rho_w, 0, xi) = target``."""
    if target < 0:
        raise DomainError("incoming mass flux must be nonnegative")
    if target == 0:
        return 0.0
    # densest state whose support still fits inside the grid
    rho_cap = (grid.hi / params.a_gamma) ** (1.0 / params.theta)
    cap_flux = _wall_mass_flux(params, grid, rho_cap)
    if cap_flux < target:
        raise SolverError(f"wall mass flux {target:.6g} exceeds grid representability {cap_flux:.6g}",
                          residual=target - cap_flux)
    return float(brentq(lambda r: _wall_mass_flux(params, grid, r) - target, 0.0, rho_cap,
                        xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=200))


def apply_maxwellian_wall(params: GasParams, inp: JunctionInput) -> list[KineticPair]:
    """``M(rho_w, 0, .)`` on ``xi > 0`` with the incoming mass flux matched."""
    if inp.d != 1:
        raise ConfigurationError("a wall attaches to exactly one pipe end")
    grid = inp.grid
    q0, _ = half_flux(grid, *inp.traces[0], side="negative")
    rho_w = wall_density(params, grid, q0)
    return [_half(grid, *maxwellian(params, rho_w, 0.0, grid.nodes))]


def apply_maxwellian_inflow(params: GasParams, rho_b: float, u_b: float,
                            inp: JunctionInput) -> list[KineticPair]:
    """``M(rho_b, u_b, .)`` on outgoing nodes; ``u_b`` is in the canonical frame."""
    if rho_b < 0:
        raise DomainError("inflow density must be nonnegative")
    grid = inp.grid
    return [_half(grid, *maxwellian(params, rho_b, u_b, grid.nodes)) for _ in range(inp.d)]


def _half_flux_map(params, grid, w1, w2):
    """Outgoing half-flux of ``R(w1, w2)`` and its Jacobian in ``(w1, w2)``."""
    pos = grid.positive
    xi = grid.nodes[pos]
    wx = grid.flux_weights[pos]
    lam, th, c = params.lam, params.theta, params.c_gamma_kappa
    b = (xi - w1) * (w2 - xi)
    live = b > 0
    bs = np.where(live, b, 1.0)
    f0 = np.where(live, c * bs**lam, 0.0)
    dfb = np.where(live, c * lam * bs ** (lam - 1.0), 0.0)
    g = (1.0 - th) * 0.5 * (w1 + w2) + th * xi
    d0 = (-dfb * (w2 - xi), dfb * (xi - w1))
    h = np.array([f0 @ wx, (g * f0) @ wx])
    jac = np.array([[d0[0] @ wx, d0[1] @ wx],
                    [(0.5 * (1 - th) * f0 + g * d0[0]) @ wx, (0.5 * (1 - th) * f0 + g * d0[1]) @ wx]])
    return h, jac


def _half_flux_err(h, target):
    scale = abs(target[0]) + abs(target[1])
    return float(np.max(np.abs(h - target)) / scale)


def _invert_nested(params, grid, target, w_span):
    """Bracketed fallback: ``h0`` rises in ``w2`` and falls in ``w1``."""
    p_lo = float(grid.nodes[grid.positive][0])

    def w2_for(w1):
        lo = max(w1, 0.0)
        hi = max(lo, p_lo) + w_span
        f = lambda w2: _half_flux_map(params, grid, w1, w2)[0][0] - target[0]
        n = 0
        while f(hi) < 0:
            hi = lo + 2.0 * (hi - lo)
            n += 1
            if n > 60:
                raise SolverError("half-flux mass cannot be reached", residual=float(-f(hi)))
        return brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)

    def resid(w1):
        w2 = w2_for(w1)
        return _half_flux_map(params, grid, w1, w2)[0][1] - target[1]

    top = grid.nodes[grid.positive][-1]
    samples = np.linspace(-2.0 * grid.max_speed - 4.0 * w_span, top - 1e-9, 241)
    vals = []
    for s in samples:
        try:
            vals.append(resid(s))
        except SolverError:
            vals.append(np.nan)
    vals = np.array(vals)
    for k in range(len(samples) - 1):
        if np.isfinite(vals[k]) and np.isfinite(vals[k + 1]) and vals[k] * vals[k + 1] <= 0:
            w1 = brentq(resid, samples[k], samples[k + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps,
                        maxiter=200)
            return w1, w2_for(w1)
    raise SolverError("half-flux momentum target not bracketed",
                      residual=float(np.nanmin(np.abs(vals))) if np.any(np.isfinite(vals)) else None)


def invert_half_flux(params: GasParams, grid: VelocityGrid, target, tol: float = HALF_FLUX_TOL,
                     maxiter: int = NEWTON_MAXITER) -> MacroState:
    """``(rho, u)`` whose node Maxwellian has outgoing half-flux ``target = (q0, q1)``.

    Damped Newton in the Riemann invariants from a continuum guess, then a
    nested bracketed solve if Newton stalls.
    """
    q0, q1 = float(target[0]), float(target[1])
    if not q0 > 0:
        raise DomainError("half-flux inversion needs a positive mass flux")
    t = np.array([q0, q1])
    th, lam = params.theta, params.lam
    # continuum half-flux of M(rho, 0): c r^(2 lam + 2) / (2 lam + 2)
    r0 = (q0 * (2 * lam + 2) / params.c_gamma_kappa) ** (1.0 / (2 * lam + 2))
    # q1/q0 of the half Maxwellian at rest; the excess is attributed to u
    base = th * r0 * (lam + 1.0) * beta(1.5, lam + 1.0)
    u0 = float(np.clip((q1 / q0 - base) / (1.0 - th), -r0, r0))
    w = np.array([u0 - r0, u0 + r0])
    h, jac = _half_flux_map(params, grid, *w)
    err = _half_flux_err(h, t)
    for _ in range(maxiter):
        if err <= 1e-3 * tol:
            break
        try:
            step = np.linalg.solve(jac, t - h)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        alpha, accepted = 1.0, False
        for _ls in range(40):
            trial = w + alpha * step
            if trial[1] > trial[0] and trial[1] > 0:
                ht, jt = _half_flux_map(params, grid, *trial)
                et = _half_flux_err(ht, t)
                if et < err:
                    w, h, jac, err, accepted = trial, ht, jt, et, True
                    break
            alpha *= 0.5
        if not accepted:
            break
    if err > tol:
        span = max(r0, grid.dxi)
        w = np.array(_invert_nested(params, grid, t, span))
        h, _ = _half_flux_map(params, grid, *w)
        err = _half_flux_err(h, t)
        if err > tol:
            raise SolverError(f"half-flux inversion did not converge (relative residual {err:.3g})",
                              residual=err)
    return state_from_invariants(params, w[0], w[1])


def apply_maxwellian_projection(inner: "CouplingSpec", params: GasParams,
                                inp: JunctionInput) -> list[KineticPair]:
    """Replace each inner output by the Maxwellian with the same outgoing half-flux."""
    grid = inp.grid
    out = []
    for o in inner.apply(params, inp):
        q0, q1 = half_flux(grid, o.f0, o.f1)
        if q0 <= 0:
            out.append(KineticPair(np.zeros(grid.size), np.zeros(grid.size)))
            continue
        rho, u = invert_half_flux(params, grid, (q0, q1))
        out.append(_half(grid, *maxwellian(params, rho, u, grid.nodes)))
    return out


# --------------------------------------------------------------------------
# coupling specs
# --------------------------------------------------------------------------

class CouplingSpec:
    """Base class: ``apply(params, inp)`` returns canonical outgoing data."""

    kind = "base"
    arity: int | None = None
    needs_common_hull = False
    reflects = False

    def validate(self, areas, hulls=()) -> list[str]:
        out = []
        if self.arity is not None and len(areas) != self.arity:
            out.append(f"{self.kind} coupling needs {self.arity} attached end(s), got {len(areas)}")
        if self.needs_common_hull and hulls and any(h is not None for h in hulls):
            if any(h is None for h in hulls):
                out.append(f"{self.kind} coupling mixes pipes with and without an invariant-domain hull")
            else:
                lo = {round(h[0], 12) for h in hulls}
                hi = {round(h[1], 12) for h in hulls}
                if len(lo) > 1 or len(hi) > 1:
                    out.append(f"{self.kind} coupling requires a common hull across attached pipes, got {list(hulls)}")
        if self.reflects and hulls:
            for h in hulls:
                if h is not None and abs(h[0] + h[1]) > 1e-12 * (1 + abs(h[1])):
                    log.warning("%s coupling with asymmetric hull %s: invariant domain not guaranteed",
                                self.kind, h)
        return out

    def apply(self, params: GasParams, inp: JunctionInput) -> list[KineticPair]:
        raise NotImplementedError


@dataclass
class LinearCoupling(CouplingSpec):
    c: np.ndarray
    kind = "linear"
    needs_common_hull = True
    reflects = True

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        if self.c.ndim != 2 or self.c.shape[0] != self.c.shape[1]:
            raise ConfigurationError("linear coupling matrix must be square")

    def validate(self, areas, hulls=()):
        bad = super().validate(areas, hulls)
        if self.c.shape[0] != len(areas):
            return bad + [f"matrix is {self.c.shape[0]}x{self.c.shape[0]} but {len(areas)} ends attached"]
        return bad + validate_linear(self.c, areas)

    def apply(self, params, inp):
        return apply_linear(self.c, inp)


class ReflectionWall(CouplingSpec):
    kind = "reflection_wall"
    arity = 1
    reflects = True

    def apply(self, params, inp):
        return apply_reflection_wall(inp)


class MaxwellianWall(CouplingSpec):
    kind = "maxwellian_wall"
    arity = 1

    def apply(self, params, inp):
        return apply_maxwellian_wall(params, inp)


class FreeOutflow(CouplingSpec):
    """Zero incoming data: everything leaving is lost, nothing enters."""

    kind = "free_outflow"

    def apply(self, params, inp):
        return inp.zero_output()


def _schedule(value) -> Callable[[float], float]:
    if callable(value):
        return value
    if np.isscalar(value):
        v = float(value)
        return lambda t: v
    pts = sorted((float(t), float(v)) for t, v in value)
    ts = [p[0] for p in pts]
    vs = [p[1] for p in pts]
    return lambda t: float(np.interp(t, ts, vs))


@dataclass
class MaxwellianInflow(CouplingSpec):
    """Prescribed ``(rho_b(t), u_b(t))``; ``u_b`` is measured in the pipe's x direction.

    Schedules are numbers, callables of ``t`` or ``[(t, value), ...]`` tables
    interpolated linearly and held constant outside their range.
    """

    rho_b: object
    u_b: object = 0.0
    kind = "maxwellian_inflow"
    arity = 1

    def __post_init__(self):
        self._rho = _schedule(self.rho_b)
        self._u = _schedule(self.u_b)

    def state(self, t: float) -> tuple[float, float]:
        return self._rho(t), self._u(t)

    def apply(self, params, inp):
        rho, u = self.state(inp.t)
        if inp.ends[0] == PLUS:
            u = -u
        return apply_maxwellian_inflow(params, rho, u, inp)


@dataclass
class MaxwellianProjection(CouplingSpec):
    inner: CouplingSpec
    kind = "maxwellian_projection"

    @property
    def arity(self):
        return self.inner.arity

    def validate(self, areas, hulls=()):
        return self.inner.validate(areas, hulls)

    def apply(self, params, inp):
        return apply_maxwellian_projection(self.inner, params, inp)


class ConvolutionCoupling(CouplingSpec):
    """Node-sampled kernel ``a[i, j, k, l]`` (outgoing node ``k``, incoming ``l``)."""

    kind = "convolution"
    needs_common_hull = True

    def __init__(self, a, grid: VelocityGrid, areas):
        self.a = np.asarray(a, dtype=float)
        bad = validate_kernel(self.a, grid, areas)
        if bad:
            raise ConfigurationError("invalid convolution kernel", bad)
        self.grid = grid
        self.areas = tuple(float(x) for x in areas)

    @classmethod
    def from_linear(cls, c, grid, areas) -> "ConvolutionCoupling":
        return cls(degenerate_kernel(c, grid), grid, areas)

    def validate(self, areas, hulls=()):
        bad = super().validate(areas, hulls)
        if tuple(float(x) for x in areas) != self.areas:
            bad.append("convolution kernel was validated for different areas")
        return bad

    def apply(self, params, inp):
        return apply_convolution(self.a, inp)


# --------------------------------------------------------------------------
# budgets
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BudgetReport:
    mass_in: float
    mass_out: float
    energy_in: float
    energy_out: float
    omega_in: float
    omega_out: float

    @property
    def mass_slack(self) -> float:
        return self.mass_out - self.mass_in

    @property
    def energy_slack(self) -> float:
        return self.energy_out - self.energy_in

    @property
    def omega_slack(self) -> float:
        return self.omega_out - self.omega_in


def budget_report(params: GasParams, inp: JunctionInput, outputs, hulls=None) -> BudgetReport:
    """Area-weighted in/out fluxes of mass, energy and ``H_{S_omega}``.

    ``hulls`` are canonical-frame hulls; defaults to ``inp.hulls``. Pipes
    without a hull contribute zero ``S_omega`` flux.
    """
    grid = inp.grid
    hulls = inp.hulls if hulls is None else hulls
    xi = grid.nodes
    w_in = np.where(grid.negative, grid.flux_weights, 0.0)
    w_out = np.where(grid.positive, grid.flux_weights, 0.0)
    tot = np.zeros(6)
    for i, (g, o, area) in enumerate(zip(inp.traces, outputs, inp.areas)):
        row = [g.f0 @ w_in, o.f0 @ w_out,
               kinetic_energy(params, g.f0, g.f1, xi) @ w_in,
               kinetic_energy(params, o.f0, o.f1, xi) @ w_out, 0.0, 0.0]
        h = hulls[i] if hulls else None
        if h is not None:
            S = s_omega(*h)
            row[4] = kinetic_entropy_s(params, g.f0, g.f1, xi, S) @ w_in
            row[5] = kinetic_entropy_s(params, o.f0, o.f1, xi, S) @ w_out
        tot += area * np.array(row)
    return BudgetReport(*map(float, tot))
