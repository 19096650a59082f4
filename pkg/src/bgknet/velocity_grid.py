"""Uniform velocity lattice, discrete moments and moment-matched Maxwellians.

Discrete kinetic states are stored as two arrays ``(f0, f1)`` whose last axis
runs over the velocity nodes. Leading axes (cells, pipes...) broadcast.

Two ways of matching the discrete moments of a projected Maxwellian exist:

``"parameter"`` (default)
    Solve for ``(rho~, u~)`` such that the node samples of ``M(rho~, u~, .)``
    have exactly the requested discrete moments. Every node value is then a
    genuine Maxwellian value, so the pointwise subdifferential inequality
    sums to a discrete entropy-minimisation principle and the kinetic
    invariant domains are preserved exactly.
``"scale"``
    Sample ``M(rho, u, .)``, scale ``f0`` to fix mass and shift ``f1`` in
    proportion to ``f0`` to fix momentum. Cheaper, exact in moments, but
    perturbs the kinetic Riemann invariants at quadrature-error level.
``None``
    Raw node samples, exposing the quadrature drift.
"""

from __future__ import annotations

from dataclasses import dataclass
import logging

import numpy as np
from scipy.special import betainc

from .errors import ConfigurationError, DomainError
from .gas_core import VACUUM_FLOOR, GasParams, KineticPair, MacroState, maxwellian, sound_radius

log = logging.getLogger(__name__)

MATCH_TOL = 1e-13
MATCH_MAXITER = 30


@dataclass(frozen=True, eq=False)
class VelocityGrid:
    """Midpoint lattice on ``[lo, hi]`` with ``n`` cells of width ``dxi``."""

    nodes: np.ndarray
    dxi: float
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < 0.0 < self.hi:
            raise ConfigurationError(f"velocity grid must satisfy lo < 0 < hi, got [{self.lo}, {self.hi}]")
        if np.any(np.diff(self.nodes) <= 0):
            raise ConfigurationError("velocity nodes must be strictly increasing")
        self.nodes.flags.writeable = False

    @classmethod
    def uniform(cls, n: int, lo: float, hi: float | None = None) -> "VelocityGrid":
        """``n`` midpoint nodes on ``[lo, hi]``; ``hi=None`` means ``[-lo, lo]``."""
        if hi is None:
            lo, hi = -abs(lo), abs(lo)
        if n < 2:
            raise ConfigurationError("need at least two velocity nodes")
        dxi = (hi - lo) / n
        nodes = lo + (np.arange(n) + 0.5) * dxi
        if lo == -hi:
            # enforce exact mirror symmetry so reflections are index reversals
            nodes = 0.5 * (nodes - nodes[::-1])
        return cls(nodes, float(dxi), float(lo), float(hi))

    @classmethod
    def for_hull(cls, omega_min: float, omega_max: float, n: int = 128,
                 factor: float = 1.2) -> "VelocityGrid":
        """Symmetric grid covering ``factor`` times the invariant-domain hull."""
        bound = factor * max(abs(omega_min), abs(omega_max))
        grid = cls.uniform(n, -bound, bound)
        if not grid.covers(omega_min, omega_max):
            raise ConfigurationError("grid too coarse to cover the hull with one cell of margin")
        return grid

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.nodes.size, self.dxi)

    @property
    def flux_weights(self) -> np.ndarray:
        return np.abs(self.nodes) * self.dxi

    @property
    def positive(self) -> np.ndarray:
        return self.nodes > 0

    @property
    def negative(self) -> np.ndarray:
        return self.nodes < 0

    @property
    def max_speed(self) -> float:
        return float(np.max(np.abs(self.nodes)))

    @property
    def symmetric(self) -> bool:
        return bool(np.array_equal(self.nodes, -self.nodes[::-1]))

    @property
    def mirror(self) -> np.ndarray:
        """Index map ``k -> k'`` with ``nodes[k'] == -nodes[k]``."""
        if not self.symmetric:
            raise ConfigurationError("velocity grid is not symmetric about 0")
        return np.arange(self.size)[::-1]

    def covers(self, omega_min: float, omega_max: float) -> bool:
        return self.lo <= omega_min - self.dxi and omega_max + self.dxi <= self.hi


def conserved_moments(grid: VelocityGrid, f0, f1) -> tuple[np.ndarray, np.ndarray]:
    """Raw discrete ``(rho, rho u)``."""
    return np.asarray(f0) @ grid.weights, np.asarray(f1) @ grid.weights


def moments(grid: VelocityGrid, f0, f1) -> MacroState:
    """Vacuum-normalised discrete moments."""
    rho, q = conserved_moments(grid, f0, f1)
    live = rho >= VACUUM_FLOOR
    safe = np.where(live, rho, 1.0)
    return MacroState(np.where(live, rho, 0.0), np.where(live, q / safe, 0.0))


def flux_moments(grid: VelocityGrid, f0, f1, side: str = "all") -> tuple[np.ndarray, np.ndarray]:
    """Signed ``(sum xi w f0, sum xi w f1)`` over all, positive or negative nodes."""
    wx = grid.nodes * grid.dxi
    if side == "positive":
        wx = np.where(grid.positive, wx, 0.0)
    elif side == "negative":
        wx = np.where(grid.negative, wx, 0.0)
    elif side != "all":
        raise ValueError(f"unknown side {side!r}")
    return np.asarray(f0) @ wx, np.asarray(f1) @ wx


def _scale_shift(grid, f0, f1, rho, q):
    m0 = f0 @ grid.weights
    good = m0 > 0
    s = np.where(good, rho / np.where(good, m0, 1.0), 0.0)
    g0 = f0 * s[..., None]
    g1 = f1 * s[..., None]
    dq = q - g1 @ grid.weights
    live = rho > 0
    g1 = g1 + (np.where(live, dq / np.where(live, rho, 1.0), 0.0))[..., None] * g0
    return g0, g1


def _matched_residual(grid, params, rt, ut, rho, q):
    f0, f1 = maxwellian(params, rt[..., None], ut[..., None], grid.nodes)
    return rho - f0 @ grid.weights, q - f1 @ grid.weights, f0


def _newton_direction(params, grid, rt, ut, f0, r0, r1):
    """Newton step from the exact discrete Jacobian of the node moments."""
    xi, w = grid.nodes, grid.weights
    lam, th = params.lam, params.theta
    live = f0 > 0
    b = np.where(live, (f0 / params.c_gamma_kappa) ** (1.0 / lam), 1.0)
    dfdb = np.where(live, params.c_gamma_kappa * lam * b ** (lam - 1.0), 0.0)
    db_drho = params.a_gamma**2 * (params.gamma - 1.0) * rt ** (params.gamma - 2.0)
    db_du = 2.0 * (xi - ut[:, None])
    g = (1.0 - th) * ut[:, None] + th * xi
    j00 = (dfdb @ w) * db_drho
    j01 = (dfdb * db_du) @ w
    j10 = ((g * dfdb) @ w) * db_drho
    j11 = (g * dfdb * db_du) @ w + (1.0 - th) * (f0 @ w)
    det = j00 * j11 - j01 * j10
    good = np.isfinite(det) & (np.abs(det) > 1e-300)
    sd = np.where(good, det, 1.0)
    # continuum chord step where the discrete Jacobian is unusable
    d_rho = np.where(good, (j11 * r0 - j01 * r1) / sd, r0)
    d_u = np.where(good, (j00 * r1 - j10 * r0) / sd, (r1 - ut * r0) / rt)
    return d_rho, d_u


def match_parameters(grid: VelocityGrid, params: GasParams, rho, q, guess=None,
                     tol: float = MATCH_TOL, maxiter: int = MATCH_MAXITER, _nested: bool = True):
    """Find ``(rho~, u~)`` whose node-sampled Maxwellian has moments ``(rho, q)``.

    Newton iteration on the exact discrete Jacobian with a backtracking line
    search on the scaled residual, vectorised over states. ``guess`` is an
    optional ``(rho~, u~)`` warm start. States that still fail go through
    nested bracketed solves. Returns ``(rho~, u~, ok)``.
    """
    rho = np.atleast_1d(np.asarray(rho, dtype=float)).ravel()
    q = np.atleast_1d(np.asarray(q, dtype=float)).ravel()
    live = rho >= VACUUM_FLOOR
    safe = np.where(live, rho, 1.0)
    qs = np.where(live, q, 0.0)
    if guess is None:
        rt, ut = safe.copy(), qs / safe
    else:
        rt = np.where(live & (np.ravel(guess[0]) > 0), np.ravel(guess[0]), safe).astype(float)
        ut = np.where(live, np.ravel(guess[1]), qs / safe).astype(float)
    vel = max(grid.max_speed, 1.0)
    xi = grid.nodes

    def evaluate(idx, r_, u_):
        f0, f1 = maxwellian(params, r_[:, None], u_[:, None], xi)
        r0 = safe[idx] - f0 @ grid.weights
        r1 = qs[idx] - f1 @ grid.weights
        return r0, r1, f0, np.maximum(np.abs(r0), np.abs(r1) / vel) / safe[idx]

    err = np.zeros(rho.shape)
    idx = np.flatnonzero(live)
    r0, r1, f0, e = evaluate(idx, rt[idx], ut[idx])
    err[idx] = e
    for _ in range(maxiter):
        keep = e > tol
        idx, r0, r1, f0, e = idx[keep], r0[keep], r1[keep], f0[keep], e[keep]
        if idx.size == 0:
            break
        d_rho, d_u = _newton_direction(params, grid, rt[idx], ut[idx], f0, r0, r1)
        alpha = np.ones(idx.size)
        pending = np.ones(idx.size, dtype=bool)
        progressed = np.zeros(idx.size, dtype=bool)
        for _ls in range(30):
            sub = np.flatnonzero(pending)
            r_try = np.maximum(rt[idx[sub]] + alpha[sub] * d_rho[sub], 0.1 * rt[idx[sub]])
            u_try = ut[idx[sub]] + alpha[sub] * d_u[sub]
            n0, n1, nf0, ne = evaluate(idx[sub], r_try, u_try)
            acc = ne < e[sub]
            hit = sub[acc]
            rt[idx[hit]], ut[idx[hit]] = r_try[acc], u_try[acc]
            r0[hit], r1[hit], f0[hit], e[hit] = n0[acc], n1[acc], nf0[acc], ne[acc]
            progressed[hit] = True
            pending[hit] = False
            if not np.any(pending):
                break
            alpha[pending] *= 0.5
        err[idx] = e
        stuck = ~progressed
        if np.all(stuck):
            break
        idx, r0, r1, f0, e = idx[~stuck], r0[~stuck], r1[~stuck], f0[~stuck], e[~stuck]
    ok = ~live | (err <= 1e3 * tol)
    if guess is not None and not np.all(ok):
        bad = np.flatnonzero(~ok)
        rb, ub, okb = match_parameters(grid, params, safe[bad], qs[bad], tol=tol, maxiter=maxiter,
                                       _nested=False)
        rt[bad], ut[bad] = np.where(okb, rb, rt[bad]), np.where(okb, ub, ut[bad])
        ok[bad] = okb
    if _nested and not np.all(ok):
        bad = np.flatnonzero(~ok)
        rb, ub, okb = _match_nested(grid, params, safe[bad], qs[bad], tol)
        rt[bad], ut[bad] = np.where(okb, rb, rt[bad]), np.where(okb, ub, ut[bad])
        ok[bad] = okb
    rt = np.where(live, rt, 0.0)
    ut = np.where(live, ut, 0.0)
    return rt, ut, ok


def _illinois(fun, lo, hi, f_lo, f_hi, xtol, ftol=0.0, maxiter=80):
    """Vectorised Illinois regula falsi; requires ``f_lo * f_hi <= 0``."""
    lo, hi, f_lo, f_hi = lo.copy(), hi.copy(), f_lo.copy(), f_hi.copy()
    side = np.zeros(lo.shape, dtype=int)
    x = 0.5 * (lo + hi)
    for _ in range(maxiter):
        denom = f_hi - f_lo
        x = np.where(denom != 0, hi - f_hi * (hi - lo) / np.where(denom != 0, denom, 1.0), 0.5 * (lo + hi))
        x = np.where((x <= np.minimum(lo, hi)) | (x >= np.maximum(lo, hi)), 0.5 * (lo + hi), x)
        fx = fun(x)
        same_hi = np.sign(fx) == np.sign(f_hi)
        # replace the endpoint sharing the sign of f(x); halve the other's value on repeats
        f_lo = np.where(same_hi & (side == 1), 0.5 * f_lo, f_lo)
        f_hi = np.where(~same_hi & (side == -1), 0.5 * f_hi, f_hi)
        lo, f_lo, hi, f_hi = (np.where(same_hi, lo, hi), np.where(same_hi, f_lo, f_hi),
                              x, fx)
        side = np.where(same_hi, 1, -1)
        if np.all((np.abs(hi - lo) <= xtol) | (np.abs(fx) <= ftol)):
            break
    return x


def _match_nested(grid, params, rho, q, tol):
    """Nested bracketed solves in (center m, half-width r) of the support.

    ``sum w M0`` is strictly increasing in ``r`` at fixed ``m``; the inner
    solve fixes the mass, the outer one the momentum.
    """
    xi, w = grid.nodes, grid.weights
    th = params.theta
    dxi = grid.dxi

    def mass(m, r):
        return (params.c_gamma_kappa * np.maximum(r[:, None] ** 2 - (xi - m[:, None]) ** 2, 0.0)
                ** params.lam) @ w

    def radius_for(m, target):
        lo = np.zeros_like(m)
        hi = params.a_gamma * target**th + 2.0 * dxi
        for _ in range(60):
            short = mass(m, hi) < target
            if not np.any(short):
                break
            hi = np.where(short, 2.0 * hi, hi)
        return _illinois(lambda r: mass(m, r) - target, lo, hi, -target, mass(m, hi) - target,
                         1e-16 * hi, ftol=0.1 * tol * target)

    def momentum_resid(m, target_rho, target_q):
        r = radius_for(m, target_rho)
        f0 = params.c_gamma_kappa * np.maximum(r[:, None] ** 2 - (xi - m[:, None]) ** 2, 0.0) ** params.lam
        f1 = ((1.0 - th) * m[:, None] + th * xi) * f0
        return f1 @ w - target_q

    u0 = q / rho
    delta = np.full_like(u0, 2.0 * dxi)
    lo, hi = u0 - delta, u0 + delta
    g_lo = momentum_resid(lo, rho, q)
    g_hi = momentum_resid(hi, rho, q)
    for _ in range(30):
        nob = g_lo * g_hi > 0
        if not np.any(nob):
            break
        delta = np.where(nob, 2.0 * delta, delta)
        lo, hi = u0 - delta, u0 + delta
        g_lo = np.where(nob, momentum_resid(lo, rho, q), g_lo)
        g_hi = np.where(nob, momentum_resid(hi, rho, q), g_hi)
    bracketed = g_lo * g_hi <= 0
    vel = max(grid.max_speed, 1.0)
    m = _illinois(lambda mm: momentum_resid(mm, rho, q), lo, hi, g_lo, g_hi, 1e-16 * (1 + np.abs(u0)),
                  ftol=0.1 * tol * rho * vel)
    r = radius_for(m, rho)
    f0 = params.c_gamma_kappa * np.maximum(r[:, None] ** 2 - (xi - m[:, None]) ** 2, 0.0) ** params.lam
    f1 = ((1.0 - th) * m[:, None] + th * xi) * f0
    err = np.maximum(np.abs(f0 @ w - rho), np.abs(f1 @ w - q) / vel) / rho
    ok = bracketed & (err <= 1e4 * tol)
    if not np.all(ok):
        log.debug("nested matching failed for %d state(s), max err %g", int(np.sum(~ok)), float(np.max(err)))
    return (r / params.a_gamma) ** (1.0 / th), m, ok


def matched_maxwellian(grid: VelocityGrid, params: GasParams, rho, u, guess=None):
    """Moment-matched discrete Maxwellians plus their parameters.

    Returns ``(f0, f1, rho~, u~, ok)`` for 1-d ``rho, u``. Unmatched states
    (``ok`` false) use the scale/shift corrected node samples instead.
    """
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    live = rho >= VACUUM_FLOOR
    rho = np.where(live, rho, 0.0)
    u = np.where(live, u, 0.0)
    q = rho * u
    xi = grid.nodes
    rt, ut, ok = match_parameters(grid, params, rho, q, guess=guess)
    f0, f1 = maxwellian(params, rt[:, None], ut[:, None], xi)
    if not np.all(ok):
        log.warning("parameter matching fell back to scale/shift for %d state(s)", int(np.sum(~ok)))
        p0, p1 = maxwellian(params, rho[:, None], u[:, None], xi)
        f0 = np.where(ok[:, None], f0, p0)
        f1 = np.where(ok[:, None], f1, p1)
    # roundoff polish: relative corrections of order 1e-15
    f0, f1 = _scale_shift(grid, f0, f1, rho, q)
    return f0, f1, rt, ut, ok


def project_maxwellian(grid: VelocityGrid, params: GasParams, rho, u,
                       method: str | None = "parameter") -> KineticPair:
    """Discrete Maxwellian of the state ``(rho, u)`` on ``grid``.

    With a matching ``method`` the discrete moments equal ``(rho, rho u)`` to
    roundoff. States the parameter solve cannot handle fall back to the
    scale/shift correction. Vacuum maps to the zero state.
    """
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any(rho < 0):
        raise DomainError("density must be nonnegative")
    rho, u = np.broadcast_arrays(rho, u)
    live = rho >= VACUUM_FLOOR
    rho = np.where(live, rho, 0.0)
    u = np.where(live, u, 0.0)
    xi = grid.nodes
    if method is None:
        return maxwellian(params, rho[..., None], u[..., None], xi)
    if method == "scale":
        f0, f1 = maxwellian(params, rho[..., None], u[..., None], xi)
        return KineticPair(*_scale_shift(grid, f0, f1, rho, rho * u))
    if method != "parameter":
        raise ValueError(f"unknown matching method {method!r}")
    f0, f1, _, _, _ = matched_maxwellian(grid, params, rho.ravel(), u.ravel())
    shape = rho.shape + (grid.size,)
    return KineticPair(f0.reshape(shape), f1.reshape(shape))


def projection_defect(grid: VelocityGrid, params: GasParams, rho, u):
    """Scale factor and momentum defect of the raw node-sampled Maxwellian.

    Returns ``(s, dq)`` with ``s = rho / sum w M0`` and
    ``dq = rho u - s sum w M1``; they tend to 1 and 0 under refinement.
    """
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    f0, f1 = maxwellian(params, rho[..., None], u[..., None], grid.nodes)
    s = rho / (f0 @ grid.weights)
    return s, rho * u - s * (f1 @ grid.weights)


def support_overflow(grid: VelocityGrid, params: GasParams, rho, u):
    """Continuum mass of ``M(rho, u, .)`` lying outside ``[lo, hi]``.

    In the variable ``z = (xi - u)/(a rho^theta)`` the profile is a
    symmetric Beta(lambda+1, lambda+1) law on ``[-1, 1]``.
    """
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    r = np.where(rho > 0, sound_radius(params, rho), 1.0)
    a = params.lam + 1.0

    def cdf(x):
        t = np.clip(((x - u) / r + 1.0) / 2.0, 0.0, 1.0)
        return betainc(a, a, t)

    frac = cdf(grid.lo) + (1.0 - cdf(grid.hi))
    return np.where(rho > 0, rho * frac, 0.0)
