"""Kinetic and macroscopic algebra of the isentropic BGK model.

Everything here is a pure, numpy-broadcasting function of its inputs. The
pressure law is ``p = kappa * rho**gamma`` with ``1 < gamma < 3``.

Conventions
-----------
* A kinetic value ``f = (f0, f1)`` lives in ``D = {f0 > 0} U {(0, 0)}``.
  Values with ``f0 < VACUUM_FLOOR`` are treated as vacuum.
* Vacuum macroscopic states are normalised to ``u = 0``.
* Integrals over the kernel support use Gauss-Legendre rules after
  smoothing substitutions; integrals against ``(1 - z**2)**lambda`` use a
  Gauss-Jacobi rule, which is exact for polynomial entropy generators.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import gammaln, roots_jacobi, roots_legendre

from .errors import DomainError, ParameterError, VacuumError

VACUUM_FLOOR = 1e-14
DEFAULT_NODES = 64


@dataclass(frozen=True)
class GasParams:
    """Adiabatic exponent, pressure coefficient and derived kinetic constants."""

    gamma: float
    kappa: float
    theta: float
    lam: float
    a_gamma: float
    J_lambda: float
    c_gamma_kappa: float

    @classmethod
    def from_gamma_kappa(cls, gamma: float, kappa: float = 1.0) -> "GasParams":
        return derive_constants(gamma, kappa)


class KineticPair(NamedTuple):
    f0: np.ndarray
    f1: np.ndarray


class MacroState(NamedTuple):
    rho: np.ndarray
    u: np.ndarray


class RiemannPair(NamedTuple):
    omega1: np.ndarray
    omega2: np.ndarray


def derive_constants(gamma: float, kappa: float = 1.0) -> GasParams:
    gamma = float(gamma)
    kappa = float(kappa)
    if not (1.0 < gamma < 3.0):
        raise ParameterError(f"gamma must satisfy 1 < gamma < 3, got {gamma}")
    if not kappa > 0.0:
        raise ParameterError(f"kappa must be positive, got {kappa}")
    theta = (gamma - 1.0) / 2.0
    lam = 1.0 / (gamma - 1.0) - 0.5
    a_gamma = 2.0 * np.sqrt(gamma * kappa) / (gamma - 1.0)
    J = float(np.sqrt(np.pi) * np.exp(gammaln(lam + 1.0) - gammaln(lam + 1.5)))
    c = a_gamma ** (-2.0 / (gamma - 1.0)) / J
    return GasParams(gamma, kappa, theta, lam, float(a_gamma), J, float(c))


def macro_state(rho, u) -> MacroState:
    """Build a vacuum-normalised ``MacroState`` (``u = 0`` where ``rho = 0``)."""
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any(rho < 0):
        raise DomainError("density must be nonnegative")
    return MacroState(rho, np.where(rho > 0, u, 0.0))


# --------------------------------------------------------------------------
# quadrature rules
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _legendre01(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = roots_legendre(n)
    t, wt = (x + 1.0) / 2.0, w / 2.0
    t.flags.writeable = False
    wt.flags.writeable = False
    return t, wt


@lru_cache(maxsize=None)
def _jacobi(n: int, lam: float) -> tuple[np.ndarray, np.ndarray]:
    z, w = roots_jacobi(n, lam, lam)
    z.flags.writeable = False
    w.flags.writeable = False
    return z, w


@lru_cache(maxsize=None)
def _smooth_step_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    # s(t) = 10t^3 - 15t^4 + 6t^5 flattens both endpoints to third order
    t, w = _legendre01(n)
    s = t**3 * (10.0 - 15.0 * t + 6.0 * t**2)
    ds = 30.0 * t**2 * (1.0 - t) ** 2
    s.flags.writeable = False
    wds = w * ds
    wds.flags.writeable = False
    return s, wds


# --------------------------------------------------------------------------
# Maxwellian and macroscopic quantities
# --------------------------------------------------------------------------

def chi(params: GasParams, rho, xi):
    """Equilibrium profile ``c (a^2 rho^(gamma-1) - xi^2)_+^lambda``."""
    rho = np.asarray(rho, dtype=float)
    xi = np.asarray(xi, dtype=float)
    base = params.a_gamma**2 * np.power(rho, params.gamma - 1.0) - xi * xi
    return params.c_gamma_kappa * _pow_lam(np.maximum(base, 0.0), params.lam)


def _pow_lam(b, lam):
    # fast paths for gamma = 2, 5/3, 1.4 and 3/2
    if lam == 0.5:
        return np.sqrt(b)
    if lam == 1.0:
        return b
    if lam == 2.0:
        return b * b
    if lam == 1.5:
        return b * np.sqrt(b)
    return np.power(b, lam)


def maxwellian(params: GasParams, rho, u, xi) -> KineticPair:
    rho = np.asarray(rho, dtype=float)
    u = np.where(rho > 0, np.asarray(u, dtype=float), 0.0)
    xi = np.asarray(xi, dtype=float)
    f0 = chi(params, rho, xi - u)
    f1 = ((1.0 - params.theta) * u + params.theta * xi) * f0
    return KineticPair(f0, f1)


def flux(params: GasParams, rho, u) -> tuple[np.ndarray, np.ndarray]:
    """Physical flux ``(rho u, rho u^2 + kappa rho^gamma)``."""
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u, dtype=float)
    q = rho * u
    return q, q * u + params.kappa * np.power(rho, params.gamma)


def sound_radius(params: GasParams, rho):
    """Half-width ``a_gamma rho^theta`` of the Maxwellian support."""
    return params.a_gamma * np.power(np.asarray(rho, dtype=float), params.theta)


def riemann_invariants(params: GasParams, rho, u) -> RiemannPair:
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise VacuumError("Riemann invariants are undefined at vacuum")
    r = sound_radius(params, rho)
    u = np.asarray(u, dtype=float)
    return RiemannPair(u - r, u + r)


def state_from_invariants(params: GasParams, omega1, omega2) -> MacroState:
    omega1 = np.asarray(omega1, dtype=float)
    omega2 = np.asarray(omega2, dtype=float)
    if np.any(omega2 < omega1):
        raise DomainError("need omega1 <= omega2")
    rho = ((omega2 - omega1) / (2.0 * params.a_gamma)) ** (1.0 / params.theta)
    return macro_state(rho, 0.5 * (omega1 + omega2))


def maxwellian_moments(params: GasParams, rho, u, nodes: int = DEFAULT_NODES):
    """Reference-quadrature zeroth and first xi-moments of ``M(rho, u, .)``.

    Returns ``(m0, m1)`` where each entry is a ``(component0, component1)``
    pair, i.e. ``m0 = (int M0, int M1)`` and ``m1 = (int xi M0, int xi M1)``.
    """
    rho = np.asarray(rho, dtype=float)[..., None]
    u = np.asarray(u, dtype=float)[..., None]
    r = sound_radius(params, rho)
    z, w = _jacobi(nodes, params.lam)
    xi = u + r * z
    scale = params.c_gamma_kappa * r ** (2.0 * params.lam + 1.0)
    g1 = (1.0 - params.theta) * u + params.theta * xi
    m0 = (np.sum(w * scale, -1), np.sum(w * scale * g1, -1))
    m1 = (np.sum(w * scale * xi, -1), np.sum(w * scale * xi * g1, -1))
    return m0, m1


# --------------------------------------------------------------------------
# kinetic Riemann invariants (bijection f <-> omega at fixed xi)
# --------------------------------------------------------------------------

def _check_d(f0, f1):
    if np.any(f0 < -VACUUM_FLOOR):
        raise DomainError("f0 must be nonnegative for f in D")
    if np.any((f0 == 0) & (f1 != 0)):
        raise DomainError("f0 = 0 requires f1 = 0 for f in D")


def _q_unchecked(params: GasParams, f0, f1, xi):
    th = params.theta
    ratio = f1 / f0
    center = (ratio - th * xi) / (1.0 - th)
    radius = np.sqrt(((ratio - xi) / (1.0 - th)) ** 2
                     + (f0 / params.c_gamma_kappa) ** (1.0 / params.lam))
    return center - radius, center + radius


def q_map(params: GasParams, f0, f1, xi) -> RiemannPair:
    """Kinetic Riemann invariants of ``f`` at velocity ``xi`` (``f0 > 0``)."""
    f0 = np.asarray(f0, dtype=float)
    f1 = np.asarray(f1, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if np.any(f0 < VACUUM_FLOOR):
        raise VacuumError("kinetic Riemann invariants need f0 > 0")
    return RiemannPair(*_q_unchecked(params, f0, f1, xi))


def r_map(params: GasParams, omega1, omega2, xi) -> KineticPair:
    """Inverse of :func:`q_map`; zero outside ``omega1 < xi < omega2``."""
    omega1 = np.asarray(omega1, dtype=float)
    omega2 = np.asarray(omega2, dtype=float)
    xi = np.asarray(xi, dtype=float)
    mid = 0.5 * (omega1 + omega2)
    # product form; the difference of squares cancels badly near the support edges
    base = (xi - omega1) * (omega2 - xi)
    f0 = params.c_gamma_kappa * np.power(np.maximum(base, 0.0), params.lam)
    f1 = ((1.0 - params.theta) * mid + params.theta * xi) * f0
    return KineticPair(f0, f1)


def kinetic_macro(params: GasParams, f0, f1, xi) -> MacroState:
    """``(rho(f, xi), u(f, xi))``, the unique state with ``M(rho, u, xi) = f``."""
    w1, w2 = q_map(params, f0, f1, xi)
    return state_from_invariants(params, w1, w2)


# --------------------------------------------------------------------------
# kinetic entropies
# --------------------------------------------------------------------------

def kinetic_energy(params: GasParams, f0, f1, xi):
    """Closed-form kinetic entropy for ``S(v) = v^2 / 2``; zero at vacuum."""
    f0 = np.asarray(f0, dtype=float)
    f1 = np.asarray(f1, dtype=float)
    xi = np.asarray(xi, dtype=float)
    _check_d(f0, f1)
    th, lam, c = params.theta, params.lam, params.c_gamma_kappa
    live = f0 >= VACUUM_FLOOR
    g0 = np.where(live, f0, 1.0)
    g1 = np.where(live, f1, 0.0)
    h = (th / (1.0 - th) * 0.5 * xi * xi * g0
         + th / (2.0 * c ** (1.0 / lam)) * g0 ** (1.0 + 1.0 / lam) / (1.0 + 1.0 / lam)
         + 0.5 / (1.0 - th) * g1 * g1 / g0
         - th / (1.0 - th) * xi * g1)
    return np.where(live, h, 0.0)


def upsilon(lam: float, z, nodes: int = DEFAULT_NODES):
    """``int_1^z (y^2 - 1)^(lam - 1) dy`` for ``z >= 1``.

    With ``y = cosh(s)`` and ``s = arccosh(z) * t**(1/(2 lam))`` the
    integrand becomes ``(sinh(s)/s)^(2 lam - 1)``, smooth on ``[0, 1]``,
    so the endpoint singularity for ``lam < 1`` disappears.
    """
    if lam <= 0:
        raise DomainError("lambda must be positive")
    z = np.asarray(z, dtype=float)
    if np.any(z < 1.0 - 1e-12):
        raise DomainError("upsilon is defined for z >= 1 only")
    big_a = np.arccosh(np.maximum(z, 1.0))
    t, w = _legendre01(nodes)
    s = big_a[..., None] * t ** (0.5 / lam)
    safe = np.where(s > 0, s, 1.0)
    ratio = np.where(s > 0, np.sinh(safe) / safe, 1.0)
    return big_a ** (2.0 * lam) / (2.0 * lam) * np.sum(w * ratio ** (2.0 * lam - 1.0), axis=-1)


def _phi_omega(params: GasParams, w1, w2, xi, v, inner_nodes: int):
    """Kernel in Riemann-invariant form; caller guarantees the indicators."""
    th, lam = params.theta, params.lam
    pref = (1.0 - th) ** 2 / th * params.c_gamma_kappa / params.J_lambda
    dist = np.abs(xi - v)
    safe = np.where(dist > 0, dist, 1.0)
    z = ((xi + v) * (w1 + w2) - 2.0 * (w1 * w2 + xi * v)) / ((w2 - w1) * safe)
    val = pref * safe ** (2.0 * lam - 1.0) * upsilon(lam, np.maximum(z, 1.0), inner_nodes)
    if np.any(dist == 0):
        # diagonal limit: |xi - v|^(2 lam - 1) Upsilon(z) -> (N/width)^(2 lam - 1)/(2 lam - 1)
        if lam > 0.5:
            n_over_w = 2.0 * (xi - w1) * (w2 - xi) / (w2 - w1)
            diag = pref * n_over_w ** (2.0 * lam - 1.0) / (2.0 * lam - 1.0)
        else:
            diag = np.inf
        val = np.where(dist > 0, val, diag)
    return val


def kernel_phi(params: GasParams, rho, u, xi, v, inner_nodes: int = DEFAULT_NODES):
    """Entropy kernel ``Phi(rho, u, xi, v)``; symmetric in ``xi`` and ``v``."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise VacuumError("kernel is undefined at vacuum")
    w1, w2 = riemann_invariants(params, rho, u)
    xi = np.asarray(xi, dtype=float)
    v = np.asarray(v, dtype=float)
    inside = (w1 < xi) & (xi < w2) & (w1 < v) & (v < w2)
    w1b, w2b, xib, vb = np.broadcast_arrays(w1, w2, xi, v)
    # dummy values outside the support keep z well defined
    w1b = np.where(inside, w1b, -1.0)
    w2b = np.where(inside, w2b, 1.0)
    xib = np.where(inside, xib, -0.5)
    vb = np.where(inside, vb, 0.5)
    val = _phi_omega(params, w1b, w2b, xib, vb, inner_nodes)
    return np.where(inside, val, 0.0)


@dataclass(frozen=True)
class EntropyGenerator:
    """Convex ``C^1`` generator ``S`` of a kinetic entropy ``H_S``.

    ``closed_form(params, f0, f1, xi)`` short-circuits the kernel quadrature
    when an exact expression for ``H_S`` is known. ``zero_on = (lo, hi)``
    declares ``S == 0`` on ``[lo, hi]``, so ``H_S`` vanishes for entries whose
    kinetic invariants lie inside that interval.
    """

    func: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]
    bound: float
    symmetric: bool
    name: str = "S"
    closed_form: Callable | None = field(default=None, compare=False)
    zero_on: tuple[float, float] | None = None

    def __call__(self, v):
        return self.func(np.asarray(v, dtype=float))

    def reflected(self) -> "EntropyGenerator":
        """Generator of ``v -> S(-v)``."""
        if self.symmetric:
            return self
        f, d = self.func, self.deriv
        zero = None if self.zero_on is None else (-self.zero_on[1], -self.zero_on[0])
        cf = None
        if self.closed_form is not None:
            inner = self.closed_form
            cf = lambda p, f0, f1, xi: inner(p, f0, -f1, -xi)  # noqa: E731
        return EntropyGenerator(lambda v: f(-v), lambda v: -d(-v), self.bound,
                                False, f"{self.name}(-v)", cf, zero)

    def is_convex_on(self, samples) -> bool:
        v = np.asarray(samples, dtype=float)
        a, b = v[:-1], v[1:]
        mid = self.func(0.5 * (a + b))
        return bool(np.all(mid <= 0.5 * (self.func(a) + self.func(b)) + 1e-12 * (1 + np.abs(mid))))

    def satisfies_growth(self, samples) -> bool:
        v = np.asarray(samples, dtype=float)
        return bool(np.all(np.abs(self.func(v)) <= self.bound * (1.0 + v * v) * (1 + 1e-14)))


def _const_one(v):
    return np.ones_like(v)


S_ONE = EntropyGenerator(_const_one, np.zeros_like, 1.0, True, "1",
                         closed_form=lambda p, f0, f1, xi: np.where(f0 >= VACUUM_FLOOR, f0, 0.0))
S_LINEAR = EntropyGenerator(lambda v: v, _const_one, 1.0, False, "v",
                            closed_form=lambda p, f0, f1, xi: np.where(f0 >= VACUUM_FLOOR, f1, 0.0))
S_ENERGY = EntropyGenerator(lambda v: 0.5 * v * v, lambda v: v, 0.5, True, "v^2/2",
                            closed_form=kinetic_energy)
S_SQUARE = EntropyGenerator(lambda v: v * v, lambda v: 2.0 * v, 1.0, True, "v^2",
                            closed_form=lambda p, f0, f1, xi: 2.0 * kinetic_energy(p, f0, f1, xi))


def s_omega(omega_min: float, omega_max: float) -> EntropyGenerator:
    """Invariant-domain entropy ``(v - w_max)_+^2 + (w_min - v)_+^2``."""
    if not omega_min < omega_max:
        raise DomainError("need omega_min < omega_max")
    lo, hi = float(omega_min), float(omega_max)

    def func(v):
        return np.maximum(v - hi, 0.0) ** 2 + np.maximum(lo - v, 0.0) ** 2

    def deriv(v):
        return 2.0 * np.maximum(v - hi, 0.0) - 2.0 * np.maximum(lo - v, 0.0)

    big = max(abs(lo), abs(hi))
    return EntropyGenerator(func, deriv, 2.0 * (1.0 + big * big), lo == -hi,
                            f"S_omega[{lo:g},{hi:g}]", None, (lo, hi))


def _hs_quadrature(params, f0, f1, xi, S, nodes, inner_nodes, chunk=256):
    w1, w2 = _q_unchecked(params, f0, f1, xi)
    s, wds = _smooth_step_rule(nodes)
    out = np.empty(f0.shape)
    for start in range(0, f0.size, chunk):
        sl = slice(start, start + chunk)
        a, b, x = w1[sl, None], w2[sl, None], xi[sl, None]
        total = np.zeros(x.shape[0])
        for length, sign in ((x - a, -1.0), (b - x, 1.0)):
            v = x + sign * length * s
            with np.errstate(invalid="ignore"):
                phi = _phi_omega(params, a, b, x, v, inner_nodes)
                term = wds * length * phi * S(v)
            # a zero-length side contributes nothing (0 * inf on the diagonal)
            total += np.sum(np.where(length > 0, term, 0.0), axis=1)
        out[sl] = total
    return out


def kinetic_entropy_s(params: GasParams, f0, f1, xi, S: EntropyGenerator,
                      nodes: int = DEFAULT_NODES, inner_nodes: int = DEFAULT_NODES,
                      method: str = "auto"):
    """Kinetic entropy ``H_S(f, xi) = int Phi(rho(f,xi), u(f,xi), xi, v) S(v) dv``.

    ``method="auto"`` uses ``S.closed_form`` when available, otherwise (and
    with ``method="quadrature"``) integrates the kernel numerically.
    """
    f0, f1, xi = np.broadcast_arrays(np.asarray(f0, dtype=float),
                                     np.asarray(f1, dtype=float),
                                     np.asarray(xi, dtype=float))
    _check_d(f0, f1)
    if method not in ("auto", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    if method == "auto" and S.closed_form is not None:
        return np.asarray(S.closed_form(params, f0, f1, xi), dtype=float)
    shape = f0.shape
    f0, f1, xi = f0.ravel(), f1.ravel(), xi.ravel()
    out = np.zeros(f0.shape)
    live = f0 >= VACUUM_FLOOR
    if S.zero_on is not None and np.any(live):
        idx = np.flatnonzero(live)
        w1, w2 = _q_unchecked(params, f0[idx], f1[idx], xi[idx])
        lo, hi = S.zero_on
        live[idx[(w1 >= lo) & (w2 <= hi)]] = False
    if np.any(live):
        out[live] = _hs_quadrature(params, f0[live], f1[live], xi[live], S, nodes, inner_nodes)
    return out.reshape(shape)


def entropy_pair(params: GasParams, rho, u, S: EntropyGenerator, nodes: int = DEFAULT_NODES):
    """Macroscopic entropy and entropy flux ``(eta_S, G_S)``."""
    rho = np.asarray(rho, dtype=float)
    u = np.where(rho > 0, np.asarray(u, dtype=float), 0.0)
    z, w = _jacobi(nodes, params.lam)
    r = sound_radius(params, rho)[..., None]
    uu = u[..., None]
    v = uu + r * z
    sv = S(v)
    scale = rho / params.J_lambda
    eta = scale * np.sum(w * sv, axis=-1)
    g = scale * np.sum(w * (uu + params.theta * r * z) * sv, axis=-1)
    return eta, g


def subdifferential_t(params: GasParams, rho, u, S: EntropyGenerator, nodes: int = DEFAULT_NODES):
    """Entropy variable ``T_S(rho, u)``; equals ``eta_S'(rho, q)`` for ``rho > 0``."""
    rho = np.asarray(rho, dtype=float)
    u = np.where(rho > 0, np.asarray(u, dtype=float), 0.0)
    z, w = _jacobi(nodes, params.lam)
    r = sound_radius(params, rho)[..., None]
    uu = u[..., None]
    v = uu + r * z
    ds = S.deriv(v)
    t0 = np.sum(w * (S(v) + (params.theta * r * z - uu) * ds), axis=-1) / params.J_lambda
    t1 = np.sum(w * ds, axis=-1) / params.J_lambda
    return t0, t1
