"""Linear-quadratic fishing game with a continuum of types on ``X = [0, 1]``.

Each player's group problem is an optimal control problem in the virtual time
``t``; its minimum-principle conditions collapse to two algebraic equations
for the constants ``chi2`` and ``p1`` plus one Fredholm equation of the second
kind for the outside aggregate ``ubar_minus(x)``.  Integrals use the composite
trapezoid rule; kernels are sampled with the mean of one-sided limits so jumps
that fall on grid points keep second-order accuracy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import InputError, InvariantError, SingularSystemError

log = logging.getLogger(__name__)

Kernel = Callable[[np.ndarray, np.ndarray], np.ndarray]

_EPS = 1e-12


def trapezoid_weights(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    w = np.zeros_like(t)
    dt = np.diff(t)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def _one_sided(t: np.ndarray):
    lo, hi = t - _EPS, t + _EPS
    lo[0], hi[-1] = t[0] + _EPS, t[-1] - _EPS
    return lo, hi


def sample_kernel(f: Kernel, t, x) -> np.ndarray:
    """``K[j, i]`` = mean of the one-sided limits of ``f(., x_i)`` at ``t_j``."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    lo, hi = _one_sided(t)
    X = x[None, :]
    return 0.5 * (np.broadcast_to(f(lo[:, None], X), (t.size, x.size))
                  + np.broadcast_to(f(hi[:, None], X), (t.size, x.size)))


def sample_function(f: Callable, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    lo, hi = _one_sided(t)
    return 0.5 * (np.broadcast_to(f(lo), t.shape) + np.broadcast_to(f(hi), t.shape))


def _const(value):
    return lambda *args: np.full(np.broadcast(*args).shape, float(value))


XI_PROFILES: dict[str, Callable] = {
    "const": _const(1.0),
    "linear": lambda t: np.asarray(t, dtype=float),
    "ramp": lambda t: 0.5 + np.asarray(t, dtype=float),
    "wave": lambda t: 1.0 + 0.5 * np.sin(2 * np.pi * np.asarray(t, dtype=float)),
}


def xi_profile(name: str) -> Callable:
    try:
        return XI_PROFILES[name]
    except KeyError:
        raise InputError(f"unknown efficiency profile {name!r}; choose from {sorted(XI_PROFILES)}") from None


def uniform_kernel(alpha: float) -> Kernel:
    return _const(alpha)


def windowed_kernel(alpha: float, reach: float = 0.3, cutoff: float = 0.9) -> Kernel:
    """``r(t, x) = alpha`` when ``|t - x| <= reach`` and ``t <= cutoff``, else 0."""

    def r(t, x):
        return np.where((np.abs(t - x) <= reach + 1e-14) & (t <= cutoff + 1e-14), alpha, 0.0)

    return r


@dataclass(frozen=True)
class ContinuumLQSpec:
    """Sampled data of the continuum LQ game.

    ``R[j, i] = r(t_j, x_i)`` is the group density of player ``x_i`` at member
    position ``t_j``; ``W`` is laid out the same way.
    """

    grid: np.ndarray
    xi: Callable
    r_kernel: Kernel
    w_kernel: Kernel | None = None
    p_density: Callable | None = None
    weights: np.ndarray = field(init=False, repr=False)
    xi_values: np.ndarray = field(init=False, repr=False)
    R: np.ndarray = field(init=False, repr=False)
    W: np.ndarray = field(init=False, repr=False)
    P: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        t = np.asarray(self.grid, dtype=float)
        if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
            raise InputError("grid must be strictly increasing with at least two points")
        if abs(t[0]) > 1e-15 or abs(t[-1] - 1.0) > 1e-15:
            raise InputError("grid must cover [0, 1]")
        if self.p_density is None:
            object.__setattr__(self, "p_density", _const(1.0))
        weights = trapezoid_weights(t)
        xi = sample_function(self.xi, t)
        R = sample_kernel(self.r_kernel, t, t)
        W = np.ones_like(R) if self.w_kernel is None else sample_kernel(self.w_kernel, t, t)
        P = sample_function(self.p_density, t)
        if np.any(~np.isfinite(xi)) or np.any(xi < 0) or not np.any(xi > 0):
            raise InvariantError("efficiency must be finite, nonnegative and not identically zero")
        if np.any(R < 0) or np.any(R > P[:, None] + 1e-12):
            raise InvariantError("group density must satisfy 0 <= r(t, x) <= p(t)")
        if np.any((R > 0) & (W <= 0)):
            raise InvariantError("weight kernel must be positive where the group density is")
        for name, value in dict(grid=t, weights=weights, xi_values=xi, R=R, W=W, P=P).items():
            value = np.array(value, dtype=float)
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @classmethod
    def build(cls, xi: Callable | str, r_kernel: Kernel, w_kernel: Kernel | None = None,
              n: int = 201, p_density: Callable | None = None) -> "ContinuumLQSpec":
        if isinstance(xi, str):
            xi = xi_profile(xi)
        return cls(np.linspace(0.0, 1.0, n), xi, r_kernel, w_kernel, p_density)

    @property
    def n(self) -> int:
        return self.grid.size

    @property
    def unit_weight(self) -> bool:
        return self.w_kernel is None or bool(np.all(self.W == 1.0))

    def refined(self, n: int) -> "ContinuumLQSpec":
        return ContinuumLQSpec(np.linspace(0.0, 1.0, n), self.xi, self.r_kernel,
                               self.w_kernel, self.p_density)


@dataclass(frozen=True)
class MultiplierPair:
    """Constant second state ``chi2`` and costate ``p1`` (scalars or per-grid arrays)."""

    chi2: np.ndarray | float
    p1: np.ndarray | float


def _constants_on_grid(spec: ContinuumLQSpec):
    q = spec.weights * spec.xi_values ** 2
    R, W = spec.R, spec.W
    ratio = np.divide(R, W, out=np.zeros_like(R), where=R > 0)
    return q @ R, q @ ratio, q @ (R * W)


def quadrature_constants(spec: ContinuumLQSpec, x: float):
    """Trapezoid values of ``int xi^2 r``, ``int xi^2 r / w`` and ``int xi^2 r w`` at player ``x``."""
    t = spec.grid
    r = sample_kernel(spec.r_kernel, t, [x])[:, 0]
    w = np.ones_like(r) if spec.w_kernel is None else sample_kernel(spec.w_kernel, t, [x])[:, 0]
    if np.any((r > 0) & (w <= 0)):
        raise ZeroDivisionError("weight vanishes where the group density is positive")
    q = spec.weights * spec.xi_values ** 2
    ratio = np.divide(r, w, out=np.zeros_like(r), where=r > 0)
    return float(q @ r), float(q @ ratio), float(q @ (r * w))


def multipliers_from_constants(C1, C2, C3, ubar_minus) -> MultiplierPair:
    """Solve the two algebraic conditions for ``(chi2, p1)``.

    The common denominator is ``(2 + C1)^2 - C2 C3``; with ``w == 1`` both
    reduce to ``C / (2C + 2) (1 - ubar_minus)``.
    """
    C1, C2, C3, ub = (np.asarray(v, dtype=float) for v in (C1, C2, C3, ubar_minus))
    den = C1 ** 2 + 4 * C1 + 4 - C2 * C3
    if np.any(np.abs(den) < 1e-14):
        bad = np.argmin(np.abs(den))
        raise SingularSystemError(
            f"multiplier system is singular (denominator {np.ravel(den)[bad]:.3e}, "
            f"C1={np.ravel(C1)[bad]:.6g}, C2={np.ravel(C2)[bad]:.6g}, C3={np.ravel(C3)[bad]:.6g})")
    chi2 = (C1 ** 2 + 2 * C1 - C2 * C3) / den * (1 - ub)
    p1 = 2 * C3 / den * (1 - ub)
    if chi2.ndim == 0:
        return MultiplierPair(float(chi2), float(p1))
    return MultiplierPair(chi2, p1)


def closed_form_multipliers(spec: ContinuumLQSpec, x: float, ubar_minus: float) -> MultiplierPair:
    return multipliers_from_constants(*quadrature_constants(spec, x), ubar_minus)


def lq_optimal_action(spec: ContinuumLQSpec, x, t, multipliers: MultiplierPair, ubar_minus):
    """Hamiltonian minimizer ``(1 - ubar_minus - chi2 - p1 / w(t, x)) xi(t) / 2``."""
    t = np.asarray(t, dtype=float)
    w = 1.0 if spec.w_kernel is None else spec.w_kernel(t, np.asarray(x, dtype=float))
    p1 = np.asarray(multipliers.p1, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any((w <= 0) & (p1 != 0)):
        raise InputError("w(t, x) must be positive when p1 is nonzero")
    shade = np.divide(p1, w, out=np.zeros(np.broadcast(p1, w).shape), where=w > 0)
    out = 0.5 * (1.0 - ubar_minus - multipliers.chi2 - shade) * spec.xi(t)
    return float(out) if np.ndim(out) == 0 else out


def fredholm_solve(spec: ContinuumLQSpec) -> np.ndarray:
    """Nystrom solve of the outside-aggregate equation on the spec grid.

    Discretizes ``v(x) = int (1 - v(t)) k(t, x) dt`` with
    ``k = xi^2 (p - r) / (2 (C + 1))`` and solves ``(I + K) v = K 1``.
    """
    if not spec.unit_weight:
        raise InputError("the Fredholm reduction assumes w == 1")
    C, _, _ = _constants_on_grid(spec)
    col = 0.5 * spec.weights * spec.xi_values ** 2 / (C + 1.0)
    K = col[None, :] * (spec.P[:, None] - spec.R).T
    A = np.eye(spec.n) + K
    try:
        v = np.linalg.solve(A, K.sum(axis=1))
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"Nystrom system is singular: {exc}") from exc
    if np.linalg.cond(A) > 1e13:
        raise SingularSystemError("Nystrom system is numerically singular")
    return v


@dataclass(frozen=True)
class ContinuumSolution:
    grid: np.ndarray
    ubar_minus: np.ndarray
    action: np.ndarray
    cost: np.ndarray
    ubar: float
    chi2: np.ndarray
    p1: np.ndarray

    def candidate(self) -> "Candidate":
        return Candidate(self.action, self.chi2, self.p1, self.ubar_minus)


@dataclass(frozen=True)
class Candidate:
    action: np.ndarray
    chi2: np.ndarray
    p1: np.ndarray
    ubar_minus: np.ndarray


def strategy_and_costs(spec: ContinuumLQSpec, ubar_minus):
    """Equilibrium action, realized cost and population aggregate for ``w == 1``."""
    v = np.asarray(ubar_minus, dtype=float)
    C, _, _ = _constants_on_grid(spec)
    xi = spec.xi_values
    u = 0.5 * (1.0 - v) * xi / (C + 1.0)
    ubar = float(spec.weights @ (u * xi * spec.P))
    cost = u ** 2 - (1.0 - ubar) * xi * u
    return u, cost, ubar


def solve_continuum(spec: ContinuumLQSpec) -> ContinuumSolution:
    v = fredholm_solve(spec)
    u, cost, ubar = strategy_and_costs(spec, v)
    mult = multipliers_from_constants(*_constants_on_grid(spec), v)
    return ContinuumSolution(spec.grid, v, u, cost, ubar, mult.chi2, mult.p1)


def pontryagin_defects(spec: ContinuumLQSpec, candidate: Candidate, refine: int = 4) -> dict:
    """Defects of the necessary conditions at every grid player.

    Integrals are re-evaluated on a grid ``refine`` times finer than the
    spec's, with the candidate's equilibrium action linearly interpolated, so
    the defects measure discretization error rather than echo the solver.
    Keys: ``costate`` (p1 equation), ``state`` (chi2 equation), ``aggregate``
    (outside-aggregate equation), ``consistency`` (own action).
    """
    x = spec.grid
    s = np.linspace(0.0, 1.0, refine * (spec.n - 1) + 1)
    ws = trapezoid_weights(s)
    xi_s = sample_function(spec.xi, s)
    p_s = sample_function(spec.p_density, s)
    R = sample_kernel(spec.r_kernel, s, x)
    W = np.ones_like(R) if spec.w_kernel is None else sample_kernel(spec.w_kernel, s, x)
    v, chi2, p1 = (np.asarray(a, dtype=float) for a in (candidate.ubar_minus, candidate.chi2, candidate.p1))
    shade = np.divide(p1[None, :], W, out=np.zeros_like(W), where=W > 0)
    group = 0.5 * (1.0 - v - chi2)[None, :] * xi_s[:, None] - 0.5 * shade * xi_s[:, None]
    dL_dv = xi_s[:, None] * group * W * R
    costate = p1 - ws @ dL_dv
    state = chi2 - ws @ (xi_s[:, None] * group * R)
    u_s = np.interp(s, x, candidate.action)
    aggregate = v - ws @ ((xi_s * u_s * p_s)[:, None] - (xi_s * u_s)[:, None] * R)
    w_own = np.ones_like(x) if spec.w_kernel is None else np.diag(sample_kernel(spec.w_kernel, x, x))
    own = 0.5 * (1.0 - v - chi2 - p1 / w_own) * spec.xi_values
    return {
        "costate": float(np.max(np.abs(costate))),
        "state": float(np.max(np.abs(state))),
        "aggregate": float(np.max(np.abs(aggregate))),
        "consistency": float(np.max(np.abs(candidate.action - own))),
    }


def pontryagin_residual(spec: ContinuumLQSpec, candidate: Candidate, refine: int = 4) -> float:
    return max(pontryagin_defects(spec, candidate, refine).values())


def snap_grid_size(n: int, pitch: int = 10) -> int:
    """Smallest ``n' >= n`` whose uniform grid contains every multiple of ``1/pitch``."""
    return n if (n - 1) % pitch == 0 else n + pitch - (n - 1) % pitch


def windowed_scenario(alpha: float, xi: str | Callable = "const", n: int = 201) -> ContinuumLQSpec:
    if not 0 <= alpha <= 1:
        raise InputError("alpha must lie in [0, 1]")
    snapped = snap_grid_size(n)
    if snapped != n:
        log.info("grid size %d snapped to %d so window edges fall on grid points", n, snapped)
    return ContinuumLQSpec.build(xi, windowed_kernel(alpha), n=snapped)


def uniform_scenario(alpha: float, xi: str | Callable = "const", n: int = 201) -> ContinuumLQSpec:
    if not 0 <= alpha <= 1:
        raise InputError("alpha must lie in [0, 1]")
    return ContinuumLQSpec.build(xi, uniform_kernel(alpha), n=n)


def uniform_closed_form(xi: Callable, alpha: float, x) -> np.ndarray:
    """Equilibrium action of the uniform-group case, integrals by adaptive quadrature."""
    from scipy.integrate import quad

    sq = quad(lambda t: float(xi(np.asarray(t))) ** 2, 0.0, 1.0, epsabs=1e-13, epsrel=1e-12)[0]
    C = alpha * sq
    scale = 2.0 + (1.0 - alpha) * sq / (C + 1.0)
    return np.asarray(xi(np.asarray(x, dtype=float)), dtype=float) / ((C + 1.0) * scale)
