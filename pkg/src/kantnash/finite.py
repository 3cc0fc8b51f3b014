"""Equilibrium solvers for finitely many types.

Three routes are provided: damped best-response iteration on the virtual
groups, Korpelevich extragradient on the variational-inequality form, and
direct linear solves for the quadratic fishing family.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import (
    EquilibriumProfile,
    FiniteGame,
    FiniteTypeSpace,
    GroupMeasure,
    InputError,
    QuadraticFishingModel,
    SingularSystemError,
    UnsupportedError,
    group_cost,
    group_gradients,
)

log = logging.getLogger(__name__)


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-10
    max_outer: int = 10000
    damping: float = 0.5
    inner_tol: float = 1e-12
    inner_max_iter: int = 5000
    eta: float = 0.1
    eta_max: float = 1.0
    eta_growth: float = 1.05
    armijo: float = 1e-4

    def __post_init__(self):
        if not self.tol > 0:
            raise InputError("tol must be positive")
        if not 0 < self.damping <= 1:
            raise InputError("damping must lie in (0, 1]")
        if not self.eta > 0:
            raise InputError("eta must be positive")


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    final_residual: float
    residual_history: list = field(default_factory=list)
    solver: str = ""


@dataclass
class InnerInfo:
    converged: bool
    iterations: int
    residual: float


def _pg_residual(x, grad, lo, hi):
    return float(np.max(np.abs(x - np.clip(x - grad, lo, hi)), initial=0.0))


def projected_gradient(fun, grad, x0, lo, hi, *, tol=1e-12, max_iter=5000, armijo=1e-4, memory=10):
    """Minimize ``fun`` over the box ``[lo, hi]^n``.

    Barzilai-Borwein steps with a nonmonotone Armijo safeguard; the stopping
    test is on the projected-gradient residual.
    """
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    f, g = fun(x), grad(x)
    history = [f]
    step = 1.0
    res = _pg_residual(x, g, lo, hi)
    for it in range(1, max_iter + 1):
        if res <= tol:
            return x, InnerInfo(True, it - 1, res)
        ref = max(history[-memory:])
        slack = 1e-14 * (1.0 + abs(ref))
        t = step
        while True:
            x_new = np.clip(x - t * g, lo, hi)
            d = x_new - x
            f_new = fun(x_new)
            if f_new <= ref + armijo * float(g @ d) + slack or t < 1e-20:
                break
            t *= 0.5
        g_new = grad(x_new)
        s, y = x_new - x, g_new - g
        sy = float(s @ y)
        step = float(s @ s) / sy if sy > 0 else min(2 * t, 1e6)
        step = min(max(step, 1e-12), 1e12)
        x, f, g = x_new, f_new, g_new
        history.append(f)
        res = _pg_residual(x, g, lo, hi)
    return x, InnerInfo(res <= tol, max_iter, res)


def _warm_start(game: FiniteGame, star) -> np.ndarray:
    space = game.space
    first = np.zeros(space.distinct_count, dtype=int)
    first[space.sigma[::-1]] = np.arange(space.count)[::-1]
    return np.asarray(star, dtype=float)[first]


def group_best_response(game: FiniteGame, k: int, star, cfg: SolverConfig = SolverConfig(),
                        init=None, return_info: bool = False):
    """Minimize type ``k``'s group cost over ``U^{N'}`` given the others play ``star``.

    Starts from ``init`` or, by default, from the ``star`` actions of the
    distinct types, so the chosen minimizer is deterministic.
    """
    if math.isinf(game.beta):
        raise UnsupportedError("use the grid oracle for beta = +/-inf")
    model = game.model
    x0 = _warm_start(game, star) if init is None else init
    x, info = projected_gradient(
        lambda u: group_cost(game, k, u, star),
        lambda u: group_gradients(game, k, u, star),
        x0, model.lower, model.upper,
        tol=cfg.inner_tol, max_iter=cfg.inner_max_iter, armijo=cfg.armijo,
    )
    if not info.converged:
        warnings.warn(f"group {k} best response stopped at residual {info.residual:.3e}",
                      ConvergenceWarning, stacklevel=2)
    return (x, info) if return_info else x


BestResponse = Callable[[FiniteGame, int, np.ndarray, np.ndarray], np.ndarray]


def fixed_point_solve(game: FiniteGame, cfg: SolverConfig = SolverConfig(), *,
                      best_response: BestResponse | None = None, star0=None):
    """Damped best-response iteration ``star <- (1-lam) star + lam diag(BR(star))``.

    ``best_response(game, k, star, warm)`` defaults to projected gradient; the
    grid oracle plugs in here for infinite risk factors.
    """
    space = game.space
    n = space.count
    if best_response is None:
        if math.isinf(game.beta):
            raise UnsupportedError("beta = +/-inf needs a grid best response")

        def best_response(g, k, star, warm):
            return group_best_response(g, k, star, cfg, init=warm)

    star = np.full(n, game.model.midpoint) if star0 is None else np.array(star0, dtype=float)
    utilde = np.tile(_warm_start(game, star), (n, 1))
    history = []
    own = (np.arange(n), space.sigma)
    converged = False
    it = 0
    res = math.inf
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        for it in range(1, cfg.max_outer + 1):
            utilde = np.array([best_response(game, k, star, utilde[k]) for k in range(n)])
            diag = utilde[own]
            res = float(np.max(np.abs(star - diag)))
            history.append(res)
            if res <= cfg.tol:
                converged = True
                break
            star = (1 - cfg.damping) * star + cfg.damping * diag
    if caught:
        log.debug("%d inner best responses hit their iteration cap", len(caught))
    report = SolveReport(converged, it, res, history, "fixed_point")
    return EquilibriumProfile(star, utilde), report


def vi_map(game: FiniteGame, utilde, star) -> np.ndarray:
    """Stacked VI operator: every group's cost gradient, then ``star_k - utilde[k, sigma(k)]``."""
    space = game.space
    utilde = np.asarray(utilde, dtype=float).reshape(space.count, space.distinct_count)
    star = np.asarray(star, dtype=float)
    grads = group_gradients(game, np.arange(space.count), utilde, star)
    consistency = star - utilde[np.arange(space.count), space.sigma]
    return np.concatenate([grads.ravel(), consistency])


def _split(game: FiniteGame, z):
    n, m = game.space.count, game.space.distinct_count
    return z[: n * m].reshape(n, m), z[n * m:]


def _stack(utilde, star):
    return np.concatenate([np.ravel(utilde), np.ravel(star)])


def vi_residual(game: FiniteGame, utilde, star, eta: float = 1.0) -> float:
    """Natural-map residual ``||z - P(z - eta F(z))||_inf``; zero exactly at VI solutions."""
    if not eta > 0:
        raise InputError("eta must be positive")
    z = _stack(utilde, star)
    proj = game.model.project(z - eta * vi_map(game, utilde, star))
    return float(np.max(np.abs(z - proj)))


def extragradient_solve(game: FiniteGame, cfg: SolverConfig = SolverConfig(), *, z0=None):
    """Korpelevich extragradient on the equilibrium VI with box projection.

    The step is halved whenever ``eta ||F(z) - F(y)|| > 0.9 ||z - y||`` and
    grows slowly after accepted steps, capped at ``cfg.eta_max``.
    """
    if math.isinf(game.beta):
        raise UnsupportedError("extragradient needs a finite risk factor")
    space, model = game.space, game.model
    n, m = space.count, space.distinct_count
    project = model.project

    def F(z):
        u, s = _split(game, z)
        return vi_map(game, u, s)

    z = np.full(n * m + n, model.midpoint) if z0 is None else np.array(z0, dtype=float)
    eta = cfg.eta
    history = []
    converged = False
    it = 0
    res = math.inf
    for it in range(1, cfg.max_outer + 1):
        Fz = F(z)
        res = float(np.max(np.abs(z - project(z - Fz))))
        history.append(res)
        if res <= cfg.tol:
            converged = True
            break
        if it > 100 and res > 10 * history[-101]:
            log.warning("extragradient diverging: residual %.3e after %d iterations", res, it)
            break
        while True:
            y = project(z - eta * Fz)
            Fy = F(y)
            dz = np.linalg.norm(z - y)
            if eta * np.linalg.norm(Fz - Fy) <= 0.9 * dz or dz == 0.0:
                break
            eta *= 0.5
        z = project(z - eta * Fy)
        eta = min(eta * cfg.eta_growth, cfg.eta_max)
    u, s = _split(game, z)
    report = SolveReport(converged, it, res, history, "extragradient")
    return EquilibriumProfile(s, u), report


def monotonicity_probe(game: FiniteGame, samples: int = 1000, seed: int = 0):
    """Sampled lower bound on ``(F(z') - F(z))^T (z' - z) / ||z' - z||^2`` over the box.

    A positive minimum is evidence of strict monotonicity on the sampled pairs,
    not a proof: a narrow cone of non-monotone directions can be missed.
    """
    space, model = game.space, game.model
    dim = space.count * space.distinct_count + space.count
    rng = np.random.default_rng(seed)
    lowest = math.inf
    for _ in range(samples):
        z1 = rng.uniform(model.lower, model.upper, dim)
        z2 = rng.uniform(model.lower, model.upper, dim)
        d = z2 - z1
        dd = float(d @ d)
        if dd == 0.0:
            continue
        f1 = vi_map(game, *_split(game, z1))
        f2 = vi_map(game, *_split(game, z2))
        lowest = min(lowest, float((f2 - f1) @ d) / dd)
    return lowest, bool(lowest > 0)


def _fishing_data(space: FiniteTypeSpace, model: QuadraticFishingModel):
    if not isinstance(model, QuadraticFishingModel):
        raise InputError("direct solves need a QuadraticFishingModel")
    p = space.p
    return np.diag(p * model.a), p * model.b


def rkn_system(space: FiniteTypeSpace, model: QuadraticFishingModel, alpha: float):
    """Matrix and right-hand side of ``(2S + (1+alpha) l l^T) u = l``."""
    S, l = _fishing_data(space, model)
    return 2 * S + (1 + alpha) * np.outer(l, l), l


def _solve(A, rhs):
    try:
        x = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("linear solve produced non-finite values")
    return x


def quadratic_rkn_direct(space: FiniteTypeSpace, model: QuadraticFishingModel, alpha: float):
    """r-Kant-Nash actions for the fishing family under the uniform group ``alpha p``."""
    A, rhs = rkn_system(space, model, alpha)
    return _solve(A, rhs)


def fishing_params(descriptor) -> tuple[float, float]:
    """``(a, b)`` of a descriptor ``(efficiency, time weight)``."""
    return float(descriptor[1]), float(descriptor[0])


def keep_own_time_weight(member, own):
    """Perceive a member's efficiency but substitute the player's own time weight."""
    return (member[0], own[1])


def hrkn_system(space: FiniteTypeSpace, model: QuadraticFishingModel, alpha: float,
                h: Callable = keep_own_time_weight, params: Callable = fishing_params):
    """Block linear system for the h,r-Kant-Nash equilibrium.

    Players sharing the same perceived member list form one class with its own
    group profile, indexed by the members' true types; the perceived type only
    enters through the effort weight ``a``.  Unknowns are stacked as ``[class profiles..., u_KN]``.
    Returns ``(A, rhs, classes, class_of)``.
    """
    _, l = _fishing_data(space, model)
    n = space.count
    xs = space.individual_types
    perceived = [tuple(h(x_m, x_k) for x_m in xs) for x_k in xs]
    classes = list(dict.fromkeys(perceived))
    class_of = [classes.index(key) for key in perceived]
    nc = len(classes)
    ll = np.outer(l, l)
    A = np.zeros(((nc + 1) * n, (nc + 1) * n))
    rhs = np.zeros((nc + 1) * n)
    for c, key in enumerate(classes):
        a_perc = np.array([params(y)[0] for y in key])
        blk = slice(c * n, (c + 1) * n)
        A[blk, blk] = 2 * (np.diag(space.p * a_perc) + alpha * ll)
        A[blk, nc * n:] = (1 - alpha) * ll
        rhs[blk] = l
    for k in range(n):
        A[nc * n + k, class_of[k] * n + k] = 1.0
        A[nc * n + k, nc * n + k] = -1.0
    return A, rhs, classes, class_of


def quadratic_hrkn_direct(space: FiniteTypeSpace, model: QuadraticFishingModel, alpha: float,
                          h: Callable = keep_own_time_weight, params: Callable = fishing_params):
    """Solve the h,r block system; returns ``(u_KN, (class profiles...))``.

    Classes are ordered by first appearance, so for the four-type game the
    profiles come back as the ``x^2 = 1`` group then the ``x^2 = 2`` group.
    """
    A, rhs, classes, _ = hrkn_system(space, model, alpha, h, params)
    x = _solve(A, rhs)
    n = space.count
    profiles = tuple(x[c * n:(c + 1) * n] for c in range(len(classes)))
    return x[len(classes) * n:], profiles


SPECIAL_CASES = ("nash", "harsanyi", "rawls", "best_off", "coalition", "uniform")


def build_special_case(kind: str, space: FiniteTypeSpace, *, alpha: float | None = None,
                       partition: Sequence[Sequence[int]] | None = None):
    """Group measure, risk factor and weights reproducing a classical solution concept."""
    n = space.count
    p = space.p
    full = np.tile(p, (n, 1))
    ones = np.ones((n, n))
    if kind == "nash":
        return GroupMeasure(np.zeros((n, n))), 0.0, ones
    if kind == "harsanyi":
        return GroupMeasure(full), 0.0, ones
    if kind == "rawls":
        return GroupMeasure(full), math.inf, ones
    if kind == "best_off":
        return GroupMeasure(full), -math.inf, ones
    if kind == "uniform":
        if alpha is None or not 0 <= alpha <= 1:
            raise InputError("uniform groups need alpha in [0, 1]")
        return GroupMeasure(alpha * full), 0.0, ones
    if kind == "coalition":
        block = _partition_labels(partition, n)
        same = block[:, None] == block[None, :]
        return GroupMeasure(np.where(same, full, 0.0)), 0.0, ones
    raise InputError(f"unknown special case {kind!r}; expected one of {SPECIAL_CASES}")


def _partition_labels(partition, n):
    if not partition:
        raise InputError("coalition needs a partition of the type indices")
    labels = np.full(n, -1)
    for b, members in enumerate(partition):
        for k in members:
            if not 0 <= k < n or labels[k] != -1:
                raise InputError(f"invalid partition: index {k} out of range or repeated")
            labels[k] = b
    if np.any(labels < 0):
        raise InputError("invalid partition: some types are not covered")
    return labels


def special_case_game(kind: str, space: FiniteTypeSpace, model, **kw) -> FiniteGame:
    r, beta, w = build_special_case(kind, space, **kw)
    return FiniteGame(space, model, r, w, beta)
