"""Brute-force reference computations.

Grid searches over ``U^{N'}`` (N' <= 3) with a coarse-to-fine local pattern
search, written independently of the gradient-based solvers so they can be
used to check them.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .core import (
    ConvergenceError,
    FiniteGame,
    FiniteTypeSpace,
    GameModel,
    GroupMeasure,
    InputError,
    QuadraticFishingModel,
    UnsupportedError,
    group_cost,
)
from .finite import SolverConfig, extragradient_solve, fixed_point_solve

MAX_DIM = 3
RESOLUTION = 1e-5
_DEFAULT_GRID = {1: 401, 2: 201, 3: 41}


def grid_minimize(fun, dim: int, lo: float, hi: float, grid_n: int | None = None,
                  resolution: float = RESOLUTION) -> np.ndarray:
    """Global grid search then local refinement of a batched objective.

    ``fun`` maps an ``(M, dim)`` array of candidates to ``M`` values.  Ties go
    to the lexicographically smallest candidate.  The local stage evaluates
    the 5^dim grid of half-steps around the incumbent, recentres until the
    incumbent stays put, then halves the step; at least 5 halvings are made.
    """
    if dim > MAX_DIM:
        raise UnsupportedError(f"grid oracle supports at most {MAX_DIM} distinct types, got {dim}")
    n = grid_n or _DEFAULT_GRID[dim]
    axis = np.linspace(lo, hi, n)
    # meshgrid in ij order enumerates candidates lexicographically, so argmin breaks ties low
    cands = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    values = _batched(fun, cands)
    best = cands[int(np.argmin(values))]
    best_val = float(values.min())
    h = (hi - lo) / (n - 1) if n > 1 else 0.0
    offsets = np.array(list(itertools.product((-1.0, -0.5, 0.0, 0.5, 1.0), repeat=dim)))
    rounds = max(5, math.ceil(math.log2(max(h, resolution) / resolution))) if h > 0 else 0
    for _ in range(rounds):
        for _ in range(200):
            local = np.unique(np.clip(best + h * offsets, lo, hi), axis=0)
            vals = fun(local)
            i = int(np.argmin(vals))
            if vals[i] < best_val:
                best, best_val = local[i], float(vals[i])
            else:
                break
        h *= 0.5
    return best


def _batched(fun, cands, chunk=200_000):
    return np.concatenate([np.asarray(fun(cands[i:i + chunk]), dtype=float)
                           for i in range(0, len(cands), chunk)])


def brute_force_group_min(game: FiniteGame, k: int, star, grid_n: int | None = None,
                          resolution: float = RESOLUTION) -> np.ndarray:
    """Grid minimizer of type ``k``'s group cost; works for any risk factor."""
    model = game.model
    return grid_minimize(lambda u: group_cost(game, k, u, star), game.space.distinct_count,
                         model.lower, model.upper, grid_n, resolution)


def _population_objective(space: FiniteTypeSpace, model: GameModel, weights, reduce):
    idx = np.arange(space.count)

    def fun(u):
        members = u[:, space.sigma]
        ubar = model.aggregator(members, idx) @ space.p
        costs = weights * model.cost(members, ubar[:, None], idx)
        return reduce(costs)

    return fun


def brute_force_social_opt(space: FiniteTypeSpace, model: GameModel, grid_n: int | None = None,
                           resolution: float = RESOLUTION) -> np.ndarray:
    """Profile (one action per type) minimizing the population mean cost."""
    fun = _population_objective(space, model, 1.0, lambda c: c @ space.p)
    return grid_minimize(fun, space.distinct_count, model.lower, model.upper,
                         grid_n, resolution)[space.sigma]


def brute_force_minimax(space: FiniteTypeSpace, model: GameModel, grid_n: int | None = None,
                        weights=None, resolution: float = RESOLUTION) -> np.ndarray:
    """Profile minimizing the largest (weighted) cost over the types."""
    w = np.ones(space.count) if weights is None else np.asarray(weights, dtype=float)
    fun = _population_objective(space, model, w, lambda c: c.max(axis=1))
    return grid_minimize(fun, space.distinct_count, model.lower, model.upper,
                         grid_n, resolution)[space.sigma]


def brute_force_fixed_point(game: FiniteGame, cfg: SolverConfig = SolverConfig(tol=1e-6, max_outer=500),
                            grid_n: int | None = None, resolution: float = RESOLUTION):
    """Best-response iteration whose best responses come from the grid oracle."""

    def best_response(g, k, star, warm):
        return brute_force_group_min(g, k, star, grid_n, resolution)

    return fixed_point_solve(game, cfg, best_response=best_response)


def sampled_finite_game(spec, n_types: int) -> FiniteGame:
    """Finite fishing game sampling a continuum spec at ``n_types`` uniform points.

    Types are positions; ``p_k`` are trapezoid weights and the group measure is
    ``r(t_k', t_k) p_k'``.  Every sampled player with a nonempty group must
    carry weight in it; otherwise the finite equilibrium leaves that player's
    action free.
    """
    from .continuum import sample_function, sample_kernel, trapezoid_weights

    if not spec.unit_weight:
        raise InputError("the discretized cross-check assumes w == 1")
    if n_types < 2:
        raise InputError("need at least two types")
    t = np.linspace(0.0, 1.0, n_types)
    weights = trapezoid_weights(t)
    p = weights * sample_function(spec.p_density, t)
    scale = p.sum()
    R = sample_kernel(spec.r_kernel, t, t)
    r = R.T * (weights / scale)[None, :]
    outside = np.flatnonzero((np.diag(r) <= 0) & (r.sum(axis=1) > 0))
    if outside.size:
        raise UnsupportedError(
            f"{outside.size} sampled players (first at x={t[outside[0]]:.4g}) lie outside their own "
            "group, so their finite equilibrium action is undetermined")
    p = p / scale
    xi = sample_function(spec.xi, t)
    space = FiniteTypeSpace([(float(x),) for x in t], p)
    model = QuadraticFishingModel(a=np.ones(n_types), b=xi,
                                  lower=0.0, upper=1.0)
    return FiniteGame(space, model, GroupMeasure(r), None, 0.0)


def discretized_continuum_crosscheck(spec, n_types: int,
                                     cfg: SolverConfig = SolverConfig(max_outer=200_000)) -> float:
    """Sup deviation between an extragradient solve of the sampled finite game
    and the continuum solution of ``spec`` at the sampled positions."""
    from .continuum import solve_continuum

    game = sampled_finite_game(spec, n_types)
    profile, report = extragradient_solve(game, cfg)
    if not report.converged:
        raise ConvergenceError(f"finite cross-check did not converge (residual {report.final_residual:.3e})")
    cont = solve_continuum(spec)
    t = np.array([x[0] for x in game.space.individual_types])
    ref = np.interp(t, spec.grid, cont.action)
    return float(np.max(np.abs(profile.star_actions - ref)))
