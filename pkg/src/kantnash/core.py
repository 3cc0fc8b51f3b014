"""Game data model and risk-sensitive virtual-group costs for finite type spaces.

A player of type ``k`` imagines a virtual group described by the row ``r[k]``
of a sub-probability matrix.  The group picks one action per distinct
individual type (``N'`` of them) and is evaluated with a log-sum-exp risk
aggregate of the weighted member costs.  Everything here is a pure function of
immutable inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

FloatArray = NDArray[np.float64]


class KantNashError(Exception):
    """Base class for errors raised by this package."""


class InputError(KantNashError, ValueError):
    pass


class InvariantError(KantNashError, ValueError):
    pass


class DegenerateGroupError(KantNashError, ValueError):
    pass


class UnsupportedError(KantNashError, NotImplementedError):
    pass


class SingularSystemError(KantNashError, ArithmeticError):
    pass


class ConvergenceError(KantNashError, RuntimeError):
    pass


def _frozen(a: ArrayLike, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


def as_beta(beta: float | str) -> float:
    """Parse a risk factor; accepts finite reals, ``inf``/``-inf`` and their strings."""
    try:
        value = float(beta)
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid risk factor {beta!r}") from exc
    if math.isnan(value):
        raise InputError("risk factor cannot be NaN")
    return value


@dataclass(frozen=True)
class FiniteTypeSpace:
    """Discrete type pairs ``(x_k, theta_k)`` with population weights ``p``.

    ``sigma[k]`` indexes the distinct individual type of ``k``; distinct types
    are numbered in order of first appearance.
    """

    individual_types: tuple
    p: FloatArray
    social_types: tuple = ()
    sigma: np.ndarray = field(init=False)
    distinct_types: tuple = field(init=False)

    def __post_init__(self) -> None:
        xs = tuple(_hashable(x) for x in self.individual_types)
        p = np.asarray(self.p, dtype=float).ravel()
        if len(xs) == 0:
            raise InputError("type space must contain at least one type")
        if p.shape != (len(xs),):
            raise InputError(f"distribution has {p.size} entries for {len(xs)} types")
        if np.any(~np.isfinite(p)) or np.any(p <= 0.0):
            raise InvariantError("all type probabilities must be positive")
        if abs(p.sum() - 1.0) > 1e-12:
            raise InvariantError(f"type probabilities sum to {p.sum():.15g}, not 1")
        social = tuple(self.social_types) if self.social_types else (0,) * len(xs)
        if len(social) != len(xs):
            raise InputError("social_types length does not match individual_types")
        index: dict[Hashable, int] = {}
        sigma = [index.setdefault(x, len(index)) for x in xs]
        object.__setattr__(self, "individual_types", xs)
        object.__setattr__(self, "social_types", social)
        object.__setattr__(self, "p", _frozen(p))
        object.__setattr__(self, "sigma", _frozen(sigma, dtype=np.intp))
        object.__setattr__(self, "distinct_types", tuple(index))

    @property
    def count(self) -> int:
        return len(self.individual_types)

    @property
    def distinct_count(self) -> int:
        return len(self.distinct_types)

    @property
    def selector(self) -> FloatArray:
        """``N x N'`` 0/1 matrix with ``selector[k, sigma[k]] = 1``."""
        out = np.zeros((self.count, self.distinct_count))
        out[np.arange(self.count), self.sigma] = 1.0
        return out


def _hashable(x: Any) -> Hashable:
    if isinstance(x, (list, np.ndarray)):
        return tuple(np.asarray(x).tolist())
    return x


@dataclass(frozen=True)
class GroupMeasure:
    """Sub-probability weights ``r[k, k']`` of each type's virtual group."""

    weights: FloatArray

    def __post_init__(self) -> None:
        r = np.asarray(self.weights, dtype=float)
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise InputError(f"group measure must be square, got shape {r.shape}")
        if np.any(~np.isfinite(r)) or np.any(r < 0.0):
            raise InvariantError("group weights must be finite and nonnegative")
        if np.any(r.sum(axis=1) > 1.0 + 1e-12):
            raise InvariantError("group mass exceeds 1")
        object.__setattr__(self, "weights", _frozen(r))

    @property
    def masses(self) -> FloatArray:
        return self.weights.sum(axis=1)

    def check(self, space: FiniteTypeSpace) -> None:
        if self.weights.shape != (space.count, space.count):
            raise InputError("group measure does not match the type space")
        excess = self.weights - space.p[None, :]
        if np.any(excess > 1e-12):
            raise InvariantError("group weight r[k, k'] exceeds population weight p[k']")


def check_weights(w: ArrayLike, measure: GroupMeasure) -> FloatArray:
    """Validate a finite weight kernel: positive wherever the group weight is."""
    w = np.asarray(w, dtype=float)
    if w.shape != measure.weights.shape:
        raise InputError(f"weight kernel shape {w.shape} != {measure.weights.shape}")
    if np.any(~np.isfinite(w)):
        raise InputError("weight kernel must be finite")
    if np.any((measure.weights > 0) & (w <= 0)):
        raise InvariantError("weight kernel must be positive where the group weight is")
    return _frozen(w)


@dataclass(frozen=True)
class GameModel:
    """Cost ``J(u, ubar, k)`` and aggregator ``g(u, k)`` with first derivatives.

    All callables must broadcast over numpy arrays of ``u``, ``ubar`` and the
    integer type index ``k``.  Actions are scalars in the box ``[lower, upper]``.
    """

    cost: Callable[[Any, Any, Any], Any]
    cost_du: Callable[[Any, Any, Any], Any]
    cost_dubar: Callable[[Any, Any, Any], Any]
    aggregator: Callable[[Any, Any], Any]
    aggregator_du: Callable[[Any, Any], Any]
    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self) -> None:
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)) or self.lower > self.upper:
            raise InputError(f"action box [{self.lower}, {self.upper}] is empty or unbounded")

    def project(self, u):
        return np.clip(u, self.lower, self.upper)

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)


@dataclass(frozen=True)
class QuadraticFishingModel(GameModel):
    """``J = a_k u^2 - (1 - ubar) b_k u`` with aggregator ``g = b_k u``."""

    a: FloatArray = None
    b: FloatArray = None
    cost: Callable = field(init=False, repr=False)
    cost_du: Callable = field(init=False, repr=False)
    cost_dubar: Callable = field(init=False, repr=False)
    aggregator: Callable = field(init=False, repr=False)
    aggregator_du: Callable = field(init=False, repr=False)

    def __post_init__(self) -> None:
        a = np.asarray(self.a, dtype=float).ravel()
        b = np.asarray(self.b, dtype=float).ravel()
        if a.shape != b.shape:
            raise InputError("a and b must have the same length")
        if np.any(a <= 0) or np.any(b <= 0):
            raise InvariantError("fishing parameters a_k and b_k must be positive")
        a, b = _frozen(a), _frozen(b)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "cost", lambda u, ub, k: a[k] * u * u - (1.0 - ub) * b[k] * u)
        object.__setattr__(self, "cost_du", lambda u, ub, k: 2.0 * a[k] * u - (1.0 - ub) * b[k])
        object.__setattr__(self, "cost_dubar", lambda u, ub, k: b[k] * u)
        object.__setattr__(self, "aggregator", lambda u, k: b[k] * u)
        object.__setattr__(self, "aggregator_du", lambda u, k: b[k] + 0.0 * u)
        super().__post_init__()


@dataclass(frozen=True)
class EquilibriumProfile:
    """Equilibrium actions per type plus the imagined group actions.

    ``group_actions[k]`` is the strategy of type ``k``'s virtual group over the
    distinct individual types.
    """

    star_actions: FloatArray
    group_actions: FloatArray

    def __post_init__(self) -> None:
        object.__setattr__(self, "star_actions", _frozen(self.star_actions))
        object.__setattr__(self, "group_actions", _frozen(self.group_actions))

    def consistency(self, space: FiniteTypeSpace) -> float:
        own = self.group_actions[np.arange(space.count), space.sigma]
        return float(np.max(np.abs(self.star_actions - own)))


@dataclass(frozen=True)
class FiniteGame:
    """Everything needed to evaluate virtual-group costs on a finite type space."""

    space: FiniteTypeSpace
    model: GameModel
    measure: GroupMeasure
    weights: FloatArray = None
    beta: float = 0.0

    def __post_init__(self) -> None:
        self.measure.check(self.space)
        w = np.ones_like(self.measure.weights) if self.weights is None else self.weights
        object.__setattr__(self, "weights", check_weights(w, self.measure))
        object.__setattr__(self, "beta", as_beta(self.beta))
        if isinstance(self.model, QuadraticFishingModel) and self.model.a.size != self.space.count:
            raise InputError("fishing model parameters do not match the type count")

    @property
    def r(self) -> FloatArray:
        return self.measure.weights

    def with_(self, **changes) -> "FiniteGame":
        fields = dict(space=self.space, model=self.model, measure=self.measure,
                      weights=self.weights, beta=self.beta)
        fields.update(changes)
        return FiniteGame(**fields)


def aggregate_statistic(profile: ArrayLike, space: FiniteTypeSpace, model: GameModel) -> float:
    """Population aggregate ``sum_k p_k g(u_k, k)``."""
    u = np.asarray(profile, dtype=float)
    if u.shape != (space.count,):
        raise InputError(f"profile has shape {u.shape}, expected ({space.count},)")
    return float(space.p @ model.aggregator(u, np.arange(space.count)))


def risk_aggregate(values: ArrayLike, masses: ArrayLike, beta: float) -> FloatArray | float:
    """Risk-sensitive mean of ``values`` under weights ``masses`` (last axis).

    Weights are normalized to sum to one.  ``beta = 0`` is the weighted mean,
    ``+inf``/``-inf`` the max/min over the support of the weights; otherwise
    ``(1/beta) log sum q exp(beta v)`` evaluated with a max shift.
    """
    v = np.asarray(values, dtype=float)
    m = np.asarray(masses, dtype=float)
    v, m = np.broadcast_arrays(v, m)
    if np.any(m < 0):
        raise InputError("masses must be nonnegative")
    total = m.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise DegenerateGroupError("all group masses are zero")
    q = m / total
    support = q > 0
    beta = as_beta(beta)
    if math.isinf(beta):
        fill = -np.inf if beta > 0 else np.inf
        masked = np.where(support, v, fill)
        out = masked.max(axis=-1) if beta > 0 else masked.min(axis=-1)
    else:
        if np.any(~np.isfinite(v)):
            raise InputError("non-finite cost value with finite risk factor")
        mean = np.sum(q * v, axis=-1)
        if beta == 0.0:
            out = mean
        else:
            # centred log1p/expm1 form avoids cancellation for small |beta| * spread
            d = np.where(support, v - mean[..., None], 0.0)
            small = np.abs(beta) * np.abs(d).max(axis=-1) <= 1.0
            centred = np.log1p(np.sum(q * np.expm1(beta * np.where(small[..., None], d, 0.0)), axis=-1))
            z = np.where(support, beta * v, -np.inf)
            shift = z.max(axis=-1, keepdims=True)
            s = np.sum(q * np.exp(z - shift), axis=-1)
            out = np.where(small, mean + centred / beta, (np.log(s) + shift[..., 0]) / beta)
    return float(out) if out.ndim == 0 else out


def _softmax_weights(costs: FloatArray, q: FloatArray, beta: float) -> FloatArray:
    """Derivative of the risk aggregate with respect to each member cost."""
    if beta == 0.0:
        return q
    z = np.where(q > 0, beta * costs, -np.inf)
    e = q * np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _group_terms(game: FiniteGame, k, utilde, star):
    """Shared evaluation of group members' actions, mean field and costs.

    ``k`` (int or int array) and ``utilde`` (..., N') broadcast over leading
    axes.  Rows with zero group mass are turned into singleton groups holding
    only the player herself with unit weight.
    """
    space, model = game.space, game.model
    n = space.count
    idx = np.arange(n)
    k = np.asarray(k)
    utilde = np.asarray(utilde, dtype=float)
    if utilde.shape[-1] != space.distinct_count:
        raise InputError(f"group action vector must have {space.distinct_count} entries")
    star = np.asarray(star, dtype=float)
    if star.shape != (n,):
        raise InputError(f"star profile must have shape ({n},)")
    r = game.r[k]
    members = utilde[..., space.sigma]
    g_star = model.aggregator(star, idx)
    ubar = (space.p - r) @ g_star if r.ndim == 1 else np.sum((space.p - r) * g_star, axis=-1)
    ubar = ubar + np.sum(model.aggregator(members, idx) * r, axis=-1)
    mass = r.sum(axis=-1)
    own = np.equal.outer(np.atleast_1d(k), idx).reshape(k.shape + (n,)).astype(float)
    solo = (mass <= 0)[..., None]
    q = np.where(solo, own, r / np.where(solo, 1.0, mass[..., None]))
    w = np.where(solo, 1.0, game.weights[k])
    return members, ubar, q, w, r


def group_mean_field(game: FiniteGame, k: int, utilde_k: ArrayLike, star: ArrayLike) -> float:
    """Aggregate seen by type ``k``'s group when it plays ``utilde_k`` and the rest play ``star``."""
    _, ubar, *_ = _group_terms(game, k, utilde_k, star)
    return float(ubar) if np.ndim(ubar) == 0 else ubar


def group_cost(game: FiniteGame, k: int, utilde_k: ArrayLike, star: ArrayLike):
    """Risk-aggregated weighted cost of type ``k``'s virtual group.

    ``utilde_k`` may carry leading batch axes; the result then has that shape.
    """
    members, ubar, q, w, _ = _group_terms(game, k, utilde_k, star)
    costs = w * game.model.cost(members, np.asarray(ubar)[..., None], np.arange(game.space.count))
    return risk_aggregate(costs, q, game.beta)


def group_gradients(game: FiniteGame, k, utilde, star) -> FloatArray:
    """Gradient of the group cost with respect to the group's actions.

    Vectorized over rows: ``k`` may be ``arange(N)`` with ``utilde`` of shape
    ``(N, N')``.
    """
    if math.isinf(game.beta):
        raise UnsupportedError("gradients are not defined for beta = +/-inf")
    model = game.model
    n = game.space.count
    idx = np.arange(n)
    members, ubar, q, w, r = _group_terms(game, k, utilde, star)
    ub = np.asarray(ubar)[..., None]
    costs = w * model.cost(members, ub, idx)
    pi = _softmax_weights(costs, q, game.beta) * w
    direct = (pi * model.cost_du(members, ub, idx)) @ game.space.selector
    coupling = np.sum(pi * model.cost_dubar(members, ub, idx), axis=-1)
    reach = (r * model.aggregator_du(members, idx)) @ game.space.selector
    return direct + coupling[..., None] * reach


def grad_group_cost(game: FiniteGame, k: int, utilde_k: ArrayLike, star: ArrayLike) -> FloatArray:
    """Gradient of :func:`group_cost` for a single group ``k``."""
    return group_gradients(game, int(k), np.asarray(utilde_k, dtype=float), star)


def population_costs(game: FiniteGame, star: ArrayLike) -> FloatArray:
    """Realized cost of every type when everyone plays ``star``."""
    star = np.asarray(star, dtype=float)
    ubar = aggregate_statistic(star, game.space, game.model)
    return game.model.cost(star, ubar, np.arange(game.space.count))
