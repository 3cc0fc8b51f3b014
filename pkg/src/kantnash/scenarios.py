"""Named constructions of the worked examples, with closed-form reference curves."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .continuum import ContinuumLQSpec, uniform_closed_form, uniform_scenario, windowed_scenario
from .core import FiniteGame, FiniteTypeSpace, GroupMeasure, InputError, QuadraticFishingModel

FOUR_TYPE_P = (0.1, 0.2, 0.3, 0.4)
FOUR_TYPE_DESCRIPTORS = ((1, 1), (1, 2), (2, 1), (2, 2))


@dataclass(frozen=True)
class Scenario:
    """A parameterized example.

    ``builder(**parameters)`` returns a :class:`FiniteGame` for finite scenarios
    and a :class:`ContinuumLQSpec` for continuum ones.  ``reference`` (optional)
    maps the same parameters to named closed-form curves.
    """

    name: str
    kind: str
    parameters: dict[str, Any]
    builder: Callable[..., Any]
    reference: Callable[..., dict[str, np.ndarray]] | None = None
    description: str = field(default="", compare=False)

    def __post_init__(self):
        if self.kind not in ("finite", "continuum"):
            raise InputError(f"scenario kind must be 'finite' or 'continuum', got {self.kind!r}")

    def build(self) -> FiniteGame | ContinuumLQSpec:
        return self.builder(**self.parameters)

    def references(self) -> dict[str, np.ndarray]:
        return {} if self.reference is None else self.reference(**self.parameters)


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise InputError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha


def kantian_action(alpha):
    return 1.0 / (3.0 + np.asarray(alpha, dtype=float))


def altruistic_action(alpha):
    alpha = np.asarray(alpha, dtype=float)
    return (2.0 - alpha) / (6.0 - 2.0 * alpha)


def symmetric_cost(u):
    """Cost of the symmetric profile ``u``: ``u^2 - (1 - u) u``."""
    u = np.asarray(u, dtype=float)
    return 2.0 * u ** 2 - u


def _symmetric_game(alpha: float) -> FiniteGame:
    space = FiniteTypeSpace([(1.0, 1.0)], [1.0])
    model = QuadraticFishingModel(a=np.ones(1), b=np.ones(1))
    return FiniteGame(space, model, GroupMeasure([[alpha]]))


def _symmetric_reference(alpha: float) -> dict[str, np.ndarray]:
    curves = {"kantian": kantian_action(alpha), "altruistic": altruistic_action(alpha),
              "nash": np.float64(1.0 / 3.0)}
    out = {}
    for name, u in curves.items():
        out[name] = np.array([float(u)])
        out[f"{name}_cost"] = np.array([float(symmetric_cost(u))])
    return out


def symmetric_fishing(alpha: float) -> Scenario:
    """One type with unit parameters and a uniform group of mass ``alpha``."""
    return Scenario("symmetric_fishing", "finite", {"alpha": _check_alpha(alpha)},
                    _symmetric_game, _symmetric_reference,
                    "one-type fishing game; kantian vs altruistic vs nash")


def four_type_space() -> FiniteTypeSpace:
    """Types ``(x1, x2)`` = (efficiency, time weight) with the fixed population shares."""
    return FiniteTypeSpace(FOUR_TYPE_DESCRIPTORS, FOUR_TYPE_P)


def four_type_model() -> QuadraticFishingModel:
    a = np.array([d[1] for d in FOUR_TYPE_DESCRIPTORS], dtype=float)
    b = np.array([d[0] for d in FOUR_TYPE_DESCRIPTORS], dtype=float)
    return QuadraticFishingModel(a=a, b=b)


def _four_type_game(alpha: float) -> FiniteGame:
    space = four_type_space()
    return FiniteGame(space, four_type_model(), GroupMeasure(alpha * np.tile(space.p, (4, 1))))


def four_type_game(alpha: float = 0.5) -> Scenario:
    """Two-by-two type grid with cost ``x2 u^2 - (1 - ubar) x1 u``."""
    return Scenario("four_type", "finite", {"alpha": _check_alpha(alpha)}, _four_type_game,
                    description="four-type fishing game; r-Kant-Nash and h,r-Kant-Nash")


def _uniform_reference(alpha: float, xi: str, n: int) -> dict[str, np.ndarray]:
    spec = uniform_scenario(alpha, xi, n)
    return {"action": uniform_closed_form(spec.xi, alpha, spec.grid)}


def continuum_uniform(alpha: float, xi: str = "const", n: int = 201) -> Scenario:
    """Continuum of types on [0, 1] with the uniform group density ``alpha``."""
    return Scenario("continuum_uniform", "continuum",
                    {"alpha": _check_alpha(alpha), "xi": xi, "n": int(n)},
                    uniform_scenario, _uniform_reference,
                    "continuum of types with a uniform group density")


def continuum_windowed(alpha: float, xi: str = "const", n: int = 201) -> Scenario:
    """Continuum of types whose groups are windows of reach 0.3 cut off above 0.9."""
    return Scenario("continuum_windowed", "continuum",
                    {"alpha": _check_alpha(alpha), "xi": xi, "n": int(n)},
                    windowed_scenario,
                    description="continuum of types; groups are windows of reach 0.3 below 0.9")


SCENARIOS: dict[str, Callable[..., Scenario]] = {
    "symmetric_fishing": symmetric_fishing,
    "four_type": four_type_game,
    "continuum_uniform": continuum_uniform,
    "continuum_windowed": continuum_windowed,
}


def get_scenario(name: str, **params) -> Scenario:
    try:
        factory = SCENARIOS[name]
    except KeyError:
        raise InputError(f"unknown scenario {name!r}; available: {', '.join(SCENARIOS)}") from None
    return factory(**params)
