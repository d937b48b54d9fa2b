"""Closed-form singlet-state predictions for the ideal EPRB experiment.

Directions live on one great circle and are given by a single angle; singlet
statistics depend only on the angle between the two analyzers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from bell_lab.errors import CorrelationRangeError
from bell_lab.prob_core import EXACT_TOL, MomentTriple, as_outcome

TWO_PI = 2.0 * math.pi


def fold_angle(angle: float) -> float:
    """Map an angle into [0, 2*pi)."""
    x = math.fmod(angle, TWO_PI)
    if x < 0:
        x += TWO_PI
    return 0.0 if x >= TWO_PI else x


@dataclass(frozen=True, order=True)
class Direction:
    angle: float

    def __post_init__(self):
        if not math.isfinite(self.angle):
            raise ValueError(f"direction angle must be finite, got {self.angle!r}")
        object.__setattr__(self, "angle", fold_angle(float(self.angle)))

    def key(self) -> str:
        return f"{self.angle:.12g}"


def as_direction(d) -> Direction:
    return d if isinstance(d, Direction) else Direction(d)


@dataclass(frozen=True, order=True)
class SettingPair:
    a: Direction
    b: Direction
    theta_ab: float = field(init=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "a", as_direction(self.a))
        object.__setattr__(self, "b", as_direction(self.b))
        gap = math.fmod(abs(self.a.angle - self.b.angle), TWO_PI)
        object.__setattr__(self, "theta_ab", min(gap, TWO_PI - gap))

    @classmethod
    def from_theta(cls, theta: float) -> "SettingPair":
        return cls(Direction(0.0), Direction(theta))


@dataclass(frozen=True)
class SingletScenario:
    """A setting pair measured on the singlet; wing means are identically 0."""

    settings: SettingPair

    def moments(self) -> MomentTriple:
        return singlet_moments(self.settings)


def singlet_joint(s: SettingPair, r, q) -> float:
    r, q = as_outcome(r), as_outcome(q)
    return 0.25 * (1.0 - r * q * math.cos(s.theta_ab))


def singlet_moments(s: SettingPair) -> MomentTriple:
    return MomentTriple(0.0, 0.0, -math.cos(s.theta_ab))


def singlet_marginal(wing: int, outcome) -> float:
    if wing not in (1, 2):
        raise ValueError(f"wing must be 1 or 2, got {wing!r}")
    as_outcome(outcome)
    return 0.5


def singlet_conditional(s: SettingPair, r, q) -> float:
    r, q = as_outcome(r), as_outcome(q)
    return 0.5 * (1.0 - r * q * math.cos(s.theta_ab))


def singlet_correlation(s: SettingPair) -> float:
    return -math.cos(s.theta_ab)


def chsh_value(
    a, a_prime, b, b_prime, corr: Callable[[SettingPair], float]
) -> float:
    """E(a,b) - E(a,b') + E(a',b) + E(a',b')."""
    a, a_prime, b, b_prime = map(as_direction, (a, a_prime, b, b_prime))
    terms = []
    for x, y in ((a, b), (a, b_prime), (a_prime, b), (a_prime, b_prime)):
        c = corr(SettingPair(x, y))
        if not abs(c) <= 1.0 + EXACT_TOL:
            raise CorrelationRangeError(
                f"correlation {c!r} at ({x.angle}, {y.angle}) outside [-1, 1]"
            )
        terms.append(c)
    return terms[0] - terms[1] + terms[2] + terms[3]
