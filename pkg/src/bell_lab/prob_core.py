"""Two-outcome bipartite distributions parameterized by their moments.

A distribution over (s1, s2) in {-1, +1}^2 is fixed by three means: the
single-wing means m1, m2 and the product mean m12.  Everything here is
setting-free and lambda-free; callers attach physical meaning.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterator

from bell_lab.errors import (
    InvalidDistributionError,
    InvalidMomentsError,
    NotExchangeableError,
    UndefinedConditionalError,
    ZeroProbabilityConditionError,
)

EXACT_TOL = 1e-12
DEFAULT_TOL = 1e-9


class Outcome(enum.IntEnum):
    """A spin result in units of hbar/2."""

    PLUS = 1
    MINUS = -1

    @property
    def index(self) -> int:
        # array layout used across the package: +1 -> 0, -1 -> 1
        return 0 if self is Outcome.PLUS else 1


OUTCOMES = (Outcome.PLUS, Outcome.MINUS)
PAIRS = tuple((r, q) for r in OUTCOMES for q in OUTCOMES)


def as_outcome(value) -> Outcome:
    if isinstance(value, Outcome):
        return value
    if value == 1 or value == -1:
        return Outcome(int(value))
    raise ValueError(f"outcome must be +1 or -1, got {value!r}")


@dataclass(frozen=True)
class MomentTriple:
    m1: float
    m2: float
    m12: float

    def __post_init__(self):
        for name in ("m1", "m2", "m12"):
            v = getattr(self, name)
            if not math.isfinite(v) or abs(v) > 1 + EXACT_TOL:
                raise InvalidMomentsError(f"{name}={v!r} outside [-1, 1]")
        for s1, s2 in PAIRS:
            p = _joint_entry(self, s1, s2)
            if p < -EXACT_TOL:
                raise InvalidMomentsError(
                    f"moments {self} induce P({s1:+d},{s2:+d}) = {p:.3e} < 0"
                )

    def __iter__(self) -> Iterator[float]:
        return iter((self.m1, self.m2, self.m12))


@dataclass(frozen=True)
class BinaryDistribution:
    p_plus: float
    p_minus: float

    def __post_init__(self):
        if min(self.p_plus, self.p_minus) < -EXACT_TOL:
            raise InvalidDistributionError(f"negative probability in {self}")
        if abs(self.p_plus + self.p_minus - 1.0) > EXACT_TOL:
            raise InvalidDistributionError(f"{self} does not sum to 1")

    def __getitem__(self, outcome) -> float:
        return self.p_plus if as_outcome(outcome) is Outcome.PLUS else self.p_minus


@dataclass(frozen=True)
class JointDistribution2x2:
    """P(S1=s1, S2=s2); entries named by sign pattern (pm = (+1, -1))."""

    pp: float
    pm: float
    mp: float
    mm: float

    def __post_init__(self):
        vals = (self.pp, self.pm, self.mp, self.mm)
        if not all(math.isfinite(v) for v in vals) or min(vals) < -EXACT_TOL:
            raise InvalidDistributionError(f"invalid entries in {self}")
        if abs(math.fsum(vals) - 1.0) > EXACT_TOL:
            raise InvalidDistributionError(
                f"entries sum to {math.fsum(vals)!r}, expected 1"
            )

    @classmethod
    def from_mapping(cls, p: dict) -> "JointDistribution2x2":
        return cls(p[(1, 1)], p[(1, -1)], p[(-1, 1)], p[(-1, -1)])

    def __getitem__(self, key) -> float:
        s1, s2 = (as_outcome(k) for k in key)
        return (self.pp, self.pm, self.mp, self.mm)[2 * s1.index + s2.index]

    def as_dict(self) -> dict:
        return {(int(s1), int(s2)): self[s1, s2] for s1, s2 in PAIRS}

    def as_list(self) -> list:
        return [self.pp, self.pm, self.mp, self.mm]

    def marginal_first(self) -> BinaryDistribution:
        return BinaryDistribution(self.pp + self.pm, self.mp + self.mm)

    def marginal_second(self) -> BinaryDistribution:
        return BinaryDistribution(self.pp + self.mp, self.pm + self.mm)


def _joint_entry(m: MomentTriple, s1: int, s2: int) -> float:
    return 0.25 * (1.0 + s1 * m.m1 + s2 * m.m2 + s1 * s2 * m.m12)


def joint_from_moments(m: MomentTriple) -> JointDistribution2x2:
    return JointDistribution2x2(*(_joint_entry(m, s1, s2) for s1, s2 in PAIRS))


def moments_from_joint(j: JointDistribution2x2) -> MomentTriple:
    m1 = (j.pp + j.pm) - (j.mp + j.mm)
    m2 = (j.pp + j.mp) - (j.pm + j.mm)
    m12 = (j.pp + j.mm) - (j.pm + j.mp)
    return MomentTriple(m1, m2, m12)


def marginal_first(m: MomentTriple, s1) -> float:
    return 0.5 * (1.0 + as_outcome(s1) * m.m1)


def conditional_second_given_first(m: MomentTriple, s1, s2) -> float:
    """P(S2=s2 | S1=s1) by Bayes on the moment form of the joint.

    Raises ZeroProbabilityConditionError when S1=s1 is (numerically) impossible.
    """
    s1, s2 = as_outcome(s1), as_outcome(s2)
    denom = 1.0 + s1 * m.m1
    if denom <= EXACT_TOL:
        raise ZeroProbabilityConditionError(
            f"P(S1={s1:+d}) = {denom / 2:.3e} under {m}"
        )
    return 0.5 * (1.0 + (s2 * m.m2 + s1 * s2 * m.m12) / denom)


def exchangeability_residual(m: MomentTriple, tol: float = DEFAULT_TOL) -> float:
    """max |P(S2=s2|S1=s1) - P(S2=s1|S1=s2)| over the four sign pairs."""
    if min(1.0 - m.m1, 1.0 + m.m1) <= tol:
        raise UndefinedConditionalError(
            f"exchangeability undefined: a value of S1 is impossible under {m}"
        )
    return max(
        abs(
            conditional_second_given_first(m, s1, s2)
            - conditional_second_given_first(m, s2, s1)
        )
        for s1, s2 in PAIRS
    )


def is_exchangeable(m: MomentTriple, tol: float = DEFAULT_TOL) -> bool:
    return exchangeability_residual(m, tol) <= tol


def conditional_under_exchangeability(
    m: MomentTriple, s1, s2, tol: float = DEFAULT_TOL
) -> float:
    if not is_exchangeable(m, tol):
        raise NotExchangeableError(
            f"m2 - m1*m12 = {m.m2 - m.m1 * m.m12:.3e} for {m}"
        )
    return 0.5 * (1.0 + as_outcome(s1) * as_outcome(s2) * m.m12)
