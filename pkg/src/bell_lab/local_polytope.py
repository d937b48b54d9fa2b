"""Local-polytope membership for two-wing, two-outcome correlation tables.

Deterministic strategies assign +-1 to every declared setting on each wing;
a table is local iff it is a convex mixture of strategy correlation vectors.
Membership is decided by a slack-minimizing LP, and a feasible answer comes
with the mixture weights as an explicit certificate.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError
from scipy.optimize import linprog

from bell_lab.errors import (
    CorrelationRangeError,
    ModelFileError,
    TooManySettingsError,
    WrongArityError,
)
from bell_lab.hv_models import HVModel, build_deterministic_mixture
from bell_lab.prob_core import DEFAULT_TOL
from bell_lab.quantum_oracle import Direction, SettingPair, as_direction, singlet_correlation

MAX_SETTINGS = 24
CHSH_SETTINGS = ((0.0, math.pi / 2), (math.pi / 4, 3 * math.pi / 4))


@dataclass(frozen=True)
class DeterministicStrategy:
    settings1: tuple
    settings2: tuple
    wing1: tuple
    wing2: tuple

    def outcome(self, wing: int, d) -> int:
        d = as_direction(d)
        settings, values = (self.settings1, self.wing1) if wing == 1 else (self.settings2, self.wing2)
        for s, v in zip(settings, values):
            if s.key() == d.key():
                return v
        raise KeyError(f"setting {d.angle!r} not declared on wing {wing}")

    def as_row(self) -> tuple:
        return self.wing1 + self.wing2


def _check_bound(n1: int, n2: int):
    if n1 + n2 > MAX_SETTINGS:
        raise TooManySettingsError(
            f"{n1}+{n2} settings exceed the enumeration bound of {MAX_SETTINGS}"
        )


def strategy_matrix(n1: int, n2: int) -> np.ndarray:
    """All 2**(n1+n2) strategies as rows of +-1, wing-1 settings first.

    Canonical order is itertools.product((+1, -1), ...): the all-(+1) strategy
    comes first and the last column varies fastest.
    """
    _check_bound(n1, n2)
    n = n1 + n2
    bits = (np.arange(2 ** n)[:, None] >> np.arange(n - 1, -1, -1)) & 1
    return (1 - 2 * bits).astype(np.int8)


def enumerate_strategies(settings1: Sequence, settings2: Sequence) -> list:
    s1 = tuple(as_direction(d) for d in settings1)
    s2 = tuple(as_direction(d) for d in settings2)
    rows = strategy_matrix(len(s1), len(s2))
    n1 = len(s1)
    return [DeterministicStrategy(s1, s2, tuple(int(v) for v in row[:n1]),
                                  tuple(int(v) for v in row[n1:])) for row in rows]


@dataclass(frozen=True, eq=False)
class CorrelationTable:
    """Target product moments for some setting pairs plus wing-mean targets."""

    settings1: tuple
    settings2: tuple
    entries: dict  # (i, j) -> value, indices into settings1/settings2
    means1: tuple = ()
    means2: tuple = ()

    def __post_init__(self):
        s1 = tuple(as_direction(d) for d in self.settings1)
        s2 = tuple(as_direction(d) for d in self.settings2)
        object.__setattr__(self, "settings1", s1)
        object.__setattr__(self, "settings2", s2)
        object.__setattr__(self, "means1", tuple(self.means1) or (0.0,) * len(s1))
        object.__setattr__(self, "means2", tuple(self.means2) or (0.0,) * len(s2))
        if len(self.means1) != len(s1) or len(self.means2) != len(s2):
            raise ValueError("wing-mean targets must match the declared settings")
        for (i, j), v in self.entries.items():
            if not (0 <= i < len(s1) and 0 <= j < len(s2)):
                raise ValueError(f"entry ({i}, {j}) refers to an undeclared setting")
        for v in list(self.entries.values()) + list(self.means1) + list(self.means2):
            if not abs(v) <= 1.0:
                raise CorrelationRangeError(f"target {v!r} outside [-1, 1]")

    def restrict(self, keep1: Sequence[int], keep2: Sequence[int]) -> "CorrelationTable":
        """Sub-table on a subset of the settings (by index)."""
        m1 = {i: k for k, i in enumerate(keep1)}
        m2 = {j: k for k, j in enumerate(keep2)}
        return CorrelationTable(
            [self.settings1[i] for i in keep1], [self.settings2[j] for j in keep2],
            {(m1[i], m2[j]): v for (i, j), v in self.entries.items() if i in m1 and j in m2},
            [self.means1[i] for i in keep1], [self.means2[j] for j in keep2],
        )

    def value(self, a, b) -> Optional[float]:
        i = _index(self.settings1, a)
        j = _index(self.settings2, b)
        return self.entries.get((i, j))

    def to_dict(self) -> dict:
        return {
            "settings": {"wing1": [d.angle for d in self.settings1],
                         "wing2": [d.angle for d in self.settings2]},
            "correlations": [
                {"a": self.settings1[i].angle, "b": self.settings2[j].angle, "value": v}
                for (i, j), v in sorted(self.entries.items())
            ],
            "means": {"wing1": list(self.means1), "wing2": list(self.means2)},
        }


def _index(settings, d) -> int:
    key = as_direction(d).key()
    for k, s in enumerate(settings):
        if s.key() == key:
            return k
    raise KeyError(f"setting {as_direction(d).angle!r} not declared")


def singlet_table(settings1=CHSH_SETTINGS[0], settings2=CHSH_SETTINGS[1]) -> CorrelationTable:
    s1 = [as_direction(d) for d in settings1]
    s2 = [as_direction(d) for d in settings2]
    entries = {(i, j): singlet_correlation(SettingPair(a, b))
               for i, a in enumerate(s1) for j, b in enumerate(s2)}
    return CorrelationTable(s1, s2, entries)


def anticorrelation_table(angles=(0.0, math.pi / 4, math.pi / 2)) -> CorrelationTable:
    """E12 = -1 at equal-angle pairs only (theta = 0), wing means 0."""
    d = [as_direction(x) for x in angles]
    return CorrelationTable(d, d, {(i, i): -1.0 for i in range(len(d))})


def zero_table(settings1=CHSH_SETTINGS[0], settings2=CHSH_SETTINGS[1]) -> CorrelationTable:
    s1 = [as_direction(x) for x in settings1]
    s2 = [as_direction(x) for x in settings2]
    return CorrelationTable(s1, s2, {(i, j): 0.0 for i in range(len(s1)) for j in range(len(s2))})


def _design(table: CorrelationTable, strategies: np.ndarray):
    """Rows: specified product moments, then wing-1 and wing-2 means."""
    n1 = len(table.settings1)
    S = strategies.astype(float)
    keys = sorted(table.entries)
    rows = [S[:, i] * S[:, n1 + j] for i, j in keys]
    rows += [S[:, i] for i in range(n1)]
    rows += [S[:, n1 + j] for j in range(len(table.settings2))]
    target = [table.entries[k] for k in keys] + list(table.means1) + list(table.means2)
    return np.array(rows), np.array(target)


@dataclass(frozen=True, eq=False)
class LocalityResult:
    local: bool
    residual: float
    tolerance: float
    table: CorrelationTable
    strategies: np.ndarray
    weights: Optional[np.ndarray] = None
    chsh_witness: Optional[dict] = None

    def to_model(self) -> HVModel:
        if not self.local:
            raise ValueError("no local model exists for a nonlocal table")
        return build_deterministic_mixture(self.table.settings1, self.table.settings2,
                                           self.strategies, self.weights)

    def to_dict(self) -> dict:
        doc = {
            "verdict": "local" if self.local else "nonlocal",
            "residual": self.residual,
            "tolerance": self.tolerance,
        }
        if self.local:
            n1 = len(self.table.settings1)
            doc["certificate"] = [
                {"strategy": int(k), "wing1": self.strategies[k, :n1].tolist(),
                 "wing2": self.strategies[k, n1:].tolist(), "weight": float(self.weights[k])}
                for k in np.flatnonzero(self.weights > 0)
            ]
        if self.chsh_witness is not None:
            doc["witness"] = self.chsh_witness
        return doc


def _polish(V, t, w, tol):
    """Re-solve the equality system on the LP support to strip solver noise."""
    support = np.flatnonzero(w > 1e-12)
    A = np.vstack([V[:, support], np.ones(len(support))])
    b = np.append(t, 1.0)
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    if sol.min() < 0:
        return None
    out = np.zeros_like(w)
    out[support] = sol
    return out


def is_local(table: CorrelationTable, tol: float = DEFAULT_TOL) -> LocalityResult:
    strategies = strategy_matrix(len(table.settings1), len(table.settings2))
    V, t = _design(table, strategies)
    m, k = V.shape
    uniform = np.full(k, 1.0 / k)
    if m == 0 or np.abs(V @ uniform - t).max() <= tol:
        return LocalityResult(True, float(np.abs(V @ uniform - t).max()) if m else 0.0,
                              tol, table, strategies, uniform)
    # minimize sum of slacks subject to V w + s_plus - s_minus = t, sum w = 1
    c = np.concatenate([np.zeros(k), np.ones(2 * m)])
    A_eq = np.block([[V, np.eye(m), -np.eye(m)],
                     [np.ones((1, k)), np.zeros((1, 2 * m))]])
    b_eq = np.append(t, 1.0)
    res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"LP solver failed: {res.message}")
    w = np.clip(res.x[:k], 0.0, None)
    w /= w.sum()
    polished = _polish(V, t, w, tol)
    candidates = [w] if polished is None else [polished, w]
    best_w, best_res = None, math.inf
    for cand in candidates:
        r = float(np.abs(V @ cand - t).max()) if m else 0.0
        if r < best_res:
            best_w, best_res = cand, r
    if best_res <= tol:
        return LocalityResult(True, best_res, tol, table, strategies, best_w)
    return LocalityResult(False, best_res, tol, table, strategies,
                          chsh_witness=chsh_violation(table, tol))


def chsh_violation(table: CorrelationTable, tol: float = DEFAULT_TOL) -> Optional[dict]:
    """Largest CHSH combination over all setting quadruples with every entry
    specified, if it exceeds the local bound of 2."""
    best = None
    n1, n2 = len(table.settings1), len(table.settings2)
    for i, i2 in itertools.combinations(range(n1), 2):
        for j, j2 in itertools.combinations(range(n2), 2):
            cells = [(i, j), (i, j2), (i2, j), (i2, j2)]
            if not all(c in table.entries for c in cells):
                continue
            # each labelling places the minus sign on (a, b')
            for a, a2 in ((i, i2), (i2, i)):
                for b, b2 in ((j, j2), (j2, j)):
                    v = (table.entries[(a, b)] - table.entries[(a, b2)]
                         + table.entries[(a2, b)] + table.entries[(a2, b2)])
                    if best is None or abs(v) > abs(best["value"]):
                        best = {
                            "a": table.settings1[a].angle, "a_prime": table.settings1[a2].angle,
                            "b": table.settings2[b].angle, "b_prime": table.settings2[b2].angle,
                            "value": v,
                        }
    if best is not None and abs(best["value"]) > 2.0 + tol:
        return best
    return None


def chsh_local_max(wing1: Sequence, wing2: Sequence) -> float:
    """max |CHSH| over the 16 deterministic strategies on two settings per wing."""
    if len(wing1) != 2 or len(wing2) != 2:
        raise WrongArityError(f"CHSH needs 2+2 settings, got {len(wing1)}+{len(wing2)}")
    best = 0
    for A0, A1, B0, B1 in strategy_matrix(2, 2).astype(int):
        best = max(best, abs(A0 * B0 - A0 * B1 + A1 * B0 + A1 * B1))
    return float(best)


# -- correlation files ---------------------------------------------------------

class _Settings(BaseModel):
    model_config = ConfigDict(extra="forbid")
    wing1: list[float]
    wing2: list[float]


class _Entry(BaseModel):
    model_config = ConfigDict(extra="forbid")
    a: float
    b: float
    value: float


class CorrelationDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")
    settings: _Settings
    correlations: list[_Entry]
    means: Optional[_Settings] = None


def table_from_dict(data: dict) -> CorrelationTable:
    try:
        doc = CorrelationDocument.model_validate(data)
    except ValidationError as exc:
        raise ModelFileError(f"invalid correlation document: {exc}") from None
    s1 = [Direction(x) for x in doc.settings.wing1]
    s2 = [Direction(x) for x in doc.settings.wing2]
    try:
        entries = {}
        for e in doc.correlations:
            entries[(_index(s1, e.a), _index(s2, e.b))] = e.value
        means = doc.means or _Settings(wing1=[], wing2=[])
        return CorrelationTable(s1, s2, entries, means.wing1, means.wing2)
    except KeyError as exc:
        raise ModelFileError(f"correlation entry uses {exc}") from None
    except ValueError as exc:
        raise ModelFileError(str(exc)) from None


def load_table(path) -> CorrelationTable:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelFileError(f"cannot read correlation file: {exc}") from None
    return table_from_dict(data)
