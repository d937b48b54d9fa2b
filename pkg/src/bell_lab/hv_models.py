"""Hidden-variable models over a finite lambda-space.

A model carries a weighted set of lambda points plus, per kind:

* ``factorizable`` / ``deterministic``: one table of local means per wing,
  shape (n_lambda, n_settings_on_that_wing).  The per-lambda joint is always
  the product of the two wing distributions and is never stored.
* ``outcome-dependent``: a full per-lambda joint for every setting pair,
  shape (n_lambda, n1, n2, 2, 2) with outcome index 0 -> +1, 1 -> -1.

Wing tables take only the local setting, so parameter independence holds by
construction for the first two kinds.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Literal, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from bell_lab.errors import (
    MissingEntryError,
    ModelFileError,
    WrongModelKindError,
    ZeroProbabilityConditionError,
)
from bell_lab.prob_core import (
    EXACT_TOL,
    JointDistribution2x2,
    as_outcome,
)
from bell_lab.quantum_oracle import Direction, SettingPair, as_direction

LOAD_WEIGHT_TOL = 1e-9

# 8 evenly spaced gaps in [0, pi)
DEFAULT_THETAS = tuple(k * math.pi / 8 for k in range(8))


class ModelKind(str, enum.Enum):
    FACTORIZABLE = "factorizable"
    DETERMINISTIC = "deterministic"
    OUTCOME_DEPENDENT = "outcome-dependent"


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LambdaSpace:
    ids: tuple
    weights: np.ndarray

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        w = _frozen(self.weights)
        if w.ndim != 1 or len(w) != len(ids) or not ids:
            raise ValueError("lambda ids and weights must be non-empty and aligned")
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate lambda ids")
        if not np.all(np.isfinite(w)) or w.min() < 0:
            raise ValueError("lambda weights must be finite and non-negative")
        if abs(math.fsum(w) - 1.0) > EXACT_TOL:
            raise ValueError(f"lambda weights sum to {math.fsum(w)!r}, expected 1")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_index", {lam: k for k, lam in enumerate(ids)})

    def __len__(self):
        return len(self.ids)

    def index(self, lam) -> int:
        try:
            return self._index[str(lam)]
        except KeyError:
            raise MissingEntryError(f"unknown lambda id {lam!r}") from None

    @classmethod
    def uniform(cls, n: int, prefix: str = "l") -> "LambdaSpace":
        width = len(str(n - 1))
        return cls(tuple(f"{prefix}{k:0{width}d}" for k in range(n)), np.full(n, 1.0 / n))


@dataclass(frozen=True, eq=False)
class HVModel:
    lambda_space: LambdaSpace
    kind: ModelKind
    settings1: tuple
    settings2: tuple
    wing1: np.ndarray | None = None
    wing2: np.ndarray | None = None
    joint: np.ndarray | None = None
    _index1: dict = field(init=False, repr=False)
    _index2: dict = field(init=False, repr=False)

    def __post_init__(self):
        kind = ModelKind(self.kind)
        s1 = tuple(as_direction(d) for d in self.settings1)
        s2 = tuple(as_direction(d) for d in self.settings2)
        if not s1 or not s2:
            raise ValueError("both wings need at least one declared setting")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "settings1", s1)
        object.__setattr__(self, "settings2", s2)
        object.__setattr__(self, "_index1", _setting_index(s1))
        object.__setattr__(self, "_index2", _setting_index(s2))
        n_lam = len(self.lambda_space)

        if kind is ModelKind.OUTCOME_DEPENDENT:
            if self.joint is None or self.wing1 is not None or self.wing2 is not None:
                raise ValueError("outcome-dependent models carry a joint table only")
            j = _frozen(self.joint)
            if j.shape != (n_lam, len(s1), len(s2), 2, 2):
                raise ValueError(f"joint table has shape {j.shape}")
            if j.min() < -EXACT_TOL or np.abs(j.sum(axis=(3, 4)) - 1).max() > EXACT_TOL:
                raise ValueError("every per-lambda joint must be a distribution")
            object.__setattr__(self, "joint", j)
            return

        if self.joint is not None or self.wing1 is None or self.wing2 is None:
            raise ValueError(f"{kind.value} models carry two wing tables only")
        w1, w2 = _frozen(self.wing1), _frozen(self.wing2)
        if w1.shape != (n_lam, len(s1)) or w2.shape != (n_lam, len(s2)):
            raise ValueError(f"wing tables have shapes {w1.shape}, {w2.shape}")
        for w in (w1, w2):
            if not np.all(np.abs(w) <= 1.0):
                raise ValueError("wing means must lie in [-1, 1]")
            if kind is ModelKind.DETERMINISTIC and not np.all(np.abs(w) == 1.0):
                raise ValueError("deterministic wing values must be exactly +-1")
        object.__setattr__(self, "wing1", w1)
        object.__setattr__(self, "wing2", w2)

    @property
    def is_local_kind(self) -> bool:
        return self.kind is not ModelKind.OUTCOME_DEPENDENT

    @property
    def setting_pairs(self) -> list:
        return [SettingPair(a, b) for a in self.settings1 for b in self.settings2]

    def index1(self, d) -> int:
        return _lookup(self._index1, as_direction(d), 1)

    def index2(self, d) -> int:
        return _lookup(self._index2, as_direction(d), 2)

    def pair_index(self, s: SettingPair) -> tuple:
        return self.index1(s.a), self.index2(s.b)

    @cached_property
    def wing_probs(self) -> tuple:
        """Per-wing outcome probabilities, shapes (n_lambda, n_settings, 2)."""
        self._require_local()
        signs = np.array([1.0, -1.0])
        return (
            0.5 * (1.0 + self.wing1[..., None] * signs),
            0.5 * (1.0 + self.wing2[..., None] * signs),
        )

    @cached_property
    def joint_tensor(self) -> np.ndarray:
        """Per-lambda joints for every declared pair: (n_lambda, n1, n2, 2, 2)."""
        if self.kind is ModelKind.OUTCOME_DEPENDENT:
            return self.joint
        p1, p2 = self.wing_probs
        j = p1[:, :, None, :, None] * p2[:, None, :, None, :]
        j.setflags(write=False)
        return j

    def _require_local(self):
        if not self.is_local_kind:
            raise WrongModelKindError(
                f"operation needs a factorizable or deterministic model, got {self.kind.value}"
            )


def _setting_index(settings: tuple) -> dict:
    index = {}
    for k, d in enumerate(settings):
        if d.key() in index:
            raise ValueError(f"duplicate setting {d.angle!r}")
        index[d.key()] = k
    return index


def _lookup(index: dict, d: Direction, wing: int) -> int:
    try:
        return index[d.key()]
    except KeyError:
        raise MissingEntryError(f"setting {d.angle!r} not declared on wing {wing}") from None


def _o(outcome) -> int:
    return as_outcome(outcome).index


def wing_prob(model: HVModel, wing: int, lam, d, outcome) -> float:
    model._require_local()
    k = model.lambda_space.index(lam)
    if wing == 1:
        mean = model.wing1[k, model.index1(d)]
    elif wing == 2:
        mean = model.wing2[k, model.index2(d)]
    else:
        raise ValueError(f"wing must be 1 or 2, got {wing!r}")
    return 0.5 * (1.0 + as_outcome(outcome) * float(mean))


def factorizable_joint(model: HVModel, lam, s: SettingPair, r, q) -> float:
    model._require_local()
    k = model.lambda_space.index(lam)
    e1 = float(model.wing1[k, model.index1(s.a)])
    e2 = float(model.wing2[k, model.index2(s.b)])
    r, q = as_outcome(r), as_outcome(q)
    return 0.25 * (1.0 + r * e1 + q * e2 + r * q * e1 * e2)


def per_lambda_joint(model: HVModel, lam, s: SettingPair) -> JointDistribution2x2:
    k = model.lambda_space.index(lam)
    i, j = model.pair_index(s)
    return JointDistribution2x2(*model.joint_tensor[k, i, j].ravel().tolist())


def _product_moment_per_lambda(model: HVModel, i: int, j: int) -> np.ndarray:
    t = model.joint_tensor[:, i, j]
    return t[:, 0, 0] + t[:, 1, 1] - t[:, 0, 1] - t[:, 1, 0]


Quantity = Literal["E1", "E2", "E12"]


def per_lambda_values(
    model: HVModel, quantity: Quantity, setting: Union[Direction, SettingPair, float]
) -> np.ndarray:
    """The per-lambda value of E1, E2 or E12 as an array over lambda."""
    if quantity == "E12":
        if not isinstance(setting, SettingPair):
            raise TypeError("E12 needs a SettingPair")
        return _product_moment_per_lambda(model, *model.pair_index(setting))
    if quantity not in ("E1", "E2"):
        raise ValueError(f"unknown quantity {quantity!r}")
    if isinstance(setting, SettingPair):
        i, j = model.pair_index(setting)
        t = model.joint_tensor[:, i, j]
        if quantity == "E1":
            return t[:, 0].sum(axis=1) - t[:, 1].sum(axis=1)
        return t[:, :, 0].sum(axis=1) - t[:, :, 1].sum(axis=1)
    if not model.is_local_kind:
        raise WrongModelKindError(
            "wing means of an outcome-dependent model need the full setting pair"
        )
    if quantity == "E1":
        return model.wing1[:, model.index1(setting)]
    return model.wing2[:, model.index2(setting)]


def expectation_over_lambda(
    model: HVModel, quantity: Quantity, setting: Union[Direction, SettingPair, float]
) -> float:
    """Integrate a per-lambda mean against the lambda weights.

    ``quantity`` is ``"E1"`` or ``"E2"`` with a Direction (local kinds) or a
    SettingPair (any kind), or ``"E12"`` with a SettingPair.
    """
    vals = per_lambda_values(model, quantity, setting)
    return float(np.dot(model.lambda_space.weights, vals))


def model_quantum_joint(model: HVModel, s: SettingPair, r, q) -> float:
    i, j = model.pair_index(s)
    cells = model.joint_tensor[:, i, j, _o(r), _o(q)]
    return float(np.dot(model.lambda_space.weights, cells))


def model_marginal_first(model: HVModel, s: SettingPair, r) -> float:
    i, j = model.pair_index(s)
    cells = model.joint_tensor[:, i, j, _o(r), :].sum(axis=1)
    return float(np.dot(model.lambda_space.weights, cells))


def model_conditional(model: HVModel, s: SettingPair, r, q) -> float:
    denom = model_marginal_first(model, s, r)
    if denom <= EXACT_TOL:
        raise ZeroProbabilityConditionError(
            f"model gives P1({as_outcome(r):+d}) = {denom:.3e} at {s}"
        )
    return model_quantum_joint(model, s, r, q) / denom


def _sign(x: np.ndarray) -> np.ndarray:
    # sign(0) := +1
    return np.where(x >= 0, 1.0, -1.0)


def build_sign_model(
    n: int, wing1: Iterable = (0.0,), wing2: Iterable = DEFAULT_THETAS
) -> HVModel:
    """Deterministic model: lambda uniform on n angles, A = sign cos(lambda - a),
    B = -sign cos(lambda - b).  Its correlation is -1 + 2*theta/pi up to O(1/n).

    The lambda grid is the midpoint grid 2*pi*(k + 1/2)/n, so for n divisible
    by 16 no point lands on a sign boundary of the default angles.
    """
    if n < 2:
        raise ValueError(f"sign model needs n >= 2, got {n}")
    s1 = tuple(as_direction(d) for d in wing1)
    s2 = tuple(as_direction(d) for d in wing2)
    lam = 2.0 * math.pi * (np.arange(n) + 0.5) / n
    a = np.array([d.angle for d in s1])
    b = np.array([d.angle for d in s2])
    A = _sign(np.cos(lam[:, None] - a[None, :]))
    B = -_sign(np.cos(lam[:, None] - b[None, :]))
    return HVModel(LambdaSpace.uniform(n), ModelKind.DETERMINISTIC, s1, s2, wing1=A, wing2=B)


def singlet_joint_table(settings1: Sequence[Direction], settings2: Sequence[Direction]) -> np.ndarray:
    """Singlet joints for every declared pair, shape (n1, n2, 2, 2)."""
    signs = np.array([1.0, -1.0])
    rq = signs[:, None] * signs[None, :]
    out = np.empty((len(settings1), len(settings2), 2, 2))
    for i, a in enumerate(settings1):
        for j, b in enumerate(settings2):
            c = math.cos(SettingPair(a, b).theta_ab)
            out[i, j] = 0.25 * (1.0 - rq * c)
    return out


def build_singlet_outcome_dependent(
    wing1: Iterable = (0.0,), wing2: Iterable = DEFAULT_THETAS
) -> HVModel:
    """One lambda point whose joint at every pair is the singlet joint."""
    s1 = tuple(as_direction(d) for d in wing1)
    s2 = tuple(as_direction(d) for d in wing2)
    table = singlet_joint_table(s1, s2)[None]
    return HVModel(
        LambdaSpace(("singlet",), [1.0]), ModelKind.OUTCOME_DEPENDENT, s1, s2, joint=table
    )


def build_factorizable(
    weights: Sequence[float],
    wing1_means,
    wing2_means,
    settings1: Iterable = (0.0,),
    settings2: Iterable = (0.0,),
    ids: Sequence | None = None,
) -> HVModel:
    """Factorizable model from per-lambda wing means; promoted to
    ``deterministic`` when every mean is exactly +-1."""
    w1 = np.asarray(wing1_means, dtype=float).reshape(len(weights), -1)
    w2 = np.asarray(wing2_means, dtype=float).reshape(len(weights), -1)
    if ids is None:
        ids = LambdaSpace.uniform(len(weights)).ids
    det = np.all(np.abs(w1) == 1.0) and np.all(np.abs(w2) == 1.0)
    kind = ModelKind.DETERMINISTIC if det else ModelKind.FACTORIZABLE
    return HVModel(LambdaSpace(tuple(ids), weights), kind, tuple(settings1), tuple(settings2),
                   wing1=w1, wing2=w2)


def build_deterministic_mixture(
    settings1: Sequence, settings2: Sequence, strategies, weights, min_weight: float = 0.0
) -> HVModel:
    """Deterministic model whose lambda points are strategies (rows of +-1
    values, wing-1 settings first) carrying the given weights."""
    strategies = np.asarray(strategies, dtype=float)
    weights = np.asarray(weights, dtype=float)
    keep = np.flatnonzero(weights > min_weight)
    w = weights[keep] / math.fsum(weights[keep])
    n1 = len(settings1)
    ids = [f"s{k}" for k in keep]
    return HVModel(
        LambdaSpace(tuple(ids), w), ModelKind.DETERMINISTIC, tuple(settings1), tuple(settings2),
        wing1=strategies[keep, :n1], wing2=strategies[keep, n1:],
    )


# -- model files ------------------------------------------------------------

def pair_key(a: Direction, b: Direction) -> str:
    return f"{a.key()}|{b.key()}"


class _LambdaEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")
    id: str
    weight: float


class _Settings(BaseModel):
    model_config = ConfigDict(extra="forbid")
    wing1: list[float]
    wing2: list[float]


class _Wings(BaseModel):
    model_config = ConfigDict(extra="forbid")
    wing1: dict[str, dict[str, float]]
    wing2: dict[str, dict[str, float]]


class ModelDocument(BaseModel):
    """Schema of a model file."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)
    kind: ModelKind
    lambda_: list[_LambdaEntry] = Field(alias="lambda")
    settings: _Settings
    wings: _Wings | None = None
    joint: dict[str, dict[str, list[float]]] | None = None


def model_to_dict(model: HVModel) -> dict:
    ids = model.lambda_space.ids
    doc = {
        "kind": model.kind.value,
        "lambda": [{"id": lam, "weight": float(w)} for lam, w in zip(ids, model.lambda_space.weights)],
        "settings": {
            "wing1": [d.angle for d in model.settings1],
            "wing2": [d.angle for d in model.settings2],
        },
    }
    if model.is_local_kind:
        doc["wings"] = {
            name: {
                lam: {d.key(): float(table[k, i]) for i, d in enumerate(settings)}
                for k, lam in enumerate(ids)
            }
            for name, table, settings in (
                ("wing1", model.wing1, model.settings1),
                ("wing2", model.wing2, model.settings2),
            )
        }
    else:
        doc["joint"] = {
            lam: {
                pair_key(a, b): model.joint[k, i, j].ravel().tolist()
                for i, a in enumerate(model.settings1)
                for j, b in enumerate(model.settings2)
            }
            for k, lam in enumerate(ids)
        }
    return doc


def model_from_dict(data: dict) -> HVModel:
    try:
        doc = ModelDocument.model_validate(data)
    except ValidationError as exc:
        raise ModelFileError(f"invalid model document: {exc}") from None
    ids = [e.id for e in doc.lambda_]
    weights = np.array([e.weight for e in doc.lambda_])
    total = math.fsum(weights)
    if not ids or abs(total - 1.0) > LOAD_WEIGHT_TOL or weights.min() < 0:
        raise ModelFileError(f"lambda weights must be non-negative and sum to 1, got {total!r}")
    weights = weights / total
    s1 = tuple(Direction(x) for x in doc.settings.wing1)
    s2 = tuple(Direction(x) for x in doc.settings.wing2)
    try:
        if doc.kind is ModelKind.OUTCOME_DEPENDENT:
            if doc.joint is None or doc.wings is not None:
                raise ModelFileError("outcome-dependent model needs 'joint' and no 'wings'")
            table = np.empty((len(ids), len(s1), len(s2), 2, 2))
            for k, lam in enumerate(ids):
                row = doc.joint[lam]
                for i, a in enumerate(s1):
                    for j, b in enumerate(s2):
                        cells = row[pair_key(a, b)]
                        if len(cells) != 4:
                            raise ModelFileError(f"joint entry for {lam} needs 4 probabilities")
                        table[k, i, j] = np.reshape(cells, (2, 2))
            return HVModel(LambdaSpace(tuple(ids), weights), doc.kind, s1, s2, joint=table)

        if doc.wings is None or doc.joint is not None:
            raise ModelFileError(f"{doc.kind.value} model needs 'wings' and no 'joint'")
        tables = []
        for raw, settings in ((doc.wings.wing1, s1), (doc.wings.wing2, s2)):
            tables.append([[raw[lam][d.key()] for d in settings] for lam in ids])
        return HVModel(LambdaSpace(tuple(ids), weights), doc.kind, s1, s2,
                       wing1=tables[0], wing2=tables[1])
    except KeyError as exc:
        raise ModelFileError(f"model table is missing entry {exc}") from None
    except ValueError as exc:
        if isinstance(exc, ModelFileError):
            raise
        raise ModelFileError(str(exc)) from None


def load_model(path: Union[str, Path]) -> HVModel:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelFileError(f"cannot read model file: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"model file is not JSON: {exc}") from None
    return model_from_dict(data)


def dump_model(model: HVModel, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n", encoding="utf-8")
