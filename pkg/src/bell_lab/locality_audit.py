"""Executable locality checks over hidden-variable models.

Every check evaluates a pair of quantities (lhs, rhs) on a grid of cells
(lambda, a, b, r, q), reports the worst |lhs - rhs| and up to
``MAX_WITNESSES`` violating cells.  Cells whose conditioning outcome is not
realizable at that lambda (probability <= tol) are skipped and counted.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from bell_lab.errors import WrongModelKindError
from bell_lab.hv_models import (
    HVModel,
    ModelKind,
    model_conditional,
    model_marginal_first,
    model_quantum_joint,
    per_lambda_joint,
)
from bell_lab.prob_core import DEFAULT_TOL, OUTCOMES, as_outcome
from bell_lab.quantum_oracle import SettingPair, singlet_conditional, singlet_joint

MAX_WITNESSES = 10
SIGNS = np.array([1, -1])


class Condition(str, enum.Enum):
    OUTCOME_INDEPENDENCE = "OutcomeIndependence"
    PARAMETER_INDEPENDENCE = "ParameterIndependence"
    BELL_LOCALITY = "BellLocality"
    F_NORMALIZATION = "FNormalization"
    F_CONDITIONAL_IDENTIFICATION = "FConditionalIdentification"
    EQ19_CONSISTENCY = "Eq19Consistency"
    ZERO_WING_MEANS = "ZeroWingMeans"
    DETERMINISTIC_REDUCTION = "DeterministicReduction"
    QUANTUM_REPRODUCTION = "QuantumReproduction"
    EMPIRICAL_AGREEMENT = "EmpiricalAgreement"


class Verdict(str, enum.Enum):
    HOLDS = "holds"
    FAILS = "fails"
    NOT_APPLICABLE = "not-applicable"


@dataclass(frozen=True)
class Witness:
    lam: Optional[str]
    a: Optional[float]
    b: Optional[float]
    r: Optional[int]
    q: Optional[int]
    lhs: float
    rhs: float
    residual: float

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam, "a": self.a, "b": self.b, "r": self.r, "q": self.q,
            "lhs": _json_float(self.lhs), "rhs": _json_float(self.rhs),
        }


@dataclass(frozen=True)
class AuditReport:
    condition: Condition
    verdict: Verdict
    max_residual: float
    tolerance: float
    witnesses: tuple = ()
    skipped: int = 0
    details: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.verdict is Verdict.HOLDS

    @property
    def fails(self) -> bool:
        return self.verdict is Verdict.FAILS

    def to_dict(self) -> dict:
        doc = {
            "condition": self.condition.value,
            "verdict": self.verdict.value,
            "max_residual": _json_float(self.max_residual),
            "tolerance": self.tolerance,
            "witnesses": [w.to_dict() for w in self.witnesses],
            "skipped": self.skipped,
        }
        if self.details:
            doc["details"] = self.details
        return doc

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), allow_nan=False, **kwargs)


def _json_float(x: float):
    return float(x) if math.isfinite(x) else None


def not_applicable(condition: Condition, tol: float, reason: str) -> AuditReport:
    return AuditReport(condition, Verdict.NOT_APPLICABLE, 0.0, tol, details={"reason": reason})


@dataclass
class _Cells:
    """Flat arrays describing evaluated cells; index -1 means 'not part of the cell'."""

    lhs: np.ndarray
    rhs: np.ndarray
    lam: np.ndarray
    a: np.ndarray
    b: np.ndarray
    r: np.ndarray
    q: np.ndarray

    @classmethod
    def grid(cls, lhs, rhs, mask=None, drop=()):
        """Cells over a (lambda, a, b, r, q)-shaped grid; axes in ``drop`` have
        been reduced away (their coordinate is reported as absent)."""
        lhs, rhs = np.broadcast_arrays(np.asarray(lhs, float), np.asarray(rhs, float))
        names = [n for n in ("lam", "a", "b", "r", "q") if n not in drop]
        idx = dict(zip(names, np.indices(lhs.shape)))
        if mask is None:
            mask = np.ones(lhs.shape, bool)
        mask = np.broadcast_to(mask, lhs.shape)
        coords = {}
        for n in ("lam", "a", "b", "r", "q"):
            coords[n] = idx[n][mask] if n in idx else np.full(int(mask.sum()), -1)
        return cls(lhs[mask], rhs[mask], **coords)

    @classmethod
    def concat(cls, parts):
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in
                     ("lhs", "rhs", "lam", "a", "b", "r", "q")))


def _finalize(condition, model, tol, cells: _Cells, skipped=0, details=None,
              residual=None, settings=None) -> AuditReport:
    details = details or {}
    if residual is None:
        residual = np.abs(cells.lhs - cells.rhs)
    if residual.size == 0:
        return AuditReport(condition, Verdict.NOT_APPLICABLE, 0.0, tol, skipped=skipped,
                           details={**details, "reason": "no applicable cells"})
    max_res = float(residual.max())
    verdict = Verdict.HOLDS if max_res <= tol else Verdict.FAILS
    witnesses = _select_witnesses(model, cells, residual, tol, settings)
    return AuditReport(condition, verdict, max_res, tol, tuple(witnesses), skipped, details)


def _select_witnesses(model, cells, residual, tol, settings=None):
    bad = np.flatnonzero(residual > tol)
    if bad.size == 0:
        return []
    s1, s2 = settings if settings is not None else (model.settings1, model.settings2)
    ang1 = np.array([d.angle for d in s1] + [-np.inf])
    ang2 = np.array([d.angle for d in s2] + [-np.inf])
    if model is not None:
        ids = model.lambda_space.ids
        rank = np.empty(len(ids) + 1, dtype=np.int64)
        rank[:-1] = np.argsort(np.argsort(np.array(ids)))
        rank[-1] = -1
    else:
        ids, rank = (), np.array([-1])
    sign = np.append(SIGNS, 0)
    lam_rank = rank[cells.lam[bad]]
    a_ang, b_ang = ang1[cells.a[bad]], ang2[cells.b[bad]]
    r_val, q_val = sign[cells.r[bad]], sign[cells.q[bad]]
    # largest residual first; ties by (lambda id, a, b, r, q)
    order = np.lexsort((q_val, r_val, b_ang, a_ang, lam_rank, -residual[bad]))
    out = []
    for k in order[:MAX_WITNESSES]:
        c = bad[k]
        out.append(Witness(
            lam=ids[cells.lam[c]] if cells.lam[c] >= 0 else None,
            a=float(s1[cells.a[c]].angle) if cells.a[c] >= 0 else None,
            b=float(s2[cells.b[c]].angle) if cells.b[c] >= 0 else None,
            r=int(SIGNS[cells.r[c]]) if cells.r[c] >= 0 else None,
            q=int(SIGNS[cells.q[c]]) if cells.q[c] >= 0 else None,
            lhs=float(cells.lhs[c]), rhs=float(cells.rhs[c]), residual=float(residual[c]),
        ))
    return out


# -- per-lambda building blocks ----------------------------------------------

def _conditional_tensor(J, tol):
    """p2(q | a, b, r, lambda) where realizable, plus the realizability mask."""
    p1 = J.sum(axis=-1)
    ok = p1 > tol
    with np.errstate(invalid="ignore", divide="ignore"):
        cond = np.where(ok[..., None], J / np.where(ok, p1, 1.0)[..., None], np.nan)
    return cond, np.broadcast_to(ok[..., None], J.shape)


def _product_moment(J):
    return J[..., 0, 0] + J[..., 1, 1] - J[..., 0, 1] - J[..., 1, 0]


def _rq():
    return (SIGNS[:, None] * SIGNS[None, :]).astype(float)


def _f_tensor(J):
    """f(r, q) = 1/2 [1 + rq E12] for every cell."""
    return 0.5 * (1.0 + _rq() * _product_moment(J)[..., None, None])


def _f_from_joint_tensor(J):
    return J + J[..., ::-1, ::-1]


def f_function(model: HVModel, lam, s: SettingPair, r, q) -> float:
    j = per_lambda_joint(model, lam, s)
    e12 = j.pp + j.mm - j.pm - j.mp
    return 0.5 * (1.0 + as_outcome(r) * as_outcome(q) * e12)


def f_from_joint(model: HVModel, lam, s: SettingPair, r, q) -> float:
    j = per_lambda_joint(model, lam, s)
    r, q = as_outcome(r), as_outcome(q)
    return j[r, q] + j[-r, -q]


# -- checks -------------------------------------------------------------------

def check_outcome_independence(model: HVModel, tol: float = DEFAULT_TOL) -> AuditReport:
    J = model.joint_tensor
    cond, ok = _conditional_tensor(J, tol)
    marg2 = J.sum(axis=-2)[..., None, :]
    cells = _Cells.grid(cond, marg2, ok)
    skipped = int((~ok[..., 0]).sum())
    return _finalize(Condition.OUTCOME_INDEPENDENCE, model, tol, cells, skipped)


def check_parameter_independence(model: HVModel, tol: float = DEFAULT_TOL) -> AuditReport:
    if model.is_local_kind:
        return AuditReport(Condition.PARAMETER_INDEPENDENCE, Verdict.HOLDS, 0.0, tol,
                           details={"structural": True})
    J = model.joint_tensor
    p1 = J.sum(axis=-1)  # (L, n1, n2, r)
    p2 = J.sum(axis=-2)  # (L, n1, n2, q)
    L, n1, n2, _ = p1.shape
    lam, a, r = np.indices((L, n1, 2))
    hi, lo = p1.argmax(axis=2), p1.argmin(axis=2)
    lhs1 = np.take_along_axis(p1, hi[:, :, None], 2)[:, :, 0]
    rhs1 = np.take_along_axis(p1, lo[:, :, None], 2)[:, :, 0]
    wing1 = _Cells(lhs1.ravel(), rhs1.ravel(), lam.ravel(), a.ravel(), hi.ravel(),
                   r.ravel(), np.full(lam.size, -1))
    lam, b, q = np.indices((L, n2, 2))
    hi, lo = p2.argmax(axis=1), p2.argmin(axis=1)
    lhs2 = np.take_along_axis(p2, hi[:, None], 1)[:, 0]
    rhs2 = np.take_along_axis(p2, lo[:, None], 1)[:, 0]
    wing2 = _Cells(lhs2.ravel(), rhs2.ravel(), lam.ravel(), hi.ravel(), b.ravel(),
                   np.full(lam.size, -1), q.ravel())
    return _finalize(Condition.PARAMETER_INDEPENDENCE, model, tol, _Cells.concat([wing1, wing2]))


def check_bell_locality(model: HVModel, tol: float = DEFAULT_TOL) -> AuditReport:
    J = model.joint_tensor
    product = J.sum(axis=-1)[..., :, None] * J.sum(axis=-2)[..., None, :]
    return _finalize(Condition.BELL_LOCALITY, model, tol, _Cells.grid(J, product))


def check_f_normalization(model: HVModel, tol: float = DEFAULT_TOL) -> AuditReport:
    F = _f_from_joint_tensor(model.joint_tensor)
    cells = _Cells.grid(F.sum(axis=-1), 1.0, drop=("q",))
    return _finalize(Condition.F_NORMALIZATION, model, tol, cells)


def check_f_conditional_identification(model: HVModel, tol: float = DEFAULT_TOL) -> AuditReport:
    """Per-lambda conditional against f built from the joint, p(r,q) + p(-r,-q)."""
    J = model.joint_tensor
    cond, ok = _conditional_tensor(J, tol)
    cells = _Cells.grid(cond, _f_from_joint_tensor(J), ok)
    skipped = int((~ok[..., 0]).sum())
    return _finalize(Condition.F_CONDITIONAL_IDENTIFICATION, model, tol, cells, skipped)


def check_eq19(model: HVModel, tol: float = DEFAULT_TOL) -> AuditReport:
    """Per-lambda conditional against 1/2 [1 + rq E12(lambda)] on realizable outcomes.

    ``details["lambda"]`` records, per lambda, whether this identity and
    outcome independence hold there, and whether both do at once.
    """
    J = model.joint_tensor
    cond, ok = _conditional_tensor(J, tol)
    f = _f_tensor(J)
    cells = _Cells.grid(cond, f, ok)
    skipped = int((~ok[..., 0]).sum())

    marg2 = J.sum(axis=-2)[..., None, :]
    eq19_res = np.where(ok, np.abs(cond - f), 0.0).reshape(len(J), -1).max(axis=1)
    oi_res = np.where(ok, np.abs(cond - marg2), 0.0).reshape(len(J), -1).max(axis=1)
    per_lambda = {
        lam: {
            "eq19": bool(e <= tol),
            "outcome_independence": bool(o <= tol),
            "both": bool(e <= tol and o <= tol),
        }
        for lam, e, o in zip(model.lambda_space.ids, eq19_res, oi_res)
    }
    details = {
        "lambda": per_lambda,
        "n_lambda_both": sum(v["both"] for v in per_lambda.values()),
    }
    return _finalize(Condition.EQ19_CONSISTENCY, model, tol, cells, skipped, details)


def check_zero_wing_means(
    model: HVModel, tol: float = DEFAULT_TOL, claims_both_orderings: bool = False
) -> AuditReport:
    """Wing means must vanish for a model claiming the conditional identity in
    both measurement orderings; not applicable otherwise or when deterministic."""
    cond = Condition.ZERO_WING_MEANS
    if model.kind is ModelKind.DETERMINISTIC:
        return not_applicable(cond, tol, "deterministic model: wing values are +-1")
    if not claims_both_orderings:
        return not_applicable(cond, tol, "model does not claim consistency in both orderings")
    if model.is_local_kind:
        e1, e2 = model.wing1, model.wing2
        L, n1 = e1.shape
        lam, a = np.indices(e1.shape)
        c1 = _Cells(e1.ravel(), np.zeros(e1.size), lam.ravel(), a.ravel(),
                    np.full(e1.size, -1), np.full(e1.size, -1), np.full(e1.size, -1))
        lam, b = np.indices(e2.shape)
        c2 = _Cells(e2.ravel(), np.zeros(e2.size), lam.ravel(), np.full(e2.size, -1),
                    b.ravel(), np.full(e2.size, -1), np.full(e2.size, -1))
        return _finalize(cond, model, tol, _Cells.concat([c1, c2]))
    J = model.joint_tensor
    e1 = J[..., 0, :].sum(-1) - J[..., 1, :].sum(-1)
    e2 = J[..., :, 0].sum(-1) - J[..., :, 1].sum(-1)
    c1 = _Cells.grid(e1, 0.0, drop=("r", "q"))
    c2 = _Cells.grid(e2, 0.0, drop=("r", "q"))
    return _finalize(cond, model, tol, _Cells.concat([c1, c2]))


def check_deterministic_reduction(model: HVModel, tol: float = DEFAULT_TOL) -> AuditReport:
    if model.kind is not ModelKind.DETERMINISTIC:
        raise WrongModelKindError(
            f"deterministic reduction needs a deterministic model, got {model.kind.value}"
        )
    J = model.joint_tensor
    A = model.wing1[:, :, None, None, None]
    B = model.wing2[:, None, :, None, None]
    r = SIGNS[:, None].astype(float)
    q = SIGNS[None, :].astype(float)
    shape = J.shape

    # every cell carrying mass has r*A = +1 and q*B = +1
    inconsistent = np.broadcast_to((r * A != 1) | (q * B != 1), shape)
    c_values = _Cells.grid(np.where(inconsistent, J, 0.0), 0.0)
    # f_DET = 1/2 [1 + rq A B] equals the joint's f
    f_det = 0.5 * (1.0 + r * q * A * B)
    c_fdet = _Cells.grid(f_det, _f_from_joint_tensor(J))
    # conditional given realizable r equals 1/2 [1 + q B]
    cond, ok = _conditional_tensor(J, tol)
    c_oi = _Cells.grid(cond, 0.5 * (1.0 + q * B), ok)

    parts = [c_values, c_fdet, c_oi]
    details = {
        clause: float(np.abs(p.lhs - p.rhs).max()) if p.lhs.size else 0.0
        for clause, p in zip(("definite_values", "f_det", "outcome_independence"), parts)
    }
    skipped = int((~ok[..., 0]).sum())
    return _finalize(Condition.DETERMINISTIC_REDUCTION, model, tol, _Cells.concat(parts),
                     skipped, {"clause_max_residual": details})


def check_quantum_reproduction(
    model: HVModel, settings: Optional[Iterable[SettingPair]] = None, tol: float = DEFAULT_TOL
) -> AuditReport:
    """Model-level joint and conditional against the singlet predictions."""
    pairs = list(settings) if settings is not None else model.setting_pairs
    lhs, rhs, a_idx, b_idx, r_idx, q_idx = [], [], [], [], [], []
    skipped = 0
    for s in pairs:
        i, j = model.pair_index(s)
        for r in OUTCOMES:
            realizable = model_marginal_first(model, s, r) > tol
            skipped += not realizable
            for q in OUTCOMES:
                lhs.append(model_quantum_joint(model, s, r, q))
                rhs.append(singlet_joint(s, r, q))
                a_idx.append(i), b_idx.append(j), r_idx.append(r.index), q_idx.append(q.index)
                if realizable:
                    lhs.append(model_conditional(model, s, r, q))
                    rhs.append(singlet_conditional(s, r, q))
                    a_idx.append(i), b_idx.append(j), r_idx.append(r.index), q_idx.append(q.index)
    n = len(lhs)
    cells = _Cells(np.array(lhs), np.array(rhs), np.full(n, -1), np.array(a_idx, int),
                   np.array(b_idx, int), np.array(r_idx, int), np.array(q_idx, int))
    return _finalize(Condition.QUANTUM_REPRODUCTION, model, tol, cells, skipped)


CHECKS = {
    "outcome-independence": check_outcome_independence,
    "parameter-independence": check_parameter_independence,
    "bell-locality": check_bell_locality,
    "f-normalization": check_f_normalization,
    "f-conditional-identification": check_f_conditional_identification,
    "eq19-consistency": check_eq19,
    "zero-wing-means": check_zero_wing_means,
    "deterministic-reduction": check_deterministic_reduction,
    "quantum-reproduction": check_quantum_reproduction,
}
