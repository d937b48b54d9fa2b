"""Seeded Monte Carlo realization of hidden-variable models and the singlet.

Random streams
--------------
Every (setting index, chunk index) cell gets its own PCG64 generator seeded
with ``SeedSequence(seed, spawn_key=(setting_index, chunk_index))``.  Trials
for a setting are cut into chunks of ``CHUNK`` trials (the last one shorter),
so the outcome stream does not depend on how many workers run the chunks.

Within a chunk of m trials the draws are consumed in this order:

* model source: m uniforms pick lambda by cumulative search over the weights
  (``searchsorted(cumsum(weights)[:-1], u, side="right")``); then for
  factorizable/deterministic models m uniforms for wing 1 and m for wing 2
  (outcome +1 iff u < p(+1)); for outcome-dependent models m uniforms pick
  a cell of the per-lambda joint in order (+,+), (+,-), (-,+), (-,-).
* quantum source: m uniforms pick a cell of the singlet joint, same order.
"""

from __future__ import annotations

import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from bell_lab.errors import NoDataError
from bell_lab.hv_models import HVModel
from bell_lab.locality_audit import AuditReport, Condition, _Cells, _finalize
from bell_lab.prob_core import PAIRS
from bell_lab.quantum_oracle import SettingPair, singlet_joint

CHUNK = 1 << 16
QUANTUM = "quantum"
THREADS_ENV = "BELL_LAB_THREADS"


@dataclass(frozen=True)
class SimulationConfig:
    seed: int
    trials: int
    settings: tuple
    source: Union[HVModel, str] = QUANTUM

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if int(self.trials) < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials!r}")
        if not self.settings:
            raise ValueError("no settings to simulate")
        if isinstance(self.source, str) and self.source != QUANTUM:
            raise ValueError(f"unknown source {self.source!r}")
        object.__setattr__(self, "settings", tuple(self.settings))


@dataclass(frozen=True, eq=False)
class EmpiricalTable:
    settings: tuple
    counts: np.ndarray  # (n_settings, 2, 2), outcome index 0 -> +1
    trials: np.ndarray  # (n_settings,)

    def __post_init__(self):
        if not np.array_equal(self.counts.sum(axis=(1, 2)), self.trials):
            raise ValueError("counts per setting must sum to that setting's trials")

    def frequency(self, k: int) -> np.ndarray:
        if self.trials[k] == 0:
            raise NoDataError(f"no trials recorded for setting {k}")
        return self.counts[k] / self.trials[k]

    def product_moment(self, k: int) -> float:
        f = self.frequency(k)
        return float(f[0, 0] + f[1, 1] - f[0, 1] - f[1, 0])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("a,b,r,q,count,trials\n")
        for k, s in enumerate(self.settings):
            for r, q in PAIRS:
                buf.write(f"{s.a.angle:.12g},{s.b.angle:.12g},{int(r)},{int(q)},"
                          f"{int(self.counts[k, r.index, q.index])},{int(self.trials[k])}\n")
        return buf.getvalue()


def _sample_cells(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Cell index per row; ``probs`` is (m, 4) or (4,)."""
    cum = np.cumsum(probs, axis=-1)[..., :3]
    return (u[:, None] >= np.broadcast_to(cum, (len(u), 3))).sum(axis=1)


def _run_chunk(config: SimulationConfig, k: int, chunk: int, size: int) -> np.ndarray:
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(int(config.seed), spawn_key=(k, chunk)))
    )
    s = config.settings[k]
    if isinstance(config.source, str):
        probs = np.array([singlet_joint(s, r, q) for r, q in PAIRS])
        cells = _sample_cells(probs, rng.random(size))
        return np.bincount(cells, minlength=4).reshape(2, 2)

    model = config.source
    i, j = model.pair_index(s)
    cum_w = np.cumsum(model.lambda_space.weights)[:-1]
    lam = np.searchsorted(cum_w, rng.random(size), side="right")
    if model.is_local_kind:
        p1, p2 = model.wing_probs
        r_idx = (rng.random(size) >= p1[lam, i, 0]).astype(np.int64)
        q_idx = (rng.random(size) >= p2[lam, j, 0]).astype(np.int64)
        cells = 2 * r_idx + q_idx
    else:
        probs = model.joint_tensor[lam, i, j].reshape(size, 4)
        cells = _sample_cells(probs, rng.random(size))
    return np.bincount(cells, minlength=4).reshape(2, 2)


def default_workers() -> int:
    raw = os.environ.get(THREADS_ENV, "0")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return n if n > 0 else (os.cpu_count() or 1)


def simulate(config: SimulationConfig, workers: int | None = None) -> EmpiricalTable:
    if not isinstance(config.source, str):
        for s in config.settings:
            config.source.pair_index(s)  # coverage check up front
    workers = default_workers() if workers is None else max(1, int(workers))
    tasks = []
    for k in range(len(config.settings)):
        n_chunks = -(-int(config.trials) // CHUNK)
        for c in range(n_chunks):
            tasks.append((k, c, min(CHUNK, int(config.trials) - c * CHUNK)))

    def run(task):
        return task[0], _run_chunk(config, *task)

    if workers == 1:
        results = [run(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, tasks))
    counts = np.zeros((len(config.settings), 2, 2), dtype=np.int64)
    for k, c in results:
        counts[k] += c
    trials = np.full(len(config.settings), int(config.trials), dtype=np.int64)
    return EmpiricalTable(config.settings, counts, trials)


def compare(
    empirical: EmpiricalTable,
    analytic: Callable[[SettingPair, int, int], float],
    z: float = 4.0,
) -> AuditReport:
    """Flag cells with |p_hat - p| > z * sqrt(p (1 - p) / N).

    ``max_residual`` is the worst standardized residual |p_hat - p| / sd
    (infinite when sd = 0 and the frequencies differ); tolerance is ``z``.
    """
    if len(empirical.settings) == 0 or np.any(empirical.trials <= 0):
        raise NoDataError("empirical table has settings without trials")
    lhs, rhs, res, idx, r_idx, q_idx = [], [], [], [], [], []
    for k, s in enumerate(empirical.settings):
        n = int(empirical.trials[k])
        for r, q in PAIRS:
            p_hat = empirical.counts[k, r.index, q.index] / n
            p = float(analytic(s, r, q))
            diff = abs(p_hat - p)
            sd = math.sqrt(max(p * (1.0 - p), 0.0) / n)
            if sd > 0:
                res.append(diff / sd)
            else:
                res.append(0.0 if diff == 0 else math.inf)
            lhs.append(p_hat), rhs.append(p)
            idx.append(k), r_idx.append(r.index), q_idx.append(q.index)
    m = len(lhs)
    cells = _Cells(np.array(lhs), np.array(rhs), np.full(m, -1), np.array(idx),
                   np.array(idx), np.array(r_idx), np.array(q_idx))
    settings = ([s.a for s in empirical.settings], [s.b for s in empirical.settings])
    res = np.array(res)
    return _finalize(Condition.EMPIRICAL_AGREEMENT, None, z, cells, residual=res,
                     settings=settings, details={"flagged_cells": int(np.sum(res > z))})
