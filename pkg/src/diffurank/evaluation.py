"""Ranking metrics, significance testing and sampler filling statistics."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import IO, Iterable, Literal, Mapping, Sequence

import numpy as np
from scipy.special import betainc

from .core import RankedList
from .errors import ValidationError

Gain = Literal["exp", "linear"]


class Qrels:
    """Graded judgments keyed by (query_id, doc_id)."""

    def __init__(self, grades: Mapping[tuple[str, str], int] | None = None) -> None:
        self._by_query: dict[str, dict[str, int]] = defaultdict(dict)
        for (qid, did), g in (grades or {}).items():
            self.add(qid, did, g)

    def add(self, query_id: str, doc_id: str, grade: int) -> None:
        grade = int(grade)
        if grade < 0:
            raise ValidationError(f"negative grade {grade} for ({query_id}, {doc_id})")
        if doc_id in self._by_query[query_id]:
            raise ValidationError(f"duplicate judgment for ({query_id}, {doc_id})")
        self._by_query[query_id][doc_id] = grade

    def grade(self, query_id: str, doc_id: str) -> int:
        return self._by_query.get(query_id, {}).get(doc_id, 0)

    def for_query(self, query_id: str) -> dict[str, int]:
        return dict(self._by_query.get(query_id, {}))

    def query_ids(self) -> list[str]:
        return list(self._by_query)

    def items(self) -> Iterable[tuple[str, str, int]]:
        for qid, docs in self._by_query.items():
            for did, g in docs.items():
                yield qid, did, g

    def __len__(self) -> int:
        return sum(len(d) for d in self._by_query.values())


def _gain(grades: np.ndarray, gain: Gain) -> np.ndarray:
    grades = np.asarray(grades, dtype=np.float64)
    if gain == "exp":
        return np.exp2(grades) - 1.0
    if gain == "linear":
        return grades
    raise ValidationError(f"unknown gain {gain!r}")


def dcg(grades: Sequence[float], k: int, gain: Gain = "exp") -> float:
    g = _gain(np.asarray(grades)[:k], gain)
    discounts = np.log2(np.arange(2, g.size + 2))
    return float((g / discounts).sum())


def ndcg_from_grades(ranked_grades, all_grades, k: int, gain: Gain = "exp") -> float:
    """NDCG@k of a ranking given its grades and the grades of every judged document."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    ideal = dcg(np.sort(np.asarray(all_grades))[::-1], k, gain)
    if ideal <= 0:
        return 0.0
    return dcg(ranked_grades, k, gain) / ideal


def ndcg_at_k(run: RankedList, qrels: Qrels, k: int = 10, gain: Gain = "exp") -> float:
    judged = qrels.for_query(run.query_id)
    ranked = [judged.get(doc_id, 0) for doc_id in run.doc_ids]
    return ndcg_from_grades(ranked, list(judged.values()), k, gain)


def correct_rate(traces: Iterable) -> float | None:
    """Percentage of decoded windows whose raw output was already a permutation.

    Accepts sampling traces (anything with a ``valid`` attribute) or plain bools.
    ``None`` when there is nothing to count.
    """
    flags = [t if isinstance(t, bool) else bool(t.valid) for t in traces]
    if not flags:
        return None
    return 100.0 * sum(flags) / len(flags)


def t_sf_two_sided(t: float, df: int) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    x = df / (df + t * t)
    return float(betainc(df / 2.0, 0.5, x))


def paired_ttest(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Paired Student's t-test on ``a - b``; returns ``(t, two-sided p)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError("paired samples must be vectors of equal length")
    n = a.size
    if n < 2:
        raise ValidationError("paired t-test needs at least two pairs")
    d = a - b
    mean = float(d.mean())
    if np.all(d == d[0]):
        if mean == 0.0:
            return 0.0, 1.0
        return math.copysign(math.inf, mean), 0.0
    sd = float(d.std(ddof=1))
    t = mean / (sd / math.sqrt(n))
    return t, t_sf_two_sided(t, n - 1)


@dataclass(frozen=True)
class FillingDynamics:
    first_fill: np.ndarray
    """H[t, i]: traces whose slot i was first committed at step t + 1."""
    eligible: np.ndarray
    """E[t, i]: traces whose slot i was still masked entering step t + 1."""

    @property
    def preference(self) -> np.ndarray:
        """P = H / E, with 0 where nothing was eligible."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.eligible > 0, self.first_fill / np.maximum(self.eligible, 1), 0.0)

    @property
    def steps(self) -> int:
        return self.first_fill.shape[0]

    def mean_first_fill_step(self) -> np.ndarray:
        """Average (1-based) first-fill step per slot."""
        steps = np.arange(1, self.steps + 1)[:, None]
        counts = self.first_fill.sum(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(counts > 0, (steps * self.first_fill).sum(axis=0) / counts, np.nan)


def filling_dynamics(traces: Sequence, k: int) -> FillingDynamics:
    """First-fill counts H, eligibility counts E over sampling traces with ``k`` steps."""
    if not traces:
        raise ValidationError("no traces")
    n_max = max(tr.n for tr in traces)
    H = np.zeros((k, n_max), dtype=np.int64)
    E = np.zeros((k, n_max), dtype=np.int64)
    for tr in traces:
        if tr.steps_budget != k:
            raise ValidationError(f"trace was sampled with K={tr.steps_budget}, expected {k}")
        first = tr.first_fill_steps()
        for pos, step in enumerate(first):
            if step == 0:
                E[:, pos] += 1
                continue
            H[step - 1, pos] += 1
            E[:step, pos] += 1
    return FillingDynamics(H, E)


def write_dynamics_csv(fh: IO[str], dyn: FillingDynamics) -> None:
    """Long-format grid: one row per (step, position); P is blank where E = 0."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["step", "position", "H", "E", "P"])
    P = dyn.preference
    for t in range(dyn.steps):
        for i in range(dyn.first_fill.shape[1]):
            e = int(dyn.eligible[t, i])
            writer.writerow([t + 1, i + 1, int(dyn.first_fill[t, i]), e, f"{P[t, i]:.6f}" if e else ""])


def write_metrics_csv(
    fh: IO[str],
    per_query: Mapping[str, float],
    metric: str,
    extra: Sequence[tuple[str, str, float]] = (),
) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["query_id", "metric", "value"])
    for qid, value in per_query.items():
        writer.writerow([qid, metric, f"{value:.6f}"])
    if per_query:
        writer.writerow(["all", metric, f"{np.mean(list(per_query.values())):.6f}"])
    for qid, name, value in extra:
        writer.writerow([qid, name, f"{value:.6g}"])
