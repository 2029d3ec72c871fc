"""One-shot permutation decoding as minimum-cost bipartite matching."""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import CandidateList, Permutation, cost_matrix
from .errors import ValidationError
from .provider import MaskPredictor, MaskQuery, PromptContext, Strategy

BRUTE_FORCE_MAX_N = 9
# Two assignments are co-optimal when their costs differ by at most
# n * TIE_RTOL * max(1, max|C|).
TIE_RTOL = 1e-9


@dataclass(frozen=True)
class AssignmentResult:
    permutation: Permutation
    total_cost: float
    matrix_checksum: str


def _check_cost(C) -> np.ndarray:
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1] or C.shape[0] == 0:
        raise ValidationError(f"cost matrix must be square and nonempty, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ValidationError("cost matrix has non-finite entries")
    return C


def _tie_tol(C: np.ndarray) -> float:
    return TIE_RTOL * max(1.0, float(np.abs(C).max()))


def assignment_cost(C: np.ndarray, mapping) -> float:
    return math.fsum(C[i, j] for i, j in enumerate(mapping))


def _checksum(C: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(C).tobytes()).hexdigest()[:16]


def _result(C: np.ndarray, mapping) -> AssignmentResult:
    perm = Permutation(np.asarray(mapping, dtype=np.int64))
    return AssignmentResult(perm, assignment_cost(C, perm.mapping), _checksum(C))


def _shortest_augmenting_path(C: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """O(n^3) Hungarian method with potentials.

    Returns ``(row_to_col, u, v)`` where ``C[i, j] - u[i] - v[j] >= 0`` for all
    cells and equality holds on the returned assignment. Plain lists beat
    vectorised numpy at window sizes (n up to a few dozen).
    """
    n = C.shape[0]
    rows = C.tolist()
    inf = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    owner = [0] * (n + 1)  # owner[j]: row (1-based) matched to column j
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = owner[j0]
            row = rows[i0 - 1]
            ui = u[i0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = row[j - 1] - ui - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[owner[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    row_to_col = np.empty(n, dtype=np.int64)
    row_to_col[np.asarray(owner[1:]) - 1] = np.arange(n)
    return row_to_col, np.asarray(u[1:]), np.asarray(v[1:])


def _lexicographic_min_optimum(C: np.ndarray, match: np.ndarray, reduced: np.ndarray) -> np.ndarray:
    """Smallest row-to-column mapping whose cost is within the tie tolerance of ``match``.

    Rows are fixed in order. Row ``i`` moves to a smaller column ``j`` when the
    cheapest completion of the remaining rows keeps the total co-optimal. Forcing
    ``(i, j)`` costs at least ``reduced[i, j]`` extra, which prunes most columns
    before any subproblem is solved.
    """
    n = match.size
    tol = n * _tie_tol(C)
    best = assignment_cost(C, match)
    match = match.copy()
    for i in range(n):
        fixed = set(match[:i].tolist())
        for j in np.flatnonzero(reduced[i, : match[i]] <= tol):
            if j in fixed:
                continue
            cand = match.copy()
            cand[i] = j
            rows = np.arange(i + 1, n)
            if rows.size:
                taken = np.zeros(n, dtype=bool)
                taken[cand[: i + 1]] = True
                cols = np.flatnonzero(~taken)
                sub, _, _ = _shortest_augmenting_path(C[np.ix_(rows, cols)])
                cand[rows] = cols[sub]
            if assignment_cost(C, cand) <= best + tol:
                match = cand
                break
    return match


def hungarian(C) -> AssignmentResult:
    """Minimum-cost assignment; co-optimal ties resolve to the lexicographically smallest mapping."""
    C = _check_cost(C)
    match, u, v = _shortest_augmenting_path(C)
    reduced = C - u[:, None] - v[None, :]
    return _result(C, _lexicographic_min_optimum(C, match, reduced))


@lru_cache(maxsize=BRUTE_FORCE_MAX_N + 1)
def _all_permutations(n: int) -> tuple[np.ndarray, np.ndarray]:
    """All permutations in lexicographic order, plus their flat indices into an n x n matrix."""
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    flat = perms + n * np.arange(n)
    perms.setflags(write=False)
    flat.setflags(write=False)
    return perms, flat


def brute_force_assignment(C) -> AssignmentResult:
    """Exhaustive minimum over all permutations, same tie rule as :func:`hungarian`."""
    C = _check_cost(C)
    n = C.shape[0]
    if n > BRUTE_FORCE_MAX_N:
        raise ValidationError(f"brute force limited to N <= {BRUTE_FORCE_MAX_N}, got {n}")
    perms, flat = _all_permutations(n)
    costs = C.ravel()[flat].sum(axis=1)
    best = costs.min()
    # itertools yields permutations in lexicographic order.
    first = int(np.flatnonzero(costs <= best + n * _tie_tol(C))[0])
    return _result(C, perms[first])


def assignment_from_probs(probs) -> AssignmentResult:
    return hungarian(cost_matrix(probs))


def decode_assign(
    cands: CandidateList, provider: MaskPredictor, *, template_id: str = "default"
) -> Permutation:
    """Single provider call over all slots and identifiers, then Hungarian matching."""
    ctx = PromptContext.from_candidates(Strategy.PERMUTATION, cands, template_id)
    n = len(cands)
    mq = MaskQuery(tuple(range(n)), cands.labels)
    resp = provider.provide(ctx, mq).check_shape(mq)
    return assignment_from_probs(resp.rows).permutation
