"""Permutation decoding by iterative unmasking of rank slots.

The response holds ``N`` slots, one per rank position, initially all masked.
Each of ``K`` steps asks the provider for probability rows over the masked
slots, fills them, and then re-masks the lowest-confidence slots so that after
the step targeting noise level ``s`` exactly ``floor(N * (1 - s))`` slots stay
filled. Slots filled in an earlier step have confidence 1 and are kept.

Two fill rules are available:

* ``constrained``: rows are restricted to identifiers not yet in the response,
  and (slot, identifier) pairs are accepted greedily in order of descending
  probability so that no slot and no identifier is used twice. The output is
  always a valid permutation.
* ``vanilla``: every masked slot independently takes the argmax over the full
  identifier set, so duplicates can appear both within a step and across steps.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import IO, Iterable, Sequence

import numpy as np

from .core import CandidateList, Permutation
from .errors import ProviderError, ValidationError
from .provider import MaskPredictor, MaskQuery, PromptContext, Strategy

MASKED = -1


class SamplingMode(str, enum.Enum):
    CONSTRAINED = "constrained"
    VANILLA = "vanilla"


@dataclass(frozen=True)
class SamplerConfig:
    steps: int = 4
    mode: SamplingMode = SamplingMode.CONSTRAINED

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", SamplingMode(self.mode))
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValidationError(f"sampling steps must be a positive integer, got {self.steps}")


@dataclass(frozen=True)
class Fill:
    pos: int
    ident: int
    conf: float


@dataclass(frozen=True)
class StepRecord:
    step: int
    s: Fraction
    filled: tuple[Fill, ...]
    """Slots newly committed by this step (they survive remasking)."""
    remasked: tuple[int, ...]
    """Slots filled tentatively in this step and then masked again."""


@dataclass
class SamplerState:
    response: np.ndarray
    confidence: np.ndarray
    t: Fraction = Fraction(1)
    trace: list[StepRecord] = field(default_factory=list)

    @classmethod
    def initial(cls, n: int) -> SamplerState:
        if n < 1:
            raise ValidationError("need at least one slot")
        return cls(np.full(n, MASKED, dtype=np.int64), np.zeros(n))

    @property
    def n(self) -> int:
        return int(self.response.size)

    @property
    def masked_positions(self) -> np.ndarray:
        return np.flatnonzero(self.response == MASKED)

    @property
    def unused(self) -> np.ndarray:
        """Identifier indices absent from every filled slot, ascending."""
        used = np.zeros(self.n, dtype=bool)
        filled = self.response[self.response != MASKED]
        used[filled] = True
        return np.flatnonzero(~used)


def greedy_constrained_fill(probs: np.ndarray, limit: int | None = None) -> list[tuple[int, int, float]]:
    """Accept (row, col) pairs by descending probability, each row and col at most once.

    Equivalent to walking all triples sorted by (-p, row, col) and skipping
    blocked ones: the next accepted triple is always the first maximum of the
    still-unblocked submatrix in row-major order. ``limit`` stops after that
    many acceptances; the result is a prefix of the unlimited one.
    """
    m, u = probs.shape
    work = np.array(probs, dtype=np.float64)
    accepted = []
    count = min(m, u) if limit is None else min(m, u, limit)
    for _ in range(count):
        flat = int(work.argmax())
        a, b = divmod(flat, u)
        accepted.append((a, b, float(probs[a, b])))
        work[a, :] = -1.0
        work[:, b] = -1.0
    return accepted


def unmasked_count(n: int, s: Fraction | float) -> int:
    """Number of filled slots after the step that targets noise level ``s``."""
    if isinstance(s, Fraction):
        return n * (s.denominator - s.numerator) // s.denominator
    return int(np.floor(n * (1.0 - s)))


def _remask(
    state: SamplerState, new_resp: np.ndarray, conf: np.ndarray, prev_filled: np.ndarray, s
) -> tuple[np.ndarray, np.ndarray, tuple[int, ...]]:
    n = state.n
    n_un = unmasked_count(n, s)
    n_remask = n - n_un
    if n_remask <= 0:
        return new_resp, conf, ()
    pos = np.arange(n)
    # Lowest confidence first; at equal confidence new fills before old ones,
    # then the higher slot index.
    order = np.lexsort((-pos, prev_filled.astype(np.int8), conf))
    drop = order[:n_remask]
    new_resp = new_resp.copy()
    new_resp[drop] = MASKED
    conf = conf.copy()
    conf[drop] = 0.0
    return new_resp, conf, tuple(sorted(int(i) for i in drop))


def _finish_step(
    state: SamplerState, fills: Sequence[tuple[int, int, float]], s: Fraction | float
) -> SamplerState:
    prev_filled = state.response != MASKED
    new_resp = state.response.copy()
    conf = np.where(prev_filled, 1.0, 0.0)
    for pos, ident, value in fills:
        new_resp[pos] = ident
        conf[pos] = value
    new_resp, conf, dropped = _remask(state, new_resp, conf, prev_filled, s)
    dropped_set = set(dropped)
    committed = tuple(
        Fill(pos, ident, value) for pos, ident, value in sorted(fills) if pos not in dropped_set
    )
    remasked = tuple(p for p in dropped if not prev_filled[p])
    record = StepRecord(len(state.trace) + 1, Fraction(s), committed, remasked)
    return replace(state, response=new_resp, confidence=conf, t=Fraction(s), trace=[*state.trace, record])


def _check_s(state: SamplerState, s) -> None:
    if not 0 <= s < state.t:
        raise ValidationError(f"target level s={s} must satisfy 0 <= s < t={state.t}")


def constrained_step(state: SamplerState, probs: np.ndarray, s: Fraction | float) -> SamplerState:
    """One step of constrained sampling.

    ``probs`` has one row per masked slot (ascending) and one column per unused
    identifier (ascending).
    """
    _check_s(state, s)
    masked = state.masked_positions
    unused = state.unused
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (masked.size, unused.size):
        raise ValidationError(
            f"probs shape {probs.shape} does not match ({masked.size} masked, {unused.size} unused)"
        )
    return _constrained_commit(state, probs, s, masked.tolist(), unused.tolist())


def _constrained_commit(
    state: SamplerState, probs: np.ndarray, s: Fraction | float, masked: Sequence[int], unused: Sequence[int]
) -> SamplerState:
    # Greedy acceptances arrive in (-p, slot) order and remasking drops new
    # fills in (p, -slot) order, so the survivors are exactly the first
    # ``keep`` acceptances. Every other masked slot is filled and then remasked.
    masked, unused = list(masked), list(unused)
    n_prev = state.n - len(masked)
    keep = max(unmasked_count(state.n, s) - n_prev, 0)
    fills = sorted((masked[a], unused[b], v) for a, b, v in greedy_constrained_fill(probs, keep))
    response = state.response.copy()
    conf = np.where(response != MASKED, 1.0, 0.0)
    for pos, ident, value in fills:
        response[pos] = ident
        conf[pos] = value
    kept = {pos for pos, _, _ in fills}
    remasked = tuple(p for p in masked if p not in kept)
    if not isinstance(s, Fraction):
        s = Fraction(s)
    record = StepRecord(len(state.trace) + 1, s, tuple(Fill(*f) for f in fills), remasked)
    return SamplerState(response, conf, s, [*state.trace, record])


def vanilla_step(state: SamplerState, probs: np.ndarray, s: Fraction | float) -> SamplerState:
    """One step of unconstrained low-confidence remasking.

    ``probs`` has one row per masked slot and one column per identifier (all N).
    """
    _check_s(state, s)
    masked = state.masked_positions
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (masked.size, state.n):
        raise ValidationError(
            f"probs shape {probs.shape} does not match ({masked.size} masked, {state.n} ids)"
        )
    best = probs.argmax(axis=1)
    fills = [(int(p), int(b), float(probs[a, b])) for a, (p, b) in enumerate(zip(masked, best))]
    return _finish_step(state, fills, s)


@dataclass
class SamplingTrace:
    n: int
    steps_budget: int
    mode: SamplingMode
    steps: list[StepRecord]
    raw: tuple[int, ...]
    """Final slot contents before repair (identifier indices)."""
    labels: tuple[str, ...]
    provider_calls: int

    @property
    def valid(self) -> bool:
        return sorted(self.raw) == list(range(self.n))

    @property
    def raw_labels(self) -> tuple[str, ...]:
        return tuple(self.labels[i] for i in self.raw)

    def first_fill_steps(self) -> np.ndarray:
        """1-based step at which each slot was first committed (0 if never)."""
        first = np.zeros(self.n, dtype=np.int64)
        for rec in self.steps:
            for f in rec.filled:
                if first[f.pos] == 0:
                    first[f.pos] = rec.step
        return first

    def to_records(self, **extra) -> list[dict]:
        out = []
        for rec in self.steps:
            line = {
                **extra,
                "n": self.n,
                "k": self.steps_budget,
                "mode": self.mode.value,
                "step": rec.step,
                "s": float(rec.s),
                "filled": [
                    {"pos": f.pos, "label": self.labels[f.ident], "conf": f.conf} for f in rec.filled
                ],
                "remasked": list(rec.remasked),
            }
            out.append(line)
        if out:
            out[0]["labels"] = list(self.labels)
            out[-1]["raw"] = list(self.raw_labels)
            out[-1]["valid"] = self.valid
        return out

    @classmethod
    def from_records(cls, records: Sequence[dict]) -> SamplingTrace:
        if not records:
            raise ValidationError("empty trace")
        first = records[0]
        n, k = int(first["n"]), int(first["k"])
        labels = list(first.get("labels") or [])
        last = records[-1]
        raw_labels = list(last.get("raw", []))
        # Rebuild a label table from what appears in the trace.
        for rec in records:
            for f in rec["filled"]:
                if f["label"] not in labels:
                    labels.append(f["label"])
        for label in raw_labels:
            if label not in labels:
                labels.append(label)
        index = {label: i for i, label in enumerate(labels)}
        steps = [
            StepRecord(
                int(rec["step"]),
                Fraction(rec["s"]).limit_denominator(10_000),
                tuple(Fill(int(f["pos"]), index[f["label"]], float(f["conf"])) for f in rec["filled"]),
                tuple(int(p) for p in rec["remasked"]),
            )
            for rec in records
        ]
        return cls(
            n=n,
            steps_budget=k,
            mode=SamplingMode(first.get("mode", "constrained")),
            steps=steps,
            raw=tuple(index[label] for label in raw_labels),
            labels=tuple(labels),
            provider_calls=len(steps),
        )


def repair_invalid(raw: Sequence[str | None], labels: Sequence[str]) -> Permutation:
    """Turn a possibly invalid slot array into a permutation.

    The first occurrence of each identifier keeps its slot; duplicate and empty
    slots take the missing identifiers in original candidate order.
    """
    index = {label: i for i, label in enumerate(labels)}
    n = len(labels)
    if len(raw) != n:
        raise ValidationError(f"raw output has {len(raw)} slots, expected {n}")
    seen: set[int] = set()
    slots: list[int | None] = []
    for label in raw:
        ident = index.get(label) if label is not None else None
        if ident is None or ident in seen:
            slots.append(None)
        else:
            seen.add(ident)
            slots.append(ident)
    missing = iter(i for i in range(n) if i not in seen)
    return Permutation([s if s is not None else next(missing) for s in slots])


def sample_permutation(
    cands: CandidateList,
    provider: MaskPredictor,
    cfg: SamplerConfig,
    *,
    template_id: str = "default",
) -> tuple[Permutation, SamplingTrace]:
    """Decode a ranking of ``cands`` with ``cfg.steps`` denoising steps."""
    ctx = PromptContext.from_candidates(Strategy.PERMUTATION, cands, template_id)
    labels = cands.labels
    n = len(labels)
    k_steps = int(cfg.steps)
    constrained = cfg.mode is SamplingMode.CONSTRAINED
    state = SamplerState.initial(n)
    calls = 0
    for k in range(k_steps):
        s = Fraction(k_steps - k - 1, k_steps)
        slots = state.response.tolist()
        masked = [p for p, i in enumerate(slots) if i == MASKED]
        if not masked:
            break
        filled = tuple((p, labels[i]) for p, i in enumerate(slots) if i != MASKED)
        if constrained:
            used = set(slots)
            allowed = [i for i in range(n) if i not in used]
            mq = MaskQuery(tuple(masked), tuple([labels[i] for i in allowed]), filled)
        else:
            mq = MaskQuery(tuple(masked), labels, filled)
        try:
            calls += 1
            resp = provider.provide(ctx, mq).check_shape(mq)
        except ProviderError as exc:
            exc.step = k + 1
            raise
        if constrained:
            state = _constrained_commit(state, resp.rows, s, masked, allowed)
        else:
            state = vanilla_step(state, resp.rows, s)

    trace = SamplingTrace(
        n=n,
        steps_budget=k_steps,
        mode=cfg.mode,
        steps=state.trace,
        raw=tuple(state.response.tolist()),
        labels=labels,
        provider_calls=calls,
    )
    if trace.valid:
        return Permutation(state.response), trace
    raw = [labels[i] if i != MASKED else None for i in state.response]
    return repair_invalid(raw, labels), trace


def write_traces(fh: IO[str], traces: Iterable[tuple[dict, SamplingTrace]]) -> None:
    """Append JSON-lines step records; ``dict`` entries tag each trace (query, window)."""
    for tags, trace in traces:
        for rec in trace.to_records(**tags):
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def read_traces(fh: IO[str]) -> list[tuple[dict, SamplingTrace]]:
    """Group step records by (query_id, window) back into traces, in file order."""
    groups: dict[tuple, list[dict]] = {}
    tags: dict[tuple, dict] = {}
    for lineno, line in enumerate(fh, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"trace line {lineno}: {exc}") from None
        key = (rec.get("query_id"), rec.get("window"))
        if key in groups and rec["step"] == 1:
            raise ValidationError(f"trace line {lineno}: duplicate trace {key}")
        groups.setdefault(key, []).append(rec)
        tags.setdefault(key, {"query_id": key[0], "window": key[1]})
    return [(tags[key], SamplingTrace.from_records(recs)) for key, recs in groups.items()]
