"""Domain types shared across the reranking engine."""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import CapacityError, ValidationError

# Floor added before taking logs so exact zeros stay finite.
COST_FLOOR = 1e-12


@dataclass(frozen=True)
class Query:
    query_id: str
    text: str

    def __post_init__(self) -> None:
        if not self.query_id:
            raise ValidationError("query_id must be nonempty")
        if not self.text:
            raise ValidationError(f"query {self.query_id!r} has empty text")


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str = ""

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise ValidationError("doc_id must be nonempty")

    def truncated(self, max_words: int) -> Document:
        words = self.text.split()
        if len(words) <= max_words:
            return self
        return Document(self.doc_id, " ".join(words[:max_words]))


def _default_label(index: int) -> str:
    letters = string.ascii_uppercase
    if index < 26:
        return letters[index]
    # A..Z, then AA..ZZ, then AAA.. with the letter repeated.
    repeat, pos = divmod(index, 26)
    return letters[pos] * (repeat + 1)


@dataclass(frozen=True)
class IdentifierAlphabet:
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.labels)) != len(self.labels):
            raise ValidationError("identifier labels must be distinct")
        if any(not label for label in self.labels):
            raise ValidationError("identifier labels must be nonempty")

    @classmethod
    def default(cls, size: int) -> IdentifierAlphabet:
        return cls(tuple(_default_label(i) for i in range(size)))

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        return self.labels.index(label)


@dataclass(frozen=True)
class CandidateList:
    query: Query
    docs: tuple[Document, ...]
    alphabet: IdentifierAlphabet

    def __post_init__(self) -> None:
        if not self.docs:
            raise ValidationError(f"candidate list for {self.query.query_id!r} is empty")
        if len(self.docs) > len(self.alphabet):
            raise CapacityError(
                f"{len(self.docs)} documents exceed alphabet capacity {len(self.alphabet)}"
            )
        ids = [d.doc_id for d in self.docs]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"duplicate doc_id in candidates for {self.query.query_id!r}")

    def __len__(self) -> int:
        return len(self.docs)

    @property
    def labels(self) -> tuple[str, ...]:
        return self.alphabet.labels[: len(self.docs)]

    def tagged(self) -> list[tuple[str, Document]]:
        return list(zip(self.labels, self.docs))

    def subset(self, indices: Sequence[int]) -> CandidateList:
        """Candidate list over ``docs[indices]``, relabelled from the alphabet start."""
        docs = tuple(self.docs[i] for i in indices)
        return assign_identifiers(docs, self.query, IdentifierAlphabet.default(len(docs)))


def assign_identifiers(
    docs: Iterable[Document], query: Query, alphabet: IdentifierAlphabet | None = None
) -> CandidateList:
    """Tag documents with labels in alphabet order (doc k gets label k)."""
    docs = tuple(docs)
    if alphabet is None:
        alphabet = IdentifierAlphabet.default(max(len(docs), 1))
    if len(docs) > len(alphabet):
        raise CapacityError(f"{len(docs)} documents exceed alphabet capacity {len(alphabet)}")
    return CandidateList(query, docs, alphabet)


class Permutation:
    """Bijection from 0-based rank positions to identifier indices."""

    __slots__ = ("_mapping",)

    def __init__(self, mapping: Iterable[int]) -> None:
        arr = np.asarray(list(mapping) if not isinstance(mapping, np.ndarray) else mapping)
        if arr.ndim != 1 or arr.size == 0:
            raise ValidationError("permutation must be a nonempty 1-d sequence")
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValidationError(f"permutation entries must be integers, got {arr.dtype}")
        n = arr.size
        seen = np.zeros(n, dtype=bool)
        if arr.min() < 0 or arr.max() >= n:
            raise ValidationError(f"permutation entries out of range [0, {n}): {arr.tolist()}")
        seen[arr] = True
        if not seen.all():
            raise ValidationError(f"permutation has duplicate entries: {arr.tolist()}")
        arr = arr.astype(np.int64)
        arr.setflags(write=False)
        self._mapping = arr

    @classmethod
    def identity(cls, n: int) -> Permutation:
        return cls(np.arange(n))

    @property
    def mapping(self) -> np.ndarray:
        return self._mapping

    def inverse(self) -> Permutation:
        inv = np.empty_like(self._mapping)
        inv[self._mapping] = np.arange(self._mapping.size)
        return Permutation(inv)

    def tolist(self) -> list[int]:
        return self._mapping.tolist()

    def __len__(self) -> int:
        return int(self._mapping.size)

    def __getitem__(self, i: int) -> int:
        return int(self._mapping[i])

    def __iter__(self):
        return iter(self.tolist())

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Permutation):
            return np.array_equal(self._mapping, other._mapping)
        return NotImplemented

    def __hash__(self) -> int:
        return hash(tuple(self.tolist()))

    def __repr__(self) -> str:
        return f"Permutation({self.tolist()})"


@dataclass(frozen=True)
class RankedEntry:
    doc_id: str
    score: float
    rank: int


@dataclass(frozen=True)
class RankedList:
    query_id: str
    entries: tuple[RankedEntry, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        ranks = [e.rank for e in self.entries]
        if ranks != list(range(1, len(ranks) + 1)):
            raise ValidationError(f"ranks for {self.query_id!r} are not 1..M consecutive")
        ids = [e.doc_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"duplicate doc_id in ranking for {self.query_id!r}")
        scores = [e.score for e in self.entries]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ValidationError(f"scores for {self.query_id!r} increase with rank")

    @classmethod
    def from_order(
        cls, query_id: str, doc_ids: Sequence[str], scores: Sequence[float] | None = None
    ) -> RankedList:
        """Build a ranking from best-first ids; default scores are the M - i surrogate."""
        m = len(doc_ids)
        if scores is None:
            scores = [float(m - i) for i in range(m)]
        entries = tuple(
            RankedEntry(doc_id, float(score), i + 1)
            for i, (doc_id, score) in enumerate(zip(doc_ids, scores))
        )
        return cls(query_id, entries)

    @classmethod
    def from_scores(cls, query_id: str, doc_ids: Sequence[str], scores: Sequence[float]) -> RankedList:
        """Sort by descending score; ties keep the original position order."""
        order = stable_descending_order(scores)
        return cls.from_order(query_id, [doc_ids[i] for i in order], [float(scores[i]) for i in order])

    @property
    def doc_ids(self) -> list[str]:
        return [e.doc_id for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


def stable_descending_order(scores: Sequence[float]) -> list[int]:
    """Indices sorted by descending score, ties broken by earlier index."""
    return sorted(range(len(scores)), key=lambda i: (-scores[i], i))


def permutation_to_ranking(perm: Permutation, cands: CandidateList) -> RankedList:
    if len(perm) != len(cands):
        raise ValidationError(
            f"permutation length {len(perm)} does not match {len(cands)} candidates"
        )
    return RankedList.from_order(cands.query.query_id, [cands.docs[j].doc_id for j in perm])


def ranking_to_permutation(ranking: RankedList, cands: CandidateList) -> Permutation:
    position = {d.doc_id: i for i, d in enumerate(cands.docs)}
    try:
        return Permutation([position[doc_id] for doc_id in ranking.doc_ids])
    except KeyError as exc:
        raise ValidationError(f"ranking references unknown doc_id {exc.args[0]!r}") from None


def validate_prob_matrix(probs: np.ndarray, shape: tuple[int, int] | None = None) -> np.ndarray:
    """Check a probability-row matrix: nonnegative, finite, one positive entry per row."""
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 2:
        raise ValidationError(f"probability matrix must be 2-d, got shape {probs.shape}")
    if shape is not None and probs.shape != shape:
        raise ValidationError(f"probability matrix has shape {probs.shape}, expected {shape}")
    if probs.size == 0:
        return probs
    # NaN poisons the minimum, +inf shows up in the row maxima.
    row_max = probs.max(axis=1)
    if not probs.min() >= 0 or not np.isfinite(row_max).all():
        raise ValidationError("probability matrix entries must be finite and nonnegative")
    if not (row_max > 0).all():
        raise ValidationError("every probability row needs a strictly positive entry")
    return probs


def cost_matrix(probs: np.ndarray, floor: float = COST_FLOOR) -> np.ndarray:
    """Negative log probability with a small floor so zeros stay finite."""
    probs = validate_prob_matrix(probs)
    if probs.shape[0] != probs.shape[1]:
        raise ValidationError(f"cost matrix must be square, got {probs.shape}")
    return -np.log(probs + floor)
