"""Readers and writers for corpora, queries, TREC runs and qrels, plus a synthetic test bed."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .core import CandidateList, Document, Query, RankedList, assign_identifiers
from .errors import MissingDocumentsError, ParseError, ValidationError
from .evaluation import Qrels
from .provider import OracleConfig
from .train import TeacherRanking

PathLike = str | os.PathLike


def _lines(path: PathLike) -> Iterator[tuple[int, str]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if line.strip():
                yield lineno, line


def load_corpus(path: PathLike) -> dict[str, Document]:
    """JSON-lines ``{doc_id, text[, title]}``; a title is prepended to the text."""
    corpus: dict[str, Document] = {}
    for lineno, line in _lines(path):
        try:
            rec = json.loads(line)
            doc_id = str(rec["doc_id"])
            text = str(rec.get("text", ""))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ParseError(path, lineno, f"bad corpus record: {exc}") from None
        if rec.get("title"):
            text = f"{rec['title']} {text}".strip()
        if doc_id in corpus:
            raise ParseError(path, lineno, f"duplicate doc_id {doc_id!r}")
        try:
            corpus[doc_id] = Document(doc_id, text)
        except ValidationError as exc:
            raise ParseError(path, lineno, str(exc)) from None
    return corpus


def load_queries(path: PathLike) -> dict[str, Query]:
    """TSV ``query_id<TAB>text``."""
    queries: dict[str, Query] = {}
    for lineno, line in _lines(path):
        parts = line.split("\t", 1)
        if len(parts) != 2:
            raise ParseError(path, lineno, "expected 'query_id<TAB>text'")
        try:
            q = Query(parts[0].strip(), parts[1].strip())
        except ValidationError as exc:
            raise ParseError(path, lineno, str(exc)) from None
        if q.query_id in queries:
            raise ParseError(path, lineno, f"duplicate query_id {q.query_id!r}")
        queries[q.query_id] = q
    return queries


@dataclass(frozen=True)
class RunRow:
    query_id: str
    doc_id: str
    rank: int
    score: float
    tag: str


def _parse_run(path: PathLike) -> dict[str, list[RunRow]]:
    rows: dict[str, list[RunRow]] = {}
    seen: set[tuple[str, str]] = set()
    for lineno, line in _lines(path):
        parts = line.split()
        if len(parts) != 6:
            raise ParseError(path, lineno, f"expected 6 run columns, got {len(parts)}")
        qid, _, did, rank, score, tag = parts
        try:
            row = RunRow(qid, did, int(rank), float(score), tag)
        except ValueError as exc:
            raise ParseError(path, lineno, f"bad rank/score: {exc}") from None
        if (qid, did) in seen:
            raise ParseError(path, lineno, f"duplicate entry for ({qid}, {did})")
        seen.add((qid, did))
        rows.setdefault(qid, []).append(row)
    for qid in rows:
        rows[qid].sort(key=lambda r: r.rank)  # stable: file order breaks rank ties
    return rows


def load_candidates(
    path: PathLike, top_k: int | None = None, corpus: Mapping[str, Document] | None = None
) -> dict[str, list[str]]:
    """First-stage ranking in TREC run format, truncated to ``top_k`` per query."""
    runs = _parse_run(path)
    out = {qid: [r.doc_id for r in rows][:top_k] for qid, rows in runs.items()}
    if corpus is not None:
        missing = sorted({d for ids in out.values() for d in ids if d not in corpus})
        if missing:
            raise MissingDocumentsError(missing)
    return out


def load_run(path: PathLike) -> dict[str, RankedList]:
    out = {}
    for qid, rows in _parse_run(path).items():
        ranks = [r.rank for r in rows]
        if ranks != list(range(1, len(rows) + 1)):
            raise ParseError(path, 0, f"ranks for query {qid!r} are not 1..M consecutive")
        try:
            out[qid] = RankedList.from_order(qid, [r.doc_id for r in rows], [r.score for r in rows])
        except ValidationError as exc:
            raise ParseError(path, 0, str(exc)) from None
    return out


def load_qrels(path: PathLike) -> Qrels:
    """TREC qrels ``query_id iteration doc_id grade``."""
    qrels = Qrels()
    for lineno, line in _lines(path):
        parts = line.split()
        if len(parts) != 4:
            raise ParseError(path, lineno, f"expected 4 qrels columns, got {len(parts)}")
        try:
            qrels.add(parts[0], parts[2], int(parts[3]))
        except (ValueError, ValidationError) as exc:
            raise ParseError(path, lineno, str(exc)) from None
    return qrels


def format_run(rankings: Iterable[RankedList], tag: str = "diffurank") -> str:
    lines = []
    for ranking in rankings:
        for e in ranking.entries:
            lines.append(f"{ranking.query_id} Q0 {e.doc_id} {e.rank} {e.score:.6f} {tag}\n")
    return "".join(lines)


def write_run(rankings: Iterable[RankedList], path: PathLike | IO[str], tag: str = "diffurank") -> None:
    text = format_run(rankings, tag)
    if hasattr(path, "write"):
        path.write(text)
        return
    Path(path).write_text(text, encoding="utf-8")


def build_candidate_lists(
    queries: Mapping[str, Query],
    candidates: Mapping[str, Sequence[str]],
    corpus: Mapping[str, Document],
    max_words: int | None = None,
) -> list[CandidateList]:
    """One candidate list per query that has candidates, in candidate-file order."""
    missing_q = [qid for qid in candidates if qid not in queries]
    if missing_q:
        raise ValidationError(f"candidates reference unknown queries: {missing_q[:10]}")
    out = []
    for qid, doc_ids in candidates.items():
        if not doc_ids:
            continue
        docs = [corpus[d] for d in doc_ids]
        if max_words is not None:
            docs = [d.truncated(max_words) for d in docs]
        out.append(assign_identifiers(docs, queries[qid]))
    return out


@dataclass
class TrainingRecord:
    query: Query
    docs: list[Document]
    teacher: TeacherRanking


def load_training_data(path: PathLike) -> list[TrainingRecord]:
    """JSON-lines ``{query, docs: [{doc_id, text}], teacher_order: [doc_id]}``.

    ``query`` may be a string or ``{query_id, text}``.
    """
    out = []
    for lineno, line in _lines(path):
        try:
            rec = json.loads(line)
            q = rec["query"]
            if isinstance(q, dict):
                query = Query(str(q["query_id"]), str(q["text"]))
            else:
                query = Query(str(rec.get("query_id", f"train{lineno}")), str(q))
            docs = [Document(str(d["doc_id"]), str(d.get("text", ""))) for d in rec["docs"]]
            teacher = TeacherRanking(query.query_id, tuple(str(d) for d in rec["teacher_order"]))
            teacher.ranks_for([d.doc_id for d in docs])
        except (json.JSONDecodeError, KeyError, TypeError, ValidationError) as exc:
            raise ParseError(path, lineno, f"bad training record: {exc}") from None
        out.append(TrainingRecord(query, docs, teacher))
    return out


# -- synthetic test bed ----------------------------------------------------------


@dataclass
class SyntheticDataset:
    corpus: dict[str, Document]
    queries: dict[str, Query]
    candidates: dict[str, list[str]]
    qrels: Qrels
    rel: dict[str, float]
    oracle: OracleConfig

    def candidate_lists(self) -> list[CandidateList]:
        return build_candidate_lists(self.queries, self.candidates, self.corpus)

    def teacher_records(self, max_docs: int = 20) -> list[TrainingRecord]:
        """Top ``max_docs`` candidates per query, teacher-ordered by hidden relevance."""
        out = []
        for qid, doc_ids in self.candidates.items():
            ids = doc_ids[:max_docs]
            order = sorted(ids, key=lambda d: (-self.rel[d], ids.index(d)))
            out.append(
                TrainingRecord(
                    self.queries[qid], [self.corpus[d] for d in ids], TeacherRanking(qid, tuple(order))
                )
            )
        return out


def grade_from_rel(rel: float) -> int:
    return min(3, int(rel * 4))


def generate_synthetic(
    num_queries: int,
    num_docs: int,
    seed: int = 0,
    *,
    beta: float = 5.0,
    gamma: float = 0.0,
    end_bias: float = 0.0,
    retrieval_noise: float = 0.25,
) -> SyntheticDataset:
    """Seeded queries/documents with hidden relevance and consistent qrels.

    Document text repeats query terms in proportion to relevance. The candidate
    order is relevance plus Gaussian noise, mimicking a lexical first stage.
    """
    if num_queries < 1 or num_docs < 1:
        raise ValidationError("need at least one query and one document")
    rng = np.random.default_rng(seed)
    vocab = [f"term{i:04d}" for i in range(2000)]
    corpus: dict[str, Document] = {}
    queries: dict[str, Query] = {}
    candidates: dict[str, list[str]] = {}
    qrels = Qrels()
    rel: dict[str, float] = {}
    for qi in range(num_queries):
        qid = f"q{qi:04d}"
        q_terms = list(rng.choice(vocab, size=3, replace=False))
        queries[qid] = Query(qid, " ".join(q_terms))
        rels = rng.uniform(0.0, 1.0, size=num_docs)
        doc_ids = [f"{qid}-d{j:04d}" for j in range(num_docs)]
        for did, r in zip(doc_ids, rels):
            hits = int(round(r * 6))
            filler = list(rng.choice(vocab, size=12))
            words = filler + [q_terms[h % 3] for h in range(hits)]
            rng.shuffle(words)
            corpus[did] = Document(did, " ".join(words))
            rel[did] = float(r)
            qrels.add(qid, did, grade_from_rel(float(r)))
        noisy = rels + rng.normal(scale=retrieval_noise, size=num_docs)
        order = np.argsort(-noisy, kind="stable")
        candidates[qid] = [doc_ids[j] for j in order]
    oracle = OracleConfig(seed=seed, beta=beta, gamma=gamma, end_bias=end_bias, rel=rel)
    return SyntheticDataset(corpus, queries, candidates, qrels, rel, oracle)


def write_synthetic(ds: SyntheticDataset, out_dir: PathLike, *, teacher_docs: int = 20) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "corpus.jsonl").open("w", encoding="utf-8") as fh:
        for doc in ds.corpus.values():
            fh.write(json.dumps({"doc_id": doc.doc_id, "text": doc.text}) + "\n")
    with (out / "queries.tsv").open("w", encoding="utf-8") as fh:
        for q in ds.queries.values():
            fh.write(f"{q.query_id}\t{q.text}\n")
    first_stage = [
        RankedList.from_order(qid, ids) for qid, ids in ds.candidates.items()
    ]
    write_run(first_stage, out / "candidates.trec", tag="synthetic")
    with (out / "qrels.txt").open("w", encoding="utf-8") as fh:
        for qid, did, g in ds.qrels.items():
            fh.write(f"{qid} 0 {did} {g}\n")
    (out / "oracle.json").write_text(json.dumps(ds.oracle.to_dict(), sort_keys=True) + "\n")
    with (out / "train.jsonl").open("w", encoding="utf-8") as fh:
        for rec in ds.teacher_records(teacher_docs):
            fh.write(
                json.dumps(
                    {
                        "query": {"query_id": rec.query.query_id, "text": rec.query.text},
                        "docs": [{"doc_id": d.doc_id, "text": d.text} for d in rec.docs],
                        "teacher_order": list(rec.teacher.doc_ids),
                    }
                )
                + "\n"
            )
