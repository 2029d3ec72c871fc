from __future__ import annotations

import numpy as np

from diffurank.core import Document, Query, assign_identifiers
from diffurank.provider import OracleConfig, SyntheticOracle


def oracle_window(n: int, seed: int = 0, *, beta=5.0, gamma=0.0, end_bias=0.0, qid="q"):
    """Candidates with random hidden relevance and the oracle that knows it."""
    rng = np.random.default_rng(seed)
    rel = rng.uniform(size=n)
    docs = [Document(f"{qid}-d{i}", f"text {i}") for i in range(n)]
    cands = assign_identifiers(docs, Query(qid, "query text"))
    cfg = OracleConfig(
        seed=seed,
        beta=beta,
        gamma=gamma,
        end_bias=end_bias,
        rel={d.doc_id: float(r) for d, r in zip(docs, rel)},
    )
    return cands, SyntheticOracle(cfg), rel

