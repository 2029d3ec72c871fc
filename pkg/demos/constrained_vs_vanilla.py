"""
Decoding a ranking by iterative unmasking
=========================================

Slots hold rank positions; each step fills the masked ones and remasks the
least confident. Constrained decoding only offers identifiers that are still
unused, vanilla decoding offers all of them.
"""

import numpy as np

from diffurank import Document, Query, SamplerConfig, assign_identifiers, sample_permutation
from diffurank.provider import OracleConfig, SyntheticOracle

rng = np.random.default_rng(0)
n = 8
docs = [Document(f"d{i}", f"passage {i}") for i in range(n)]
rel = rng.uniform(size=n)
cands = assign_identifiers(docs, Query("q1", "what is a permutation"))
print("identifiers:", cands.labels)
print("ideal order:", [cands.labels[i] for i in np.argsort(-rel, kind="stable")])

## A noisy oracle: sharpness 2, pseudo-noise weight 2
oracle = SyntheticOracle(
    OracleConfig(seed=1, beta=2.0, gamma=2.0, rel={d.doc_id: float(r) for d, r in zip(docs, rel)})
)

## Four steps of constrained decoding, step by step
perm, trace = sample_permutation(cands, oracle, SamplerConfig(4))
for rec in trace.steps:
    kept = ", ".join(f"slot {f.pos}={cands.labels[f.ident]} ({f.conf:.2f})" for f in rec.filled)
    print(f"step {rec.step} s={rec.s}: {kept}; remasked {list(rec.remasked)}")
print("constrained:", trace.raw_labels, "valid" if trace.valid else "INVALID")

## The same budget without the constraint
perm, trace = sample_permutation(cands, oracle, SamplerConfig(4, "vanilla"))
print("vanilla raw:", trace.raw_labels, "valid" if trace.valid else "INVALID")
print("vanilla repaired:", [cands.labels[i] for i in perm.mapping])
