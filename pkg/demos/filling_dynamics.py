"""
Which rank slots get decided first?
===================================

Sharpening the oracle at both ends of the list makes the sampler commit the
top and bottom slots early and leave the middle for later steps.
"""

import numpy as np

from diffurank import SamplerConfig, filling_dynamics, sample_permutation
from diffurank.core import Document, Query, assign_identifiers
from diffurank.provider import OracleConfig, SyntheticOracle

n, k = 20, 4
rng = np.random.default_rng(0)
traces = []
for q in range(200):
    docs = [Document(f"q{q}-d{i}") for i in range(n)]
    cands = assign_identifiers(docs, Query(f"q{q}", "ends first"))
    cfg = OracleConfig(
        seed=q,
        beta=1.0,
        gamma=1.0,
        end_bias=1.5,
        rel={d.doc_id: float(r) for d, r in zip(docs, rng.uniform(size=n))},
    )
    traces.append(sample_permutation(cands, SyntheticOracle(cfg), SamplerConfig(k))[1])

dyn = filling_dynamics(traces, k)

## P[t, i]: share of still-masked slot i committed at step t
np.set_printoptions(precision=2, suppress=True, linewidth=140)
print("slot   ", np.arange(1, n + 1))
for t in range(k):
    print(f"step {t + 1}", np.where(dyn.eligible[t] > 0, dyn.preference[t], np.nan))

## Mean first-fill step: a U-shaped profile
print("mean   ", dyn.mean_first_fill_step())
