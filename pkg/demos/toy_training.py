"""
Distilling a teacher ranking into small models
==============================================

Linear scorers trained with listwise cross-entropy or pairwise RankNet, and a
tiny masked-token denoiser trained on corrupted ranking sequences.
"""

import numpy as np

from diffurank.core import assign_identifiers
from diffurank.corruption import CorruptionConfig, MaskStrategy
from diffurank.data import generate_synthetic
from diffurank.train import make_separable_instances, ranking_sequence, train_denoiser, train_toy, training_ndcg

## Scorers on linearly separable features
instances, true_theta = make_separable_instances(num_queries=30, num_docs=20, seed=0)
for loss in ("ce", "ranknet"):
    result = train_toy(instances, loss, epochs=200, lr=0.1, seed=0)
    theta = result.scorer.theta / np.linalg.norm(result.scorer.theta)
    print(
        f"{loss:8s} loss {result.losses[0]:.3f} -> {result.losses[-1]:.3f}, "
        f"NDCG@10 {training_ndcg(result.scorer, instances):.4f}, cosine to truth {theta @ true_theta:.3f}"
    )

## Denoiser on identifier-masked ranking sequences
ds = generate_synthetic(num_queries=20, num_docs=8, seed=0)
sequences, labels = [], set()
for rec in ds.teacher_records(max_docs=8):
    cands = assign_identifiers(rec.docs, rec.query)
    label_of = {d.doc_id: label for label, d in cands.tagged()}
    sequences.append(ranking_sequence(cands.labels, [label_of[d] for d in rec.teacher.doc_ids]))
    labels.update(cands.labels)
print("one training sequence:", " ".join(sequences[0][0]))
cfg = CorruptionConfig(epsilon=1e-3, strategy=MaskStrategy.DOCID_MASK, seed=0)
fit = train_denoiser(sequences, sorted(labels), cfg, epochs=200, lr=0.5, seed=0)
losses = np.asarray(fit.losses)
print(f"denoiser loss: first 20 epochs {losses[:20].mean():.3f}, last 20 epochs {losses[-20:].mean():.3f}")
