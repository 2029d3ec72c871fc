"""
One-shot decoding as a minimum-cost matching
============================================

A single model call yields an N x N matrix of identifier probabilities per
rank slot. Costs are negative log probabilities and the ranking is the
cheapest bijection.
"""

import numpy as np

from diffurank import assignment_from_probs, brute_force_assignment, hungarian
from diffurank.sampler import greedy_constrained_fill

## Greedy filling can be fooled where the matching is not
probs = np.array(
    [
        [0.60, 0.35, 0.05],
        [0.55, 0.05, 0.40],
        [0.10, 0.10, 0.80],
    ]
)
greedy = {r: c for r, c, _ in greedy_constrained_fill(probs)}
greedy_p = np.prod([probs[r, c] for r, c in greedy.items()])
best = assignment_from_probs(probs)
match_p = np.prod([probs[r, c] for r, c in enumerate(best.permutation.mapping)])
print("greedy slot -> id:", dict(sorted(greedy.items())), f"joint p {greedy_p:.4f}")
print("matching slot -> id:", dict(enumerate(best.permutation.mapping.tolist())), f"joint p {match_p:.4f}")

## Co-optimal assignments resolve to the lexicographically smallest mapping
ties = np.ones((4, 4))
print("all-equal costs:", hungarian(ties).permutation.mapping.tolist())

## The solver agrees with enumeration
rng = np.random.default_rng(0)
C = rng.integers(0, 3, size=(6, 6)).astype(float)
fast, slow = hungarian(C), brute_force_assignment(C)
print("integer grid:", fast.permutation.mapping.tolist(), slow.permutation.mapping.tolist(), fast.total_cost)
