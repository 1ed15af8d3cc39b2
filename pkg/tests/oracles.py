"""Independent brute-force oracles used by unit and acceptance tests.

These deliberately avoid the implementation's data structures and
algorithms: clipped counts via greedy pool removal, LCS via exhaustive
subsequence enumeration, recall baselines via permutation simulation.
"""

from __future__ import annotations

from itertools import combinations
from typing import Sequence

import numpy as np


def oracle_clipped_overlap(cand: Sequence[str], ref: Sequence[str], n: int) -> tuple[int, int, int]:
    """(overlap, candidate n-gram total, reference n-gram total) by greedily
    consuming reference n-grams."""
    cand_grams = [tuple(cand[i : i + n]) for i in range(len(cand) - n + 1)]
    ref_grams = [tuple(ref[i : i + n]) for i in range(len(ref) - n + 1)]
    pool = list(ref_grams)
    overlap = 0
    for gram in cand_grams:
        if gram in pool:
            pool.remove(gram)
            overlap += 1
    return overlap, len(cand_grams), len(ref_grams)


def oracle_rouge_n(cand: Sequence[str], ref: Sequence[str], n: int) -> tuple[float, float, float]:
    overlap, cand_total, ref_total = oracle_clipped_overlap(cand, ref, n)
    if cand_total == 0 or ref_total == 0:
        return 0.0, 0.0, 0.0
    p = overlap / cand_total
    r = overlap / ref_total
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


def _is_subsequence(sub: Sequence[str], seq: Sequence[str]) -> bool:
    it = iter(seq)
    return all(token in it for token in sub)


def oracle_lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Exhaustive longest-common-subsequence: enumerate subsequences of the
    shorter side, longest first."""
    if len(a) > len(b):
        a, b = b, a
    for k in range(len(a), 0, -1):
        for idxs in combinations(range(len(a)), k):
            if _is_subsequence([a[i] for i in idxs], b):
                return k
    return 0


def oracle_rouge_l(cand: Sequence[str], ref: Sequence[str]) -> tuple[float, float, float]:
    if not cand or not ref:
        return 0.0, 0.0, 0.0
    lcs = oracle_lcs_length(cand, ref)
    p = lcs / len(cand)
    r = lcs / len(ref)
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


def simulate_recall_baseline(
    m: int, m_best: int, k: int, trials: int, rng: np.random.Generator
) -> float:
    """Monte-Carlo estimate of the chance a uniformly random ranking places
    at least one of the m_best best candidates in its top k."""
    hits = 0
    best = set(range(m_best))
    for _ in range(trials):
        order = rng.permutation(m)[:k]
        if any(int(i) in best for i in order):
            hits += 1
    return hits / trials


def fd_gradient(loss_fn, params: dict[str, np.ndarray], rel_h: float = 1e-6) -> dict[str, np.ndarray]:
    """Central finite differences of ``loss_fn(params)`` w.r.t. every entry
    of every array in ``params``."""
    grads = {}
    for name, value in params.items():
        grad = np.zeros_like(value)
        flat = value.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            h = rel_h * max(1.0, abs(orig))
            flat[i] = orig + h
            up = loss_fn(params)
            flat[i] = orig - h
            down = loss_fn(params)
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads[name] = grad
    return grads
