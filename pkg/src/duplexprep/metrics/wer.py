"""Word error rate via minimum-edit-distance alignment with unit costs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass
class WerBreakdown:
    substitutions: int
    deletions: int
    insertions: int
    ref_count: int
    wer: float
    flags: list = field(default_factory=list)

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions


def wer(ref_tokens: Sequence[str], hyp_tokens: Sequence[str]) -> WerBreakdown:
    """Levenshtein-aligned WER: (S + D + I) / N over reference length N.

    An empty reference against a non-empty hypothesis is reported as
    insertions over a denominator of 1 and flagged "empty_reference".
    """
    n, m = len(ref_tokens), len(hyp_tokens)
    if n == 0:
        if m == 0:
            return WerBreakdown(0, 0, 0, 0, 0.0)
        return WerBreakdown(0, 0, m, 0, float(m), flags=["empty_reference"])

    # dist[i, j]: edit distance between ref[:i] and hyp[:j]
    dist = np.zeros((n + 1, m + 1), dtype=np.int32)
    dist[:, 0] = np.arange(n + 1)
    dist[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            sub = dist[i - 1, j - 1] + (ref_tokens[i - 1] != hyp_tokens[j - 1])
            dist[i, j] = min(sub, dist[i - 1, j] + 1, dist[i, j - 1] + 1)

    # Backtrace, preferring match > substitution > deletion > insertion.
    s = d = ins = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and ref_tokens[i - 1] == hyp_tokens[j - 1] \
                and dist[i, j] == dist[i - 1, j - 1]:
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and dist[i, j] == dist[i - 1, j - 1] + 1:
            s += 1
            i, j = i - 1, j - 1
        elif i > 0 and dist[i, j] == dist[i - 1, j] + 1:
            d += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return WerBreakdown(s, d, ins, n, (s + d + ins) / n)
