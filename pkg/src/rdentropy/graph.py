"""Strongly connected components of small directed graphs."""

from __future__ import annotations

from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components


def strongly_connected_components(n: int, succ: Sequence[Sequence[int]]) -> list[list[int]]:
    """Vertices ``0..n-1`` grouped into strongly connected components.

    ``succ[v]`` lists the heads of edges leaving v. Each component is sorted
    and components are ordered by their smallest vertex.
    """
    if n == 0:
        return []
    tails = [v for v in range(n) for _ in succ[v]]
    heads = [w for v in range(n) for w in succ[v]]
    adj = sp.csr_matrix((np.ones(len(tails)), (tails, heads)), shape=(n, n))
    _, labels = connected_components(adj, directed=True, connection="strong")
    groups: dict[int, list[int]] = {}
    for v, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(v)
    return sorted(groups.values(), key=lambda c: c[0])
