"""PC-stable: order-independent skeleton, v-structures, Meek closure.

Conditioning sets at each level are drawn from adjacency snapshots taken at
the level start, so edge-removal order within a level cannot change the
result. Conflicting v-structure orientations leave the edge undirected.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from ..data import Dataset
from ..graphs import CausalGraph, Knowledge, Pdag, apply_knowledge
from .ci import fisher_z_from_corr
from .types import DiscoveryParams, as_matrix


def pc(
    ds: Dataset,
    params: DiscoveryParams | None = None,
    knowledge: Knowledge | None = None,
) -> CausalGraph:
    """Estimate the CPDAG-form graph of continuous data with Fisher-z tests.

    Pairs forbidden in both directions are never tested in; required edges
    are enforced after orientation via apply_knowledge.
    """
    params = params or DiscoveryParams()
    knowledge = knowledge or Knowledge()
    X = as_matrix(ds)
    n, d = X.shape
    names = ds.column_names
    corr = np.corrcoef(X.T)

    adj: dict[int, set[int]] = {i: set() for i in range(d)}
    for i in range(d):
        for j in range(i + 1, d):
            both_forbidden = (names[i], names[j]) in knowledge.forbidden and (
                names[j],
                names[i],
            ) in knowledge.forbidden
            if not both_forbidden:
                adj[i].add(j)
                adj[j].add(i)

    sepset: dict[tuple[int, int], set[int]] = {}
    level = 0
    while True:
        if params.max_cond_set is not None and level > params.max_cond_set:
            break
        snapshot = {i: sorted(adj[i]) for i in range(d)}
        if all(len(snapshot[i]) - 1 < level for i in range(d)):
            break
        for i in range(d):
            for j in sorted(adj[i]):
                if j < i or j not in adj[i]:
                    continue
                removed = False
                for side_a, side_b in ((i, j), (j, i)):
                    pool = [k for k in snapshot[side_a] if k != side_b]
                    if len(pool) < level:
                        continue
                    for S in combinations(pool, level):
                        res = fisher_z_from_corr(corr, n, i, j, S, params.alpha)
                        if res.independent:
                            adj[i].discard(j)
                            adj[j].discard(i)
                            sepset[(i, j)] = sepset[(j, i)] = set(S)
                            removed = True
                            break
                    if removed:
                        break
                if removed:
                    continue
        level += 1

    p = Pdag(names)
    for i in range(d):
        for j in adj[i]:
            if i < j:
                p.add_undirected(names[i], names[j])

    # v-structures: batch the orientation demands; a pair demanded in both
    # directions stays undirected.
    demands: dict[tuple[int, int], set[tuple[int, int]]] = {}
    for c in range(d):
        for a, b in combinations(sorted(adj[c]), 2):
            if b in adj[a]:
                continue
            if (a, b) not in sepset:
                continue  # never separated by a test (e.g. forbidden pair)
            if c not in sepset[(a, b)]:
                for tail in (a, b):
                    key = (min(tail, c), max(tail, c))
                    demands.setdefault(key, set()).add((tail, c))
    for key in sorted(demands):
        wanted = demands[key]
        if len(wanted) == 1:
            tail, head = next(iter(wanted))
            p.orient(names[tail], names[head])

    p.meek_closure()
    out = p.to_graph()
    if not knowledge.empty:
        out = apply_knowledge(out, knowledge)
    return out
