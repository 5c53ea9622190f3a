"""Greedy equivalence search with a decomposable linear-Gaussian BIC.

Two phases: the forward phase applies the best valid insert operator while
the score strictly improves, the backward phase the best valid delete.
Operator validity follows the standard insert/delete conditions; after each
applied operator the state is recompleted to a CPDAG through a consistent
DAG extension. Candidate operators are visited in lexicographic order, so
the search is deterministic.
"""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np

from ..data import Dataset
from ..graphs import (
    CausalGraph,
    Knowledge,
    Pdag,
    apply_knowledge,
    extend_to_dag,
    to_cpdag,
)
from .types import DiscoveryParams, as_matrix

_MIN_GAIN = 1e-9


class _BicScore:
    """local(j, Pa) = -n ln(RSS_j / n) - |Pa| ln(n), from the covariance."""

    def __init__(self, X: np.ndarray):
        self.n = X.shape[0]
        self.cov = np.cov(X.T, bias=True).reshape(X.shape[1], X.shape[1])
        self._cache: dict[tuple[int, tuple[int, ...]], float] = {}

    def local(self, j: int, parents) -> float:
        pa = tuple(sorted(parents))
        key = (j, pa)
        if key in self._cache:
            return self._cache[key]
        if pa:
            s_pp = self.cov[np.ix_(pa, pa)]
            s_jp = self.cov[np.ix_([j], pa)][0]
            try:
                beta = np.linalg.solve(s_pp, s_jp)
            except np.linalg.LinAlgError:
                beta = np.linalg.lstsq(s_pp, s_jp, rcond=None)[0]
            rss_n = float(self.cov[j, j] - s_jp @ beta)
        else:
            rss_n = float(self.cov[j, j])
        rss_n = max(rss_n, 1e-12)
        score = -self.n * math.log(rss_n) - len(pa) * math.log(self.n)
        self._cache[key] = score
        return score


def _is_clique(p: Pdag, nodes) -> bool:
    return all(p.adjacent(a, b) for a, b in combinations(sorted(nodes), 2))


def _blocks_all_semi_directed(p: Pdag, src: str, dst: str, blocked: set[str]) -> bool:
    """True when every semi-directed path src -> dst hits a blocked node."""
    if src in blocked:
        return True
    seen = {src}
    stack = [src]
    while stack:
        x = stack.pop()
        if x == dst:
            return False
        nxt = set(p.children(x)) | set(p.und_neighbors(x))
        for y in sorted(nxt):
            if y not in seen and y not in blocked:
                seen.add(y)
                stack.append(y)
    return True


def _recomplete(p: Pdag) -> Pdag:
    dag = extend_to_dag(p.to_graph())
    return Pdag.from_graph(to_cpdag(dag))


def ges_with_trace(
    ds: Dataset,
    params: DiscoveryParams | None = None,
    knowledge: Knowledge | None = None,
) -> tuple[CausalGraph, list[float]]:
    """Run GES and also return the total-score trace (one entry per state)."""
    params = params or DiscoveryParams()
    knowledge = knowledge or Knowledge()
    X = as_matrix(ds)
    d = X.shape[1]
    names = ds.column_names
    idx = {v: j for j, v in enumerate(names)}
    score = _BicScore(X)

    p = Pdag(names)
    total = sum(score.local(j, ()) for j in range(d))
    trace = [total]

    def local_by_name(y: str, parents) -> float:
        return score.local(idx[y], [idx[v] for v in parents])

    # forward: inserts
    while True:
        best = None  # (gain, x, y, T)
        for y in names:
            pa_y = set(p.parents(y))
            nbrs_y = set(p.und_neighbors(y))
            for x in names:
                if x == y or p.adjacent(x, y):
                    continue
                if (x, y) in knowledge.forbidden and (y, x) in knowledge.forbidden:
                    continue
                if (x, y) in knowledge.forbidden:
                    continue
                na = {z for z in nbrs_y if p.adjacent(z, x)}
                t0 = sorted(nbrs_y - na - {x})
                for size in range(len(t0) + 1):
                    for T in combinations(t0, size):
                        union = na | set(T)
                        if not _is_clique(p, union):
                            continue
                        if not _blocks_all_semi_directed(p, y, x, union):
                            continue
                        gain = local_by_name(y, pa_y | union | {x}) - local_by_name(
                            y, pa_y | union
                        )
                        if gain > _MIN_GAIN and (best is None or gain > best[0]):
                            best = (gain, x, y, T)
        if best is None:
            break
        gain, x, y, T = best
        p.add_directed(x, y)
        for t in T:
            p.orient(t, y)
        p = _recomplete(p)
        total += gain
        trace.append(total)

    # backward: deletes
    while True:
        best = None  # (gain, x, y, H)
        for y in names:
            pa_y = set(p.parents(y))
            nbrs_y = set(p.und_neighbors(y))
            for x in names:
                if x == y:
                    continue
                if not (p.has_directed(x, y) or p.has_undirected(x, y)):
                    continue
                if (x, y) in knowledge.required or (y, x) in knowledge.required:
                    continue
                na = {z for z in nbrs_y if p.adjacent(z, x)}
                na_sorted = sorted(na)
                for size in range(len(na_sorted) + 1):
                    for H in combinations(na_sorted, size):
                        rest = na - set(H)
                        if not _is_clique(p, rest):
                            continue
                        before = (rest | pa_y | {x}) - {y}
                        after = (rest | pa_y) - {x, y}
                        gain = local_by_name(y, after) - local_by_name(y, before)
                        if gain > _MIN_GAIN and (best is None or gain > best[0]):
                            best = (gain, x, y, H)
        if best is None:
            break
        gain, x, y, H = best
        p.remove_pair(x, y)
        for h in H:
            if p.has_undirected(y, h):
                p.orient(y, h)
            if p.has_undirected(x, h):
                p.orient(x, h)
        p = _recomplete(p)
        total += gain
        trace.append(total)

    out = p.to_graph()
    if not knowledge.empty:
        out = apply_knowledge(out, knowledge)
    return out, trace


def ges(
    ds: Dataset,
    params: DiscoveryParams | None = None,
    knowledge: Knowledge | None = None,
) -> CausalGraph:
    """Two-phase greedy equivalence search; returns a CPDAG-form graph."""
    return ges_with_trace(ds, params, knowledge)[0]
