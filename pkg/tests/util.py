"""Shared fixtures: hand-built SCMs and a brute-force CPDAG oracle."""

from __future__ import annotations

from itertools import combinations, product

from causalab.graphs import CausalGraph, Dag, Edge, DIRECTED, UNDIRECTED
from causalab.sim import Mechanism, Scm


def chain_scm(weights, noise="gaussian", labels=None, scale=1.0):
    labels = labels or [f"x{i}" for i in range(len(weights) + 1)]
    edges = [(labels[i], labels[i + 1], DIRECTED) for i in range(len(weights))]
    dag = Dag.build(labels, edges)
    mechs = {}
    for i, v in enumerate(labels):
        parents = tuple(dag.parents(v))
        w = (float(weights[i - 1]),) if i > 0 else ()
        mechs[v] = Mechanism("linear", parents, w, noise, scale)
    return Scm(dag, mechs)


def scm_from_weights(labels, weighted_edges, noise="gaussian", scale=1.0):
    """weighted_edges: list of (u, v, w)."""
    dag = Dag.build(labels, [(u, v, DIRECTED) for u, v, _ in weighted_edges])
    lookup = {(u, v): w for u, v, w in weighted_edges}
    mechs = {}
    for v in labels:
        parents = tuple(dag.parents(v))
        mechs[v] = Mechanism(
            "linear", parents, tuple(lookup[(p, v)] for p in parents), noise, scale
        )
    return Scm(dag, mechs)


def all_dags(nodes):
    """Every DAG on the given nodes (3 states per unordered pair)."""
    pairs = list(combinations(nodes, 2))
    for states in product(range(3), repeat=len(pairs)):
        edges = []
        for (a, b), s in zip(pairs, states):
            if s == 1:
                edges.append(Edge(a, b, DIRECTED))
            elif s == 2:
                edges.append(Edge(b, a, DIRECTED))
        try:
            yield Dag(tuple(nodes), frozenset(edges))
        except Exception:
            continue


def vstructures(g: Dag) -> frozenset:
    out = set()
    for c in g.nodes:
        for a, b in combinations(g.parents(c), 2):
            if not g.adjacent(a, b):
                out.add((min(a, b), max(a, b), c))
    return frozenset(out)


def skeleton(g: CausalGraph) -> frozenset:
    return frozenset(e.pair for e in g.edges)


def cpdag_by_enumeration(g: Dag) -> CausalGraph:
    """Oracle CPDAG: union of all Markov-equivalent DAGs.

    Two DAGs are equivalent iff they share skeleton and v-structures; an edge
    is compelled (directed) in the class representative iff every member
    orients it the same way.
    """
    key = (skeleton(g), vstructures(g))
    members = [d for d in all_dags(sorted(g.nodes)) if (skeleton(d), vstructures(d)) == key]
    edges = []
    for a, b in sorted(skeleton(g)):
        directions = set()
        for d in members:
            e = d.edge_between(a, b)
            directions.add((e.u, e.v))
        if len(directions) == 1:
            u, v = next(iter(directions))
            edges.append(Edge(u, v, DIRECTED))
        else:
            edges.append(Edge(a, b, UNDIRECTED))
    return CausalGraph(g.nodes, frozenset(edges))
