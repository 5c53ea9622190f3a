"""Graph algebra shared by discovery, effects, and RCA.

A :class:`CausalGraph` is a node-labelled mixed graph (directed and
undirected edges, optional weights) with at most one edge per unordered
pair. :class:`Dag` restricts it to directed acyclic graphs. CPDAG
conversion orients v-structures and closes under the four Meek
orientation-propagation rules with lexicographic edge visiting, so the
output is deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations

from .errors import (
    CycleError,
    EdgeKindError,
    GraphError,
    KnowledgeError,
    NodeMismatchError,
)

DIRECTED = "directed"
UNDIRECTED = "undirected"


@dataclass(frozen=True)
class Edge:
    u: str
    v: str
    kind: str
    weight: float | None = None

    def __post_init__(self):
        if self.kind not in (DIRECTED, UNDIRECTED):
            raise EdgeKindError(f"unknown edge kind {self.kind!r}")
        if self.u == self.v:
            raise GraphError(f"self-loop on {self.u!r}")
        if self.kind == UNDIRECTED and self.u > self.v:
            u, v = self.u, self.v
            object.__setattr__(self, "u", v)
            object.__setattr__(self, "v", u)

    @property
    def pair(self) -> tuple[str, str]:
        return (self.u, self.v) if self.u < self.v else (self.v, self.u)


@dataclass(frozen=True)
class CausalGraph:
    nodes: tuple[str, ...]
    edges: frozenset[Edge] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", frozenset(self.edges))
        if len(set(self.nodes)) != len(self.nodes):
            raise GraphError("node labels must be unique")
        known = set(self.nodes)
        pairs: dict[tuple[str, str], Edge] = {}
        for e in sorted(self.edges, key=lambda e: (e.u, e.v, e.kind)):
            if e.u not in known or e.v not in known:
                raise GraphError(f"edge touches unknown node: {e.u!r}->{e.v!r}")
            other = pairs.get(e.pair)
            if other is not None:
                if (
                    e.kind == DIRECTED
                    and other.kind == DIRECTED
                    and (e.u, e.v) == (other.v, other.u)
                ):
                    raise CycleError([e.u, e.v, e.u])
                raise GraphError(f"more than one edge between {e.pair}")
            pairs[e.pair] = e

    @classmethod
    def build(
        cls, nodes, edges: list[tuple[str, str, str] | tuple[str, str, str, float]] = ()
    ):
        return cls(tuple(nodes), frozenset(Edge(*e) for e in edges))

    @property
    def d(self) -> int:
        return len(self.nodes)

    def _index(self) -> dict[tuple[str, str], Edge]:
        return {e.pair: e for e in self.edges}

    def edge_between(self, a: str, b: str) -> Edge | None:
        key = (a, b) if a < b else (b, a)
        return self._index().get(key)

    def adjacent(self, a: str, b: str) -> bool:
        return self.edge_between(a, b) is not None

    def directed_edges(self) -> list[tuple[str, str]]:
        return sorted((e.u, e.v) for e in self.edges if e.kind == DIRECTED)

    def undirected_edges(self) -> list[tuple[str, str]]:
        return sorted(e.pair for e in self.edges if e.kind == UNDIRECTED)

    def parents(self, node: str) -> list[str]:
        return sorted(e.u for e in self.edges if e.kind == DIRECTED and e.v == node)

    def children(self, node: str) -> list[str]:
        return sorted(e.v for e in self.edges if e.kind == DIRECTED and e.u == node)

    def neighbors(self, node: str) -> list[str]:
        """Nodes connected to ``node`` by an undirected edge."""
        out = set()
        for e in self.edges:
            if e.kind == UNDIRECTED:
                if e.u == node:
                    out.add(e.v)
                elif e.v == node:
                    out.add(e.u)
        return sorted(out)

    def adjacencies(self, node: str) -> list[str]:
        out = set()
        for e in self.edges:
            if e.u == node:
                out.add(e.v)
            elif e.v == node:
                out.add(e.u)
        return sorted(out)

    def ancestors(self, node: str) -> set[str]:
        """Strict ancestors through directed edges."""
        parents: dict[str, set[str]] = {v: set() for v in self.nodes}
        for u, v in self.directed_edges():
            parents[v].add(u)
        seen: set[str] = set()
        stack = list(parents[node])
        while stack:
            x = stack.pop()
            if x not in seen:
                seen.add(x)
                stack.extend(parents[x])
        return seen

    def descendants(self, node: str) -> set[str]:
        children: dict[str, set[str]] = {v: set() for v in self.nodes}
        for u, v in self.directed_edges():
            children[u].add(v)
        seen: set[str] = set()
        stack = list(children[node])
        while stack:
            x = stack.pop()
            if x not in seen:
                seen.add(x)
                stack.extend(children[x])
        return seen


@dataclass(frozen=True)
class Dag(CausalGraph):
    def __post_init__(self):
        super().__post_init__()
        for e in self.edges:
            if e.kind != DIRECTED:
                raise EdgeKindError(
                    f"DAG cannot contain an undirected edge {e.u}--{e.v}"
                )
        object.__setattr__(self, "_topo", _topological_order(self))

    @property
    def topological_order(self) -> tuple[str, ...]:
        return self._topo


def _topological_order(g: CausalGraph) -> tuple[str, ...]:
    """Kahn's algorithm with lexicographic tie-break; raises CycleError."""
    indeg = {v: 0 for v in g.nodes}
    children: dict[str, list[str]] = {v: [] for v in g.nodes}
    for u, v in g.directed_edges():
        indeg[v] += 1
        children[u].append(v)
    ready = sorted(v for v, k in indeg.items() if k == 0)
    order: list[str] = []
    while ready:
        x = ready.pop(0)
        order.append(x)
        changed = False
        for c in children[x]:
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
                changed = True
        if changed:
            ready.sort()
    if len(order) != len(g.nodes):
        raise CycleError(_find_cycle(g))
    return tuple(order)


def _find_cycle(g: CausalGraph) -> list[str]:
    children: dict[str, list[str]] = {v: [] for v in g.nodes}
    for u, v in g.directed_edges():
        children[u].append(v)
    color = {v: 0 for v in g.nodes}  # 0 new, 1 on stack, 2 done
    path: list[str] = []

    def dfs(x: str) -> list[str] | None:
        color[x] = 1
        path.append(x)
        for c in children[x]:
            if color[c] == 1:
                return path[path.index(c):] + [c]
            if color[c] == 0:
                found = dfs(c)
                if found:
                    return found
        color[x] = 2
        path.pop()
        return None

    for v in sorted(g.nodes):
        if color[v] == 0:
            found = dfs(v)
            if found:
                return found
    raise GraphError("no cycle found in an acyclic graph")  # pragma: no cover


def validate_dag(g: CausalGraph) -> Dag:
    """Check that ``g`` is a DAG and return it as one (topological witness
    available via ``topological_order``)."""
    if isinstance(g, Dag):
        return g
    return Dag(g.nodes, g.edges)


@dataclass(frozen=True)
class Knowledge:
    """Background constraints: ordered pairs that must not / must appear."""

    forbidden: frozenset[tuple[str, str]] = frozenset()
    required: frozenset[tuple[str, str]] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "forbidden", frozenset(map(tuple, self.forbidden)))
        object.__setattr__(self, "required", frozenset(map(tuple, self.required)))
        clash = self.forbidden & self.required
        if clash:
            raise KnowledgeError(f"pairs both forbidden and required: {sorted(clash)}")
        nodes = sorted({x for p in self.required for x in p})
        try:
            Dag.build(nodes, [(a, b, DIRECTED) for a, b in self.required])
        except CycleError as e:
            raise KnowledgeError(
                f"required edges admit no acyclic extension ({e})"
            ) from None

    @property
    def empty(self) -> bool:
        return not self.forbidden and not self.required

    def merged(self, other: "Knowledge") -> "Knowledge":
        return Knowledge(
            self.forbidden | other.forbidden, self.required | other.required
        )

    def to_dict(self) -> dict:
        return {
            "forbidden": sorted(map(list, self.forbidden)),
            "required": sorted(map(list, self.required)),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Knowledge":
        return cls(
            frozenset(map(tuple, d.get("forbidden", ()))),
            frozenset(map(tuple, d.get("required", ()))),
        )


class Pdag:
    """Mutable partially directed graph used by orientation algorithms."""

    def __init__(self, nodes):
        self.nodes = tuple(nodes)
        self._dir: set[tuple[str, str]] = set()
        self._und: set[tuple[str, str]] = set()

    @classmethod
    def from_graph(cls, g: CausalGraph) -> "Pdag":
        p = cls(g.nodes)
        for e in g.edges:
            if e.kind == DIRECTED:
                p._dir.add((e.u, e.v))
            else:
                p._und.add(e.pair)
        return p

    def copy(self) -> "Pdag":
        p = Pdag(self.nodes)
        p._dir = set(self._dir)
        p._und = set(self._und)
        return p

    @staticmethod
    def _key(a, b):
        return (a, b) if a < b else (b, a)

    def adjacent(self, a, b) -> bool:
        return (
            self._key(a, b) in self._und or (a, b) in self._dir or (b, a) in self._dir
        )

    def has_directed(self, a, b) -> bool:
        return (a, b) in self._dir

    def has_undirected(self, a, b) -> bool:
        return self._key(a, b) in self._und

    def add_undirected(self, a, b):
        self._und.add(self._key(a, b))

    def add_directed(self, a, b):
        self._dir.add((a, b))

    def orient(self, a, b):
        """Turn the undirected edge a--b into a->b."""
        self._und.discard(self._key(a, b))
        self._dir.add((a, b))

    def remove_pair(self, a, b):
        self._und.discard(self._key(a, b))
        self._dir.discard((a, b))
        self._dir.discard((b, a))

    def parents(self, x) -> list[str]:
        return sorted(a for a, b in self._dir if b == x)

    def children(self, x) -> list[str]:
        return sorted(b for a, b in self._dir if a == x)

    def und_neighbors(self, x) -> list[str]:
        out = []
        for a, b in self._und:
            if a == x:
                out.append(b)
            elif b == x:
                out.append(a)
        return sorted(out)

    def adjacencies(self, x) -> list[str]:
        out = set(self.und_neighbors(x))
        out.update(self.parents(x))
        out.update(self.children(x))
        return sorted(out)

    def directed_edges(self) -> list[tuple[str, str]]:
        return sorted(self._dir)

    def undirected_edges(self) -> list[tuple[str, str]]:
        return sorted(self._und)

    def to_graph(self, weights: dict[tuple[str, str], float] | None = None) -> CausalGraph:
        weights = weights or {}
        edges = []
        for a, b in sorted(self._dir):
            edges.append(Edge(a, b, DIRECTED, weights.get((a, b))))
        for a, b in sorted(self._und):
            edges.append(Edge(a, b, UNDIRECTED))
        return CausalGraph(self.nodes, frozenset(edges))

    def meek_closure(self) -> "Pdag":
        """Close under Meek rules R1-R4, visiting edges lexicographically."""
        changed = True
        while changed:
            changed = False
            for a, b in self.undirected_edges():
                for x, y in ((a, b), (b, a)):
                    if self._key(x, y) not in self._und:
                        break
                    if self._meek_fires(x, y):
                        self.orient(x, y)
                        changed = True
                        break
        return self

    def _meek_fires(self, x, y) -> bool:
        """Would some rule orient x--y as x->y?"""
        # R1: z->x, x--y, z and y non-adjacent => x->y
        for z in self.parents(x):
            if not self.adjacent(z, y):
                return True
        # R2: x->z->y and x--y => x->y
        for z in self.children(x):
            if self.has_directed(z, y):
                return True
        # R3: x--z1->y, x--z2->y, z1 and z2 non-adjacent => x->y
        zs = [z for z in self.und_neighbors(x) if self.has_directed(z, y)]
        for z1, z2 in combinations(sorted(zs), 2):
            if not self.adjacent(z1, z2):
                return True
        # R4: x--y, x adjacent to c, c->d, d->y, c and y non-adjacent => x->y
        for c, d in self._dir:
            if self.has_directed(d, y) and self.adjacent(x, c) and not self.adjacent(c, y):
                return True
        return False


def to_cpdag(g: Dag) -> CausalGraph:
    """CPDAG of g's Markov equivalence class: skeleton with v-structures
    directed and the Meek-rule closure of compelled edges."""
    g = validate_dag(g)
    p = Pdag(g.nodes)
    for u, v in g.directed_edges():
        p.add_undirected(u, v)
    for c in g.nodes:
        ps = g.parents(c)
        for a, b in combinations(ps, 2):
            if not g.adjacent(a, b):
                p.orient(a, c)
                p.orient(b, c)
    return p.meek_closure().to_graph()


def extend_to_dag(g: CausalGraph) -> Dag:
    """Orient the undirected edges of a PDAG into a consistent DAG extension
    (same skeleton and v-structures), or raise GraphError if none exists."""
    p = Pdag.from_graph(g)
    result = Pdag.from_graph(g)
    remaining = set(g.nodes)
    while remaining:
        pick = None
        for x in sorted(remaining):
            if any(c in remaining for c in p.children(x)):
                continue
            nbrs = [a for a in p.adjacencies(x) if a in remaining]
            und = [a for a in p.und_neighbors(x) if a in remaining]
            ok = all(
                p.adjacent(y, z) for y in und for z in nbrs if z != y
            )
            if ok:
                pick = x
                break
        if pick is None:
            raise GraphError("graph admits no consistent DAG extension")
        for y in p.und_neighbors(pick):
            if y in remaining:
                result.orient(y, pick)
        for y in list(p.und_neighbors(pick)):
            p.remove_pair(pick, y)
        for y in list(p.parents(pick)):
            p.remove_pair(y, pick)
        remaining.discard(pick)
    out = result.to_graph()
    return Dag(out.nodes, out.edges)


def shd(g1: CausalGraph, g2: CausalGraph) -> tuple[int, float]:
    """Structural Hamming distance over unordered pair states.

    Any disagreement on a pair counts 1: missing vs present, orientation
    flip, or directed vs undirected. Normalized by d(d-1)/2.
    """
    if set(g1.nodes) != set(g2.nodes):
        raise NodeMismatchError(
            f"node sets differ: {sorted(set(g1.nodes) ^ set(g2.nodes))}"
        )

    def states(g: CausalGraph) -> dict[tuple[str, str], tuple]:
        out = {}
        for e in g.edges:
            if e.kind == UNDIRECTED:
                out[e.pair] = (UNDIRECTED,)
            else:
                out[e.pair] = (DIRECTED, e.u, e.v)
        return out

    s1, s2 = states(g1), states(g2)
    diff = sum(1 for k in set(s1) | set(s2) if s1.get(k) != s2.get(k))
    d = len(g1.nodes)
    pairs = d * (d - 1) // 2
    return diff, (diff / pairs if pairs else 0.0)


def apply_knowledge(g: CausalGraph, k: Knowledge) -> CausalGraph:
    """Enforce constraints on a graph.

    Forbidden (a, b): the directed edge a->b is removed; an undirected a--b
    is oriented b->a (removed entirely if both directions are forbidden).
    Required (a, b): present edges are (re)oriented a->b, absent ones added.
    Raises KnowledgeError when enforcement introduces a directed cycle.
    """
    p = Pdag.from_graph(g)
    weights = {(e.u, e.v): e.weight for e in g.edges if e.weight is not None}
    for a, b in sorted(k.forbidden):
        if p.has_directed(a, b):
            p.remove_pair(a, b)
            weights.pop((a, b), None)
        if p.has_undirected(a, b):
            if (b, a) in k.forbidden:
                p.remove_pair(a, b)
            else:
                p.orient(b, a)
    for a, b in sorted(k.required):
        if a not in p.nodes or b not in p.nodes:
            raise KnowledgeError(f"required pair ({a}, {b}) has unknown nodes")
        if p.has_directed(a, b):
            continue
        if p.has_directed(b, a):
            p.remove_pair(b, a)
            weights.pop((b, a), None)
        p.remove_pair(a, b)
        p.add_directed(a, b)

    def acyclic(edges) -> bool:
        try:
            Dag.build(g.nodes, [(u, v, DIRECTED) for u, v in edges])
            return True
        except CycleError:
            return False

    before = {(e.u, e.v) for e in g.edges if e.kind == DIRECTED}
    if acyclic(before) and not acyclic(p.directed_edges()):
        raise KnowledgeError("required edges create a directed cycle")
    return p.to_graph(weights)


def serialize(g: CausalGraph, format: str = "json") -> str:
    """Render as graph JSON or DOT; byte-deterministic given the node order."""
    if format == "json":
        edges = []
        for e in sorted(g.edges, key=lambda e: (e.u, e.v, e.kind)):
            item = {"from": e.u, "to": e.v, "kind": e.kind}
            if e.weight is not None:
                item["weight"] = e.weight
            edges.append(item)
        return json.dumps({"nodes": list(g.nodes), "edges": edges}, indent=2)
    if format == "dot":
        lines = ["digraph g {"]
        for v in g.nodes:
            lines.append(f'  "{v}";')
        for u, v in g.directed_edges():
            e = g.edge_between(u, v)
            attr = f' [label="{e.weight:.4g}"]' if e.weight is not None else ""
            lines.append(f'  "{u}" -> "{v}"{attr};')
        und = g.undirected_edges()
        if und:
            lines.append("  subgraph undirected {")
            for u, v in und:
                lines.append(f'    "{u}" -- "{v}";')
            lines.append("  }")
        lines.append("}")
        return "\n".join(lines) + "\n"
    raise GraphError(f"unknown serialization format {format!r}")


def deserialize(text: str) -> CausalGraph:
    obj = json.loads(text)
    edges = []
    for e in obj.get("edges", []):
        edges.append(Edge(e["from"], e["to"], e.get("kind", DIRECTED), e.get("weight")))
    return CausalGraph(tuple(obj["nodes"]), frozenset(edges))
