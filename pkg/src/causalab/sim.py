"""Synthetic SCM generation, sampling, and root-cause injection.

Random graphs (Erdos-Renyi or scale-free preferential attachment) are
oriented by a seeded node permutation, so they are acyclic by construction.
Mechanisms are linear or tanh-of-parent sums with additive noise. All noise
distributions are parameterized to mean 0 and standard deviation equal to
``noise_scale``, which makes intervention magnitudes comparable across noise
families (they are expressed in noise-sigma units).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import CONTINUOUS, ColumnSchema, Dataset, load_csv, to_csv_bytes
from .errors import InvalidSpecError, NumericError
from .graphs import DIRECTED, CausalGraph, Dag, Edge, deserialize, serialize

EULER_GAMMA = 0.5772156649015329

ERDOS_RENYI = "erdos-renyi"
SCALE_FREE = "scale-free"


@dataclass(frozen=True)
class GraphSpec:
    model: str  # erdos-renyi | scale-free
    d: int
    expected_degree: float = 2.0  # ER only
    attachment_m: int = 1  # SF only
    seed: int = 0

    def __post_init__(self):
        if self.model not in (ERDOS_RENYI, SCALE_FREE):
            raise InvalidSpecError(f"unknown graph model {self.model!r}")
        if self.d < 2:
            raise InvalidSpecError("need at least 2 nodes")
        if self.model == ERDOS_RENYI and not (0 <= self.expected_degree < self.d):
            raise InvalidSpecError("expected_degree must lie in [0, d)")
        if self.model == SCALE_FREE and not (1 <= self.attachment_m < self.d):
            raise InvalidSpecError("attachment_m must lie in [1, d)")

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "d": self.d,
            "expected_degree": self.expected_degree,
            "attachment_m": self.attachment_m,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class MechanismSpec:
    form: str = "linear"  # linear | nonlinear
    weight_range: tuple[float, float] = (0.5, 2.0)  # magnitudes, sign randomized
    noise: str = "gaussian"  # gaussian | gumbel | uniform
    noise_scale: float = 1.0

    def __post_init__(self):
        if self.form not in ("linear", "nonlinear"):
            raise InvalidSpecError(f"unknown mechanism form {self.form!r}")
        lo, hi = self.weight_range
        if not (0 < lo <= hi):
            raise InvalidSpecError("weight_range magnitudes must satisfy 0 < lo <= hi")
        if self.noise not in ("gaussian", "gumbel", "uniform"):
            raise InvalidSpecError(f"unknown noise family {self.noise!r}")
        if self.noise_scale <= 0:
            raise InvalidSpecError("noise_scale must be positive")

    def to_dict(self) -> dict:
        return {
            "form": self.form,
            "weight_range": list(self.weight_range),
            "noise": self.noise,
            "noise_scale": self.noise_scale,
        }


@dataclass(frozen=True)
class Mechanism:
    form: str
    parents: tuple[str, ...]
    weights: tuple[float, ...]
    noise: str
    noise_scale: float


@dataclass(frozen=True)
class Scm:
    dag: Dag
    mechanisms: dict[str, Mechanism]

    def __post_init__(self):
        for node in self.dag.nodes:
            mech = self.mechanisms.get(node)
            if mech is None:
                raise InvalidSpecError(f"no mechanism for node {node!r}")
            if tuple(self.dag.parents(node)) != mech.parents:
                raise InvalidSpecError(
                    f"mechanism parents for {node!r} do not match the graph"
                )

    @property
    def nodes(self) -> tuple[str, ...]:
        return self.dag.nodes

    def noise_sigma(self, node: str) -> float:
        return self.mechanisms[node].noise_scale

    def weighted_graph(self) -> CausalGraph:
        edges = []
        for node, mech in sorted(self.mechanisms.items()):
            for parent, w in zip(mech.parents, mech.weights):
                edges.append(Edge(parent, node, DIRECTED, w))
        return CausalGraph(self.dag.nodes, frozenset(edges))


@dataclass(frozen=True)
class InterventionSpec:
    mode: str  # hard | soft
    targets: str = "single"  # single | multiple
    k: int = 1  # used when targets == multiple
    magnitude: float = 10.0  # in noise-sigma units
    n_anomalies: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("hard", "soft"):
            raise InvalidSpecError(f"unknown intervention mode {self.mode!r}")
        if self.targets not in ("single", "multiple"):
            raise InvalidSpecError(f"unknown target policy {self.targets!r}")
        if self.magnitude == 0:
            raise InvalidSpecError("intervention magnitude must be nonzero")
        if self.n_anomalies < 1:
            raise InvalidSpecError("need at least one anomalous row")
        if self.targets == "multiple" and self.k < 1:
            raise InvalidSpecError("multiple interventions need k >= 1")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "targets": self.targets,
            "k": self.k,
            "magnitude": self.magnitude,
            "n_anomalies": self.n_anomalies,
            "seed": self.seed,
        }


@dataclass
class BenchmarkCase:
    scm: Scm
    normal_data: Dataset
    anomalous_data: Dataset
    labels: dict[int, list[str]]
    meta: dict = field(default_factory=dict)


def node_labels(d: int) -> list[str]:
    return [f"x{i}" for i in range(d)]


def sample_graph(spec: GraphSpec) -> Dag:
    """Draw a random DAG; deterministic given the spec's seed."""
    rng = np.random.default_rng(spec.seed)
    labels = node_labels(spec.d)
    order = [labels[i] for i in rng.permutation(spec.d)]
    edges: list[tuple[str, str, str]] = []
    if spec.model == ERDOS_RENYI:
        p = min(1.0, spec.expected_degree / (spec.d - 1))
        for i in range(spec.d):
            for j in range(i + 1, spec.d):
                if rng.random() < p:
                    edges.append((order[i], order[j], DIRECTED))
    else:
        m = spec.attachment_m
        degree = np.zeros(spec.d)  # indexed by permutation position
        for i in range(m):
            for j in range(i + 1, m):
                edges.append((order[i], order[j], DIRECTED))
                degree[i] += 1
                degree[j] += 1
        for k in range(m, spec.d):
            candidates = list(range(k))
            chosen: list[int] = []
            for _ in range(m):
                weights = np.array([degree[c] for c in candidates])
                if weights.sum() == 0:
                    probs = np.full(len(candidates), 1.0 / len(candidates))
                else:
                    probs = weights / weights.sum()
                pick = int(rng.choice(len(candidates), p=probs))
                chosen.append(candidates.pop(pick))
            for c in chosen:
                edges.append((order[c], order[k], DIRECTED))
                degree[c] += 1
                degree[k] += 1
    return Dag.build(labels, edges)


def attach_mechanisms(dag: Dag, spec: MechanismSpec, seed: int = 0) -> Scm:
    """Draw parent weights uniformly from the magnitude range with random
    sign; nonlinear mechanisms apply the weights to tanh of each parent."""
    rng = np.random.default_rng(seed)
    lo, hi = spec.weight_range
    mechanisms = {}
    for node in dag.nodes:
        parents = tuple(dag.parents(node))
        mags = rng.uniform(lo, hi, size=len(parents))
        signs = np.where(rng.random(len(parents)) < 0.5, -1.0, 1.0)
        mechanisms[node] = Mechanism(
            form=spec.form,
            parents=parents,
            weights=tuple(float(w) for w in mags * signs),
            noise=spec.noise,
            noise_scale=spec.noise_scale,
        )
    return Scm(dag, mechanisms)


def _draw_noise(rng: np.random.Generator, kind: str, scale: float, n: int) -> np.ndarray:
    """Mean-0, std = ``scale`` noise from the requested family."""
    if kind == "gaussian":
        return rng.normal(0.0, scale, n)
    if kind == "gumbel":
        beta = scale * math.sqrt(6.0) / math.pi
        return rng.gumbel(-EULER_GAMMA * beta, beta, n)
    a = scale * math.sqrt(3.0)
    return rng.uniform(-a, a, n)


def _mech_value(mech: Mechanism, parent_cols: list[np.ndarray]) -> np.ndarray:
    if not parent_cols:
        return 0.0
    stack = np.column_stack(parent_cols)
    if mech.form == "nonlinear":
        stack = np.tanh(stack)
    return stack @ np.array(mech.weights)


def _forward(
    scm: Scm,
    noise: np.ndarray,
    clamp: dict[str, np.ndarray] | None = None,
) -> np.ndarray:
    """Ancestral pass in topological order. ``noise`` is (n, d) in node-label
    order; ``clamp`` maps node -> per-row clamp values (NaN = not clamped)."""
    labels = list(scm.nodes)
    idx = {v: j for j, v in enumerate(labels)}
    x = np.zeros_like(noise)
    for node in scm.dag.topological_order:
        j = idx[node]
        mech = scm.mechanisms[node]
        parent_cols = [x[:, idx[p]] for p in mech.parents]
        x[:, j] = _mech_value(mech, parent_cols) + noise[:, j]
        if clamp and node in clamp:
            c = clamp[node]
            hold = ~np.isnan(c)
            x[hold, j] = c[hold]
    return x


def _as_dataset(scm: Scm, x: np.ndarray, descriptor: dict) -> Dataset:
    columns = tuple(
        ColumnSchema(v, CONTINUOUS, 0, len(np.unique(x[:, j])), None)
        for j, v in enumerate(scm.nodes)
    )
    return Dataset(columns, x, np.zeros_like(x, dtype=bool), (descriptor,))


def sample(scm: Scm, n: int, seed: int = 0) -> Dataset:
    """Observational ancestral sample; columns follow the node-label order."""
    if n < 1:
        raise InvalidSpecError("need n >= 1 samples")
    rng = np.random.default_rng(seed)
    noise = np.column_stack(
        [_draw_noise(rng, scm.mechanisms[v].noise, scm.noise_sigma(v), n) for v in scm.nodes]
    )
    x = _forward(scm, noise)
    return _as_dataset(scm, x, {"stage": "simulate", "n": n, "seed": seed})


def sample_with_do(
    scm: Scm, interventions: dict[str, float], n: int, seed: int = 0
) -> Dataset:
    """Sample under hard do-interventions clamping each given node."""
    if n < 1:
        raise InvalidSpecError("need n >= 1 samples")
    rng = np.random.default_rng(seed)
    noise = np.column_stack(
        [_draw_noise(rng, scm.mechanisms[v].noise, scm.noise_sigma(v), n) for v in scm.nodes]
    )
    clamp = {v: np.full(n, float(val)) for v, val in interventions.items()}
    x = _forward(scm, noise, clamp)
    return _as_dataset(
        scm, x, {"stage": "simulate_do", "n": n, "seed": seed, "do": dict(interventions)}
    )


def analytic_moments(scm: Scm) -> tuple[np.ndarray, np.ndarray]:
    """Mean vector and covariance of a linear SCM in node-label order:
    cov = (I - W)^-T D (I - W)^-1 with W[i, j] the weight of edge i->j."""
    labels = list(scm.nodes)
    idx = {v: j for j, v in enumerate(labels)}
    d = len(labels)
    W = np.zeros((d, d))
    D = np.zeros((d, d))
    for node, mech in scm.mechanisms.items():
        if mech.form != "linear":
            raise NumericError("analytic moments exist only for linear mechanisms")
        j = idx[node]
        D[j, j] = mech.noise_scale**2
        for parent, w in zip(mech.parents, mech.weights):
            W[idx[parent], j] = w
    inv = np.linalg.inv(np.eye(d) - W)
    cov = inv.T @ D @ inv
    return np.zeros(d), cov


_MARGINAL_PROBE_N = 10_000
_MARGINAL_PROBE_SEED = 0x5EED


def marginal_stats(scm: Scm) -> tuple[np.ndarray, np.ndarray]:
    """Per-node marginal mean and std: analytic for linear SCMs, otherwise
    estimated from a fixed-seed internal reference sample."""
    if all(m.form == "linear" for m in scm.mechanisms.values()):
        mean, cov = analytic_moments(scm)
        return mean, np.sqrt(np.diag(cov))
    ref = sample(scm, _MARGINAL_PROBE_N, seed=_MARGINAL_PROBE_SEED)
    return ref.values.mean(axis=0), ref.values.std(axis=0)


def inject_root_causes(
    scm: Scm, ispec: InterventionSpec
) -> tuple[Dataset, dict[int, list[str]]]:
    """Generate anomalous rows with known root causes.

    Each row independently draws its target node(s) uniformly (all targets of
    a "multiple" spec co-occur within the row). Soft interventions shift the
    target's noise mean by magnitude * noise sigma; hard interventions clamp
    the target to its marginal mean + magnitude * marginal std, severing the
    parent dependence. Labels map row index to the injected nodes.
    """
    d = len(scm.nodes)
    k = 1 if ispec.targets == "single" else ispec.k
    if k >= d:
        raise InvalidSpecError(f"cannot intervene on {k} of {d} nodes")
    rng = np.random.default_rng(ispec.seed)
    n = ispec.n_anomalies
    targets = [sorted(rng.choice(d, size=k, replace=False)) for _ in range(n)]
    noise = np.column_stack(
        [_draw_noise(rng, scm.mechanisms[v].noise, scm.noise_sigma(v), n) for v in scm.nodes]
    )
    labels = {i: [scm.nodes[j] for j in targets[i]] for i in range(n)}
    clamp: dict[str, np.ndarray] | None = None
    if ispec.mode == "soft":
        for i, tg in enumerate(targets):
            for j in tg:
                noise[i, j] += ispec.magnitude * scm.noise_sigma(scm.nodes[j])
    else:
        mean, std = marginal_stats(scm)
        clamp = {v: np.full(n, np.nan) for v in scm.nodes}
        for i, tg in enumerate(targets):
            for j in tg:
                clamp[scm.nodes[j]][i] = mean[j] + ispec.magnitude * std[j]
        clamp = {v: c for v, c in clamp.items() if not np.isnan(c).all()}
    x = _forward(scm, noise, clamp)
    ds = _as_dataset(
        scm, x, {"stage": "inject_root_causes", **ispec.to_dict()}
    )
    return ds, labels


# Seed offsets for the stages derived from a benchmark's base seed.
_MECH_SEED_OFFSET = 1
_SAMPLE_SEED_OFFSET = 2


def make_benchmark(
    gspec: GraphSpec,
    mspec: MechanismSpec,
    ispec: InterventionSpec,
    n_normal: int,
) -> BenchmarkCase:
    """Bundle a graph, mechanisms, normal sample, anomalies, and labels.

    Mechanism and sampling seeds derive from the graph seed by fixed offsets
    and are recorded in ``meta``, so a bundle regenerates byte-identically.
    """
    mech_seed = gspec.seed + _MECH_SEED_OFFSET
    sample_seed = gspec.seed + _SAMPLE_SEED_OFFSET
    dag = sample_graph(gspec)
    scm = attach_mechanisms(dag, mspec, seed=mech_seed)
    normal = sample(scm, n_normal, seed=sample_seed)
    anomalous, labels = inject_root_causes(scm, ispec)
    meta = {
        "graph_spec": gspec.to_dict(),
        "mechanism_spec": mspec.to_dict(),
        "intervention_spec": ispec.to_dict(),
        "n_normal": n_normal,
        "mech_seed": mech_seed,
        "sample_seed": sample_seed,
        "multiple_interventions_co_occur": True,
    }
    return BenchmarkCase(scm, normal, anomalous, labels, meta)


def write_bundle(case: BenchmarkCase, path: str | Path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    (path / "meta.json").write_text(json.dumps(case.meta, indent=2, sort_keys=True))
    (path / "graph.json").write_text(serialize(case.scm.weighted_graph(), "json"))
    (path / "normal.csv").write_bytes(to_csv_bytes(case.normal_data))
    (path / "anomalies.csv").write_bytes(to_csv_bytes(case.anomalous_data))
    (path / "labels.json").write_text(
        json.dumps({str(i): v for i, v in sorted(case.labels.items())}, indent=2)
    )


def read_bundle(path: str | Path) -> BenchmarkCase:
    """Rebuild a BenchmarkCase from a bundle directory.

    The SCM is regenerated from the recorded specs and seeds; the stored
    graph.json is cross-checked against it.
    """
    path = Path(path)
    meta = json.loads((path / "meta.json").read_text())
    gspec_d = dict(meta["graph_spec"])
    mspec_d = dict(meta["mechanism_spec"])
    gspec = GraphSpec(
        model=gspec_d["model"],
        d=gspec_d["d"],
        expected_degree=gspec_d["expected_degree"],
        attachment_m=gspec_d["attachment_m"],
        seed=gspec_d["seed"],
    )
    mspec = MechanismSpec(
        form=mspec_d["form"],
        weight_range=tuple(mspec_d["weight_range"]),
        noise=mspec_d["noise"],
        noise_scale=mspec_d["noise_scale"],
    )
    ispec_d = dict(meta["intervention_spec"])
    ispec = InterventionSpec(**ispec_d)
    dag = sample_graph(gspec)
    scm = attach_mechanisms(dag, mspec, seed=meta["mech_seed"])
    stored = deserialize((path / "graph.json").read_text())
    regenerated = scm.weighted_graph()
    if set(stored.nodes) != set(regenerated.nodes) or stored.directed_edges() != (
        regenerated.directed_edges()
    ):
        raise InvalidSpecError(f"bundle {path} graph.json does not match its meta seeds")
    normal = load_csv((path / "normal.csv").read_bytes())
    anomalous = load_csv((path / "anomalies.csv").read_bytes())
    labels_raw = json.loads((path / "labels.json").read_text())
    labels = {int(i): list(v) for i, v in labels_raw.items()}
    return BenchmarkCase(scm, normal, anomalous, labels, meta)
