"""Root cause analysis: anomaly scoring, graph traversal, counterfactual
Shapley attribution on a fitted linear SCM, ordering-searched Cholesky
whitening, and ranking metrics.

All rankings are descending by score with lexicographic tie-break, so they
are deterministic given the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, permutations

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.stats import norm

from .data import Dataset
from .errors import (
    CapExceededError,
    InvalidQueryError,
    InvalidSpecError,
    NumericError,
    SampleSizeError,
    UndefinedScoreError,
)
from .graphs import Dag

ROBUST_Z = "robust-z"
TAIL_LOGPROB = "tail-logprob"

# 1 / Phi^-1(3/4): scales the MAD to estimate a Gaussian sigma.
MAD_SCALE = 1.4826

DEFAULT_TAU = 3.0

EXHAUSTIVE_CAP = 10  # orderings grow as d!; greedy search beyond this
SHAPLEY_ENUM_CAP = 10  # exact subset enumeration up to this many players
MIN_PERMUTATIONS = 200


@dataclass(frozen=True)
class AnomalyScores:
    method: str
    scores: dict[str, float]
    flags: dict[str, str]

    def __post_init__(self):
        for node, s in self.scores.items():
            if not math.isfinite(s):
                raise UndefinedScoreError(f"non-finite score for {node!r}")


@dataclass(frozen=True)
class RankedCauses:
    method: str
    ranking: tuple[tuple[str, float], ...]
    params: dict

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "params": self.params,
            "ranking": [{"node": n, "score": s} for n, s in self.ranking],
        }

    def top(self, k: int) -> list[str]:
        return [n for n, _ in self.ranking[:k]]


def _ranked(method: str, scores: dict[str, float], params: dict) -> RankedCauses:
    items = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return RankedCauses(method, tuple((n, float(s)) for n, s in items), params)


def _sample_row(normal: Dataset, sample) -> dict[str, float]:
    if isinstance(sample, dict):
        missing = [c for c in normal.column_names if c not in sample]
        if missing:
            raise InvalidQueryError(f"sample lacks columns: {missing}")
        return {c: float(sample[c]) for c in normal.column_names}
    arr = np.asarray(sample, dtype=float).ravel()
    if arr.size != normal.d:
        raise InvalidQueryError(
            f"sample has {arr.size} values for {normal.d} columns"
        )
    return {c: float(v) for c, v in zip(normal.column_names, arr)}


def anomaly_scores(
    normal: Dataset, sample, method: str = ROBUST_Z
) -> AnomalyScores:
    """Per-node outlier scores of one sample against the normal data.

    robust-z: |x - median| / (1.4826 * MAD), falling back to the standard
    deviation for zero-MAD columns. tail-logprob: -log2 of the add-one
    smoothed two-sided empirical tail frequency of |x - median|.
    """
    if normal.n < 30:
        raise SampleSizeError("need at least 30 normal rows to score anomalies")
    if method not in (ROBUST_Z, TAIL_LOGPROB):
        raise InvalidSpecError(f"unknown anomaly method {method!r}")
    row = _sample_row(normal, sample)
    scores: dict[str, float] = {}
    flags: dict[str, str] = {}
    for j, name in enumerate(normal.column_names):
        x = normal.values[~normal.mask[:, j], j]
        if x.size == 0:
            raise UndefinedScoreError(f"column {name!r} has no observed values")
        med = float(np.median(x))
        dev = abs(row[name] - med)
        if method == ROBUST_Z:
            mad = float(np.median(np.abs(x - med)))
            scale = MAD_SCALE * mad
            if scale == 0:
                sigma = float(x.std())
                if sigma == 0:
                    if dev == 0:
                        scores[name] = 0.0
                        flags[name] = "constant"
                        continue
                    raise UndefinedScoreError(
                        f"column {name!r} is constant; score undefined for a deviating sample"
                    )
                scale = sigma
                flags[name] = "sigma-fallback"
            scores[name] = dev / scale
        else:
            count = int((np.abs(x - med) >= dev).sum())
            scores[name] = -math.log2((count + 1) / (x.size + 1))
    return AnomalyScores(method=method, scores=scores, flags=flags)


def rca_traversal(
    g: Dag, scores: AnomalyScores, target: str, tau: float = DEFAULT_TAU
) -> RankedCauses:
    """Anomalous ancestors of the target with no anomalous parent.

    Candidates are nodes scoring at least tau that are the target or its
    ancestors; root causes are candidates whose parents are all below tau.
    """
    if target not in g.nodes:
        raise InvalidQueryError(f"target {target!r} not in graph")
    params = {"tau": tau, "target": target}
    if scores.scores.get(target, 0.0) < tau:
        return RankedCauses(
            "rca_traversal", (), {**params, "target_not_anomalous": True}
        )
    allowed = g.ancestors(target) | {target}
    candidates = {
        v for v, s in scores.scores.items() if s >= tau and v in allowed
    }
    roots = {
        v: scores.scores[v]
        for v in candidates
        if not any(p in candidates for p in g.parents(v))
    }
    return _ranked("rca_traversal", roots, params)


@dataclass(frozen=True)
class LinearScmFit:
    """Per-node OLS fit on graph parents: weights, intercepts, noise sigmas."""

    dag: Dag
    weights: dict[str, dict[str, float]]
    intercepts: dict[str, float]
    sigmas: dict[str, float]

    def __post_init__(self):
        for node, s in self.sigmas.items():
            if s <= 0:
                raise NumericError(f"noise sigma for {node!r} must be positive")

    def recover_noise(self, row: dict[str, float]) -> dict[str, float]:
        """eps_j = x_j - (b_j + sum_i w_ij x_i) for each node."""
        out = {}
        for node in self.dag.nodes:
            pred = self.intercepts[node] + sum(
                w * row[p] for p, w in self.weights[node].items()
            )
            out[node] = row[node] - pred
        return out

    def coefficient_matrix(self) -> tuple[list[str], np.ndarray, np.ndarray, np.ndarray]:
        """Nodes, total-effect matrix A = (I - W^T)^-1, noise sigma vector,
        and marginal means (A @ intercepts)."""
        nodes = list(self.dag.nodes)
        idx = {v: j for j, v in enumerate(nodes)}
        d = len(nodes)
        W = np.zeros((d, d))
        b = np.zeros(d)
        s = np.zeros(d)
        for node in nodes:
            j = idx[node]
            b[j] = self.intercepts[node]
            s[j] = self.sigmas[node]
            for p, w in self.weights[node].items():
                W[idx[p], j] = w
        A = np.linalg.inv(np.eye(d) - W.T)
        return nodes, A, s, A @ b


def fit_linear_scm(g: Dag, normal: Dataset) -> LinearScmFit:
    """OLS of each node on its graph parents (with intercept)."""
    max_indegree = max((len(g.parents(v)) for v in g.nodes), default=0)
    if normal.n <= max_indegree + 2:
        raise SampleSizeError(
            f"need n > max in-degree + 2 rows (n={normal.n}, in-degree={max_indegree})"
        )
    weights: dict[str, dict[str, float]] = {}
    intercepts: dict[str, float] = {}
    sigmas: dict[str, float] = {}
    for node in g.nodes:
        parents = g.parents(node)
        target = normal.column(node)
        if parents:
            X = np.column_stack(
                [np.ones(normal.n), *[normal.column(p) for p in parents]]
            )
            gram = X.T @ X
            if np.linalg.matrix_rank(gram) < gram.shape[0] or np.linalg.cond(gram) > 1e12:
                raise NumericError(f"collinear parents for node {node!r}: {parents}")
            beta = np.linalg.solve(gram, X.T @ target)
            resid = target - X @ beta
            intercepts[node] = float(beta[0])
            weights[node] = {p: float(w) for p, w in zip(parents, beta[1:])}
        else:
            resid = target - target.mean()
            intercepts[node] = float(target.mean())
            weights[node] = {}
        sigmas[node] = float(resid.std())
    return LinearScmFit(g, weights, intercepts, sigmas)


def _folded_normal_mean(mu: float, sigma: float) -> float:
    """E|X| for X ~ N(mu, sigma^2)."""
    if sigma == 0:
        return abs(mu)
    return sigma * math.sqrt(2.0 / math.pi) * math.exp(
        -(mu**2) / (2.0 * sigma**2)
    ) + mu * (1.0 - 2.0 * norm.cdf(-mu / sigma))


def rca_counterfactual(
    fit: LinearScmFit,
    sample,
    target: str,
    m: int = 1000,
    seed: int = 0,
    exact: bool | None = None,
) -> RankedCauses:
    """Shapley attribution of the target's outlier score to node noises.

    The anomalous sample's noises are recovered; the set function g(S) is the
    expected standardized deviation of the target when the noises in S are
    fixed to their recovered values and the rest follow the fitted Gaussian
    laws. For a linear-Gaussian fit this expectation is computed in closed
    form (``exact=False`` forces the seeded Monte Carlo estimate with m
    draws). Players are the target's ancestors and itself; subsets are
    enumerated exactly up to 10 players, beyond that Shapley values are
    estimated from at least 200 seeded permutations.
    """
    if target not in fit.dag.nodes:
        raise InvalidQueryError(f"target {target!r} not in fit")
    row = {c: float(v) for c, v in _sample_dict(fit, sample).items()}
    eps_hat = fit.recover_noise(row)
    nodes, A, sig, mean = fit.coefficient_matrix()
    idx = {v: j for j, v in enumerate(nodes)}
    t = idx[target]
    a_t = A[t]
    marginal_sigma = float(np.sqrt(np.sum((a_t * sig) ** 2)))
    if marginal_sigma == 0:
        raise NumericError(f"target {target!r} has zero marginal variance under the fit")
    players = sorted(fit.dag.ancestors(target) | {target})
    use_exact = exact if exact is not None else True
    rng = np.random.default_rng(seed)

    def g_closed(fixed: frozenset[str]) -> float:
        mu = mean[t] + sum(a_t[idx[v]] * eps_hat[v] for v in fixed)
        var = sum(
            (a_t[idx[v]] * sig[idx[v]]) ** 2 for v in players if v not in fixed
        )
        return _folded_normal_mean(mu - mean[t], math.sqrt(var)) / marginal_sigma

    def g_mc(fixed: frozenset[str]) -> float:
        draws = np.zeros(m)
        mu = mean[t] + sum(a_t[idx[v]] * eps_hat[v] for v in fixed)
        for v in players:
            if v not in fixed:
                draws = draws + a_t[idx[v]] * rng.normal(0.0, sig[idx[v]], m)
        return float(np.mean(np.abs(mu + draws - mean[t]))) / marginal_sigma

    g_fn = g_closed if use_exact else g_mc
    cache: dict[frozenset[str], float] = {}

    def g(fixed: frozenset[str]) -> float:
        if fixed not in cache:
            cache[fixed] = g_fn(fixed)
        return cache[fixed]

    p = len(players)
    phi = {v: 0.0 for v in nodes}
    if p <= SHAPLEY_ENUM_CAP:
        fact = [math.factorial(i) for i in range(p + 1)]
        for j in players:
            rest = [v for v in players if v != j]
            total = 0.0
            for size in range(p):
                w = fact[size] * fact[p - size - 1] / fact[p]
                for S in combinations(rest, size):
                    fs = frozenset(S)
                    total += w * (g(fs | {j}) - g(fs))
            phi[j] = total
        mode = "enumeration"
    else:
        n_perm = max(MIN_PERMUTATIONS, m)
        for _ in range(n_perm):
            perm = [players[i] for i in rng.permutation(p)]
            fixed: frozenset[str] = frozenset()
            before = g(fixed)
            for v in perm:
                fixed = fixed | {v}
                after = g(fixed)
                phi[v] += (after - before) / n_perm
                before = after
        mode = "permutation-sampling"
    degenerate = abs(g(frozenset(players)) - g(frozenset())) < 1e-12
    params = {
        "target": target,
        "m": m,
        "seed": seed,
        "mode": mode,
        "exact_expectation": use_exact,
        "degenerate": degenerate,
    }
    return _ranked("rca_counterfactual", phi, params)


def _sample_dict(fit: LinearScmFit, sample) -> dict[str, float]:
    if isinstance(sample, dict):
        missing = [v for v in fit.dag.nodes if v not in sample]
        if missing:
            raise InvalidQueryError(f"sample lacks nodes: {missing}")
        return {v: float(sample[v]) for v in fit.dag.nodes}
    arr = np.asarray(sample, dtype=float).ravel()
    if arr.size != len(fit.dag.nodes):
        raise InvalidQueryError("sample length does not match fit nodes")
    return {v: float(x) for v, x in zip(fit.dag.nodes, arr)}


def cholesky_whiten(
    mu: np.ndarray, cov: np.ndarray, x: np.ndarray, order
) -> np.ndarray:
    """z = L^-1 (x - mu) under the node ordering, L the lower Cholesky factor
    of the permuted covariance. Positions follow ``order``."""
    order = list(order)
    sub = cov[np.ix_(order, order)]
    L = cholesky(sub, lower=True)
    return solve_triangular(L, (x - mu)[order], lower=True)


def rca_cholesky(
    normal: Dataset, sample, params: dict | None = None
) -> RankedCauses:
    """Graph-free scoring by whitening against searched node orderings.

    Each node's score is the largest |z| it attains at its position across
    the searched orderings: all d! of them for exhaustive search (d <= 10),
    or the single ordering grown by greedily appending the node that
    minimizes the current |z| otherwise.
    """
    params = dict(params or {})
    search = params.get("search", "exhaustive")
    seed = params.get("seed", 0)
    if search not in ("exhaustive", "greedy"):
        raise InvalidSpecError(f"unknown search strategy {search!r}")
    row = _sample_row(normal, sample)
    names = normal.column_names
    d = normal.d
    if search == "exhaustive" and d > EXHAUSTIVE_CAP:
        raise CapExceededError(
            f"exhaustive ordering search is capped at d <= {EXHAUSTIVE_CAP} (got {d})"
        )
    X = normal.values
    if normal.mask.any():
        raise NumericError("normal data must be complete")
    mu = X.mean(axis=0)
    cov = np.cov(X.T, bias=True).reshape(d, d)
    ridged = False
    try:
        cholesky(cov, lower=True)
    except np.linalg.LinAlgError:
        cov = cov + 1e-8 * float(np.mean(np.diag(cov))) * np.eye(d)
        ridged = True
        try:
            cholesky(cov, lower=True)
        except np.linalg.LinAlgError:
            raise NumericError(
                "covariance is not positive definite even after ridge"
            ) from None
    x = np.array([row[c] for c in names])
    scores = {c: 0.0 for c in names}
    out_params = {"search": search, "seed": seed, "ridged": ridged}
    if search == "exhaustive":
        for order in permutations(range(d)):
            z = cholesky_whiten(mu, cov, x, order)
            for pos, j in enumerate(order):
                v = abs(float(z[pos]))
                if v > scores[names[j]]:
                    scores[names[j]] = v
    else:
        prefix: list[int] = []
        remaining = list(range(d))
        while remaining:
            best = None
            for c in sorted(remaining, key=lambda j: names[j]):
                z = cholesky_whiten(mu, cov, x, prefix + [c])
                v = abs(float(z[-1]))
                if best is None or v < best[0]:
                    best = (v, c)
            v, c = best
            scores[names[c]] = v
            prefix.append(c)
            remaining.remove(c)
        out_params["ordering"] = [names[j] for j in prefix]
    return _ranked("rca_cholesky", scores, out_params)


@dataclass(frozen=True)
class RankMetrics:
    precision: float
    recall: float
    f1: float
    accuracy_top1: float
    ndcg: float
    mrr: float
    map: float
    k: int
    truncated: bool = False

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "accuracy_top1": self.accuracy_top1,
            "ndcg": self.ndcg,
            "mrr": self.mrr,
            "map": self.map,
            "k": self.k,
            "truncated": self.truncated,
        }


def rank_metrics(ranking: RankedCauses, truth, k: int) -> RankMetrics:
    """Binary-relevance ranking metrics against the true root-cause set.

    DCG discounts hits by log2(position + 1); NDCG divides by the ideal DCG.
    MRR uses the first relevant hit anywhere in the ranking. MAP@k averages
    precision at each relevant hit in the top k, dividing by min(|truth|, k).
    When k exceeds the ranking length the metrics cover the available prefix
    and the result is flagged truncated.
    """
    truth = set(truth)
    if not truth:
        raise InvalidQueryError("truth set must be non-empty")
    if k < 1:
        raise InvalidQueryError("k must be at least 1")
    items = [n for n, _ in ranking.ranking]
    truncated = k > len(items)
    top = items[:k]
    rel = [1 if n in truth else 0 for n in top]
    hits = sum(rel)
    precision = hits / k
    recall = hits / len(truth)
    f1 = (
        2 * precision * recall / (precision + recall)
        if precision + recall > 0
        else 0.0
    )
    accuracy_top1 = 1.0 if items and items[0] in truth else 0.0
    dcg = sum(r / math.log2(i + 2) for i, r in enumerate(rel))
    ideal = sum(1.0 / math.log2(i + 2) for i in range(min(len(truth), k)))
    ndcg = dcg / ideal if ideal > 0 else 0.0
    mrr = 0.0
    for i, n in enumerate(items):
        if n in truth:
            mrr = 1.0 / (i + 1)
            break
    ap_hits = [
        sum(rel[: i + 1]) / (i + 1) for i, r in enumerate(rel) if r
    ]
    map_k = sum(ap_hits) / min(len(truth), k) if ap_hits else 0.0
    return RankMetrics(
        precision=precision,
        recall=recall,
        f1=f1,
        accuracy_top1=accuracy_top1,
        ndcg=ndcg,
        mrr=mrr,
        map=map_k,
        k=k,
        truncated=truncated,
    )
