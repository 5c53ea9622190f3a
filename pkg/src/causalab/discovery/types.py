"""Shared discovery parameter and result types."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import Dataset
from ..errors import InvalidSpecError, SchemaError
from ..graphs import Dag, DIRECTED, Edge


@dataclass(frozen=True)
class CiResult:
    statistic: float
    p_value: float
    independent: bool


@dataclass(frozen=True)
class DiscoveryParams:
    alpha: float = 0.05
    max_cond_set: int | None = None
    lambda1: float = 0.1
    w_threshold: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise InvalidSpecError("alpha must lie strictly between 0 and 1")
        if self.w_threshold < 0:
            raise InvalidSpecError("w_threshold must be nonnegative")
        if self.max_cond_set is not None and self.max_cond_set < 0:
            raise InvalidSpecError("max_cond_set must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "max_cond_set": self.max_cond_set,
            "lambda1": self.lambda1,
            "w_threshold": self.w_threshold,
            "seed": self.seed,
        }


class WeightedDag:
    """A DAG whose adjacency is the nonzero pattern of a weight matrix.

    ``weights[i, j] != 0`` iff the edge nodes[i] -> nodes[j] exists.
    """

    def __init__(self, nodes, weights: np.ndarray):
        weights = np.asarray(weights, dtype=float)
        nodes = tuple(nodes)
        if weights.shape != (len(nodes), len(nodes)):
            raise SchemaError("weight matrix shape must be d x d")
        edges = [
            (nodes[i], nodes[j], DIRECTED, float(weights[i, j]))
            for i in range(len(nodes))
            for j in range(len(nodes))
            if weights[i, j] != 0.0
        ]
        self.graph = Dag(nodes, frozenset(Edge(*e) for e in edges))  # raises on cycle
        self.nodes = nodes
        weights.setflags(write=False)
        self.weights = weights

    def __repr__(self):
        return f"WeightedDag(nodes={self.nodes}, edges={self.graph.directed_edges()})"


def as_matrix(ds: Dataset) -> np.ndarray:
    """Validate an all-continuous, complete dataset and return its matrix."""
    if not ds.all_continuous():
        bad = [c.name for c in ds.columns if c.kind != "continuous"]
        raise SchemaError(f"continuous data required; categorical columns: {bad}")
    if not ds.is_complete():
        raise SchemaError("complete data required; impute or drop missing cells first")
    return ds.values
