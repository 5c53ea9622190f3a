"""Linear causal effect estimation on a known DAG via backdoor adjustment.

The adjustment set is fixed to the treatment's parents, which is always a
valid backdoor set in a DAG. The ATE is the treatment coefficient of an OLS
regression of the outcome on [1, treatment, adjustment...], with a Gaussian
95% interval.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import InvalidQueryError, NumericError, SampleSizeError
from .graphs import Dag

Z_95 = 1.96


@dataclass(frozen=True)
class AteEstimate:
    ate: float
    stderr: float
    ci95: tuple[float, float]
    adjustment_set: frozenset[str]
    treatment: str
    outcome: str

    def to_dict(self) -> dict:
        return {
            "ate": self.ate,
            "stderr": self.stderr,
            "ci95": list(self.ci95),
            "adjustment_set": sorted(self.adjustment_set),
            "treatment": self.treatment,
            "outcome": self.outcome,
        }


def backdoor_set(g: Dag, t: str, y: str) -> set[str]:
    """Adjustment set for the effect of t on y: the parents of t.

    Rejects queries where y is an ancestor (or parent) of t, since the causal
    path then runs the wrong way.
    """
    if t == y:
        raise InvalidQueryError("treatment and outcome must differ")
    for v in (t, y):
        if v not in g.nodes:
            raise InvalidQueryError(f"node {v!r} not in graph")
    parents = set(g.parents(t))
    if y in parents:
        raise InvalidQueryError(f"{y!r} is a parent of {t!r}; no forward causal path")
    if y in g.ancestors(t):
        raise InvalidQueryError(f"{y!r} is an ancestor of {t!r}; no forward causal path")
    return parents


def estimate_ate_linear(ds: Dataset, t: str, y: str, z) -> AteEstimate:
    """OLS of y on [1, t, z...]; the ATE is the coefficient of t."""
    z = sorted(set(z))
    if t in z or y in z:
        raise InvalidQueryError("treatment and outcome cannot be adjusted for")
    cols = [t, *z]
    n = ds.n
    if n <= len(z) + 2:
        raise SampleSizeError(f"need n > |z| + 2 samples (n={n}, |z|={len(z)})")
    for name in (y, *cols):
        if ds.columns[ds.col_index(name)].kind != "continuous":
            raise NumericError(f"column {name!r} is not continuous")
    X = np.column_stack([np.ones(n), *[ds.column(c) for c in cols]])
    target = ds.column(y)
    gram = X.T @ X
    if np.linalg.matrix_rank(gram) < gram.shape[0] or np.linalg.cond(gram) > 1e12:
        raise NumericError(f"collinear regressors among {['1', *cols]}")
    gram_inv = np.linalg.inv(gram)
    beta = gram_inv @ X.T @ target
    resid = target - X @ beta
    dof = n - X.shape[1]
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * gram_inv
    ate = float(beta[1])
    stderr = float(np.sqrt(cov[1, 1]))
    return AteEstimate(
        ate=ate,
        stderr=stderr,
        ci95=(ate - Z_95 * stderr, ate + Z_95 * stderr),
        adjustment_set=frozenset(z),
        treatment=t,
        outcome=y,
    )
