"""DirectLiNGAM: causal ordering for linear non-Gaussian data.

The most exogenous variable is selected by the pairwise likelihood-ratio
measure built on the maximum-entropy differential-entropy approximation,
then regressed out of the remainder; repeating yields a causal order.
Weights come from ordinary least squares along that order, pruned on a
standardized scale.
"""

from __future__ import annotations

import numpy as np

from ..data import Dataset
from ..errors import SchemaError
from .types import DiscoveryParams, WeightedDag, as_matrix

# Constants of the maximum-entropy approximation of differential entropy.
K1 = 79.047
K2 = 7.4129
GAMMA = 0.37457


def _entropy(u: np.ndarray) -> float:
    """Entropy approximation for a standardized variable."""
    return (
        (1.0 + np.log(2.0 * np.pi)) / 2.0
        - K1 * (np.mean(np.log(np.cosh(u))) - GAMMA) ** 2
        - K2 * np.mean(u * np.exp(-(u**2) / 2.0)) ** 2
    )


def _residual(xi: np.ndarray, xj: np.ndarray) -> np.ndarray:
    """Residual of xi regressed on xj."""
    return xi - (np.cov(xi, xj, bias=True)[0, 1] / np.var(xj)) * xj


def _pair_measure(xi: np.ndarray, xj: np.ndarray) -> float:
    """Log-likelihood-ratio difference for the direction xi -> xj."""
    xi_std = (xi - xi.mean()) / xi.std()
    xj_std = (xj - xj.mean()) / xj.std()
    ri_j = _residual(xi_std, xj_std)
    rj_i = _residual(xj_std, xi_std)
    return (_entropy(xj_std) + _entropy(ri_j / ri_j.std())) - (
        _entropy(xi_std) + _entropy(rj_i / rj_i.std())
    )


def causal_order(X: np.ndarray) -> list[int]:
    """Iteratively extract the most exogenous column index."""
    d = X.shape[1]
    U = list(range(d))
    X_work = X.copy().astype(float)
    order: list[int] = []
    for _ in range(d):
        if len(U) == 1:
            order.append(U[0])
            break
        scores = []
        for i in U:
            total = 0.0
            for j in U:
                if i == j:
                    continue
                total += min(0.0, _pair_measure(X_work[:, i], X_work[:, j])) ** 2
            scores.append(-total)
        m = U[int(np.argmax(scores))]
        order.append(m)
        U = [i for i in U if i != m]
        for i in U:
            X_work[:, i] = _residual(X_work[:, i], X_work[:, m])
    return order


def direct_lingam(ds: Dataset, params: DiscoveryParams | None = None) -> WeightedDag:
    """Recover a weighted DAG assuming linear mechanisms, non-Gaussian noise.

    After ordering, each variable is regressed on all its predecessors;
    weights whose standardized magnitude |w| * sigma_from / sigma_to falls
    below w_threshold are pruned.
    """
    params = params or DiscoveryParams()
    X = as_matrix(ds)
    if X.shape[1] < 2:
        raise SchemaError("DirectLiNGAM needs at least two columns")
    order = causal_order(X)
    d = X.shape[1]
    W = np.zeros((d, d))
    sigma = X.std(axis=0)
    for pos in range(1, d):
        target = order[pos]
        preds = order[:pos]
        A = np.column_stack([np.ones(X.shape[0]), X[:, preds]])
        coef, *_ = np.linalg.lstsq(A, X[:, target], rcond=None)
        for p_idx, w in zip(preds, coef[1:]):
            scale = sigma[p_idx] / sigma[target] if sigma[target] > 0 else 0.0
            if abs(w) * scale >= params.w_threshold:
                W[p_idx, target] = w
    return WeightedDag(ds.column_names, W)
