"""Fisher-z conditional independence testing via partial correlation."""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import norm

from ..data import Dataset
from ..errors import NumericError, SampleSizeError
from .types import CiResult, as_matrix


def partial_correlation(corr: np.ndarray, i: int, j: int, S) -> float:
    """Partial correlation of (i, j) given S from a correlation matrix, via
    the inverse of the submatrix over [i, j] + S."""
    idx = [i, j, *sorted(S)]
    sub = corr[np.ix_(idx, idx)]
    try:
        inv = np.linalg.inv(sub)
    except np.linalg.LinAlgError:
        raise NumericError(
            f"singular correlation submatrix for ({i}, {j} | {sorted(S)})"
        ) from None
    denom = inv[0, 0] * inv[1, 1]
    if denom <= 0 or not np.isfinite(inv).all():
        raise NumericError(
            f"degenerate correlation submatrix for ({i}, {j} | {sorted(S)})"
        )
    return float(-inv[0, 1] / math.sqrt(denom))


def fisher_z_from_corr(
    corr: np.ndarray, n: int, i: int, j: int, S, alpha: float = 0.05
) -> CiResult:
    """Fisher-z test given a precomputed correlation matrix and sample size."""
    S = sorted(S)
    if n <= len(S) + 3:
        raise SampleSizeError(
            f"need n > |S| + 3 samples (n={n}, |S|={len(S)})"
        )
    r = partial_correlation(corr, i, j, S)
    r = min(1.0 - 1e-12, max(-1.0 + 1e-12, r))
    z = 0.5 * math.log((1.0 + r) / (1.0 - r))
    statistic = math.sqrt(n - len(S) - 3) * abs(z)
    p_value = float(2.0 * (1.0 - norm.cdf(statistic)))
    return CiResult(statistic=statistic, p_value=p_value, independent=p_value > alpha)


def fisher_z_test(
    ds: Dataset, i: int, j: int, S, alpha: float = 0.05
) -> CiResult:
    """Test column i independent of column j given the columns in S."""
    X = as_matrix(ds)
    idx = [i, j, *sorted(S)]
    corr = np.corrcoef(X[:, idx].T)
    # positions inside the submatrix
    return fisher_z_from_corr(corr, X.shape[0], 0, 1, range(2, len(idx)), alpha)
