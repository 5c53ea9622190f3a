"""Dataset profiling, rule-based method recommendation, runtime estimation.

The recommendation table is fixed and transparent: every recommendation
carries the text of the rule that fired. Runtime estimates multiply a
theoretical work term in (n, d) by a per-primitive cost constant measured
once by startup micro-probes.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..data import Dataset
from ..errors import CalibrationError, CapExceededError, InvalidSpecError, NoMethodError

YES = "yes"
NO = "no"
UNKNOWN = "unknown"


@dataclass(frozen=True)
class DatasetProfile:
    n: int
    d: int
    fraction_continuous: float
    gaussian: str  # yes | no | unknown
    linear: str  # yes | no | unknown
    missing_fraction: float

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "fraction_continuous": self.fraction_continuous,
            "gaussian": self.gaussian,
            "linear": self.linear,
            "missing_fraction": self.missing_fraction,
        }


_MAX_LINEARITY_PAIRS = 10
_LINEARITY_GAP = 0.05


def profile_dataset(ds: Dataset) -> DatasetProfile:
    """Characterize a dataset for method recommendation.

    Gaussianity: per-column D'Agostino skew/kurtosis test at 5%, majority
    vote over continuous columns. Linearity: R^2 gap between a linear fit and
    a linear+tanh-basis fit on the most correlated column pairs; a small gap
    votes linear.
    """
    cont = [j for j, c in enumerate(ds.columns) if c.kind == "continuous"]
    frac = len(cont) / ds.d if ds.d else 0.0
    missing = float(ds.mask.mean()) if ds.d else 0.0

    gaussian = UNKNOWN
    votes = []
    for j in cont:
        x = ds.values[~ds.mask[:, j], j]
        if x.size >= 20 and x.std() > 0:
            votes.append(stats.normaltest(x).pvalue > 0.05)
    if votes:
        gaussian = YES if sum(votes) > len(votes) / 2 else NO

    linear = UNKNOWN
    if len(cont) >= 2:
        complete = ~ds.mask[:, cont].any(axis=1)
        X = ds.values[np.ix_(complete, cont)]
        if X.shape[0] >= 20:
            corr = np.corrcoef(X.T)
            pairs = sorted(
                (
                    (-abs(corr[a, b]), a, b)
                    for a in range(len(cont))
                    for b in range(a + 1, len(cont))
                    if np.isfinite(corr[a, b])
                ),
            )[:_MAX_LINEARITY_PAIRS]
            gaps = []
            for _, a, b in pairs:
                x, y = X[:, a], X[:, b]
                if x.std() == 0 or y.std() == 0:
                    continue
                xs = (x - x.mean()) / x.std()
                gaps.append(_r2(y, [xs, np.tanh(xs)]) - _r2(y, [xs]))
            if gaps:
                linear = YES if np.median(gaps) < _LINEARITY_GAP else NO
    return DatasetProfile(
        n=ds.n,
        d=ds.d,
        fraction_continuous=frac,
        gaussian=gaussian,
        linear=linear,
        missing_fraction=missing,
    )


def _r2(y: np.ndarray, basis: list[np.ndarray]) -> float:
    A = np.column_stack([np.ones_like(y), *basis])
    beta, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ beta
    tss = float(((y - y.mean()) ** 2).sum())
    if tss == 0:
        return 0.0
    return 1.0 - float((resid**2).sum()) / tss


@dataclass(frozen=True)
class Recommendation:
    method: str
    rule: str

    def to_dict(self) -> dict:
        return {"method": self.method, "rule": self.rule}


def recommend(
    profile: DatasetProfile, goal: str, graph_present: bool = False
) -> list[Recommendation]:
    """Ordered method recommendations from the fixed rule table."""
    if goal not in ("graph", "rca", "effect"):
        raise InvalidSpecError(f"unknown goal {goal!r}")
    if profile.fraction_continuous == 0.0:
        raise NoMethodError(
            "all columns are categorical; no supported conditional-independence "
            "test or estimator applies"
        )
    if goal == "rca":
        if graph_present:
            rule = "goal=rca and a graph is present: graph-required methods first"
            return [
                Recommendation("rca_traversal", rule),
                Recommendation("rca_counterfactual", rule),
            ]
        rule = "goal=rca and no graph: graph-free Cholesky composition"
        return [Recommendation("rca_cholesky", rule)]
    if goal == "effect":
        if graph_present:
            rule = "goal=effect with a graph: backdoor-adjusted linear estimator"
        else:
            rule = (
                "goal=effect without a graph: run discovery first, then the "
                "backdoor-adjusted linear estimator"
            )
        return [Recommendation("estimate_ate_linear", rule)]

    continuous = profile.fraction_continuous == 1.0
    if continuous and profile.gaussian == NO and profile.linear == YES:
        rule = "continuous, non-Gaussian, linear: LiNGAM identifiability applies"
        recs = [
            Recommendation("direct_lingam", rule),
            Recommendation("notears", rule),
            Recommendation("pc", rule),
        ]
    elif continuous and profile.gaussian == YES:
        rule = "continuous Gaussian: constraint- and score-based methods"
        recs = [
            Recommendation("pc", rule),
            Recommendation("ges", rule),
            Recommendation("notears", rule),
        ]
    else:
        rule = "default for continuous or mixed data: constraint-based first"
        recs = [
            Recommendation("pc", rule),
            Recommendation("ges", rule),
            Recommendation("notears", rule),
        ]
    if profile.d > 50:
        demoted = [r for r in recs if r.method != "ges"]
        ges_rule = "d > 50: GES demoted to last (operator enumeration cost)"
        if any(r.method == "ges" for r in recs):
            demoted.append(Recommendation("ges", ges_rule))
        recs = demoted
    return recs


@dataclass(frozen=True)
class Calibration:
    """Per-primitive cost constants (seconds) at the reference sizes."""

    ci_test_s: float
    ols_s: float
    notears_inner_s: float
    cholesky_s: float
    ref_n: int = 2000
    ref_d: int = 5

    def to_dict(self) -> dict:
        return {
            "ci_test_s": self.ci_test_s,
            "ols_s": self.ols_s,
            "notears_inner_s": self.notears_inner_s,
            "cholesky_s": self.cholesky_s,
            "ref_n": self.ref_n,
            "ref_d": self.ref_d,
        }

    @classmethod
    def measure(cls, seed: int = 0) -> "Calibration":
        """Run the startup micro-probes: one CI test, one OLS, one inner
        NOTEARS objective evaluation, one whitening, at reference sizes."""
        from ..discovery.ci import fisher_z_from_corr
        from ..discovery.notears import smooth_objective
        from ..rca import cholesky_whiten

        ref_n, ref_d = 2000, 5
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(ref_n, ref_d))
        corr = np.corrcoef(X.T)

        def clock(fn, reps=5) -> float:
            fn()  # warm up
            t0 = time.perf_counter()
            for _ in range(reps):
                fn()
            return (time.perf_counter() - t0) / reps

        ci = clock(lambda: fisher_z_from_corr(corr, ref_n, 0, 1, [2, 3]))
        ols = clock(lambda: np.linalg.lstsq(X[:, :4], X[:, 4], rcond=None))
        W = rng.normal(scale=0.3, size=(ref_d, ref_d))
        inner = clock(lambda: smooth_objective(W, X, 1.0, 0.5))
        cov = np.cov(X.T) + np.eye(ref_d)
        chol = clock(
            lambda: cholesky_whiten(np.zeros(ref_d), cov, X[0], list(range(ref_d)))
        )
        return cls(
            ci_test_s=max(ci, 1e-7),
            ols_s=max(ols, 1e-7),
            notears_inner_s=max(inner, 1e-7),
            cholesky_s=max(chol, 1e-7),
            ref_n=ref_n,
            ref_d=ref_d,
        )


@dataclass(frozen=True)
class RuntimeEstimate:
    seconds_low: float
    seconds_mid: float
    seconds_high: float
    formula: str
    constant: float

    def __post_init__(self):
        if not (0 < self.seconds_low <= self.seconds_mid <= self.seconds_high):
            raise InvalidSpecError("runtime bounds must satisfy 0 < low <= mid <= high")

    def to_dict(self) -> dict:
        return {
            "seconds_low": self.seconds_low,
            "seconds_mid": self.seconds_mid,
            "seconds_high": self.seconds_high,
            "formula": self.formula,
            "constant": self.constant,
        }


_PC_DEGREE_CAP = 3
_NOTEARS_OUTER = 16
_NOTEARS_INNER = 250
_CHOLESKY_REF_D = 6


def estimate_runtime(
    algo: str, profile: DatasetProfile, calibration: Calibration | None
) -> RuntimeEstimate:
    """Theoretical-complexity runtime bracket: mid = formula(n, d) x probe
    constant; low/high = mid x {0.5, 3}."""
    if calibration is None:
        raise CalibrationError(
            "no calibration available: run Calibration.measure() probes first"
        )
    n, d = max(profile.n, 1), max(profile.d, 2)
    c = calibration
    n_scale = n / c.ref_n
    if algo == "pc":
        constant = c.ci_test_s
        mid = constant * n_scale * d**2 * 2 ** min(d - 1, _PC_DEGREE_CAP)
        formula = "ci_test_s * n * d^2 * 2^min(d-1, 3)"
    elif algo == "ges":
        constant = c.ols_s
        mid = constant * n_scale * d**3 * d
        formula = "ols_s * n * d^3 * iterations(=d)"
    elif algo == "notears":
        constant = c.notears_inner_s
        mid = constant * n_scale * (d / c.ref_d) ** 3 * _NOTEARS_OUTER * _NOTEARS_INNER
        formula = "notears_inner_s * n * d^3 * outer(16) * inner(250)"
    elif algo == "direct_lingam":
        constant = c.ols_s
        mid = constant * n_scale * d**3
        formula = "ols_s * n * d^3"
    elif algo == "rca_cholesky":
        if d > 10:
            raise CapExceededError(
                f"exhaustive ordering search is capped at d <= 10 (got {d})"
            )
        constant = c.cholesky_s
        ref = math.factorial(_CHOLESKY_REF_D) * _CHOLESKY_REF_D**2
        mid = constant * math.factorial(d) * d**2 / ref
        formula = "cholesky_s * d! * d^2"
    elif algo == "rca_cholesky_greedy":
        constant = c.cholesky_s
        mid = constant * (d / _CHOLESKY_REF_D) ** 5
        formula = "cholesky_s * d^5"
    elif algo == "rca_counterfactual":
        constant = c.ols_s
        mid = constant * n_scale * d**2 * 2 ** min(d, 10)
        formula = "ols_s * n * d^2 * 2^min(d, 10)"
    elif algo == "rca_traversal":
        constant = c.ols_s
        mid = constant * n_scale * d**2
        formula = "ols_s * n * d^2"
    else:
        raise InvalidSpecError(f"no runtime formula for algorithm {algo!r}")
    return RuntimeEstimate(
        seconds_low=0.5 * mid,
        seconds_mid=mid,
        seconds_high=3.0 * mid,
        formula=formula,
        constant=constant,
    )
