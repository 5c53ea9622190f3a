"""Causal structure learning: CI testing, PC, GES, NOTEARS, DirectLiNGAM."""

from .types import CiResult, DiscoveryParams, WeightedDag
from .ci import fisher_z_test, fisher_z_from_corr
from .pc import pc
from .ges import ges
from .notears import notears_linear
from .lingam import direct_lingam

__all__ = [
    "CiResult",
    "DiscoveryParams",
    "WeightedDag",
    "fisher_z_test",
    "fisher_z_from_corr",
    "pc",
    "ges",
    "notears_linear",
    "direct_lingam",
]
