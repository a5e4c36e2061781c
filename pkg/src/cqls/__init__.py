"""Chromosome-based quasi-likelihood score (cQLS) association tests for
case/control samples that include relatives."""

__version__ = "0.1.0"

from .core import NullModel, ScoreVector, TestResult, build_scores, cqls, cqls_batch
from .ibd import PairwiseIbd, assign_all, assign_labels, founder_alleles
from .kernels import BACKEND
from .mqls import mqls_pedigree
from .pedigree import Pedigree, load_pedigree

__all__ = [
    "BACKEND",
    "NullModel",
    "PairwiseIbd",
    "Pedigree",
    "ScoreVector",
    "TestResult",
    "__version__",
    "assign_all",
    "assign_labels",
    "build_scores",
    "cqls",
    "cqls_batch",
    "founder_alleles",
    "load_pedigree",
    "mqls_pedigree",
]
