"""Incremental dependency-based memory-cost metrics for reading-time analysis.

The toolkit parses CoNLL-U treebanks, computes per-region maintenance
metrics (predicted heads, incomplete dependencies, completions), builds
regression-ready feature matrices with spillover lags, and evaluates the
metrics' predictive power for reading times via repeated cross-validation,
permutation tests, and per-participant strategy typology.
"""

__version__ = "0.1.0"

from memcost.errors import (
    AlignmentError,
    ConfigError,
    ContractViolation,
    FeatureBuildError,
    MemcostError,
    ParseError,
    SegmentationError,
    SingularDesignError,
    TreeValidationError,
)

__all__ = [
    "__version__",
    "MemcostError",
    "ParseError",
    "TreeValidationError",
    "SegmentationError",
    "AlignmentError",
    "FeatureBuildError",
    "ConfigError",
    "ContractViolation",
    "SingularDesignError",
]
