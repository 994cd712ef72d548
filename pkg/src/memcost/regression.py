"""Linear models, repeated k-fold cross-validation, and sign-flip tests.

The estimator is ordinary least squares through a pivoted orthogonal
decomposition: it minimizes squared error exactly and refuses rank-deficient
designs (naming the collinear columns) instead of regularizing. All
randomness is derived from explicit seeds; fold shuffles, Monte-Carlo
permutations, and fold fits each draw from their own (seed, stream) RNG so
results are independent of execution order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from memcost.errors import ContractViolation, SingularDesignError

#: Sign-flip tests enumerate all assignments up to this many items.
EXHAUSTIVE_LIMIT = 20

_MC_CHUNK_ELEMENTS = 4_000_000


@dataclass(frozen=True)
class ModelSpec:
    """A predictor set for a linear model; the intercept is always present."""

    predictors: tuple[str, ...]
    standardize: bool = True

    def __post_init__(self):
        object.__setattr__(self, "predictors", tuple(self.predictors))
        if len(set(self.predictors)) != len(self.predictors):
            raise ContractViolation(f"duplicate predictors in {self.predictors}")
        if "rt" in self.predictors:
            raise ContractViolation("the dependent variable cannot be a predictor")


@dataclass
class OlsFit:
    coefficients: np.ndarray
    residuals: np.ndarray
    column_names: list[str]


def fit_ols(X: np.ndarray, y: np.ndarray, column_names: list[str] | None = None) -> OlsFit:
    """Least-squares fit of y on X (X must already contain the intercept
    column). Raises SingularDesignError on rank deficiency."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2:
        raise ContractViolation("design matrix must be 2-dimensional")
    n, p = X.shape
    if n < p:
        raise ContractViolation(f"need at least as many rows ({n}) as columns ({p})")
    if column_names is None:
        column_names = [f"col{i}" for i in range(p)]
    q, r, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(n, p) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < p:
        names = [column_names[i] for i in piv[rank:]]
        raise SingularDesignError("design matrix is rank deficient", columns=sorted(names))
    beta_pivoted = scipy.linalg.solve_triangular(r, q.T @ y)
    beta = np.empty(p)
    beta[piv] = beta_pivoted
    return OlsFit(coefficients=beta, residuals=y - X @ beta, column_names=list(column_names))


@dataclass
class LinearFit:
    """A fitted model over named predictors, reporting raw-scale coefficients.

    When fitted with standardization, predictions are computed in the
    standardized parametrization; ``coefficients`` are always mapped back
    to the units of the input variables ([intercept, *predictors]).
    """

    predictor_names: tuple[str, ...]
    coefficients: np.ndarray
    _beta_internal: np.ndarray = field(repr=False, default=None)
    _mean: np.ndarray | None = field(repr=False, default=None)
    _scale: np.ndarray | None = field(repr=False, default=None)

    def coefficient(self, name: str) -> float:
        if name == "intercept":
            return float(self.coefficients[0])
        return float(self.coefficients[1 + self.predictor_names.index(name)])

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self._mean is not None:
            Xs = (X - self._mean) / self._scale
            return self._beta_internal[0] + Xs @ self._beta_internal[1:]
        return self._beta_internal[0] + X @ self._beta_internal[1:]


def fit_linear(
    X: np.ndarray,
    y: np.ndarray,
    predictor_names: tuple[str, ...],
    standardize: bool = True,
) -> LinearFit:
    """Fit y ~ intercept + X, optionally z-scoring predictors first."""
    X = np.asarray(X, dtype=float)
    n = len(y)
    names = ["intercept", *predictor_names]
    mean = scale = None
    if standardize and X.shape[1] > 0:
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        constant = np.nonzero(scale == 0)[0]
        if constant.size:
            raise SingularDesignError(
                "constant predictor in training split",
                columns=sorted(predictor_names[i] for i in constant),
            )
        design = np.column_stack([np.ones(n), (X - mean) / scale])
    else:
        design = np.column_stack([np.ones(n), X])
    fit = fit_ols(design, y, column_names=names)
    beta_internal = fit.coefficients
    if mean is not None:
        slopes = beta_internal[1:] / scale
        intercept = beta_internal[0] - np.sum(beta_internal[1:] * mean / scale)
        coefficients = np.concatenate([[intercept], slopes])
    else:
        coefficients = beta_internal.copy()
    return LinearFit(
        predictor_names=tuple(predictor_names),
        coefficients=coefficients,
        _beta_internal=beta_internal,
        _mean=mean,
        _scale=scale,
    )


def column_data(rows, names: list[str]) -> dict[str, np.ndarray]:
    """Extract named attributes from feature rows as float arrays."""
    out = {}
    for name in names:
        out[name] = np.array([float(getattr(r, name)) for r in rows], dtype=float)
    return out


def design_matrix(columns: dict[str, np.ndarray], predictors: tuple[str, ...]) -> np.ndarray:
    if not predictors:
        return np.empty((len(next(iter(columns.values()))), 0))
    missing = [p for p in predictors if p not in columns]
    if missing:
        raise ContractViolation(f"unknown predictors: {missing}")
    return np.column_stack([columns[p] for p in predictors])


def _rng(seed) -> np.random.Generator:
    if seed is None:
        raise ContractViolation("a seed is required (no wall-clock default)")
    return np.random.default_rng(seed)


def derive_seed(seed, *indices: int) -> list[int]:
    """RNG entropy for an independent work unit: (seed, unit indices)."""
    if seed is None:
        raise ContractViolation("a seed is required (no wall-clock default)")
    base = [seed] if isinstance(seed, int) else list(seed)
    return base + list(indices)


def _signed_sums(d: np.ndarray) -> np.ndarray:
    """All 2^n signed sums of d, by repeated doubling."""
    sums = np.zeros(1)
    for x in d:
        sums = np.concatenate([sums + x, sums - x])
    return sums


def sign_flip_pvalues(
    d: np.ndarray, n_perm: int = 10_000, seed=None
) -> tuple[float, float]:
    """One-sided sign-flip p-values (p_above, p_below) for mean(d) vs 0.

    Exhaustive over all 2^n assignments when len(d) <= EXHAUSTIVE_LIMIT
    (p = count / 2^n including the identity); Monte Carlo with the
    (hits + 1) / (n_perm + 1) estimator otherwise.
    """
    d = np.asarray(d, dtype=float)
    n = len(d)
    if n == 0:
        raise ContractViolation("empty difference vector")
    observed = float(np.sum(d))
    atol = 1e-12 * (float(np.sum(np.abs(d))) + 1.0)
    if n <= EXHAUSTIVE_LIMIT:
        sums = _signed_sums(d)
        p_above = float(np.sum(sums >= observed - atol)) / len(sums)
        p_below = float(np.sum(sums <= observed + atol)) / len(sums)
        return p_above, p_below
    rng = _rng(seed)
    hits_above = 0
    hits_below = 0
    remaining = n_perm
    chunk = max(1, _MC_CHUNK_ELEMENTS // n)
    while remaining > 0:
        m = min(chunk, remaining)
        signs = rng.integers(0, 2, size=(m, n), dtype=np.int8).astype(float) * 2.0 - 1.0
        sums = signs @ d
        hits_above += int(np.sum(sums >= observed - atol))
        hits_below += int(np.sum(sums <= observed + atol))
        remaining -= m
    return (hits_above + 1) / (n_perm + 1), (hits_below + 1) / (n_perm + 1)


def permutation_test_errors(
    base_errors: np.ndarray,
    full_errors: np.ndarray,
    n_perm: int = 10_000,
    seed=None,
) -> float:
    """One-sided paired sign-flip test that the full model's per-item errors
    are smaller (i.e. that the error decrease is above zero)."""
    base_errors = np.asarray(base_errors, dtype=float)
    full_errors = np.asarray(full_errors, dtype=float)
    if base_errors.shape != full_errors.shape:
        raise ContractViolation("error vectors must be index-aligned")
    p_above, _ = sign_flip_pvalues(base_errors - full_errors, n_perm=n_perm, seed=seed)
    return p_above


def _fold_indices(n: int, k: int, rng: np.random.Generator, groups=None) -> list[np.ndarray]:
    """Shuffle rows (or whole groups) into k folds."""
    if k < 2:
        raise ContractViolation(f"k must be >= 2, got {k}")
    if groups is None:
        return [f for f in np.array_split(rng.permutation(n), k)]
    groups = np.asarray(groups)
    unique = np.unique(groups)
    order = rng.permutation(len(unique))
    folds: list[list[int]] = [[] for _ in range(k)]
    for j, g in enumerate(unique[order]):
        folds[j % k].extend(np.nonzero(groups == g)[0])
    return [np.array(sorted(f), dtype=int) for f in folds]


@dataclass
class FoldCoefficientResult:
    predictor: str
    coefficients: np.ndarray
    p_above: float
    p_below: float
    side: int  # +1 slowdown, -1 speedup, 0 neither
    alpha: float

    @property
    def p_value(self) -> float:
        if self.side > 0:
            return self.p_above
        if self.side < 0:
            return self.p_below
        return min(self.p_above, self.p_below)

    @property
    def mean(self) -> float:
        return float(np.mean(self.coefficients))


def fold_fit_coefficients(
    y: np.ndarray,
    columns: dict[str, np.ndarray],
    spec: ModelSpec,
    k: int = 10,
    seed=None,
) -> dict[str, np.ndarray]:
    """Split the data into k folds and fit the model to each fold
    separately, returning per-fold raw-scale coefficients by name."""
    X = design_matrix(columns, spec.predictors)
    rng = _rng(seed)
    folds = _fold_indices(len(y), k, rng)
    names = ["intercept", *spec.predictors]
    collected = {name: [] for name in names}
    for fold in folds:
        fit = fit_linear(X[fold], y[fold], spec.predictors, standardize=spec.standardize)
        for i, name in enumerate(names):
            collected[name].append(float(fit.coefficients[i]))
    return {name: np.array(vals) for name, vals in collected.items()}


def fold_coefficient_test(
    y: np.ndarray,
    columns: dict[str, np.ndarray],
    spec: ModelSpec,
    target: str,
    k: int = 10,
    seed=None,
    alpha: float = 0.05,
    n_perm: int = 10_000,
) -> FoldCoefficientResult:
    """Fold-distribution sign-flip test of whether the target predictor's
    mean coefficient is above or below zero (two one-sided tests)."""
    if target not in spec.predictors:
        raise ContractViolation(f"target {target!r} not among predictors {spec.predictors}")
    coefficients = fold_fit_coefficients(y, columns, spec, k=k, seed=seed)[target]
    p_above, p_below = sign_flip_pvalues(coefficients, n_perm=n_perm, seed=seed)
    side = 0
    if p_above < alpha:
        side = 1
    elif p_below < alpha:
        side = -1
    return FoldCoefficientResult(
        predictor=target,
        coefficients=coefficients,
        p_above=p_above,
        p_below=p_below,
        side=side,
        alpha=alpha,
    )


@dataclass
class EvalResult:
    """Cross-validated comparison of nested linear models."""

    base_predictors: tuple[str, ...]
    full_predictors: tuple[str, ...]
    n_items: int
    k: int
    repeats: int
    n_perm: int
    seed: int
    base_errors: np.ndarray
    full_errors: np.ndarray
    delta_mse: float
    p_value: float
    fold_coefficients: dict[str, np.ndarray]
    predictor_summary: dict[str, dict]

    @property
    def base_mse(self) -> float:
        return float(np.mean(self.base_errors))

    @property
    def full_mse(self) -> float:
        return float(np.mean(self.full_errors))

    def to_json_dict(self) -> dict:
        return {
            "base_predictors": list(self.base_predictors),
            "full_predictors": list(self.full_predictors),
            "n_items": self.n_items,
            "k": self.k,
            "repeats": self.repeats,
            "n_perm": self.n_perm,
            "seed": self.seed,
            "base_mse": self.base_mse,
            "full_mse": self.full_mse,
            "delta_mse": self.delta_mse,
            "p_value": self.p_value,
            "surprisal_unit": "bits",
            "fold_coefficients": {k: list(v) for k, v in self.fold_coefficients.items()},
            "predictor_summary": self.predictor_summary,
            "base_errors": list(self.base_errors),
            "full_errors": list(self.full_errors),
        }


def cross_validate(
    y: np.ndarray,
    columns: dict[str, np.ndarray],
    base: ModelSpec,
    full: ModelSpec,
    k: int = 10,
    repeats: int = 50,
    n_perm: int = 10_000,
    seed=None,
    groups=None,
) -> EvalResult:
    """Repeated k-fold CV of base vs full model.

    Per repeat, a fresh seeded shuffle assigns rows to folds; every row's
    held-out squared error under both models is recorded and averaged over
    repeats at the item level. delta_mse = base MSE - full MSE, tested with
    a one-sided paired sign-flip permutation test.
    """
    if seed is None:
        raise ContractViolation("a seed is required (no wall-clock default)")
    if not set(base.predictors) <= set(full.predictors):
        raise ContractViolation("base predictors must be a subset of full predictors")
    y = np.asarray(y, dtype=float)
    n = len(y)
    p_full = len(full.predictors) + 1
    if n < 10 * p_full:
        raise ContractViolation(
            f"need at least 10 rows per column of the full model ({10 * p_full}), got {n}"
        )
    X_base = design_matrix(columns, base.predictors)
    X_full = design_matrix(columns, full.predictors)

    base_sum = np.zeros(n)
    full_sum = np.zeros(n)
    for r in range(repeats):
        rng = np.random.default_rng([seed, 0, r])
        for fold in _fold_indices(n, k, rng, groups=groups):
            train = np.setdiff1d(np.arange(n), fold, assume_unique=False)
            fit_base = fit_linear(
                X_base[train], y[train], base.predictors, standardize=base.standardize
            )
            fit_full = fit_linear(
                X_full[train], y[train], full.predictors, standardize=full.standardize
            )
            base_sum[fold] += (y[fold] - fit_base.predict(X_base[fold])) ** 2
            full_sum[fold] += (y[fold] - fit_full.predict(X_full[fold])) ** 2
    base_errors = base_sum / repeats
    full_errors = full_sum / repeats
    delta_mse = float(np.mean(base_errors) - np.mean(full_errors))
    p_value = permutation_test_errors(base_errors, full_errors, n_perm=n_perm, seed=[seed, 1])

    fold_coefficients = fold_fit_coefficients(y, columns, full, k=k, seed=[seed, 2])
    summary = {}
    for name in full.predictors:
        if name in base.predictors:
            continue
        p_above, p_below = sign_flip_pvalues(
            fold_coefficients[name], n_perm=n_perm, seed=[seed, 3]
        )
        side = 1 if p_above < 0.05 else (-1 if p_below < 0.05 else 0)
        summary[name] = {
            "mean_coefficient": float(np.mean(fold_coefficients[name])),
            "p_above": p_above,
            "p_below": p_below,
            "side": side,
        }
    return EvalResult(
        base_predictors=base.predictors,
        full_predictors=full.predictors,
        n_items=n,
        k=k,
        repeats=repeats,
        n_perm=n_perm,
        seed=seed if isinstance(seed, int) else list(seed),
        base_errors=base_errors,
        full_errors=full_errors,
        delta_mse=delta_mse,
        p_value=p_value,
        fold_coefficients=fold_coefficients,
        predictor_summary=summary,
    )
