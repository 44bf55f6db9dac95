"""Local polynomial regression with leave-one-out degree selection.

For each query: take the k nearest training records, pick the polynomial
degree whose leave-one-out error over those neighbors is smallest (ties to
the lower degree), refit that degree on all k neighbors, and evaluate at the
query. Features are centered on the query before building monomials, so the
fitted constant term is the prediction and the basis stays well conditioned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from ..errors import UsageError
from ..grid import PointTable
from .features import FeatureSpace, neighbor_search
from .knn import neighbor_mean

# LOO error sums closer than this (scaled by the targets' magnitude) are
# ties; fitting noise on exactly-polynomial data lands far below it
TIE_REL = 1e-10

# singular-value cutoff for rank-deficient least squares, relative to the
# largest singular value
RCOND = 1e-10


@dataclass(frozen=True)
class HyppoConfig:
    k: int
    max_degree: int = 3

    def __post_init__(self):
        if self.k < 2:
            raise UsageError("hyppo needs k >= 2 for leave-one-out selection")
        if self.max_degree < 0:
            raise UsageError("max_degree must be non-negative")


def monomial_count(nvars: int, degree: int) -> int:
    """Dimension of the polynomial space of total degree <= degree in nvars."""
    return math.comb(nvars + degree, nvars)


def monomial_exponents(nvars: int, degree: int) -> list[tuple[int, ...]]:
    """Exponent tuples of all monomials with total degree <= degree, graded
    order, constant term first."""
    exponents = []
    for total in range(degree + 1):
        for combo in combinations_with_replacement(range(nvars), total):
            e = [0] * nvars
            for var in combo:
                e[var] += 1
            exponents.append(tuple(e))
    return exponents


def design_matrix(features: np.ndarray, exponents: list[tuple[int, ...]]) -> np.ndarray:
    """Monomial design matrix; works on any (..., k, nvars) stack."""
    feats = np.asarray(features, dtype=float)
    out = np.ones(feats.shape[:-1] + (len(exponents),))
    for j, exp in enumerate(exponents):
        for var, power in enumerate(exp):
            if power:
                out[..., j] *= feats[..., var] ** power
    return out


def admissible_degrees(nvars: int, k: int, max_degree: int) -> list[int]:
    """Candidate degrees whose monomial count fits k - 1 leave-one-out points."""
    return [d for d in range(max_degree + 1) if monomial_count(nvars, d) <= k - 1]


@dataclass(frozen=True)
class PolyFit:
    """A fitted polynomial in nvars variables."""

    coefficients: np.ndarray
    degree: int
    nvars: int
    rank_deficient: bool = False

    def __call__(self, features: np.ndarray) -> np.ndarray:
        x = design_matrix(np.atleast_2d(np.asarray(features, dtype=float)),
                          monomial_exponents(self.nvars, self.degree))
        return x @ self.coefficients


def fit_polynomial(features: np.ndarray, targets: np.ndarray, degree: int) -> PolyFit:
    """Least-squares fit over the full monomial basis of total degree <= degree.

    Rank-deficient systems are resolved by the pseudo-inverse with cutoff
    sigma < 1e-10 * sigma_max and flagged on the result.
    """
    feats = np.atleast_2d(np.asarray(features, dtype=float))
    z = np.asarray(targets, dtype=float)
    if len(feats) < 1:
        raise UsageError("fit_polynomial needs at least one point")
    if degree == 0:
        return PolyFit(np.array([neighbor_mean(z)]), 0, feats.shape[1])
    exps = monomial_exponents(feats.shape[1], degree)
    x = design_matrix(feats, exps)
    coef, _, rank, _ = np.linalg.lstsq(x, z, rcond=RCOND)
    return PolyFit(coef, degree, feats.shape[1], rank < len(exps))


def _tie_tolerance(targets: np.ndarray) -> float:
    return TIE_REL * (1.0 + float(np.mean(targets * targets)))


def _loo_error_slow(features: np.ndarray, targets: np.ndarray, degree: int) -> float:
    """Reference leave-one-out error sum: one explicit refit per held-out point."""
    k = len(targets)
    total = 0.0
    for i in range(k):
        mask = np.arange(k) != i
        fit = fit_polynomial(features[mask], targets[mask], degree)
        pred = fit(features[i:i + 1])[0]
        total += (targets[i] - pred) ** 2
    return total


def hyppo_select_degree(features: np.ndarray, targets: np.ndarray, max_degree: int) -> int:
    """Pick the candidate degree with the lowest leave-one-out error sum.

    Each of the k neighbors is held out once; a polynomial of the candidate
    degree is fit on the rest and scored at the held-out point. Error sums
    within a small magnitude-relative tolerance of the minimum count as ties,
    and ties go to the lower degree.
    """
    feats = np.atleast_2d(np.asarray(features, dtype=float))
    z = np.asarray(targets, dtype=float)
    k = len(z)
    if k < 2:
        raise UsageError("degree selection needs at least 2 neighbors")
    degrees = admissible_degrees(feats.shape[1], k, max_degree)
    errors = [_loo_error_slow(feats, z, d) for d in degrees]
    tol = _tie_tolerance(z)
    best = min(errors)
    for d, e in zip(degrees, errors):
        if e <= best + tol:
            return d
    return degrees[-1]


def _loo_errors_batch(centered: np.ndarray, z: np.ndarray, degree: int) -> np.ndarray:
    """LOO error sums for one candidate degree across a chunk of queries.

    centered: (c, k, nvars) neighbor features centered on each query;
    z: (c, k) neighbor targets. Uses rank-one downdates of the full normal
    equations; any query the batched solver cannot handle falls back to the
    explicit per-fold refit.
    """
    c, k = z.shape
    if degree == 0:
        loo_mean = (z.sum(axis=1, keepdims=True) - z) / (k - 1)
        return ((z - loo_mean) ** 2).sum(axis=1)
    exps = monomial_exponents(centered.shape[2], degree)
    x = design_matrix(centered, exps)
    gram = np.einsum("cki,ckj->cij", x, x)
    rhs = np.einsum("cki,ck->ci", x, z)
    gram_folds = gram[:, None, :, :] - x[:, :, :, None] * x[:, :, None, :]
    rhs_folds = rhs[:, None, :] - x * z[:, :, None]
    try:
        coef = np.linalg.solve(gram_folds, rhs_folds[..., None])[..., 0]
        pred = np.einsum("ckm,ckm->ck", x, coef)
        errors = ((pred - z) ** 2).sum(axis=1)
    except np.linalg.LinAlgError:
        errors = np.full(c, np.nan)
    bad = ~np.isfinite(errors)
    for i in np.nonzero(bad)[0]:
        errors[i] = _loo_error_slow(centered[i], z[i], degree)
    return errors


def hyppo_predict_with_degrees(
    train: PointTable,
    queries: PointTable,
    cfg: HyppoConfig,
    space: FeatureSpace,
    target_range: tuple[float, float] | None = None,
    chunk: int = 512,
):
    """Predictions plus the per-query selected degree.

    Degree 0 predicts through the same neighbor-mean reduction as uniform
    kNN, so the two agree bit for bit on identical neighborhoods.
    """
    z = train.require_targets()
    if cfg.k > len(train):
        raise UsageError(f"k = {cfg.k} exceeds training size {len(train)}")
    train_f = space.features(train)
    query_f = space.features(queries)
    idx, _ = neighbor_search(train_f, query_f, cfg.k)
    candidates = admissible_degrees(space.nvars, cfg.k, cfg.max_degree)
    exps_by_degree = {d: monomial_exponents(space.nvars, d) for d in candidates}

    nq = len(queries)
    predictions = np.empty(nq)
    degrees = np.empty(nq, dtype=np.int64)
    for start in range(0, nq, chunk):
        rows = slice(start, min(start + chunk, nq))
        centered = train_f[idx[rows]] - query_f[rows][:, None, :]
        neighbor_z = z[idx[rows]]
        errors = np.empty((len(candidates), neighbor_z.shape[0]))
        for ci, d in enumerate(candidates):
            errors[ci] = _loo_errors_batch(centered, neighbor_z, d)
        tol = TIE_REL * (1.0 + (neighbor_z * neighbor_z).mean(axis=1))
        tied = errors <= errors.min(axis=0) + tol
        selected = tied.argmax(axis=0)
        for i in range(neighbor_z.shape[0]):
            d = candidates[selected[i]]
            degrees[start + i] = d
            if d == 0:
                predictions[start + i] = neighbor_mean(neighbor_z[i])
            else:
                x = design_matrix(centered[i], exps_by_degree[d])
                coef = np.linalg.lstsq(x, neighbor_z[i], rcond=RCOND)[0]
                predictions[start + i] = coef[0]
    if target_range is not None:
        lo, hi = target_range
        predictions = np.clip(predictions, lo, hi)
    return predictions, degrees


def hyppo_predict(
    train: PointTable,
    queries: PointTable,
    cfg: HyppoConfig,
    space: FeatureSpace,
    target_range: tuple[float, float] | None = None,
) -> np.ndarray:
    """Local polynomial prediction at each query; see module docstring."""
    predictions, _ = hyppo_predict_with_degrees(train, queries, cfg, space, target_range)
    return predictions
