"""Feature-space assembly shared by the distance-based predictors.

A FeatureSpace selects which columns of a point table act as model features
(spatial coordinates, covariates, or both) and carries per-feature scaling
fitted on the training table. Scaling to unit variance keeps degrees and
covariate units commensurable inside one Euclidean distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import UsageError
from ..grid import PointTable

MODES = ("coords", "covariates", "coords+covariates")


def raw_features(table: PointTable, mode: str) -> np.ndarray:
    """Unscaled feature matrix for a table under the given mode."""
    if mode == "coords":
        return np.column_stack([table.lon, table.lat])
    if mode == "covariates":
        if table.p == 0:
            raise UsageError("mode 'covariates' needs at least one covariate column")
        return table.covariates
    if mode == "coords+covariates":
        if table.p == 0:
            raise UsageError("mode 'coords+covariates' needs at least one covariate column")
        return np.column_stack([table.lon, table.lat, table.covariates])
    raise UsageError(f"unknown feature mode {mode!r}; expected one of {MODES}")


@dataclass(frozen=True)
class FeatureSpace:
    """Feature selection plus the scaling fitted on a training table."""

    mode: str
    means: np.ndarray
    stdevs: np.ndarray

    @classmethod
    def fit(cls, mode: str, table: PointTable) -> "FeatureSpace":
        raw = raw_features(table, mode)
        means = raw.mean(axis=0)
        stdevs = raw.std(axis=0)
        stdevs = np.where(stdevs > 0, stdevs, 1.0)
        return cls(mode, means, stdevs)

    @property
    def nvars(self) -> int:
        return len(self.means)

    def features(self, table: PointTable) -> np.ndarray:
        """Scaled feature matrix; rows align with the table's records."""
        raw = raw_features(table, self.mode)
        if raw.shape[1] != self.nvars:
            raise UsageError(
                f"feature width {raw.shape[1]} does not match fitted width {self.nvars}"
            )
        return (raw - self.means) / self.stdevs


def neighbor_search(train_feats: np.ndarray, query_feats: np.ndarray, k: int, chunk: int = 1024):
    """Exact k-nearest-neighbor search under Euclidean distance.

    Returns (indices, distances), each (nq, k), neighbors ascending by
    distance with ties broken by lower training-record index. Distances are
    computed chunk-by-chunk as explicit coordinate differences, so results
    match a brute-force scan bit for bit.
    """
    n = train_feats.shape[0]
    if not 1 <= k <= n:
        raise UsageError(f"k = {k} must lie in [1, {n}]")
    nq = query_feats.shape[0]
    indices = np.empty((nq, k), dtype=np.int64)
    distances = np.empty((nq, k))
    for start in range(0, nq, chunk):
        q = query_feats[start:start + chunk]
        diff = q[:, None, :] - train_feats[None, :, :]
        d2 = (diff * diff).sum(axis=2)
        order = np.argsort(d2, axis=1, kind="stable")[:, :k]
        indices[start:start + chunk] = order
        distances[start:start + chunk] = np.sqrt(np.take_along_axis(d2, order, axis=1))
    return indices, distances
