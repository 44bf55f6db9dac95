"""Random forest regression: bagged CART trees with per-node feature sampling.

Each tree draws its bootstrap sample and all split randomness from an
independent stream seeded by (seed, tree index), so fitting is bit-identical
run to run and across any number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..errors import ParseError, UsageError
from ..grid import PointTable

_SEED_MASK = (1 << 64) - 1

# stream tag separating the fold shuffle in tune_mtry from tree streams
_TUNE_STREAM = 0x7E5


@dataclass(frozen=True)
class RfConfig:
    ntree: int = 500
    mtry: int | str = "tune"
    min_leaf: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.ntree < 1:
            raise UsageError("ntree must be at least 1")
        if self.min_leaf < 1:
            raise UsageError("min_leaf must be at least 1")
        if isinstance(self.mtry, str):
            if self.mtry != "tune":
                raise UsageError(f"mtry must be a positive integer or 'tune', got {self.mtry!r}")
        elif self.mtry < 1:
            raise UsageError("mtry must be at least 1")


@dataclass(frozen=True)
class Tree:
    """Flat binary regression tree; feature < 0 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, x: np.ndarray) -> np.ndarray:
        nodes = np.zeros(len(x), dtype=np.int64)
        active = np.nonzero(self.feature[nodes] >= 0)[0]
        while len(active):
            ids = nodes[active]
            go_left = x[active, self.feature[ids]] <= self.threshold[ids]
            nodes[active] = np.where(go_left, self.left[ids], self.right[ids])
            active = active[self.feature[nodes[active]] >= 0]
        return self.value[nodes]

    @property
    def n_nodes(self) -> int:
        return len(self.feature)


@dataclass(frozen=True)
class Forest:
    """A fitted ensemble plus its bootstrap membership and out-of-bag error."""

    trees: tuple
    in_bag: tuple
    oob_rmse: float
    p: int
    config: RfConfig

    @property
    def ntree(self) -> int:
        return len(self.trees)


def _best_split(xn: np.ndarray, zn: np.ndarray, rng, mtry: int, min_leaf: int):
    """Lowest-SSE (feature, threshold) over mtry sampled features, or None.

    Thresholds are midpoints between consecutive sorted values, kept only
    when they fall strictly between the two values and both children reach
    min_leaf. Ties keep the earliest sampled feature, then the lowest
    threshold.
    """
    n, p = xn.shape
    feats = rng.choice(p, size=mtry, replace=False)
    best_score = math.inf
    best = None
    sizes_left = np.arange(1, n)
    sizes_right = n - sizes_left
    for f in feats:
        xs = xn[:, f]
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        zs = zn[order]
        c1 = np.cumsum(zs)
        c2 = np.cumsum(zs * zs)
        sse_left = c2[:-1] - c1[:-1] ** 2 / sizes_left
        sse_right = (c2[-1] - c2[:-1]) - (c1[-1] - c1[:-1]) ** 2 / sizes_right
        mid = (xs[:-1] + xs[1:]) / 2.0
        valid = (
            (sizes_left >= min_leaf)
            & (sizes_right >= min_leaf)
            & (xs[:-1] < mid)
            & (mid < xs[1:])
        )
        if not valid.any():
            continue
        score = np.where(valid, sse_left + sse_right, math.inf)
        i = int(np.argmin(score))
        if score[i] < best_score:
            best_score = score[i]
            best = (int(f), float(mid[i]))
    return best


def _grow_tree(x: np.ndarray, z: np.ndarray, rng, mtry: int, min_leaf: int) -> Tree:
    feature, threshold, left, right, value = [], [], [], [], []

    def grow(indices: np.ndarray) -> int:
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        zn = z[indices]
        if len(indices) < 2 * min_leaf or zn.min() == zn.max():
            value[node] = float(np.mean(zn))
            return node
        split = _best_split(x[indices], zn, rng, mtry, min_leaf)
        if split is None:
            value[node] = float(np.mean(zn))
            return node
        f, thr = split
        go_left = x[indices, f] <= thr
        left_id = grow(indices[go_left])
        right_id = grow(indices[~go_left])
        feature[node] = f
        threshold[node] = thr
        left[node] = left_id
        right[node] = right_id
        return node

    grow(np.arange(len(z)))
    return Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value),
    )


def rf_fit(train: PointTable, cfg: RfConfig, workers: int = 1) -> Forest:
    """Grow cfg.ntree trees on bootstrap samples of the training covariates.

    mtry must be a fixed integer here; resolve "tune" through tune_mtry
    first. Trees may be grown in parallel; the result is identical for any
    worker count.
    """
    z = train.require_targets()
    n, p = len(train), train.p
    if p == 0:
        raise UsageError("random forest needs at least one covariate column")
    if isinstance(cfg.mtry, str):
        raise UsageError("mtry is 'tune'; resolve it with tune_mtry before fitting")
    if cfg.mtry > p:
        raise UsageError(f"mtry = {cfg.mtry} exceeds covariate count {p}")
    x = train.covariates

    def build(tree_index: int):
        rng = np.random.default_rng([cfg.seed & _SEED_MASK, tree_index])
        boot = rng.integers(0, n, size=n)
        tree = _grow_tree(x[boot], z[boot], rng, cfg.mtry, cfg.min_leaf)
        return tree, boot

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            built = list(pool.map(build, range(cfg.ntree)))
    else:
        built = [build(t) for t in range(cfg.ntree)]

    trees = tuple(tree for tree, _ in built)
    in_bag = tuple(boot for _, boot in built)

    oob_sum = np.zeros(n)
    oob_count = np.zeros(n, dtype=np.int64)
    all_idx = np.arange(n)
    for tree, boot in built:
        oob = np.setdiff1d(all_idx, boot, assume_unique=False)
        if len(oob):
            oob_sum[oob] += tree.predict(x[oob])
            oob_count[oob] += 1
    covered = oob_count > 0
    if covered.any():
        residual = oob_sum[covered] / oob_count[covered] - z[covered]
        oob_rmse = float(np.sqrt(np.mean(residual * residual)))
    else:
        oob_rmse = float("nan")
    return Forest(trees, in_bag, oob_rmse, p, cfg)


def rf_predict(forest: Forest, queries: PointTable) -> np.ndarray:
    """Mean over all trees of the leaf each query routes to."""
    if queries.p != forest.p:
        raise UsageError(f"query covariate width {queries.p} does not match fitted {forest.p}")
    x = queries.covariates
    total = np.zeros(len(queries))
    for tree in forest.trees:
        total += tree.predict(x)
    return total / forest.ntree


def default_mtry_grid(p: int) -> list[int]:
    """Candidate mtry values 2 .. p-1 (one less than the covariate count)."""
    if p <= 2:
        return [max(1, p - 1)]
    return list(range(2, p))


def tune_mtry(
    train: PointTable, cfg: RfConfig, candidates: list[int] | None = None, folds: int = 10
) -> int:
    """Pick the candidate mtry with the lowest mean k-fold RMSE.

    Records are shuffled once by a seeded stream and split into near-equal
    folds; every candidate sees the same folds. Ties go to the smaller mtry.
    """
    train.require_targets()
    n, p = len(train), train.p
    if candidates is None:
        candidates = default_mtry_grid(p)
    if not candidates:
        raise UsageError("tune_mtry needs at least one candidate")
    candidates = sorted(set(int(c) for c in candidates))
    if candidates[0] < 1 or candidates[-1] > p:
        raise UsageError(f"mtry candidates must lie in [1, {p}]")
    if folds < 2:
        raise UsageError("tune_mtry needs at least 2 folds")
    if n < folds:
        raise UsageError(f"{n} records cannot fill {folds} folds")

    rng = np.random.default_rng([cfg.seed & _SEED_MASK, _TUNE_STREAM])
    fold_indices = np.array_split(rng.permutation(n), folds)
    mean_rmse = np.empty(len(candidates))
    for ci, cand in enumerate(candidates):
        fold_rmse = np.empty(folds)
        for fi, test_idx in enumerate(fold_indices):
            keep = np.ones(n, dtype=bool)
            keep[test_idx] = False
            fitted = rf_fit(train.subset(keep), replace(cfg, mtry=cand))
            pred = rf_predict(fitted, train.subset(test_idx))
            err = pred - train.target[test_idx]
            fold_rmse[fi] = np.sqrt(np.mean(err * err))
        mean_rmse[ci] = np.mean(fold_rmse)
    return candidates[int(np.argmin(mean_rmse))]


def serialize_forest(forest: Forest) -> str:
    """Flat text serialization: a forest header, then one line per node."""
    cfg = forest.config
    lines = [
        "forest "
        f"ntree={forest.ntree} p={forest.p} min_leaf={cfg.min_leaf} "
        f"seed={cfg.seed} mtry={cfg.mtry} oob_rmse={forest.oob_rmse!r}"
    ]
    for t, tree in enumerate(forest.trees):
        lines.append(f"tree {t} nodes={tree.n_nodes}")
        for i in range(tree.n_nodes):
            if tree.feature[i] < 0:
                lines.append(f"{i} leaf {float(tree.value[i])!r}")
            else:
                lines.append(
                    f"{i} split {tree.feature[i]} {float(tree.threshold[i])!r} "
                    f"{tree.left[i]} {tree.right[i]}"
                )
    return "\n".join(lines) + "\n"


def write_forest(forest: Forest, path) -> None:
    Path(path).write_text(serialize_forest(forest))


def read_forest(path) -> Forest:
    """Read a forest written by :func:`write_forest`.

    Bootstrap membership is a fit-time artifact and is not serialized; the
    reloaded forest carries empty membership but predicts identically.
    """
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("forest "):
        raise ParseError("missing forest header", path=path, line=1)
    header = {}
    for token in lines[0].split()[1:]:
        key, _, val = token.partition("=")
        header[key] = val
    try:
        ntree = int(header["ntree"])
        p = int(header["p"])
        mtry = header["mtry"] if header["mtry"] == "tune" else int(header["mtry"])
        cfg = RfConfig(
            ntree=ntree, mtry=mtry, min_leaf=int(header["min_leaf"]), seed=int(header["seed"])
        )
        oob_rmse = float(header["oob_rmse"])
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad forest header: {exc}", path=path, line=1) from exc

    trees = []
    i = 1
    for t in range(ntree):
        if i >= len(lines) or not lines[i].startswith(f"tree {t} "):
            raise ParseError(f"expected 'tree {t}' header", path=path, line=i + 1)
        n_nodes = int(lines[i].split("nodes=")[1])
        feature = np.empty(n_nodes, dtype=np.int64)
        threshold = np.zeros(n_nodes)
        left = np.full(n_nodes, -1, dtype=np.int64)
        right = np.full(n_nodes, -1, dtype=np.int64)
        value = np.zeros(n_nodes)
        for node in range(n_nodes):
            i += 1
            try:
                parts = lines[i].split()
                if int(parts[0]) != node:
                    raise ValueError(f"node id {parts[0]} out of order")
                if parts[1] == "leaf":
                    feature[node] = -1
                    value[node] = float(parts[2])
                elif parts[1] == "split":
                    feature[node] = int(parts[2])
                    threshold[node] = float(parts[3])
                    left[node] = int(parts[4])
                    right[node] = int(parts[5])
                else:
                    raise ValueError(f"unknown node kind {parts[1]!r}")
            except (IndexError, ValueError) as exc:
                raise ParseError(f"bad node line: {exc}", path=path, line=i + 1) from exc
        trees.append(Tree(feature, threshold, left, right, value))
        i += 1
    return Forest(tuple(trees), (), oob_rmse, p, cfg)
