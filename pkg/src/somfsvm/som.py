"""Online Kohonen self-organizing map used to partition the input space."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import DataError, ParameterError

TOPOLOGIES = ("rectangular", "hexagonal")
# radius used in place of an exact zero when decaying geometrically
_RADIUS_FLOOR = 1e-3


@dataclass(frozen=True)
class SomConfig:
    rows: int = 3
    cols: int = 3
    topology: str = "rectangular"
    epochs: int = 20
    lr_initial: float = 0.5
    lr_final: float = 0.01
    radius_initial: float = 1.5
    radius_final: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ParameterError("grid dimensions must be positive")
        if self.topology not in TOPOLOGIES:
            raise ParameterError(f"topology must be one of {TOPOLOGIES}")
        if self.epochs < 0:
            raise ParameterError("epochs must be >= 0")
        if not (1 >= self.lr_initial >= self.lr_final > 0):
            raise ParameterError("need 1 >= lr_initial >= lr_final > 0")
        if not (self.radius_initial >= self.radius_final >= 0):
            raise ParameterError("need radius_initial >= radius_final >= 0")

    @property
    def n_nodes(self):
        return self.rows * self.cols

    def grid_positions(self) -> np.ndarray:
        r, c = np.divmod(np.arange(self.n_nodes), self.cols)
        if self.topology == "hexagonal":
            return np.column_stack([c + 0.5 * (r % 2), r * np.sqrt(3) / 2])
        return np.column_stack([c, r]).astype(float)


@dataclass(frozen=True)
class SomMap:
    config: SomConfig
    weights: np.ndarray  # (n_nodes, dim) reference vectors
    trained: bool = False

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != self.config.n_nodes:
            raise ParameterError("weights must be (rows*cols, dim)")
        object.__setattr__(self, "weights", w)

    @property
    def dim(self):
        return self.weights.shape[1]


@dataclass(frozen=True)
class Partition:
    assignments: np.ndarray  # record index -> node index
    clusters: dict  # node index -> list of record indices (every node present)

    def sizes(self):
        return {k: len(v) for k, v in self.clusters.items()}


def _inputs(data) -> np.ndarray:
    X = getattr(data, "X", data)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    return X


def _rng(seed, stream):
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), stream]))


def init_map(config: SomConfig, dim: int, data) -> SomMap:
    """Reference vectors drawn uniformly from the data's bounding box."""
    if dim < 1:
        raise ParameterError("dim must be >= 1")
    X = _inputs(data)
    if X.shape[0] == 0 or X.size == 0:
        raise DataError("cannot initialise a map from empty data")
    if X.shape[1] != dim:
        raise ParameterError(f"data has {X.shape[1]} dimensions, expected {dim}")
    lo, hi = X.min(axis=0), X.max(axis=0)
    u = _rng(config.seed, 0).random((config.n_nodes, dim))
    return SomMap(config, lo + u * (hi - lo))


def schedule(config: SomConfig, frac: float):
    """Learning rate and neighborhood radius at training progress ``frac`` in [0, 1]."""
    lr = config.lr_initial * (config.lr_final / config.lr_initial) ** frac
    r0 = config.radius_initial
    if r0 == 0:
        return lr, 0.0
    r1 = max(config.radius_final, _RADIUS_FLOOR)
    return lr, r0 * (r1 / r0) ** frac


def train_som(
    som: SomMap,
    data,
    on_epoch: Optional[Callable[[int, np.ndarray], None]] = None,
) -> SomMap:
    """Online training: every record pulls every node toward it, weighted by a
    Gaussian of grid distance to the record's BMU.

    ``on_epoch(epoch, weights)`` is called after each epoch with a copy of the
    reference vectors.
    """
    X = _inputs(data)
    if X.shape[0] == 0:
        raise DataError("cannot train on empty data")
    if X.shape[1] != som.dim:
        raise ParameterError(f"data has {X.shape[1]} dimensions, map has {som.dim}")
    cfg = som.config
    W = som.weights.copy()
    pos = cfg.grid_positions()
    grid_d2 = ((pos[:, None, :] - pos[None, :, :]) ** 2).sum(-1)
    rng = _rng(cfg.seed, 1)
    n = X.shape[0]
    total = cfg.epochs * n
    step = 0
    for epoch in range(cfg.epochs):
        for k in rng.permutation(n):
            x = X[k]
            lr, radius = schedule(cfg, step / max(total - 1, 1))
            winner = int(np.argmin(((W - x) ** 2).sum(axis=1)))
            if radius > 0:
                h = np.exp(-grid_d2[winner] / (2.0 * radius * radius))
            else:
                h = (grid_d2[winner] == 0).astype(float)
            W += (lr * h)[:, None] * (x - W)
            step += 1
        if on_epoch is not None:
            on_epoch(epoch, W.copy())
    return replace(som, weights=W, trained=True)


def bmu(som: SomMap, x) -> int:
    """Index of the nearest reference vector; ties go to the lowest index."""
    x = np.asarray(x, dtype=float)
    if x.shape != (som.dim,):
        raise ParameterError(f"expected a {som.dim}-vector, got shape {x.shape}")
    return int(np.argmin(((som.weights - x) ** 2).sum(axis=1)))


def bmu_many(som: SomMap, X) -> np.ndarray:
    X = _inputs(X)
    if X.shape[1] != som.dim:
        raise ParameterError(f"data has {X.shape[1]} dimensions, map has {som.dim}")
    d2 = ((X[:, None, :] - som.weights[None, :, :]) ** 2).sum(-1)
    return np.argmin(d2, axis=1)


def partition_data(som: SomMap, data) -> Partition:
    assign = bmu_many(som, data)
    clusters = {k: [] for k in range(som.config.n_nodes)}
    for i, k in enumerate(assign.tolist()):
        clusters[k].append(i)
    return Partition(assign, clusters)


def quantization_error(som: SomMap, data) -> float:
    """Mean Euclidean distance from each record to its BMU."""
    X = _inputs(data)
    d2 = ((X[:, None, :] - som.weights[None, :, :]) ** 2).sum(-1)
    return float(np.sqrt(d2.min(axis=1)).mean())
