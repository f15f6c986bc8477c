"""N-closest-points RMSE between registered clouds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import as_points

# relative slack when deciding whether the k-d tree may have hidden a tie
_TIE_SLACK = 1e-9


def _distances(points: np.ndarray, query: np.ndarray) -> np.ndarray:
    diff = points - query
    return np.sqrt(np.sum(diff * diff, axis=-1))


class SpatialIndex:
    """Exact nearest-neighbor index over a fixed point cloud.

    Candidate neighbors come from a k-d tree; their distances are then
    recomputed exactly and ties go to the lowest insertion index, so results
    match an exhaustive scan bit for bit.
    """

    def __init__(self, points, leafsize: int = 16):
        self.points = as_points(points).copy()
        self.points.setflags(write=False)
        self._tree = cKDTree(self.points, leafsize=leafsize) if len(self.points) else None

    def __len__(self) -> int:
        return len(self.points)

    def query(self, queries) -> tuple[np.ndarray, np.ndarray]:
        """Indices and distances of the nearest indexed point for each query row."""
        if self._tree is None:
            raise ValueError("nearest-neighbor query on an empty index")
        queries = as_points(queries)
        k = min(4, len(self.points))
        _, cand = self._tree.query(queries, k=k)
        cand = cand.reshape(len(queries), k)

        cand_d = np.sqrt(np.sum((self.points[cand] - queries[:, None, :]) ** 2, axis=-1))
        best_d = cand_d.min(axis=1)
        # among equal minima prefer the lowest index
        tied = np.where(cand_d == best_d[:, None], cand, np.iinfo(cand.dtype).max)
        best_i = tied.min(axis=1)

        if k < len(self.points):
            # the k-th candidate is too close to the best: other ties may hide behind it
            unsure = np.nonzero(cand_d.max(axis=1) <= best_d * (1 + _TIE_SLACK) + 1e-300)[0]
            for row in unsure:
                radius = best_d[row] * (1 + 2 * _TIE_SLACK) + 1e-300
                near = np.array(sorted(self._tree.query_ball_point(queries[row], radius)))
                dist = _distances(self.points[near], queries[row])
                j = int(np.argmin(dist))
                best_i[row], best_d[row] = near[j], dist[j]
        return best_i, best_d


def nearest_neighbor(index: SpatialIndex, query) -> tuple[np.ndarray, float]:
    """Closest indexed point to ``query`` and its distance in meters."""
    idx, dist = index.query(np.asarray(query, dtype=float).reshape(1, 3))
    return index.points[idx[0]].copy(), float(dist[0])


@dataclass(frozen=True)
class RmseReport:
    rmse: float  # millimeters
    n_points: int
    frame_ids: tuple[int, int] | None = None
    seed: int | None = None


def rmse_n_closest(
    source_cloud,
    input_cloud,
    n: int | None = None,
    seed: int | None = None,
    frame_ids: tuple[int, int] | None = None,
    index: SpatialIndex | None = None,
) -> RmseReport:
    """RMS of nearest distances from ``n`` input points into the source cloud.

    With ``n`` unset all input points are used. A smaller ``n`` takes the
    first ``n`` points, or a uniform subsample without replacement when
    ``seed`` is given. The result is reported in millimeters.
    """
    source = as_points(source_cloud)
    inputs = as_points(input_cloud)
    if len(source) == 0 or len(inputs) == 0:
        raise ValueError("RMSE needs non-empty source and input clouds")
    if n is None:
        n = len(inputs)
    if not 1 <= n <= len(inputs):
        raise ValueError(f"n must be in [1, {len(inputs)}], got {n}")
    if n < len(inputs):
        if seed is None:
            inputs = inputs[:n]
        else:
            rng = np.random.Generator(np.random.Philox(seed))
            inputs = inputs[np.sort(rng.choice(len(inputs), size=n, replace=False))]

    index = index if index is not None else SpatialIndex(source)
    _, dist = index.query(inputs)
    rmse_m = float(np.sqrt(np.mean(dist * dist)))
    return RmseReport(rmse=rmse_m * 1000.0, n_points=n, frame_ids=frame_ids, seed=seed)
