#!/usr/bin/env python3
"""Inter-branch distance over straight branch segments.

Dist(U, V) averages the four endpoint-to-segment distances. It is
non-negative, symmetric and zero only for coincident segments, but it does
not satisfy the triangle inequality, so it is a semi-metric.
"""

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .grid_model import GridCase

Point = tuple[float, float]


@dataclass(frozen=True)
class Segment:
    p1: Point
    p2: Point

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (*self.p1, *self.p2)):
            raise ValidationError(f"Segment coordinates must be finite: {self.p1}, {self.p2}")


def point_segment_distance(v: Point, segment: Segment) -> float:
    """Euclidean distance from point ``v`` to the closest point of ``segment``."""
    (ux, uy), (wx, wy) = segment.p1, segment.p2
    mx, my = wx - ux, wy - uy
    norm_sq = mx * mx + my * my
    if norm_sq == 0.0:
        return math.hypot(v[0] - ux, v[1] - uy)
    t = ((v[0] - ux) * mx + (v[1] - uy) * my) / norm_sq
    if t <= 0.0:
        return math.hypot(v[0] - ux, v[1] - uy)
    if t >= 1.0:
        return math.hypot(v[0] - wx, v[1] - wy)
    return math.hypot(v[0] - (ux + t * mx), v[1] - (uy + t * my))


def branch_distance(u: Segment, v: Segment) -> float:
    return (
        point_segment_distance(u.p1, v)
        + point_segment_distance(u.p2, v)
        + point_segment_distance(v.p1, u)
        + point_segment_distance(v.p2, u)
    ) / 4.0


def branch_segment(case: GridCase, branch_id: int) -> Segment:
    br = case.branch(branch_id)
    a, b = case.bus(br.from_bus), case.bus(br.to_bus)
    return Segment((a.x_km, a.y_km), (b.x_km, b.y_km))


def _points_to_segments(points: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Distances from every point (rows) to every segment (columns)."""
    m = ends - starts                                    # (S, 2)
    rel = points[:, None, :] - starts[None, :, :]        # (P, S, 2)
    norm_sq = np.einsum("sd,sd->s", m, m)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.einsum("psd,sd->ps", rel, m) / norm_sq
    t = np.where(norm_sq > 0, t, 0.0)

    to_start = np.hypot(rel[..., 0], rel[..., 1])
    rel_end = points[:, None, :] - ends[None, :, :]
    to_end = np.hypot(rel_end[..., 0], rel_end[..., 1])
    foot = rel - t[..., None] * m[None, :, :]
    to_foot = np.hypot(foot[..., 0], foot[..., 1])
    return np.where(t <= 0.0, to_start, np.where(t >= 1.0, to_end, to_foot))


def distance_matrix(case: GridCase, branch_ids: Sequence[int]) -> np.ndarray:
    """Symmetric matrix of branch_distance over ``branch_ids`` (km), zero diagonal."""
    segments = [branch_segment(case, b) for b in branch_ids]
    if not segments:
        return np.zeros((0, 0))
    starts = np.array([s.p1 for s in segments], dtype=float)
    ends = np.array([s.p2 for s in segments], dtype=float)
    endpoint_sums = _points_to_segments(starts, starts, ends) + _points_to_segments(ends, starts, ends)
    matrix = (endpoint_sums + endpoint_sums.T) / 4.0
    np.fill_diagonal(matrix, 0.0)
    return matrix


def _points_to_paired_segments(points: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Row-wise distances from points[i] to segment (starts[i], ends[i])."""
    m = ends - starts
    rel = points - starts
    norm_sq = np.einsum("nd,nd->n", m, m)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.einsum("nd,nd->n", rel, m) / norm_sq
    t = np.clip(np.where(norm_sq > 0, t, 0.0), 0.0, 1.0)
    foot = rel - t[:, None] * m
    return np.hypot(foot[:, 0], foot[:, 1])


def paired_distances(case: GridCase, a_ids: Sequence[int], b_ids: Sequence[int]) -> np.ndarray:
    """branch_distance(a_ids[i], b_ids[i]) for every i, vectorized."""
    if len(a_ids) != len(b_ids):
        raise ValidationError(f"{len(a_ids)} first branches for {len(b_ids)} second branches")
    ids = sorted(set(a_ids) | set(b_ids))
    position = {b: i for i, b in enumerate(ids)}
    segments = [branch_segment(case, b) for b in ids]
    starts = np.array([s.p1 for s in segments], dtype=float).reshape(-1, 2)
    ends = np.array([s.p2 for s in segments], dtype=float).reshape(-1, 2)
    ia = np.fromiter((position[b] for b in a_ids), dtype=np.int64, count=len(a_ids))
    ib = np.fromiter((position[b] for b in b_ids), dtype=np.int64, count=len(b_ids))
    total = (
        _points_to_paired_segments(starts[ia], starts[ib], ends[ib])
        + _points_to_paired_segments(ends[ia], starts[ib], ends[ib])
        + _points_to_paired_segments(starts[ib], starts[ia], ends[ia])
        + _points_to_paired_segments(ends[ib], starts[ia], ends[ia])
    )
    return total / 4.0


class BranchDistances:
    """Memoized branch_distance lookups for one case.

    Callable as ``distances(a, b)``; this is the distance function the
    correlation model uses by default.
    """

    def __init__(self, case: GridCase):
        self.case = case
        self._segments: dict[int, Segment] = {}
        self._pairs: dict[tuple[int, int], float] = {}

    def segment(self, branch_id: int) -> Segment:
        if branch_id not in self._segments:
            self._segments[branch_id] = branch_segment(self.case, branch_id)
        return self._segments[branch_id]

    def __call__(self, a: int, b: int) -> float:
        if a == b:
            return 0.0
        key = (a, b) if a < b else (b, a)
        if key not in self._pairs:
            self._pairs[key] = branch_distance(self.segment(key[0]), self.segment(key[1]))
        return self._pairs[key]

    def matrix(self, branch_ids: Sequence[int]) -> np.ndarray:
        n = len(branch_ids)
        out = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                out[i, j] = out[j, i] = self(branch_ids[i], branch_ids[j])
        return out
