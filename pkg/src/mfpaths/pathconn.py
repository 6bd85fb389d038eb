"""Piecewise-linear parameter paths: interpolation and loss/error profiles.

A path is an ordered list of parameter snapshots; segment j covers the
uniform parameter range [j/S, (j+1)/S] and interpolates its two vertices
coordinatewise. Snapshots only need three things: a `lerp(p, q, t)`
classmethod, a `loss(ds, kind)` method, and an `error(ds)` method, so the
same machinery profiles both model families.

The connectivity excess of a profile is max(0, max value - max endpoint
value): how far the path rises above the worse endpoint.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence


@dataclass
class PiecewisePath:
    """Vertices plus one human-readable label per vertex.

    labels[0] tags the start; labels[i] describes the move that produced
    vertex i. Label prefixes are machine-checkable: "convex:" segments keep
    the loss under their endpoint losses, "dead:" and "mirror:" segments
    keep it constant.
    """

    vertices: list
    labels: list

    def __post_init__(self):
        if len(self.vertices) < 2:
            raise ValueError("a path needs at least two vertices")
        if len(self.labels) != len(self.vertices):
            raise ValueError(
                f"{len(self.labels)} labels for {len(self.vertices)} vertices"
            )

    @property
    def segments(self) -> int:
        return len(self.vertices) - 1


@dataclass
class PathProfile:
    ts: list          # strictly increasing grid over [0, 1]
    values: list      # loss or error at each grid point
    eps_c: float      # max(0, max(values) - max endpoint value)
    endpoint_values: tuple
    kind: str         # "loss" or "error"


def path_eval(path: PiecewisePath, t: float):
    """Parameter snapshot at position t in [0, 1]; endpoints are bit-exact."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    s = path.segments
    pos = t * s
    j = min(int(pos), s - 1)
    local = pos - j
    v0, v1 = path.vertices[j], path.vertices[j + 1]
    return type(v0).lerp(v0, v1, local)


def grid_ts(segments: int, points_per_segment: int) -> list:
    """Uniform grid with points_per_segment points on each segment; shared
    vertices appear once, so the grid has segments*(pps-1)+1 entries."""
    if points_per_segment < 2:
        raise ValueError(
            f"points_per_segment must be >= 2, got {points_per_segment}"
        )
    ts = []
    for j in range(segments):
        start = 0 if j == 0 else 1  # segment start equals previous end
        for i in range(start, points_per_segment):
            ts.append((j + i / (points_per_segment - 1)) / segments)
    return ts


def _profile(path: PiecewisePath, evaluate, points_per_segment: int,
             kind: str) -> PathProfile:
    ts = grid_ts(path.segments, points_per_segment)
    values = [float(evaluate(path_eval(path, t))) for t in ts]
    endpoint = (values[0], values[-1])
    eps_c = max(0.0, max(values) - max(endpoint))
    return PathProfile(ts, values, eps_c, endpoint, kind)


def profile_loss(path: PiecewisePath, ds, loss_kind,
                 points_per_segment: int = 101) -> PathProfile:
    """Empirical loss at every grid point along the path."""
    return _profile(path, lambda p: p.loss(ds, loss_kind),
                    points_per_segment, "loss")


def profile_error(path: PiecewisePath, ds,
                  points_per_segment: int = 51) -> PathProfile:
    """Classification error at every grid point along the path."""
    return _profile(path, lambda p: p.error(ds), points_per_segment, "error")


def segment_grid(path: PiecewisePath, j: int, points: int) -> list:
    """Grid point positions covering only segment j (for per-move checks)."""
    if not 0 <= j < path.segments:
        raise ValueError(f"segment index {j} out of range")
    s = path.segments
    return [(j + i / (points - 1)) / s for i in range(points)]


def write_profile_csv(profile: PathProfile, path) -> None:
    """CSV with header t,<kind> and 17-significant-digit floats."""
    with open(path, "w", newline="") as f:
        f.write(f"t,{profile.kind}\n")
        for t, v in zip(profile.ts, profile.values):
            f.write(f"{t:.17g},{v:.17g}\n")


def read_profile_csv(path) -> PathProfile:
    with open(path, "r", newline="") as f:
        header = f.readline().strip().split(",")
        if len(header) != 2 or header[0] != "t":
            raise ValueError(f"malformed profile CSV header: {header}")
        kind = header[1]
        ts, values = [], []
        for line in f:
            t_str, v_str = line.strip().split(",")
            ts.append(float(t_str))
            values.append(float(v_str))
    endpoint = (values[0], values[-1])
    eps_c = max(0.0, max(values) - max(endpoint))
    return PathProfile(ts, values, eps_c, endpoint, kind)
