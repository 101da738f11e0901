"""Last-passage dynamic programs on finite windows.

Conventions: a path from x to y collects the weights of every visited point
except y itself. Tables are dense arrays indexed ``values[i, j]`` for the
lattice point ``origin + (i, j)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .env import Environment

FORWARD = "forward"
BACKWARD = "backward"

E1 = (1, 0)
E2 = (0, 1)


def unit(z) -> tuple[int, int]:
    """Normalize 'e1' / 'e2' / 1 / 2 / (1, 0) / (0, 1) to a unit vector."""
    if isinstance(z, str):
        z = z.strip().lower()
        if z in ("e1", "1"):
            return E1
        if z in ("e2", "2"):
            return E2
    elif isinstance(z, (int, np.integer)):
        if z == 1:
            return E1
        if z == 2:
            return E2
    else:
        t = tuple(int(c) for c in z)
        if t in (E1, E2):
            return t
    raise ValueError(f"expected e1 or e2, got {z!r}")


def _pt(x) -> tuple[int, int]:
    return (int(x[0]), int(x[1]))


@dataclass(frozen=True, eq=False)
class IncrementField:
    """Increments of a passage table in its free variable.

    ``horizontal[i, j] = G(p) - G(p + e1)`` and ``vertical[i, j] = G(p) - G(p + e2)``
    with ``p = origin + (i, j)``.
    """

    horizontal: np.ndarray
    vertical: np.ndarray
    origin: tuple[int, int]

    def I(self, x) -> float:  # noqa: E743 - standard increment names
        return float(self.horizontal[x[0] - self.origin[0], x[1] - self.origin[1]])

    def J(self, x) -> float:
        return float(self.vertical[x[0] - self.origin[0], x[1] - self.origin[1]])

    def to_csv(self, path, which: str = "I") -> Path:
        arr = self.horizontal if which == "I" else self.vertical
        return _grid_csv(path, arr, self.origin)


@dataclass(frozen=True, eq=False)
class PassageTable:
    """Passage values over a rectangle.

    ``direction == "forward"``: ``values`` holds G(base, p), the source is fixed.
    ``direction == "backward"``: ``values`` holds G(p, base), the sink is fixed.
    """

    values: np.ndarray
    origin: tuple[int, int]
    base: tuple[int, int]
    direction: str

    @property
    def upper(self) -> tuple[int, int]:
        return (self.origin[0] + self.values.shape[0] - 1, self.origin[1] + self.values.shape[1] - 1)

    def at(self, x) -> float:
        i, j = x[0] - self.origin[0], x[1] - self.origin[1]
        if not (0 <= i < self.values.shape[0] and 0 <= j < self.values.shape[1]):
            raise IndexError(f"point {tuple(x)} outside table {self.origin}..{self.upper}")
        return float(self.values[i, j])

    def increments(self) -> IncrementField:
        v = self.values
        return IncrementField(v[:-1, :] - v[1:, :], v[:, :-1] - v[:, 1:], self.origin)

    def to_csv(self, path) -> Path:
        return _grid_csv(path, self.values, self.origin)


def _grid_csv(path, arr: np.ndarray, origin) -> Path:
    path = Path(path)
    ii, jj = np.meshgrid(np.arange(arr.shape[0]), np.arange(arr.shape[1]), indexing="ij")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "value"])
        for i, j, val in zip(ii.ravel(), jj.ravel(), arr.ravel()):
            w.writerow([origin[0] + int(i), origin[1] + int(j), repr(float(val))])
    return path


# --- core sweeps -----------------------------------------------------------

def forward_values(w: np.ndarray) -> np.ndarray:
    """G(0, (i, j)) for the weight block ``w`` whose [0, 0] cell is the source."""
    w = np.asarray(w, dtype=np.float64)
    rows, cols = w.shape
    # L = G + w is the standard "include the endpoint" passage time
    L = np.empty((rows, cols))
    L[:, 0] = np.cumsum(w[:, 0])
    L[0, :] = np.cumsum(w[0, :])
    kernels.corner_sweep(w, L)
    G = np.empty_like(L)
    G[0, 0] = 0.0
    G[1:, 0] = L[:-1, 0]
    G[0, 1:] = L[0, :-1]
    G[1:, 1:] = np.maximum(L[:-1, 1:], L[1:, :-1])
    return G


def _sink_values(bulk: np.ndarray, north: np.ndarray, east: np.ndarray) -> np.ndarray:
    """Sink-anchored table over a (a+1) x (b+1) rectangle whose top-right cell is the sink.

    ``bulk`` has shape (a, b); the two rays carry ``north`` (length a) and ``east`` (length b).
    """
    a, b = len(north), len(east)
    T = np.empty((a + 1, b + 1))
    T[0, 0] = 0.0
    T[1:, 0] = np.cumsum(north)
    T[0, 1:] = np.cumsum(east)
    Y = np.zeros((a + 1, b + 1))
    Y[1:, 1:] = bulk[::-1, ::-1]
    kernels.corner_sweep(Y, T)
    return np.ascontiguousarray(T[::-1, ::-1])


def _source_values(bulk: np.ndarray, south: np.ndarray, west: np.ndarray) -> np.ndarray:
    a, b = len(south), len(west)
    T = np.empty((a + 1, b + 1))
    T[0, 0] = 0.0
    T[1:, 0] = np.cumsum(south)
    T[0, 1:] = np.cumsum(west)
    Y = np.zeros((a + 1, b + 1))
    Y[1:, 1:] = bulk
    kernels.corner_sweep(Y, T)
    return T


def _check_order(x, y):
    if x[0] > y[0] or x[1] > y[1]:
        raise ValueError(f"need {x} <= {y} coordinatewise")


# --- point-to-point --------------------------------------------------------

def passage_table(env: Environment, source=None, sink=None) -> PassageTable:
    """Forward table G(source, p) for p in [source, sink] (defaults: the whole window)."""
    source = _pt(source if source is not None else env.origin)
    sink = _pt(sink if sink is not None else env.upper)
    _check_order(source, sink)
    w = env.block(source, sink)
    return PassageTable(forward_values(w), source, source, FORWARD)


def last_passage(env: Environment, x, y, with_table: bool = False):
    """G(x, y): the heaviest up-right path from x to y, not counting y's weight."""
    x, y = _pt(x), _pt(y)
    table = passage_table(env, x, y)
    value = table.at(y)
    return (value, table) if with_table else value


def backward_table(env: Environment, sink, corner=None) -> PassageTable:
    """Sink-anchored table G(p, sink) for p in [corner, sink]."""
    sink = _pt(sink)
    corner = _pt(corner if corner is not None else env.origin)
    _check_order(corner, sink)
    a, b = sink[0] - corner[0], sink[1] - corner[1]
    north = env.block((corner[0], sink[1]), (sink[0] - 1, sink[1]))[::-1, 0] if a else np.empty(0)
    east = env.block((sink[0], corner[1]), (sink[0], sink[1] - 1))[0, ::-1] if b else np.empty(0)
    bulk = env.block(corner, (sink[0] - 1, sink[1] - 1)) if a and b else np.empty((a, b))
    return PassageTable(_sink_values(bulk, north, east), corner, sink, BACKWARD)


def level_values(table: PassageTable, n: int, h=(0.0, 0.0)):
    """Tilted values G + h.p along the level |p - base|_1 = n of a forward table.

    Returns (endpoints, values) with endpoints ordered by decreasing e1 coordinate.
    """
    if table.direction != FORWARD:
        raise ValueError("level values need a forward table")
    rows, cols = table.values.shape
    if n < 0 or n >= rows or n >= cols:
        raise ValueError(f"level {n} not fully inside the table")
    i = np.arange(n, -1, -1)
    j = n - i
    vals = table.values[i, j] + h[0] * i + h[1] * j
    pts = np.stack([i + table.origin[0], j + table.origin[1]], axis=1)
    return pts, vals


def point_to_line(env: Environment, n: int, h=(0.0, 0.0), source=None, table=None):
    """G_n(h) = max over n-step paths of the collected weight plus h . (endpoint - source).

    Returns ``(value, endpoint)``; ties go to the endpoint furthest along e1.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    source = _pt(source if source is not None else env.origin)
    if table is None:
        if not env.covers(source, (source[0] + n, source[1] + n)):
            raise ValueError(f"level {n} from {source} does not fit in the window")
        table = passage_table(env, source, (source[0] + n, source[1] + n))
    pts, vals = level_values(table, n, h)
    k = int(np.argmax(vals))  # first maximum = largest e1 coordinate
    return float(vals[k]), (int(pts[k, 0]), int(pts[k, 1]))


def growth_cluster(env: Environment, t: float, source=None) -> frozenset:
    """Points x >= source in the window with G(source, x) + w_x <= t."""
    if np.any(env.weights < 0):
        raise ValueError("growth clusters need nonnegative weights")
    table = passage_table(env, source)
    occupied = table.values + env.block(table.origin, table.upper) <= t
    ii, jj = np.nonzero(occupied)
    return frozenset((int(i) + table.origin[0], int(j) + table.origin[1]) for i, j in zip(ii, jj))


# --- boundary-driven tables -------------------------------------------------

def _rays(north, east, extent):
    north = np.asarray(north, dtype=np.float64)
    east = np.asarray(east, dtype=np.float64)
    if north.ndim != 1 or east.ndim != 1:
        raise ValueError("boundary weights must be one-dimensional")
    if extent is None:
        extent = (len(north), len(east))
    a, b = int(extent[0]), int(extent[1])
    if a < 0 or b < 0:
        raise ValueError("extent must be nonnegative")
    if len(north) < a or len(east) < b:
        raise ValueError(f"boundary lengths ({len(north)}, {len(east)}) shorter than "
                         f"the requested rectangle ({a}, {b})")
    if not (np.all(np.isfinite(north[:a])) and np.all(np.isfinite(east[:b]))):
        raise ValueError("boundary weights must be finite")
    return north[:a], east[:b], a, b


def ne_boundary_lpp(env: Environment, v, north, east, extent=None) -> PassageTable:
    """Stationary-style table anchored at the sink v.

    ``north[k-1]`` is the weight of the edge (v - k e1, v - (k-1) e1) and
    ``east[k-1]`` that of (v - k e2, v - (k-1) e2). On the two rays the table
    is the cumulative boundary sum; elsewhere G(u) = w_u + max(G(u+e1), G(u+e2)).
    """
    v = _pt(v)
    north, east, a, b = _rays(north, east, extent)
    corner = (v[0] - a, v[1] - b)
    bulk = env.block(corner, (v[0] - 1, v[1] - 1)) if a and b else np.empty((a, b))
    return PassageTable(_sink_values(bulk, north, east), corner, v, BACKWARD)


def boundary_weight_field(env: Environment, v, north, east, extent=None):
    """Point weights on [corner, v]: bulk weights plus ray edge weights (w_v set to 0)."""
    v = _pt(v)
    north, east, a, b = _rays(north, east, extent)
    corner = (v[0] - a, v[1] - b)
    Y = np.zeros((a + 1, b + 1))
    if a and b:
        Y[:a, :b] = env.block(corner, (v[0] - 1, v[1] - 1))
    Y[:a, b] = north[::-1]
    Y[a, :b] = east[::-1]
    return Y, corner


def ne_boundary_lpp_restricted(env: Environment, v, north, east, forced, u=None,
                               extent=None) -> float:
    """The boundary-driven passage value from u to v over paths whose last step is ``forced``.

    Returns ``-inf`` when no such path exists (u on the opposite ray).
    """
    v = _pt(v)
    step = unit(forced)
    Y, corner = boundary_weight_field(env, v, north, east, extent)
    u = _pt(u if u is not None else corner)
    if not (corner[0] <= u[0] <= v[0] and corner[1] <= u[1] <= v[1]):
        raise ValueError(f"start {u} outside the rectangle {corner}..{v}")
    last = (v[0] - step[0], v[1] - step[1])
    if last[0] < u[0] or last[1] < u[1]:
        return float("-inf")
    block = Y[u[0] - corner[0]:last[0] - corner[0] + 1, u[1] - corner[1]:last[1] - corner[1] + 1]
    G = forward_values(block)
    return float(G[-1, -1] + block[-1, -1])


def sw_boundary_lpp(env: Environment, v, south, west, extent=None) -> PassageTable:
    """Mirror of :func:`ne_boundary_lpp` anchored at the source v.

    ``south[k-1]`` weighs the edge (v + (k-1) e1, v + k e1) and ``west[k-1]`` the
    edge (v + (k-1) e2, v + k e2); the environment supplies the bulk weights at
    v + (i, j) for i, j >= 1, and G(x) = Y_x + max(G(x-e1), G(x-e2)) there.
    """
    v = _pt(v)
    south, west, a, b = _rays(south, west, extent)
    bulk = env.block((v[0] + 1, v[1] + 1), (v[0] + a, v[1] + b)) if a and b else np.empty((a, b))
    return PassageTable(_source_values(bulk, south, west), v, v, FORWARD)
