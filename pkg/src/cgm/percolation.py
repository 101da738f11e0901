"""Oriented site percolation and the flat edge of the shape for weights capped at 1."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels, lpp
from .env import Environment, WeightFamily, sample_environment
from .stats import mean_se, normal_ci


@dataclass(frozen=True, eq=False)
class OrientedField:
    """Open sites sigma_z = 1{w_z = 1} of a capped environment."""

    sigma: np.ndarray
    origin: tuple[int, int]
    p1: float | None = None

    @classmethod
    def from_environment(cls, env: Environment) -> OrientedField:
        if np.any(env.weights > 1):
            raise ValueError("oriented percolation needs weights <= 1")
        p1 = env.family.p1 if env.family is not None and env.family.kind == "bernoulli_capped" else None
        return cls(env.weights == 1.0, env.origin, p1)

    def reachable(self, source=None) -> np.ndarray:
        """Sites joined to ``source`` by a path open at every point after the first."""
        s = source if source is not None else self.origin
        i0, j0 = s[0] - self.origin[0], s[1] - self.origin[1]
        sig = np.ascontiguousarray(self.sigma[i0:, j0:])
        R = np.zeros(sig.shape, dtype=np.bool_)
        R[0, 0] = True
        return kernels.wet_sweep(sig, R)


def _capped(p1: float, lo: float) -> WeightFamily:
    if not 0 < p1 <= 1:
        raise ValueError("p1 must lie in (0, 1]")
    return WeightFamily.bernoulli_capped(p1, lo)


@dataclass
class RightEdge:
    estimate: float
    ci: tuple[float, float]
    survival: float
    n: int
    per_replicate: list[float | None] = field(default_factory=list)


def level_edge(reach: np.ndarray, n: int) -> int | None:
    """Largest e1 coordinate among reachable sites on level n (None if extinct)."""
    i = np.arange(n, -1, -1)
    hits = reach[i, n - i]
    return int(i[np.argmax(hits)]) if hits.any() else None


def right_edge(p1: float, n: int, seed: int, replicates: int, lo: float = 0.0,
               first_replicate: int = 0) -> RightEdge:
    """a_n / n averaged over replicates whose cluster reaches level n."""
    if n < 1 or replicates < 1:
        raise ValueError("need n >= 1 and at least one replicate")
    family = _capped(p1, lo)
    per: list[float | None] = []
    for r in range(replicates):
        env = sample_environment(family, n + 1, n + 1, (0, 0), seed, replicate=first_replicate + r)
        a = level_edge(OrientedField.from_environment(env).reachable(), n)
        per.append(None if a is None else a / n)
    alive = np.array([x for x in per if x is not None])
    mu, se = mean_se(alive) if alive.size else (math.nan, math.nan)
    ci = normal_ci(mu, se) if alive.size > 1 else (mu, mu)
    return RightEdge(mu, ci, alive.size / replicates, n, per)


@dataclass
class PsiEstimate:
    N: list[int]
    values: np.ndarray
    stabilized: bool
    psi: float


def _psi_from_table(table: lpp.PassageTable, N_grid) -> np.ndarray:
    return np.array([n - lpp.level_values(table, n)[1].max() for n in N_grid], dtype=np.float64)


def psi_estimate(env: Environment, N_grid, source=None) -> PsiEstimate:
    """psi_N = N - G_N(0) on the grid; stabilized when the last quarter of the grid is constant."""
    N_grid = sorted(int(n) for n in N_grid)
    if not N_grid or N_grid[0] < 0:
        raise ValueError("N grid must be nonempty and nonnegative")
    if np.any(env.weights > 1):
        raise ValueError("psi needs weights <= 1")
    s = source if source is not None else env.origin
    top = N_grid[-1]
    table = lpp.passage_table(env, s, (s[0] + top, s[1] + top))
    vals = _psi_from_table(table, N_grid)
    tail = vals[len(vals) - max(1, len(vals) // 4):]
    return PsiEstimate(N_grid, vals, bool(np.all(tail == tail[-1])), float(vals[-1]))


@dataclass
class FlatEdgeReport:
    n: int
    directions: list[tuple[float, float]]
    estimate: list[float]
    se: list[float]
    flat: list[bool]
    right_edge: RightEdge | None

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["direction", "estimate", "ci", "n"])
            for d, est, se in zip(self.directions, self.estimate, self.se):
                w.writerow([f"{d[0]:g};{d[1]:g}", repr(est), repr(1.96 * se), self.n])
        return path


def flat_edge_check(p1: float, lo: float, n: int, replicates: int, directions, seed: int = 0,
                    with_right_edge: bool = True) -> FlatEdgeReport:
    """Estimate n^-1 G(0, floor(n xi)) for each direction; flag those consistent with 1."""
    family = _capped(p1, lo)
    pts = [(int(math.floor(n * d[0])), int(math.floor(n * d[1]))) for d in directions]
    top = (max(p[0] for p in pts), max(p[1] for p in pts))
    samples = np.empty((replicates, len(pts)))
    for r in range(replicates):
        env = sample_environment(family, top[0] + 1, top[1] + 1, (0, 0), seed, replicate=r)
        G = lpp.forward_values(env.weights)
        samples[r] = [G[p] / n for p in pts]
    est, ses, flat = [], [], []
    for k in range(len(pts)):
        mu, se = mean_se(samples[:, k])
        est.append(mu)
        ses.append(se)
        flat.append(bool(mu >= 1 - 3 * se) if se > 0 else bool(mu == 1.0))
    edge = right_edge(p1, n, seed, replicates, lo) if with_right_edge else None
    return FlatEdgeReport(n, [tuple(map(float, d)) for d in directions], est, ses, flat, edge)


@dataclass
class ConeBusemannReport:
    n: list[int]
    lhs: np.ndarray
    rhs: float
    agree: bool
    outside_cone: bool


def cone_busemann_check(env: Environment, x, y, points, N: int, beta: float | None = None
                        ) -> ConeBusemannReport:
    """Compare G(x, v) - G(y, v) with (y - x).(1, 1) + psi_N(T_y w) - psi_N(T_x w).

    ``agree`` refers to the last target point. With ``beta`` (a right-edge
    estimate) targets whose direction leaves [1 - beta, beta] are flagged.
    """
    x, y = (int(x[0]), int(x[1])), (int(y[0]), int(y[1]))
    points = [(int(p[0]), int(p[1])) for p in points]
    tops = points + [(x[0] + N, x[1] + N), (y[0] + N, y[1] + N)]
    top = (max(p[0] for p in tops), max(p[1] for p in tops))
    tx = lpp.passage_table(env, x, top)
    ty = lpp.passage_table(env, y, top)
    lhs = np.array([tx.at(p) - ty.at(p) for p in points])
    psi_x = N - lpp.level_values(tx, N)[1].max()
    psi_y = N - lpp.level_values(ty, N)[1].max()
    rhs = float((y[0] - x[0]) + (y[1] - x[1]) + psi_y - psi_x)
    outside = False
    if beta is not None:
        for p in points:
            frac = (p[0] - x[0]) / max((p[0] - x[0]) + (p[1] - x[1]), 1)
            outside |= not (1 - beta <= frac <= beta)
    agree = bool(math.isclose(lhs[-1], rhs, rel_tol=1e-12, abs_tol=1e-9))
    return ConeBusemannReport([abs(p[0] - x[0]) + abs(p[1] - x[1]) for p in points], lhs, rhs,
                              agree, outside)


def weak_disorder_diagnostic(env: Environment, n_grid, source=None) -> np.ndarray:
    """G_n(0) - n on the grid (equal to -psi_n, hence nonincreasing)."""
    return -psi_estimate(env, n_grid, source).values


def across_seed_variance(sequences) -> np.ndarray:
    """Sample variance across seeds at each grid point (rows are seeds)."""
    arr = np.asarray(sequences, dtype=np.float64)
    return arr.var(axis=0, ddof=1)
