"""Stationary cocycles built from boundary-driven passage times.

A boundary cocycle puts i.i.d. edge weights on the two rays entering an
anchor v from the west and the south; the sink-anchored table then defines
B(x, y) = G(x, v) - G(y, v) on the whole rectangle below v.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats as sps

from . import lpp, rng
from .env import Environment, WeightFamily
from .shape import SolvableModel, _ratio
from .stats import Verdict, integer_chisquare, lag1_autocorr, mean_se, z_score


@dataclass(frozen=True, eq=False)
class BoundaryCocycle:
    """Edge weights on the rays into ``anchor``.

    ``horiz[k-1]`` weighs (v - k e1, v - (k-1) e1), ``vert[k-1]`` weighs
    (v - k e2, v - (k-1) e2). ``means`` are the expected horizontal and
    vertical edge weights.
    """

    xi: tuple[float, float]
    model: SolvableModel | None
    means: tuple[float, float]
    horiz: np.ndarray
    vert: np.ndarray
    anchor: tuple[int, int]
    seed: int | None = None
    replicate: int = 0

    @property
    def h(self) -> tuple[float, float]:
        """The tilt h(B) = -(E B(e1), E B(e2))."""
        return (-self.means[0], -self.means[1])


def solvable_cocycle(model: SolvableModel, xi, v, ray_length: int, seed: int,
                     replicate: int = 0) -> BoundaryCocycle:
    """Boundary weights of the direction-xi cocycle for a solvable family.

    Each edge draws its uniform from a stream keyed by its lattice position, so
    cocycles for different directions (same seed) are coupled monotonically.
    """
    _ratio(xi)
    if ray_length < 0:
        raise ValueError("ray length must be nonnegative")
    v = (int(v[0]), int(v[1]))
    mh, mv = model.boundary_means(xi)
    uh = rng.cell_uniforms(seed, rng.HORIZONTAL, (v[0] - ray_length, v[1]), ray_length, 1,
                           replicate)[::-1, 0]
    uv = rng.cell_uniforms(seed, rng.VERTICAL, (v[0], v[1] - ray_length), 1, ray_length,
                           replicate)[0, ::-1]
    horiz = model.weight_family(mh).from_uniforms(uh)
    vert = model.weight_family(mv).from_uniforms(uv)
    return BoundaryCocycle((float(xi[0]), float(xi[1])), model, (mh, mv), horiz, vert, v, seed,
                           replicate)


@dataclass(frozen=True, eq=False)
class ExtendedCocycle:
    """B(x, y) = G(x, v) - G(y, v) on the rectangle [corner, v] of a sink-anchored table."""

    table: lpp.PassageTable
    env: Environment
    boundary: BoundaryCocycle

    @property
    def anchor(self) -> tuple[int, int]:
        return self.table.base

    @property
    def corner(self) -> tuple[int, int]:
        return self.table.origin

    def B(self, x, y) -> float:
        return self.table.at(x) - self.table.at(y)

    @property
    def horizontal(self) -> np.ndarray:
        """B(p, p + e1) for p = corner + (i, j)."""
        v = self.table.values
        return v[:-1, :] - v[1:, :]

    @property
    def vertical(self) -> np.ndarray:
        """B(p, p + e2) for p = corner + (i, j)."""
        v = self.table.values
        return v[:, :-1] - v[:, 1:]

    def bulk_weights(self) -> np.ndarray:
        c, v = self.corner, self.anchor
        return self.env.block(c, (v[0] - 1, v[1] - 1))

    def recovery_residual(self) -> float:
        """max |min_i B(x, x + e_i) - w_x| over bulk points."""
        hor = self.horizontal[:, :-1]
        ver = self.vertical[:-1, :]
        w = self.bulk_weights()
        return float(np.abs(np.minimum(hor, ver) - w).max()) if w.size else 0.0

    def induced_boundary(self, w) -> BoundaryCocycle:
        """Edge weights this cocycle puts on the rays into an interior anchor w."""
        w = (int(w[0]), int(w[1]))
        c = self.corner
        if not (c[0] <= w[0] <= self.anchor[0] and c[1] <= w[1] <= self.anchor[1]):
            raise ValueError(f"anchor {w} outside the cocycle's rectangle")
        i, j = w[0] - c[0], w[1] - c[1]
        horiz = self.horizontal[:i, j][::-1].copy()
        vert = self.vertical[i, :j][::-1].copy()
        b = self.boundary
        return BoundaryCocycle(b.xi, b.model, b.means, horiz, vert, w, b.seed, b.replicate)

    def Y(self) -> np.ndarray:
        """Y_x = B(x - e1, x) ^ B(x - e2, x) for x in [corner + (1, 1), v]."""
        return np.minimum(self.horizontal[:, 1:], self.vertical[1:, :])

    def centered(self, h=None) -> CenteredCocycle:
        return CenteredCocycle(self, tuple(h) if h is not None else self.boundary.h)

    def to_csv(self, path) -> Path:
        return self.table.to_csv(path)


def extend_cocycle(boundary: BoundaryCocycle, env: Environment) -> ExtendedCocycle:
    """Propagate boundary weights into the bulk through the sink-anchored recursion."""
    v = boundary.anchor
    a, b = len(boundary.horiz), len(boundary.vert)
    if a and b and not env.covers((v[0] - a, v[1] - b), (v[0] - 1, v[1] - 1)):
        raise ValueError(f"environment {env.origin}..{env.upper} does not cover the rectangle "
                         f"{(v[0] - a, v[1] - b)}..{(v[0] - 1, v[1] - 1)}")
    table = lpp.ne_boundary_lpp(env, v, boundary.horiz, boundary.vert)
    return ExtendedCocycle(table, env, boundary)


@dataclass(frozen=True, eq=False)
class CenteredCocycle:
    """F(x, y) = h . (x - y) - B(x, y) with h = h(B) from the exact means."""

    underlying: ExtendedCocycle
    h: tuple[float, float]

    def F(self, x, y) -> float:
        return (self.h[0] * (x[0] - y[0]) + self.h[1] * (x[1] - y[1])
                - self.underlying.B(x, y))


# --- Burke property ---------------------------------------------------------------

@dataclass
class BurkeReport:
    size: int
    verdicts: list[Verdict]

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)


def burke_check(extended: ExtendedCocycle, region=None, level: float = 0.01) -> BurkeReport:
    """Test that the induced weights Y are i.i.d. with the bulk law.

    ``region`` is ((i0, j0), (i1, j1)), inclusive index bounds into the Y grid
    (whose [0, 0] entry is the point corner + (1, 1)); default: all of it.
    """
    model = extended.boundary.model
    if model is None:
        raise ValueError("Burke check needs a solvable model")
    Y = extended.Y()
    if region is not None:
        (i0, j0), (i1, j1) = region
        Y = Y[i0:i1 + 1, j0:j1 + 1]
    flat = Y.ravel()
    mu, se = mean_se(flat)
    verdicts = [Verdict("mean", mu, model.m, se, abs(z_score(mu, model.m, se)) <= 3,
                        "within 3 SE of the bulk mean")]
    if model.family == "exponential":
        res = sps.kstest(flat, "expon", args=(0, model.m))
        verdicts.append(Verdict("marginal", float(res.statistic), None, float(res.pvalue),
                                res.pvalue > level, "KS vs the bulk law"))
    else:
        q = 1 - 1 / model.m
        stat, p, _ = integer_chisquare(flat, lambda k: q ** (k - 1) / model.m)
        verdicts.append(Verdict("marginal", stat, None, p, p > level,
                                "chi-square vs the bulk law"))
    bound = 3 / math.sqrt(flat.size)
    for name, rho in (("lag1_e1", _axis_lag1(Y, 0)), ("lag1_e2", _axis_lag1(Y, 1))):
        verdicts.append(Verdict(name, rho, 0.0, bound, abs(rho) < bound, "|rho| < 3/sqrt(N)"))
    return BurkeReport(int(flat.size), verdicts)


def _axis_lag1(Y: np.ndarray, axis: int) -> float:
    a = Y - Y.mean()
    if axis == 0:
        num = (a[:-1, :] * a[1:, :]).sum()
    else:
        num = (a[:, :-1] * a[:, 1:]).sum()
    den = (a * a).sum()
    return float(num / den) if den > 0 else 0.0


# --- Busemann estimators -----------------------------------------------------------

def direction_points(xi, n_list) -> list[tuple[int, int]]:
    _ratio(xi)
    return [(int(math.floor(n * xi[0])), int(math.floor(n * xi[1]))) for n in n_list]


def passage_differences(env: Environment, x, y, points) -> np.ndarray:
    """G(x, p) - G(y, p) for each p, from two forward tables."""
    x, y = (int(x[0]), int(x[1])), (int(y[0]), int(y[1]))
    points = [(int(p[0]), int(p[1])) for p in points]
    top = (max(p[0] for p in points), max(p[1] for p in points))
    for p in points:
        for q in (x, y):
            if q[0] > p[0] or q[1] > p[1]:
                raise ValueError(f"target {p} is not above {q}")
    tx = lpp.passage_table(env, x, top)
    ty = tx if x == y else lpp.passage_table(env, y, top)
    return np.array([tx.at(p) - ty.at(p) for p in points])


@dataclass
class BusemannSequence:
    n: list[int]
    diff: np.ndarray
    direction: str
    stable_from: int | None

    @property
    def last(self) -> float:
        return float(self.diff[-1])

    def to_csv(self, path, replicate: int = 0) -> Path:
        return write_busemann_csv(path, [(self, replicate)])


def write_busemann_csv(path, sequences) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "diff", "direction", "replicate"])
        for seq, r in sequences:
            for n, d in zip(seq.n, seq.diff):
                w.writerow([n, repr(float(d)), seq.direction, r])
    return path


def _stable_from(n_list, diff) -> int | None:
    k = len(diff) - 1
    while k > 0 and diff[k - 1] == diff[-1]:
        k -= 1
    return int(n_list[k]) if len(diff) > 1 and k < len(diff) - 1 else None


def busemann_estimate(env: Environment, x, y, xi, n_list) -> BusemannSequence:
    """G(x, v_n) - G(y, v_n) with v_n = floor(n xi)."""
    n_list = [int(n) for n in n_list]
    diff = passage_differences(env, x, y, direction_points(xi, n_list))
    label = f"{xi[0]:g},{xi[1]:g}"
    return BusemannSequence(n_list, diff, label, _stable_from(n_list, diff))


def busemann_point_to_line(env: Environment, z, h, n_list, source=None) -> BusemannSequence:
    """G_n(h) - G_{n-1}(h) o T_z, both point-to-line values from shared tables."""
    z = lpp.unit(z)
    n_list = [int(n) for n in n_list]
    if min(n_list) < 1:
        raise ValueError("n must be at least 1")
    o = (int(source[0]), int(source[1])) if source is not None else env.origin
    top = max(n_list)
    oz = (o[0] + z[0], o[1] + z[1])
    t0 = lpp.passage_table(env, o, (o[0] + top, o[1] + top))
    tz = lpp.passage_table(env, oz, (oz[0] + top - 1, oz[1] + top - 1))
    diff = np.array([lpp.point_to_line(env, n, h, o, t0)[0]
                     - lpp.point_to_line(env, n - 1, h, oz, tz)[0] for n in n_list])
    label = "e1" if z == lpp.E1 else "e2"
    return BusemannSequence(n_list, diff, label, _stable_from(n_list, diff))


# --- variational identities and the ergodic diagnostic ------------------------------

@dataclass(frozen=True)
class VariationalResidual:
    tilted: float
    point_to_point: float
    g_pl_at_minus_grad: float


def variational_identity_check(extended: ExtendedCocycle, t: float, sample_points=None
                               ) -> VariationalResidual:
    """Residuals of the two pointwise variational identities at bulk points.

    With h = h(B) + (t, t): max_i {w_x + h.e_i + F(x, x + e_i)} = t, and
    max_i {w_x - B(x, x + e_i) - h(B).xi} = -h(B).xi.
    """
    hB = extended.boundary.h
    xi = extended.boundary.xi
    h = (hB[0] + t, hB[1] + t)
    hor = extended.horizontal[:, :-1]
    ver = extended.vertical[:-1, :]
    w = extended.bulk_weights()
    if sample_points is not None:
        c = extended.corner
        idx = np.array([(p[0] - c[0], p[1] - c[1]) for p in sample_points])
        hor, ver, w = hor[idx[:, 0], idx[:, 1]], ver[idx[:, 0], idx[:, 1]], w[idx[:, 0], idx[:, 1]]
    # F(x, x + e_i) = h(B).(-e_i) - B(x, x + e_i)
    f1 = -hB[0] - hor
    f2 = -hB[1] - ver
    tilted = np.maximum(w + h[0] + f1, w + h[1] + f2)
    hxi = hB[0] * xi[0] + hB[1] * xi[1]
    p2p = np.maximum(w - hor - hxi, w - ver - hxi)
    # at t = 0 the tilted identity reads g_pl(h(B)) = 0
    zero = np.maximum(w + hB[0] + f1, w + hB[1] + f2)
    scale = 1.0 + float(np.abs(w).max(initial=0.0)) + abs(t) + abs(hxi)
    return VariationalResidual(
        float(np.abs(tilted - t).max(initial=0.0)) / scale,
        float(np.abs(p2p + hxi).max(initial=0.0)) / scale,
        float(np.abs(zero).max(initial=0.0)) / scale,
    )


def ergodic_diagnostic(centered: CenteredCocycle, n_list, base=None) -> np.ndarray:
    """max over x >= base with |x - base|_1 = n of |F(base, x)| / n, for each n."""
    ext = centered.underlying
    c = ext.corner
    base = (int(base[0]), int(base[1])) if base is not None else c
    i0, j0 = base[0] - c[0], base[1] - c[1]
    G = ext.table.values
    rows, cols = G.shape
    h = centered.h
    out = []
    for n in n_list:
        if n < 1:
            raise ValueError("n must be positive")
        if i0 + n >= rows or j0 + n >= cols or i0 < 0 or j0 < 0:
            raise ValueError(f"window too small for level {n}")
        i = np.arange(n + 1)
        j = n - i
        # F(0, x) = -h.x - (G(0) - G(x))
        F = -(h[0] * i + h[1] * j) - (G[i0, j0] - G[i0 + i, j0 + j])
        out.append(float(np.abs(F).max() / n))
    return np.array(out)


# --- cocycles for general weights via the tandem queue ---------------------------------

def queue_cocycle(window, n0: int, k0: int, size: int, family: WeightFamily | None = None
                  ) -> ExtendedCocycle:
    """Read a cocycle off a tandem-queue window.

    The lattice point (-n, -k) carries the service time of customer n0 + n at
    station k0 + k; the rays into the anchor (0, 0) carry the inter-arrival
    times into station k0 + 1 and the sojourn times of customer n0.
    """
    S, W, A = window.S, window.W, window.A
    if n0 + size >= window.customers or k0 + size >= window.stations or n0 < 0 or k0 < 0:
        raise ValueError("window too small for the requested cocycle")
    horiz = A[n0:n0 + size, k0 + 1].copy()
    vert = (W[n0, k0 + 1:k0 + 1 + size] + S[n0, k0 + 1:k0 + 1 + size]).copy()
    # bulk point (-n, -k) for n, k in 1..size sits at index (size - n, size - k)
    bulk = S[n0 + 1:n0 + 1 + size, k0 + 1:k0 + 1 + size][::-1, ::-1]
    env = Environment(bulk, (-size, -size), family)
    means = (float(horiz.mean()), float(vert.mean()))
    boundary = BoundaryCocycle((0.5, 0.5), None, means, horiz, vert, (0, 0))
    return extend_cocycle(boundary, env)
