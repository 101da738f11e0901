"""Shape function, its queueing dual and the tilt/velocity correspondence.

For the exponential and geometric families everything is explicit:

    gamma(s) = m (1 + s) + 2 sigma sqrt(s)
    f(alpha) = sup_s {gamma(s) - s alpha} = m + sigma^2 / (alpha - m)

A direction xi in the open simplex is summarized by s = xi1 / xi2, and the
tilt dual to (xi, t) is h = -(alpha, f(alpha)) + t (1, 1) with alpha = gamma'(s).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize

from . import lpp
from .env import WeightFamily, sample_environment
from .errors import guard_area
from .stats import normal_ci

GOLDEN_TOL = 1e-10


@dataclass(frozen=True)
class SolvableModel:
    family: str
    m: float
    var: float

    def __post_init__(self):
        if self.family not in ("exponential", "geometric"):
            raise ValueError(f"{self.family} has no closed-form shape")

    @classmethod
    def exponential(cls, m: float = 1.0) -> SolvableModel:
        if not m > 0:
            raise ValueError("mean must be positive")
        return cls("exponential", float(m), float(m) ** 2)

    @classmethod
    def geometric(cls, m: float) -> SolvableModel:
        if not m > 1:
            raise ValueError("geometric mean must exceed 1")
        return cls("geometric", float(m), float(m) * (m - 1))

    @classmethod
    def from_family(cls, family: WeightFamily) -> SolvableModel:
        if family.kind == "exponential":
            return cls.exponential(family.mean)
        if family.kind == "geometric":
            return cls.geometric(family.mean)
        raise ValueError(f"{family.kind} family is not solvable")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.var)

    def weight_family(self, mean: float | None = None) -> WeightFamily:
        return WeightFamily(self.family, mean=float(self.m if mean is None else mean))

    def g_pp(self, xi) -> float:
        a, b = float(xi[0]), float(xi[1])
        if a < 0 or b < 0:
            raise ValueError("g_pp is defined on the closed quadrant")
        return self.m * (a + b) + 2 * self.sigma * math.sqrt(a * b)

    def grad_g_pp(self, xi) -> tuple[float, float]:
        s = _ratio(xi)
        return grad_gamma(self, s), grad_gamma(self, 1 / s)

    def f(self, alpha: float) -> float:
        """Closed-form dual; +inf for alpha <= m."""
        if alpha <= self.m:
            return math.inf
        return self.m + self.var / (alpha - self.m)

    def boundary_means(self, xi) -> tuple[float, float]:
        """Expected horizontal and vertical edge weights of the direction-xi cocycle."""
        _ratio(xi)
        a, b = float(xi[0]), float(xi[1])
        return self.m + self.sigma * math.sqrt(b / a), self.m + self.sigma * math.sqrt(a / b)


@dataclass(frozen=True, eq=False)
class ShapeCurve:
    """Either a closed-form curve (``model``) or an empirical grid of estimates."""

    model: SolvableModel | None = None
    s: np.ndarray | None = None
    gamma: np.ndarray | None = None
    halfwidth: np.ndarray | None = None
    sd: np.ndarray | None = None
    n: int | None = None
    replicates: int | None = None
    concave_projected: bool = False
    m: float | None = None
    samples: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def closed_form(cls, model: SolvableModel) -> ShapeCurve:
        return cls(model=model, m=model.m)

    @property
    def empirical(self) -> bool:
        return self.model is None

    def value(self, s: float) -> float:
        if self.model is not None:
            return gamma(self.model, s)
        return float(np.interp(s, self.s, self.gamma))

    def concave_majorant(self) -> ShapeCurve:
        """Least concave majorant of the empirical grid (upper hull)."""
        if self.model is not None:
            return self
        hull = _upper_hull(self.s, self.gamma)
        g = np.interp(self.s, self.s[hull], self.gamma[hull])
        return ShapeCurve(None, self.s, g, self.halfwidth, self.sd, self.n, self.replicates,
                          True, self.m, self.samples)

    def to_csv(self, path) -> Path:
        if self.model is not None:
            raise ValueError("closed-form curves have no grid to export")
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "gamma", "ci_lo", "ci_hi", "n", "replicates"])
            for s, g, hw in zip(self.s, self.gamma, self.halfwidth):
                w.writerow([repr(float(s)), repr(float(g)), repr(float(g - hw)),
                            repr(float(g + hw)), self.n, self.replicates])
        return path


@dataclass(frozen=True)
class DualPoint:
    alpha: float
    f_alpha: float
    t: float
    xi: tuple[float, float]
    h: tuple[float, float]
    residual: float = 0.0


def _ratio(xi) -> float:
    a, b = float(xi[0]), float(xi[1])
    if not (a > 0 and b > 0):
        raise ValueError(f"direction {tuple(xi)} is not strictly inside the quadrant")
    return a / b


def _upper_hull(x, y) -> list[int]:
    hull: list[int] = []
    for k in range(len(x)):
        while len(hull) >= 2:
            i, j = hull[-2], hull[-1]
            # drop j if it lies on or below the chord from i to k
            if (y[j] - y[i]) * (x[k] - x[i]) <= (y[k] - y[i]) * (x[j] - x[i]):
                hull.pop()
            else:
                break
        hull.append(k)
    return hull


# --- closed forms ------------------------------------------------------------

def gamma(model: SolvableModel, s: float) -> float:
    if s < 0:
        raise ValueError("s must be nonnegative")
    return model.m * (1 + s) + 2 * model.sigma * math.sqrt(s)


def grad_gamma(model: SolvableModel, s: float) -> float:
    if s < 0:
        raise ValueError("s must be nonnegative")
    if s == 0:
        return math.inf
    return model.m + model.sigma / math.sqrt(s)


def f_closed(model: SolvableModel, alpha: float) -> float:
    return model.f(alpha)


# --- numerical Legendre transforms ---------------------------------------------

def _golden_max(fn, lo: float, hi: float) -> float:
    """Maximize a unimodal function of a log-scale variable by golden-section search."""
    res = optimize.minimize_scalar(lambda u: -fn(math.exp(u)), bracket=(math.log(lo), math.log(hi)),
                                   method="golden", tol=GOLDEN_TOL)
    return math.exp(float(res.x))


def f_legendre(curve, alpha: float, return_bound: bool = False):
    """f(alpha) = sup_{s >= 0} {gamma(s) - s alpha}, computed numerically.

    ``curve`` is a :class:`SolvableModel` or :class:`ShapeCurve`. Returns +inf
    for alpha <= m. For empirical curves the sup is a discrete max over the grid;
    with ``return_bound`` the result is ``(value, bound)`` where ``bound`` caps the
    discretization error of a concave curve.
    """
    if isinstance(curve, SolvableModel):
        curve = ShapeCurve.closed_form(curve)
    m = curve.m if curve.m is not None else float(curve.gamma[0])
    if alpha <= m:
        return (math.inf, 0.0) if return_bound else math.inf
    if curve.model is not None:
        model = curve.model
        # slope of gamma equals alpha at s0; search a x4 bracket around it
        s0 = model.var / (alpha - model.m) ** 2
        s_star = _golden_max(lambda s: gamma(model, s) - s * alpha, s0 / 4, s0 * 4)
        value = max(gamma(model, s_star) - s_star * alpha, model.m)
        return (value, 0.0) if return_bound else value
    phi = curve.gamma - curve.s * alpha
    k = int(np.argmax(phi))
    value = float(phi[k])
    if not return_bound:
        return value
    return value, _discretization_bound(curve.s, phi, value)


def _discretization_bound(s: np.ndarray, phi: np.ndarray, best: float) -> float:
    """Upper bound on sup(phi) - max(phi) between grid points, valid for concave phi."""
    slopes = np.diff(phi) / np.diff(s)
    bound = 0.0
    for k in range(len(s) - 1):
        ds = s[k + 1] - s[k]
        caps = []
        if k > 0:
            caps.append(phi[k] + max(slopes[k - 1], 0.0) * ds)
        if k + 1 < len(slopes):
            caps.append(phi[k + 1] + max(-slopes[k + 1], 0.0) * ds)
        if caps:
            bound = max(bound, min(caps) - best)
    return float(bound)


def gamma_from_f(model: SolvableModel, s: float, f=None) -> float:
    """gamma(s) = inf_{alpha > m} {f(alpha) + s alpha}; ``f`` defaults to the numerical transform."""
    if s < 0:
        raise ValueError("s must be nonnegative")
    if s == 0:
        return model.m  # infimum approached as alpha grows, never attained
    f = f or (lambda a: f_legendre(model, a))
    e0 = model.sigma / math.sqrt(s)  # alpha - m at the minimizer
    e_star = _golden_max(lambda e: -(f(model.m + e) + s * (model.m + e)), e0 / 4, e0 * 4)
    return f(model.m + e_star) + s * (model.m + e_star)


# --- tilt / velocity -------------------------------------------------------------

def _xi_from_s(s: float) -> tuple[float, float]:
    return (s / (1 + s), 1 / (1 + s))


def tilt_to_velocity(model: SolvableModel, h) -> DualPoint:
    """Solve -h + t(1, 1) = (alpha, f(alpha)) for (alpha, t) and the dual direction."""
    h1, h2 = float(h[0]), float(h[1])
    c = h1 - h2

    def gap(a):
        return model.f(a) - a - c

    lo = hi = model.m + 1.0
    while gap(hi) > 0:
        hi = model.m + 2 * (hi - model.m)
    while gap(lo) < 0:
        lo = model.m + (lo - model.m) / 2
    alpha = optimize.bisect(gap, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=2000)
    t = h1 + alpha
    fa = model.f(alpha)
    s = model.var / (alpha - model.m) ** 2
    return DualPoint(alpha, fa, t, _xi_from_s(s), (h1, h2), abs(fa - (t - h2)))


def velocity_to_tilt(model: SolvableModel, xi, t: float = 0.0) -> tuple[float, float]:
    s = _ratio(xi)
    alpha = grad_gamma(model, s)
    fa = model.f(alpha)
    return (-alpha + t, -fa + t)


# --- Monte Carlo -----------------------------------------------------------------

def gamma_samples(family: WeightFamily, s_grid, n: int, replicates: int, seed: int,
                  first_replicate: int = 0, max_area: float | None = 5e7) -> np.ndarray:
    """Matrix [replicate, s] of n^-1 G(0, (max(floor(n s), 1), n))."""
    if n < 1:
        raise ValueError("n must be at least 1")
    s_grid = np.asarray(s_grid, dtype=np.float64)
    if np.any(s_grid < 0):
        raise ValueError("s values must be nonnegative")
    cols = np.maximum(np.floor(n * s_grid).astype(np.int64), 1)
    width = int(cols.max()) + 1
    guard_area(width, n + 1, max_area)
    out = np.empty((replicates, len(s_grid)))
    for r in range(replicates):
        env = sample_environment(family, width, n + 1, (0, 0), seed, replicate=first_replicate + r)
        G = lpp.forward_values(env.weights)
        out[r] = G[cols, n] / n
    return out


def estimate_gamma_mc(family: WeightFamily, s_grid, n: int, replicates: int, seed: int,
                      max_area: float | None = 5e7, level: float = 0.95) -> ShapeCurve:
    if replicates < 2:
        raise ValueError("need at least two replicates")
    samples = gamma_samples(family, s_grid, n, replicates, seed, max_area=max_area)
    means = samples.mean(axis=0)
    sd = samples.std(axis=0, ddof=1)
    lo, _ = normal_ci(0.0, 1.0, level)
    halfwidth = -lo * sd / math.sqrt(replicates)
    return ShapeCurve(None, np.asarray(s_grid, dtype=np.float64), means, halfwidth, sd, n,
                      replicates, False, family.expectation(), samples)
