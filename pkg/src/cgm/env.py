"""I.i.d. vertex weight fields on finite windows of the lattice."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import rng

KINDS = ("exponential", "geometric", "bernoulli_capped", "empirical")


@dataclass(frozen=True)
class WeightFamily:
    """A weight law, sampled by inversion from a shared uniform.

    ``exponential``: mean ``mean``.
    ``geometric``: support {1, 2, ...}, P(w = k) = (1 - 1/mean)^(k-1) / mean.
    ``bernoulli_capped``: 1 with probability ``p1``, else ``lo``.
    ``empirical``: uniform choice among ``values``.
    """

    kind: str
    mean: float | None = None
    p1: float | None = None
    lo: float = 0.0
    values: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown weight family {self.kind!r}; expected one of {KINDS}")
        if self.kind == "exponential":
            if self.mean is None or not self.mean > 0:
                raise ValueError("exponential family needs mean > 0")
        elif self.kind == "geometric":
            if self.mean is None or not self.mean > 1:
                raise ValueError("geometric family on {1,2,...} needs mean > 1")
        elif self.kind == "bernoulli_capped":
            if self.p1 is None or not 0 < self.p1 <= 1:
                raise ValueError("bernoulli_capped needs 0 < p1 <= 1")
            if not self.lo < 1:
                raise ValueError("bernoulli_capped needs lo < 1")
        else:
            if not self.values:
                raise ValueError("empirical family needs a nonempty value list")
            vals = tuple(float(v) for v in self.values)
            if not np.all(np.isfinite(vals)):
                raise ValueError("empirical values must be finite")
            if len(set(vals)) < 2:
                raise ValueError("empirical family must not be constant")
            object.__setattr__(self, "values", vals)

    @classmethod
    def exponential(cls, mean: float = 1.0) -> WeightFamily:
        return cls("exponential", mean=float(mean))

    @classmethod
    def geometric(cls, mean: float) -> WeightFamily:
        return cls("geometric", mean=float(mean))

    @classmethod
    def bernoulli_capped(cls, p1: float, lo: float = 0.0) -> WeightFamily:
        return cls("bernoulli_capped", p1=float(p1), lo=float(lo))

    @classmethod
    def empirical(cls, values) -> WeightFamily:
        return cls("empirical", values=tuple(values))

    @property
    def solvable(self) -> bool:
        return self.kind in ("exponential", "geometric")

    def expectation(self) -> float:
        if self.kind in ("exponential", "geometric"):
            return float(self.mean)
        if self.kind == "bernoulli_capped":
            return self.p1 + (1 - self.p1) * self.lo
        return float(np.mean(self.values))

    def variance(self) -> float:
        if self.kind == "exponential":
            return self.mean ** 2
        if self.kind == "geometric":
            return self.mean * (self.mean - 1)
        if self.kind == "bernoulli_capped":
            return self.p1 * (1 - self.p1) * (1 - self.lo) ** 2
        return float(np.var(self.values))

    def lower_bound(self) -> float:
        if self.kind == "exponential":
            return 0.0
        if self.kind == "geometric":
            return 1.0
        if self.kind == "bernoulli_capped":
            return self.lo
        return min(self.values)

    def with_mean(self, mean: float) -> WeightFamily:
        """Same solvable kind, different mean (used for boundary and arrival laws)."""
        if not self.solvable:
            raise ValueError(f"{self.kind} family has no mean parametrization")
        return WeightFamily(self.kind, mean=float(mean))

    def from_uniforms(self, u: np.ndarray) -> np.ndarray:
        """Inverse-CDF transform; monotone in ``u`` so shared uniforms couple families."""
        u = np.asarray(u, dtype=np.float64)
        if self.kind == "exponential":
            return -self.mean * np.log1p(-u)
        if self.kind == "geometric":
            # P(w > k) = q^k with q = 1 - 1/mean
            return 1.0 + np.floor(np.log1p(-u) / np.log1p(-1.0 / self.mean))
        if self.kind == "bernoulli_capped":
            # the top p1 mass of u maps to 1 so that raising p1 only opens sites
            return np.where(u >= 1.0 - self.p1, 1.0, self.lo)
        vals = np.sort(np.asarray(self.values))
        return vals[np.minimum((u * len(vals)).astype(np.int64), len(vals) - 1)]

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind}
        if self.mean is not None:
            out["mean"] = self.mean
        if self.kind == "bernoulli_capped":
            out["p1"] = self.p1
            out["lo"] = self.lo
        if self.values is not None:
            out["values"] = list(self.values)
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> WeightFamily:
        d = dict(d)
        if "values" in d and d["values"] is not None:
            d["values"] = tuple(d["values"])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class Environment:
    """A finite window of a weight field; ``weights[i, j]`` sits at ``origin + (i, j)``.

    ``shift`` records accumulated translations so that resampling a new window
    reads the same underlying field.
    """

    weights: np.ndarray
    origin: tuple[int, int] = (0, 0)
    family: WeightFamily | None = None
    seed: int | None = None
    replicate: int = 0
    shift: tuple[int, int] = (0, 0)
    tag: int = field(default=rng.BULK)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.flags.writeable:
            w = w.copy()
        if w.ndim != 2:
            raise ValueError("weights must be a 2-d array")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "origin", (int(self.origin[0]), int(self.origin[1])))

    @property
    def width(self) -> int:
        return self.weights.shape[0]

    @property
    def height(self) -> int:
        return self.weights.shape[1]

    @property
    def upper(self) -> tuple[int, int]:
        """Largest lattice point in the window."""
        return (self.origin[0] + self.width - 1, self.origin[1] + self.height - 1)

    def contains(self, x) -> bool:
        return (self.origin[0] <= x[0] <= self.upper[0]
                and self.origin[1] <= x[1] <= self.upper[1])

    def covers(self, lo, hi) -> bool:
        """True when the rectangle [lo, hi] lies inside the window (empty rectangles count)."""
        if lo[0] > hi[0] or lo[1] > hi[1]:
            return True
        return self.contains(lo) and self.contains(hi)

    def weight(self, x) -> float:
        if not self.contains(x):
            raise IndexError(f"point {tuple(x)} outside window {self.origin}..{self.upper}")
        return float(self.weights[x[0] - self.origin[0], x[1] - self.origin[1]])

    def block(self, lo, hi) -> np.ndarray:
        """Weights on the rectangle [lo, hi] as a (read-only) view."""
        if not self.covers(lo, hi):
            raise IndexError(f"rectangle {tuple(lo)}..{tuple(hi)} outside window "
                             f"{self.origin}..{self.upper}")
        i0, j0 = lo[0] - self.origin[0], lo[1] - self.origin[1]
        return self.weights[i0:i0 + max(hi[0] - lo[0] + 1, 0), j0:j0 + max(hi[1] - lo[1] + 1, 0)]

    def resample(self, origin, width: int, height: int) -> Environment:
        """Another window of the same field (requires a sampled environment)."""
        if self.family is None or self.seed is None:
            raise ValueError("environment built from an explicit array cannot be resampled")
        return sample_environment(self.family, width, height, origin, self.seed,
                                  replicate=self.replicate, tag=self.tag, _shift=self.shift)

    @classmethod
    def from_array(cls, weights, origin=(0, 0)) -> Environment:
        return cls(weights=np.asarray(weights, dtype=np.float64), origin=tuple(origin))


def sample_environment(family: WeightFamily, width: int, height: int, origin=(0, 0),
                       seed: int = 0, *, replicate: int = 0, tag: int = rng.BULK,
                       _shift=(0, 0)) -> Environment:
    """Draw the window ``[origin, origin + (width-1, height-1)]`` of the field keyed by seed."""
    if width <= 0 or height <= 0:
        raise ValueError("window width and height must be positive")
    base = (origin[0] + _shift[0], origin[1] + _shift[1])
    u = rng.cell_uniforms(seed, tag, base, width, height, replicate)
    return Environment(family.from_uniforms(u), tuple(origin), family, int(seed),
                       int(replicate), tuple(_shift), tag)


def translate(env: Environment, z) -> Environment:
    """The shifted field ``(T_z w)_x = w_{x+z}``, restricted to the translated window."""
    z = (int(z[0]), int(z[1]))
    return Environment(env.weights, (env.origin[0] - z[0], env.origin[1] - z[1]), env.family,
                       env.seed, env.replicate, (env.shift[0] + z[0], env.shift[1] + z[1]), env.tag)
