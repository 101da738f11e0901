"""Tandem ./G/1 queues in series and their fixed points.

Indexing: customer n, station k. ``A[n, k]`` is the time between the arrivals
of customers n and n+1 at station k, ``S[n, k]`` the service time and
``W[n, k]`` the waiting time. The recursion is

    W[n+1, k] = (W[n, k] + S[n, k] - A[n, k])^+
    A[n, k+1] = (W[n, k] + S[n, k] - A[n, k])^- + S[n+1, k]
"""

from __future__ import annotations

import csv
import heapq
import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats as sps

from . import kernels, rng
from .env import WeightFamily
from .errors import InstabilityError
from .shape import SolvableModel
from .stats import (Verdict, batch_means_se, integer_chisquare, lag1_autocorr, mean_se,
                    z_score)

DEFAULT_BURN_IN = 0.2


@dataclass(frozen=True)
class ArrivalLaw:
    """Input inter-arrival process at station 0."""

    kind: str
    alpha: float | None = None
    sequence: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "exponential", "geometric", "empirical"):
            raise ValueError(f"unknown arrival kind {self.kind!r}")
        if self.kind == "empirical":
            if not self.sequence:
                raise ValueError("empirical arrivals need a sequence")
            seq = tuple(float(a) for a in self.sequence)
            object.__setattr__(self, "sequence", seq)
            object.__setattr__(self, "alpha", float(np.mean(seq)))
        elif self.alpha is None or not self.alpha > 0:
            raise ValueError("arrival mean alpha must be positive")
        if self.kind == "geometric" and not self.alpha > 1:
            raise ValueError("geometric arrivals need alpha > 1")

    @classmethod
    def constant(cls, alpha: float) -> ArrivalLaw:
        return cls("constant", float(alpha))

    @classmethod
    def exponential(cls, alpha: float) -> ArrivalLaw:
        return cls("exponential", float(alpha))

    @classmethod
    def geometric(cls, alpha: float) -> ArrivalLaw:
        return cls("geometric", float(alpha))

    @classmethod
    def empirical(cls, sequence) -> ArrivalLaw:
        return cls("empirical", sequence=tuple(sequence))

    def sample(self, length: int, seed: int, replicate: int = 0) -> np.ndarray:
        if self.kind == "constant":
            return np.full(length, self.alpha)
        if self.kind == "empirical":
            if len(self.sequence) < length:
                raise ValueError(f"empirical arrivals have {len(self.sequence)} entries, "
                                 f"need {length}")
            return np.array(self.sequence[:length])
        u = rng.sequence_uniforms(seed, rng.ARRIVALS, 0, length, replicate)
        return WeightFamily(self.kind, mean=self.alpha).from_uniforms(u)


@dataclass(frozen=True, eq=False)
class QueueWindow:
    """A block of the tandem system.

    Shapes: ``A`` (N-1, K+1), ``S`` (N, K), ``W`` (N, K). NaN marks entries a
    transposed window cannot define.
    """

    A: np.ndarray
    S: np.ndarray
    W: np.ndarray
    edge_policy: str = "zero_start"
    burn_in: int = 0
    n_offset: int = 0
    k_offset: int = 0

    @property
    def customers(self) -> int:
        return self.S.shape[0]

    @property
    def stations(self) -> int:
        return self.S.shape[1]

    @property
    def n_range(self) -> range:
        return range(self.n_offset, self.n_offset + self.customers)

    @property
    def k_range(self) -> range:
        return range(self.k_offset, self.k_offset + self.stations)

    def arrivals(self, k: int, burn_in: bool = True) -> np.ndarray:
        a = self.A[:, k]
        return a[self.burn_in:] if burn_in else a

    def sojourn(self, burn_in: bool = True) -> np.ndarray:
        j = self.W + self.S
        return j[self.burn_in:] if burn_in else j

    def residuals(self) -> dict[str, float]:
        return check_identities(self)


# --- single station ---------------------------------------------------------

def _parse_policy(edge_policy) -> tuple[str, int]:
    if edge_policy in (None, "zero_start"):
        return "zero_start", 0
    if isinstance(edge_policy, str) and edge_policy.startswith("burn_in"):
        _, _, b = edge_policy.partition(":")
        return "burn_in", int(b or 0)
    if isinstance(edge_policy, (tuple, list)) and edge_policy[0] == "burn_in":
        return "burn_in", int(edge_policy[1])
    raise ValueError(f"unknown edge policy {edge_policy!r}")


def _check_nonneg(name: str, x: np.ndarray, lower: float) -> None:
    if np.any(x < lower) or not np.all(np.isfinite(x)):
        raise ValueError(f"{name} entries must be finite and >= {lower}")


def lindley_waits(A_row, S_row, edge_policy="zero_start", lower_bound: float = 0.0) -> np.ndarray:
    """Waiting times from W_0 = 0 forward; ``("burn_in", b)`` drops the first b outputs."""
    A = np.asarray(A_row, dtype=np.float64)
    S = np.asarray(S_row, dtype=np.float64)
    if A.ndim != 1 or A.shape != S.shape or A.size < 1:
        raise ValueError("arrival and service rows need equal lengths >= 1")
    _check_nonneg("arrival", A, lower_bound)
    _check_nonneg("service", S, lower_bound)
    policy, b = _parse_policy(edge_policy)
    W = _run(A[:-1, None], S[:, None])[2][:, 0]
    return W[b:] if policy == "burn_in" else W


def departures(A_row, S_row, W_row) -> np.ndarray:
    """Inter-departure times, one shorter than the inputs."""
    A = np.asarray(A_row, dtype=np.float64)
    S = np.asarray(S_row, dtype=np.float64)
    W = np.asarray(W_row, dtype=np.float64)
    if not (A.shape == S.shape == W.shape) or A.ndim != 1:
        raise ValueError("arrival, service and waiting rows need equal lengths")
    _check_nonneg("arrival", A, -math.inf)
    x = W[:-1] + S[:-1] - A[:-1]
    return np.maximum(-x, 0.0) + S[1:]


def _run(A0: np.ndarray, S: np.ndarray, w0: float = 0.0):
    """Tandem recursion for arrivals ``A0`` of shape (N-1, 1) and services (N, K)."""
    N, K = S.shape
    A = np.empty((N - 1, K + 1))
    A[:, 0] = A0[:, 0]
    W = np.empty((N, K))
    W[0, :] = w0
    if N > 1 and K > 0:
        kernels.tandem_sweep(A, np.ascontiguousarray(S), W)
    return A, S, W


# --- tandem passes -----------------------------------------------------------

def service_matrix(family: WeightFamily, customers: int, stations: int, seed: int,
                   replicate: int = 0) -> np.ndarray:
    u = rng.cell_uniforms(seed, rng.SERVICE, (0, 0), customers, stations, replicate)
    return family.from_uniforms(u)


def _check_stability(arrival: ArrivalLaw, family: WeightFamily) -> None:
    if not arrival.alpha > family.expectation():
        raise InstabilityError(f"arrival mean {arrival.alpha} must exceed service mean "
                               f"{family.expectation()}")


def tandem_pass(arrival: ArrivalLaw, service_family: WeightFamily, customers: int, stations: int,
                seed: int, replicate: int = 0, burn_in: float | int = DEFAULT_BURN_IN) -> QueueWindow:
    """Feed ``customers`` arrivals through ``stations`` queues in series.

    ``burn_in`` (a fraction or a count) marks how many leading customers reports skip.
    """
    if customers < 2:
        raise ValueError("need at least two customers")
    if stations < 0:
        raise ValueError("station count must be nonnegative")
    _check_stability(arrival, service_family)
    b = int(burn_in * customers) if isinstance(burn_in, float) else int(burn_in)
    if not 0 <= b < customers - 1:
        raise ValueError("burn-in leaves no customers")
    lower = min(0.0, service_family.lower_bound())
    A0 = arrival.sample(customers - 1, seed, replicate)
    S = service_matrix(service_family, customers, stations, seed, replicate)
    _check_nonneg("arrival", A0, lower)
    A, S, W = _run(A0[:, None], S)
    return QueueWindow(A, S, W, "zero_start", b)


# --- identities ----------------------------------------------------------------

def _max_abs(diff: np.ndarray) -> float:
    diff = diff[np.isfinite(diff)]
    return float(np.abs(diff).max()) if diff.size else 0.0


def check_identities(window: QueueWindow) -> dict[str, float]:
    """Largest absolute violation of each cell identity over the defined entries."""
    A, S, W = window.A, window.S, window.W
    K = window.stations
    if K == 0 or window.customers < 2:
        return {"lindley": 0.0, "departure": 0.0, "recovery": 0.0, "conservation": 0.0}
    a, a_next = A[:, :K], A[:, 1:K + 1]
    x = W[:-1] + S[:-1] - a
    with np.errstate(invalid="ignore"):
        return {
            "lindley": _max_abs(W[1:] - np.maximum(x, 0.0)),
            "departure": _max_abs(a_next - (np.maximum(-x, 0.0) + S[1:])),
            "recovery": _max_abs(S[1:] - np.minimum(S[1:] + W[1:], a_next)),
            "conservation": _max_abs((W[1:] + S[1:] + a) - (W[:-1] + S[:-1] + a_next)),
        }


def identity_scale(window: QueueWindow) -> float:
    vals = np.concatenate([window.A.ravel(), window.S.ravel(), window.W.ravel()])
    vals = vals[np.isfinite(vals)]
    return float(np.abs(vals).max()) if vals.size else 1.0


def transpose_system(window: QueueWindow) -> QueueWindow:
    """The dual queueing system with customers and stations exchanged.

    A~[i, j] = W[j-1, i+1] + S[j-1, i+1], S~[i, j] = S[j, i],
    W~[i, j] = A[j-1, i+1] - S[j, i]; undefined entries are NaN.
    """
    N, K = window.customers, window.stations
    if N < 2 or K < 2:
        raise ValueError("transpose needs at least two customers and two stations")
    A, S, W = window.A, window.S, window.W
    At = np.full((K - 1, N + 1), np.nan)
    At[:, 1:] = (W[:, 1:] + S[:, 1:]).T
    St = np.ascontiguousarray(S.T)
    Wt = np.full((K, N), np.nan)
    Wt[:, 1:] = A[:, 1:].T - S[1:, :].T
    return QueueWindow(At, St, Wt, "transposed", 0, window.k_offset, window.n_offset)


# --- queue / LPP correspondence -------------------------------------------------

def service_entry_times(service) -> np.ndarray:
    """Event-driven FIFO simulation with every customer waiting at station 0 at time 0.

    ``service[k, l]`` is the service time of customer k at station l; returns the
    time each customer enters service at each station.
    """
    service = np.asarray(service, dtype=np.float64)
    n_cust, n_st = service.shape
    entry = np.full((n_cust, n_st), np.nan)
    queues = [deque() for _ in range(n_st)]
    busy = [False] * n_st
    events: list[tuple[float, int, int, int]] = []  # (time, order, customer, station)
    order = 0

    def start(t, st):
        nonlocal order
        if busy[st] or not queues[st]:
            return
        c = queues[st].popleft()
        busy[st] = True
        entry[c, st] = t
        heapq.heappush(events, (t + service[c, st], order, c, st))
        order += 1

    if n_st:
        queues[0].extend(range(n_cust))
        start(0.0, 0)
    while events:
        t, _, c, st = heapq.heappop(events)
        busy[st] = False
        if st + 1 < n_st:
            queues[st + 1].append(c)
            start(t, st + 1)
        start(t, st)
    return entry


# --- fixed-point diagnostics -----------------------------------------------------

@dataclass
class FixedPointReport:
    alpha: float
    stations: int
    customers: int
    burn_in: int
    cesaro: bool
    mean: list[float]
    se: list[float]
    variance: list[float]
    lag1: list[float]
    ks: list[float]
    ks_pvalue: list[float]
    ks_threshold: float
    cesaro_mean: float | None = None
    cesaro_ks: float | None = None
    mean_preserved: list[bool] = field(default_factory=list)

    def to_json(self, path=None) -> str:
        text = json.dumps(asdict(self), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["station", "mean", "se", "variance", "lag1", "ks_next", "ks_pvalue"])
            for k in range(self.stations + 1):
                ks = self.ks[k] if k < len(self.ks) else ""
                p = self.ks_pvalue[k] if k < len(self.ks_pvalue) else ""
                w.writerow([k, self.mean[k], self.se[k], self.variance[k], self.lag1[k], ks, p])
        return path


def ks_threshold(n: int, m: int, level: float = 0.05) -> float:
    """Asymptotic critical value of the two-sample KS statistic."""
    c = math.sqrt(-0.5 * math.log(level / 2))
    return c * math.sqrt((n + m) / (n * m))


def fixed_point_iterate(arrival: ArrivalLaw, service_family: WeightFamily, customers: int,
                        stations: int, cesaro: bool = False, seed: int = 0, replicate: int = 0,
                        burn_in: float | int = DEFAULT_BURN_IN) -> FixedPointReport:
    """Per-station statistics of A^k and the KS self-distance KS(A^k, A^{k+1})."""
    win = tandem_pass(arrival, service_family, customers, stations, seed, replicate, burn_in)
    cols = [win.arrivals(k) for k in range(stations + 1)]
    mean, se, var, lag, ks, pv = [], [], [], [], [], []
    for a in cols:
        mu, s = batch_means_se(a)
        mean.append(mu)
        se.append(s)
        var.append(float(a.var(ddof=1)))
        lag.append(lag1_autocorr(a))
    for k in range(stations):
        res = sps.ks_2samp(cols[k], cols[k + 1])
        ks.append(float(res.statistic))
        pv.append(float(res.pvalue))
    size = cols[0].size
    preserved = [abs(mean[k + 1] - mean[k]) < 3 * math.hypot(se[k], se[k + 1])
                 for k in range(stations)]
    report = FixedPointReport(arrival.alpha, stations, customers, win.burn_in, cesaro, mean, se,
                              var, lag, ks, pv, ks_threshold(size, size), mean_preserved=preserved)
    if cesaro and stations:
        report.cesaro_mean = float(np.mean(mean[1:]))
        report.cesaro_ks = float(np.mean(ks))
    return report


def stationary_arrivals(model: SolvableModel, alpha: float) -> ArrivalLaw:
    """The known fixed-point arrival law for a solvable service family."""
    if not alpha > model.m:
        raise InstabilityError("alpha must exceed the service mean")
    return ArrivalLaw(model.family, float(alpha))


@dataclass(frozen=True)
class SojournCheck:
    mean: float
    predicted: float
    se: float
    z: float


def sojourn_mean_check(alpha: float, service_family: WeightFamily, customers: int, seed: int,
                       replicate: int = 0) -> SojournCheck:
    """Empirical E[W + S] at the fixed-point arrival law versus f(alpha)."""
    if not service_family.solvable:
        raise ValueError(f"{service_family.kind} service has no closed-form fixed point")
    model = SolvableModel.from_family(service_family)
    win = tandem_pass(stationary_arrivals(model, alpha), service_family, customers, 1, seed,
                      replicate)
    mu, se = batch_means_se(win.sojourn()[:, 0])
    pred = model.f(alpha)
    return SojournCheck(mu, pred, se, z_score(mu, pred, se))


@dataclass
class FixedPointCheck:
    family: str
    m: float
    alpha: float
    customers: int
    verdicts: list[Verdict]

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def to_json(self, path=None) -> str:
        text = json.dumps(asdict(self), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text


def fixed_point_check(model: SolvableModel, alpha: float, customers: int, seed: int,
                      replicate: int = 0, stations: int = 3, level: float = 0.01,
                      thin: int = 50) -> FixedPointCheck:
    """One tandem pass at the solvable fixed point, tested against the closed forms.

    Serially dependent series (waits, sojourns) use batch-means standard errors;
    distributional tests on them use every ``thin``-th customer.
    """
    arrival = stationary_arrivals(model, alpha)
    family = model.weight_family()
    win = tandem_pass(arrival, family, customers, stations, seed, replicate)
    fa = model.f(alpha)
    dep = win.arrivals(1)
    W = win.W[win.burn_in:, 0]
    J = win.sojourn()[:, 0]
    verdicts: list[Verdict] = []

    if model.family == "geometric":
        q = 1 - 1 / alpha
        stat, p, dof = integer_chisquare(dep, lambda k: q ** (k - 1) / alpha)
        verdicts.append(Verdict("departures_law", stat, None, p, p > level,
                                f"chi-square vs Geom({alpha}), dof {dof}"))
        p0 = (alpha - model.m) / (alpha - 1)
    else:
        res = sps.kstest(dep, "expon", args=(0, alpha))
        verdicts.append(Verdict("departures_law", float(res.statistic), None, float(res.pvalue),
                                res.pvalue > level, f"KS vs Exp(mean {alpha})"))
        p0 = 1 - model.m / alpha

    rho = lag1_autocorr(dep)
    bound = sps.norm.ppf(1 - level / 2) / math.sqrt(dep.size)
    verdicts.append(Verdict("departures_lag1", rho, 0.0, bound, abs(rho) < bound,
                            "lag-1 autocorrelation of departures"))

    mu, se = batch_means_se((W == 0).astype(np.float64))
    verdicts.append(_mean_verdict("p_wait_zero", mu, p0, se))
    mu, se = batch_means_se(J)
    verdicts.append(_mean_verdict("sojourn_mean", mu, fa, se))

    if model.family == "geometric":
        w_thin = W[::thin]
        qf = 1 - 1 / fa
        c = (model.m - 1) / (alpha - 1)
        stat, p, dof = integer_chisquare(
            w_thin, lambda k: p0 if k == 0 else c * qf ** (k - 1) / fa, support_min=0)
        verdicts.append(Verdict("wait_law", stat, None, p, p > level,
                                f"chi-square on every {thin}th wait, dof {dof}"))
        pairs_a = win.A[win.burn_in:, 1][::thin]
        pairs_j = win.sojourn()[1:, 0][::thin]
        table = _contingency(pairs_a, pairs_j, cap=6)
        chi = sps.chi2_contingency(table)
        verdicts.append(Verdict("product_form", float(chi.statistic), None, float(chi.pvalue),
                                chi.pvalue > level, "independence of (A_{n-1,1}, J_n)"))

    if stations >= 2:
        tw = transpose_system(win)
        # customers of the dual system are stations 1.. of the original; average over them
        per_customer = np.nanmean(tw.A[:, 1 + win.burn_in:], axis=0)
        mu, se = batch_means_se(per_customer)
        verdicts.append(_mean_verdict("transpose_arrival_mean", mu, fa, se))
    return FixedPointCheck(model.family, model.m, alpha, customers, verdicts)


def geometric_fixed_point_check(m: float, alpha: float, customers: int, seed: int,
                                replicate: int = 0, **kw) -> FixedPointCheck:
    return fixed_point_check(SolvableModel.geometric(m), alpha, customers, seed, replicate, **kw)


def _mean_verdict(name: str, mu: float, predicted: float, se: float, k: float = 3.0) -> Verdict:
    z = z_score(mu, predicted, se)
    return Verdict(name, mu, predicted, se, abs(z) <= k, f"z = {z:.3f}, threshold {k} SE")


def _contingency(a: np.ndarray, b: np.ndarray, cap: int) -> np.ndarray:
    ai = np.minimum(a.astype(np.int64), cap) - 1
    bi = np.minimum(b.astype(np.int64), cap) - 1
    table = np.zeros((cap, cap))
    np.add.at(table, (ai, bi), 1)
    # drop empty rows/columns so expected counts stay positive
    table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
    return table
