"""Arrival-rate estimation and arrival-time sampling.

The rate lambda is a function of (month, daytype, time-of-day slot) and is
held either as a piecewise-constant table or as a bounded Fourier curve on
the log-rate. Arrivals are sampled either by inter-arrival times or by
per-slot counts (Poisson, or negative binomial where counts are
overdispersed).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from functools import cached_property
from typing import Union

import numpy as np

from .core import DAYTYPES, Daytype, Horizon, SlotKey, TimeGrid, slot_key_of
from .errors import EmptyTraining, NotOverdispersed, OrderTooHigh, ZeroMean

DEFAULT_LAMBDA_MIN = 1e-6
DEFAULT_LAMBDA_MAX = 1000.0
DEFAULT_FOURIER_ORDER = 4
OVERDISPERSION_THRESHOLD = 1.5
MIN_OCCURRENCES_FOR_NEGBINOM = 30


class BoundaryPolicy(str, enum.Enum):
    NAIVE = "naive"
    RESTART = "restart"


class SamplerKind(str, enum.Enum):
    IAT = "iat"
    COUNTS = "counts"


def _check_bounds(lambda_min: float, lambda_max: float) -> None:
    if not (math.isfinite(lambda_min) and lambda_min > 0):
        raise ValueError(f"lambda_min must be > 0, got {lambda_min}")
    if not (math.isfinite(lambda_max) and lambda_max > lambda_min):
        raise ValueError(f"lambda_max must exceed lambda_min, got {lambda_max}")


@dataclass(frozen=True)
class LambdaTable:
    """Piecewise-constant arrival rates (arrivals per hour) per slot key."""

    values: dict[SlotKey, float]
    lambda_min: float = DEFAULT_LAMBDA_MIN
    lambda_max: float = DEFAULT_LAMBDA_MAX

    def __post_init__(self):
        _check_bounds(self.lambda_min, self.lambda_max)
        for key, value in self.values.items():
            if not self.lambda_min <= value <= self.lambda_max:
                raise ValueError(f"rate {value} for {key} outside [{self.lambda_min}, {self.lambda_max}]")

    def __getitem__(self, key: SlotKey) -> float:
        return self.values[key]


@dataclass(frozen=True)
class CurveCoefficients:
    """Log-rate Fourier series ``a0 + sum_k a[k] cos(2 pi k h/24) + b[k] sin(2 pi k h/24)``."""

    a0: float
    a: tuple[float, ...] = ()
    b: tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.a) != len(self.b):
            raise ValueError("cosine and sine coefficient counts differ")

    def log_rate(self, hours: np.ndarray | float) -> np.ndarray | float:
        h = np.asarray(hours, dtype=float)
        out = np.full(h.shape, self.a0)
        for k, (ak, bk) in enumerate(zip(self.a, self.b), start=1):
            w = 2.0 * math.pi * k * h / 24.0
            out = out + ak * np.cos(w) + bk * np.sin(w)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class LambdaCurve:
    """Continuous 24-h periodic rate per (month, daytype), clamped into the bounds."""

    coefficients: dict[tuple[int, Daytype], CurveCoefficients]
    order: int
    lambda_min: float = DEFAULT_LAMBDA_MIN
    lambda_max: float = DEFAULT_LAMBDA_MAX

    def __post_init__(self):
        _check_bounds(self.lambda_min, self.lambda_max)
        if self.order < 0:
            raise ValueError("order must be >= 0")
        for key, c in self.coefficients.items():
            if len(c.a) != self.order:
                raise ValueError(f"{key}: expected {self.order} harmonics, got {len(c.a)}")

    def rate(self, month: int, daytype: Daytype, hours: np.ndarray | float) -> np.ndarray | float:
        raw = np.exp(self.coefficients[(month, Daytype(daytype))].log_rate(hours))
        clamped = np.clip(raw, self.lambda_min, self.lambda_max)
        return clamped if np.ndim(clamped) else float(clamped)


RateModel = Union[LambdaTable, LambdaCurve]


@dataclass(frozen=True)
class Poisson:
    pass


@dataclass(frozen=True)
class NegBinom:
    """Negative binomial in the failures-before-r-successes parametrization.

    Mean ``r(1-p)/p``, variance/mean ``1/p``.
    """

    r: float
    p: float

    def __post_init__(self):
        if not (math.isfinite(self.r) and self.r > 0):
            raise ValueError(f"NegBinom r must be > 0, got {self.r}")
        if not 0 < self.p < 1:
            raise ValueError(f"NegBinom p must be in (0, 1), got {self.p}")

    @property
    def mean(self) -> float:
        return self.r * (1 - self.p) / self.p


POISSON = Poisson()


@dataclass(frozen=True)
class CountFamily:
    """Per-cell count distribution; cells absent from ``negbinom`` are Poisson."""

    negbinom: dict[SlotKey, NegBinom] = field(default_factory=dict)

    def variant(self, key: SlotKey) -> Poisson | NegBinom:
        return self.negbinom.get(key, POISSON)


@dataclass(frozen=True)
class ArrivalModel:
    rate: RateModel
    grid: TimeGrid
    counts: CountFamily = field(default_factory=CountFamily)
    iat_boundary_policy: BoundaryPolicy = BoundaryPolicy.RESTART
    sampler: SamplerKind = SamplerKind.COUNTS

    def __post_init__(self):
        object.__setattr__(self, "iat_boundary_policy", BoundaryPolicy(self.iat_boundary_policy))
        object.__setattr__(self, "sampler", SamplerKind(self.sampler))
        S = self.grid.slots_per_day
        if isinstance(self.rate, LambdaTable):
            missing = [k for k in self.grid.slot_keys() if k not in self.rate.values]
            if missing:
                raise ValueError(f"rate table misses {len(missing)} cells, e.g. {missing[0]}")
            extra = [k for k in self.rate.values if k.slot >= S]
            if extra:
                raise ValueError(f"rate table has cells outside the grid, e.g. {extra[0]}")
        else:
            needed = {(m, d) for m in range(1, 13) for d in DAYTYPES}
            if set(self.rate.coefficients) != needed:
                raise ValueError("rate curve must cover every (month, daytype)")
        for key in self.counts.negbinom:
            key.check(self.grid)

    @property
    def lambda_min(self) -> float:
        return self.rate.lambda_min

    @property
    def lambda_max(self) -> float:
        return self.rate.lambda_max

    @cached_property
    def rate_grid(self) -> np.ndarray:
        """Per-slot rates, shape (12, 2, slots_per_day).

        Curves are evaluated at slot centres; this is the piecewise-constant
        rate used by the count sampler and the restart IAT sampler.
        """
        S = self.grid.slots_per_day
        out = np.empty((12, 2, S))
        if isinstance(self.rate, LambdaTable):
            for key, value in self.rate.values.items():
                out[key.month - 1, key.daytype.index, key.slot] = value
        else:
            centres = np.asarray(self.grid.slot_center_hours())
            for (month, daytype), _ in self.rate.coefficients.items():
                out[month - 1, daytype.index] = self.rate.rate(month, daytype, centres)
        out.setflags(write=False)
        return out


# ---------------------------------------------------------------- fitting


def fit_lambda_piecewise(
    counts: dict[SlotKey, list[int]],
    observed_hours: dict[SlotKey, float],
    grid: TimeGrid,
    bounds: tuple[float, float] = (DEFAULT_LAMBDA_MIN, DEFAULT_LAMBDA_MAX),
) -> LambdaTable:
    """Exposure-based rate estimate: arrivals in the cell over observed hours.

    Cells never observed take the pooled (month, daytype) rate, then the
    global rate, then ``lambda_min``. Every value is clamped into ``bounds``.
    """
    lo, hi = bounds
    _check_bounds(lo, hi)
    if not counts:
        raise EmptyTraining("no count buckets to fit")

    totals: dict[SlotKey, tuple[int, float]] = {}
    for key, occ in counts.items():
        hours = observed_hours.get(key, 0.0)
        if hours < 0:
            raise ValueError(f"negative observed hours for {key}")
        if hours > 0:
            totals[key] = (sum(occ), hours)

    pooled: dict[tuple[int, Daytype], list[float]] = {}
    n_all = h_all = 0.0
    for key, (n, h) in totals.items():
        acc = pooled.setdefault((key.month, key.daytype), [0.0, 0.0])
        acc[0] += n
        acc[1] += h
        n_all += n
        h_all += h

    def clamp(x: float) -> float:
        return min(max(x, lo), hi)

    values: dict[SlotKey, float] = {}
    for key in grid.slot_keys():
        if key in totals:
            n, h = totals[key]
            values[key] = clamp(n / h)
        elif (key.month, key.daytype) in pooled:
            n, h = pooled[(key.month, key.daytype)]
            values[key] = clamp(n / h)
        elif h_all > 0:
            values[key] = clamp(n_all / h_all)
        else:
            values[key] = lo
    return LambdaTable(values, lo, hi)


def fourier_design(hours: np.ndarray, order: int) -> np.ndarray:
    """Columns ``[1, cos(w1 h), sin(w1 h), ..., cos(wK h), sin(wK h)]`` with ``wk = 2 pi k / 24``."""
    h = np.asarray(hours, dtype=float)
    cols = [np.ones_like(h)]
    for k in range(1, order + 1):
        w = 2.0 * math.pi * k * h / 24.0
        cols.append(np.cos(w))
        cols.append(np.sin(w))
    return np.column_stack(cols)


def fit_lambda_curve(table: LambdaTable, grid: TimeGrid, order: int = DEFAULT_FOURIER_ORDER) -> LambdaCurve:
    """Least-squares Fourier fit of log-rate per (month, daytype) at slot-centre hours."""
    S = grid.slots_per_day
    if order < 0:
        raise ValueError("order must be >= 0")
    if 2 * order + 1 > S:
        raise OrderTooHigh(f"order {order} needs {2 * order + 1} slots, grid has {S}")
    X = fourier_design(np.asarray(grid.slot_center_hours()), order)
    coefs: dict[tuple[int, Daytype], CurveCoefficients] = {}
    for month in range(1, 13):
        for daytype in DAYTYPES:
            y = np.log([table.values[SlotKey(month, daytype, s)] for s in range(S)])
            beta, *_ = np.linalg.lstsq(X, y, rcond=None)
            coefs[(month, daytype)] = CurveCoefficients(
                float(beta[0]),
                tuple(float(v) for v in beta[1::2]),
                tuple(float(v) for v in beta[2::2]),
            )
    return LambdaCurve(coefs, order, table.lambda_min, table.lambda_max)


def curve_residuals(curve: LambdaCurve, table: LambdaTable, grid: TimeGrid) -> dict[SlotKey, float]:
    """Log-domain residual ``log(table) - fitted log-rate`` per cell (before clamping)."""
    centres = grid.slot_center_hours()
    out = {}
    for key in grid.slot_keys():
        fitted = curve.coefficients[(key.month, key.daytype)].log_rate(centres[key.slot])
        out[key] = math.log(table.values[key]) - fitted
    return out


def eval_lambda(model: ArrivalModel, t: datetime) -> float:
    """Arrival rate (per hour) in effect at ``t``."""
    if isinstance(model.rate, LambdaTable):
        return model.rate.values[slot_key_of(t, model.grid)]
    key = slot_key_of(t, model.grid)
    hour = t.hour + t.minute / 60.0 + (t.second + t.microsecond / 1e6) / 3600.0
    return model.rate.rate(key.month, key.daytype, hour)


def overdispersion_ratio(counts: list[int]) -> float:
    """Sample variance (n-1 denominator) over sample mean; 1 for a single observation."""
    x = np.asarray(counts, dtype=float)
    if x.size == 0:
        raise ValueError("counts must be non-empty")
    mean = x.mean()
    if mean <= 0:
        raise ZeroMean("mean count is zero")
    if x.size == 1:
        return 1.0
    return float(x.var(ddof=1) / mean)


def negbinom_from_moments(mean: float, variance: float) -> NegBinom:
    if not variance > mean > 0:
        raise NotOverdispersed(f"variance {variance} does not exceed mean {mean}")
    return NegBinom(r=mean * mean / (variance - mean), p=mean / variance)


def fit_negbinom(counts: list[int]) -> tuple[float, float]:
    """Method-of-moments negative binomial ``(r, p)``."""
    x = np.asarray(counts, dtype=float)
    if x.size < 2:
        raise NotOverdispersed("need at least two observations")
    nb = negbinom_from_moments(float(x.mean()), float(x.var(ddof=1)))
    return nb.r, nb.p


def choose_count_family(
    counts: dict[SlotKey, list[int]],
    ratio_threshold: float = OVERDISPERSION_THRESHOLD,
    min_occurrences: int = MIN_OCCURRENCES_FOR_NEGBINOM,
) -> CountFamily:
    """Switch a cell to the negative binomial when its counts are clearly overdispersed."""
    chosen = {}
    for key in sorted(counts):
        occ = counts[key]
        if len(occ) < min_occurrences or sum(occ) == 0:
            continue
        if overdispersion_ratio(occ) > ratio_threshold:
            r, p = fit_negbinom(occ)
            chosen[key] = NegBinom(r, p)
    return CountFamily(chosen)


# --------------------------------------------------------------- sampling


def slot_occurrence_rates(model: ArrivalModel, horizon: Horizon) -> tuple[np.ndarray, list[SlotKey]]:
    """Rate for every slot occurrence in the horizon, in calendar order."""
    grid = model.grid
    rates = np.empty(horizon.n_days * grid.slots_per_day)
    keys = []
    S = grid.slots_per_day
    for i, day in enumerate(horizon.days()):
        dt = Daytype.of(day)
        rates[i * S:(i + 1) * S] = model.rate_grid[day.month - 1, dt.index]
        keys.extend(SlotKey(day.month, dt, s) for s in range(S))
    return rates, keys


class _ExpStream:
    """Unit-rate exponential variates drawn from ``rng`` in chunks."""

    def __init__(self, rng: np.random.Generator, chunk: int = 512):
        self._rng = rng
        self._chunk = chunk
        self._buf: list[float] = []
        self._pos = 0

    def next(self) -> float:
        if self._pos == len(self._buf):
            self._buf = self._rng.standard_exponential(self._chunk).tolist()
            self._pos = 0
        v = self._buf[self._pos]
        self._pos += 1
        return v


def sample_offsets_iat(
    model: ArrivalModel,
    horizon: Horizon,
    rng: np.random.Generator,
    policy: BoundaryPolicy | str | None = None,
) -> np.ndarray:
    """Arrival offsets (hours since horizon start) by inter-arrival sampling.

    ``restart``: exact piecewise-constant process; a wait crossing a slot
    boundary is discarded and redrawn from the boundary under the next
    slot's rate. ``naive``: each wait uses only the rate at its start, so a
    long wait drawn in a quiet slot can jump over busy slots.
    """
    policy = BoundaryPolicy(policy or model.iat_boundary_policy)
    T = model.grid.slot_hours
    end = horizon.hours
    stream = _ExpStream(rng)
    out: list[float] = []

    if policy is BoundaryPolicy.RESTART:
        rates, _ = slot_occurrence_rates(model, horizon)
        for i, lam in enumerate(rates.tolist()):
            hi = (i + 1) * T
            t = i * T + stream.next() / lam
            while t < hi:
                out.append(t)
                t += stream.next() / lam
        return np.asarray(out, dtype=float)

    rate_at = _naive_rate_function(model, horizon)
    t = 0.0
    while True:
        t += stream.next() / rate_at(t)
        if t >= end:
            break
        out.append(t)
    return np.asarray(out, dtype=float)


def _naive_rate_function(model: ArrivalModel, horizon: Horizon):
    T = model.grid.slot_hours
    if isinstance(model.rate, LambdaTable):
        rates = slot_occurrence_rates(model, horizon)[0].tolist()
        return lambda t: rates[int(t // T)]

    start = horizon.start_datetime

    def rate_at(t: float) -> float:
        return eval_lambda(model, start + timedelta(hours=t))

    return rate_at


def sample_counts(model: ArrivalModel, horizon: Horizon, rng: np.random.Generator) -> np.ndarray:
    """Arrival count per slot occurrence (Poisson, or the cell's negative binomial).

    Negative-binomial cells keep their fitted dispersion ``r`` and are
    re-centred on the model's mean ``lambda * T``; for a piecewise table this
    is exactly the fitted ``(r, p)``.
    """
    rates, keys = slot_occurrence_rates(model, horizon)
    mu = rates * model.grid.slot_hours
    r = np.array([getattr(model.counts.variant(k), "r", np.nan) for k in keys]) if model.counts.negbinom else None
    out = np.zeros(mu.size, dtype=np.int64)
    if r is None:
        return rng.poisson(mu)
    nb = ~np.isnan(r)
    out[~nb] = rng.poisson(mu[~nb])
    out[nb] = rng.negative_binomial(r[nb], r[nb] / (r[nb] + mu[nb]))
    return out


def sample_offsets_counts(model: ArrivalModel, horizon: Horizon, rng: np.random.Generator) -> np.ndarray:
    """Arrival offsets (hours since horizon start) by per-slot counts placed uniformly in the slot."""
    T = model.grid.slot_hours
    n = sample_counts(model, horizon, rng)
    slot_index = np.repeat(np.arange(n.size), n)
    offsets = (slot_index + rng.random(slot_index.size)) * T
    offsets.sort()
    return offsets


def offsets_to_datetimes(offsets: np.ndarray, horizon: Horizon) -> list[datetime]:
    # floor to whole microseconds so nothing rounds up onto the horizon end
    micros = np.floor(np.asarray(offsets) * 3.6e9).astype(np.int64)
    start = np.datetime64(horizon.start_datetime, "us")
    return (start + micros.astype("timedelta64[us]")).tolist()


def sample_arrivals_iat(
    model: ArrivalModel, horizon: Horizon, rng: np.random.Generator, policy: BoundaryPolicy | str | None = None
) -> list[datetime]:
    return offsets_to_datetimes(sample_offsets_iat(model, horizon, rng, policy), horizon)


def sample_arrivals_counts(model: ArrivalModel, horizon: Horizon, rng: np.random.Generator) -> list[datetime]:
    return offsets_to_datetimes(sample_offsets_counts(model, horizon, rng), horizon)


def sample_offsets(
    model: ArrivalModel, horizon: Horizon, rng: np.random.Generator, kind: SamplerKind | str | None = None
) -> np.ndarray:
    kind = SamplerKind(kind or model.sampler)
    if kind is SamplerKind.IAT:
        return sample_offsets_iat(model, horizon, rng)
    return sample_offsets_counts(model, horizon, rng)
