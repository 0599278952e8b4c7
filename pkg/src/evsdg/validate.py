"""Kolmogorov-Smirnov checks and real-versus-synthetic comparison reports.

The per-cell exponential test uses the model's rate rather than a rate
re-estimated from the tested sample, so no Lilliefors correction applies;
p-values come from the asymptotic Kolmogorov distribution with Stephens'
small-sample adjustment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .arrival import ArrivalModel
from .core import Horizon, Session, SlotKey, TimeGrid
from .errors import EmptyInput, NonPositiveData
from .generator import CountSummary, GenerationConfig, SdgModel, count_moments, generate_sessions
from .ingest import TrainingBuckets, build_buckets

LOW_POWER_N = 10
SERIES_TOL = 1e-12
# below this the alternating series converges slowly; the theta-function form is used instead
_SMALL_Z = 1.18


@dataclass(frozen=True)
class KsResult:
    statistic: float
    p_value: float
    n: int

    def __post_init__(self):
        if not 0.0 <= self.statistic <= 1.0:
            raise ValueError(f"KS statistic {self.statistic} outside [0, 1]")
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value {self.p_value} outside [0, 1]")
        if self.n < 1:
            raise ValueError("n must be >= 1")


def ks_statistic_exponential(data, lam: float) -> float:
    """Sup distance between the empirical CDF of ``data`` and Exp(``lam``)."""
    x = np.sort(np.asarray(data, dtype=float))
    if x.size == 0:
        raise ValueError("need at least one observation")
    if not (lam > 0 and math.isfinite(lam)):
        raise ValueError(f"rate must be positive, got {lam}")
    if not np.all(np.isfinite(x)) or x[0] < 0:
        raise NonPositiveData("exponential KS test needs finite, non-negative data")
    n = x.size
    F = -np.expm1(-lam * x)
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - F)
    d_minus = np.max(F - (i - 1) / n)
    return float(min(max(d_plus, d_minus), 1.0))


def kolmogorov_sf(z: float) -> float:
    """``Q(z) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 z^2)``, clamped to [0, 1]."""
    if z < 0.1:
        # 1 - Q(z) < 1e-50 here, and the theta form would underflow
        return 1.0
    if z < _SMALL_Z:
        # Jacobi theta identity: 1 - Q(z) = sqrt(2 pi)/z * sum_k exp(-(2k-1)^2 pi^2 / (8 z^2))
        y = math.exp(-math.pi**2 / (8.0 * z * z))
        total, k = 0.0, 1
        while True:
            term = y ** ((2 * k - 1) ** 2)
            total += term
            if term < 1e-17 or k > 100:
                break
            k += 1
        return min(max(1.0 - math.sqrt(2.0 * math.pi) / z * total, 0.0), 1.0)
    total, k = 0.0, 1
    while True:
        term = math.exp(-2.0 * k * k * z * z)
        total += term if k % 2 else -term
        if term < SERIES_TOL:
            break
        k += 1
    return min(max(2.0 * total, 0.0), 1.0)


def ks_pvalue(d: float, n: int) -> float:
    if not 0.0 <= d <= 1.0:
        raise ValueError(f"D={d} outside [0, 1]")
    if n < 1:
        raise ValueError("n must be >= 1")
    rn = math.sqrt(n)
    return kolmogorov_sf((rn + 0.12 + 0.11 / rn) * d)


def ks_two_sample(a, b) -> float:
    """Two-sample KS distance ``sup |F_a - F_b|`` over the pooled sample points."""
    x = np.sort(np.asarray(a, dtype=float))
    y = np.sort(np.asarray(b, dtype=float))
    if x.size == 0 or y.size == 0:
        raise EmptyInput("two-sample KS needs two non-empty samples")
    pts = np.concatenate([x, y])
    fx = np.searchsorted(x, pts, side="right") / x.size
    fy = np.searchsorted(y, pts, side="right") / y.size
    return float(np.max(np.abs(fx - fy)))


@dataclass
class ArrivalFit:
    results: dict[SlotKey, KsResult]
    omitted: list[SlotKey] = field(default_factory=list)

    @property
    def low_power(self) -> list[SlotKey]:
        return [k for k, r in self.results.items() if r.n < LOW_POWER_N]

    def pass_rate(self, alpha: float = 0.05) -> float | None:
        if not self.results:
            return None
        return sum(r.p_value >= alpha for r in self.results.values()) / len(self.results)


def validate_arrival_fit(model: ArrivalModel, buckets: TrainingBuckets) -> ArrivalFit:
    """Exponential KS test of every cell's inter-arrival times against the model rate.

    Cells with fewer than two inter-arrival times are omitted and listed.
    """
    results = {}
    omitted = []
    rates = model.rate_grid
    for key in sorted(buckets.iats):
        iats = buckets.iats[key]
        if len(iats) < 2:
            omitted.append(key)
            continue
        lam = float(rates[key.month - 1, key.daytype.index, key.slot])
        d = ks_statistic_exponential(iats, lam)
        results[key] = KsResult(d, ks_pvalue(d, len(iats)), len(iats))
    return ArrivalFit(results, omitted)


@dataclass(frozen=True)
class CountComparison:
    real: CountSummary | None
    synth: CountSummary | None


@dataclass
class ValidationReport:
    ks_per_slot: dict[SlotKey, KsResult]
    counts: dict[SlotKey, CountComparison]
    duration_ks: float
    energy_ks: float
    omitted: list[SlotKey] = field(default_factory=list)

    def to_json(self) -> dict:
        def key_fields(k: SlotKey) -> dict:
            return {"month": k.month, "daytype": k.daytype.value, "slot": k.slot}

        def moments(c: CountSummary | None):
            return (c.mean, c.variance) if c is not None else (None, None)

        counts = []
        for k in sorted(self.counts):
            mr, vr = moments(self.counts[k].real)
            ms, vs = moments(self.counts[k].synth)
            counts.append({**key_fields(k), "mean_real": mr, "var_real": vr, "mean_synth": ms, "var_synth": vs})
        return {
            "ks_per_slot": [
                {**key_fields(k), "d": r.statistic, "p": r.p_value, "n": r.n} for k, r in sorted(self.ks_per_slot.items())
            ],
            "counts": counts,
            "duration_ks": self.duration_ks,
            "energy_ks": self.energy_ks,
            "meta": {
                "omitted_slots": [key_fields(k) for k in self.omitted],
                "low_power_slots": [key_fields(k) for k, r in sorted(self.ks_per_slot.items()) if r.n < LOW_POWER_N],
                "note": "KS per slot uses the model rate, not one re-estimated from the tested sample; "
                "p-values are asymptotic.",
            },
        }


def compare_real_synthetic(real: list[Session], synth: list[Session], grid: TimeGrid) -> ValidationReport:
    """Per-cell count moments plus pooled duration and energy two-sample KS distances.

    Count moments are taken over the whole days each dataset spans. The
    returned report has no per-slot exponential tests; see
    :func:`validate_arrival_fit`.
    """
    if not real or not synth:
        raise EmptyInput("both session lists must be non-empty")
    real_counts = count_moments(real, grid)
    synth_counts = count_moments(synth, grid)
    counts = {
        k: CountComparison(real_counts.get(k), synth_counts.get(k)) for k in sorted(set(real_counts) | set(synth_counts))
    }
    return ValidationReport(
        ks_per_slot={},
        counts=counts,
        duration_ks=ks_two_sample([s.connected_hours for s in real], [s.connected_hours for s in synth]),
        energy_ks=ks_two_sample([s.energy_kwh for s in real], [s.energy_kwh for s in synth]),
    )


def build_validation_report(model: SdgModel, sessions: list[Session], seed: int = 0) -> ValidationReport:
    """Full report for ``sessions`` against ``model``.

    Per-slot exponential tests use the sessions' own inter-arrival times;
    count and distribution comparisons use a synthetic sample drawn from the
    model over the whole days the sessions span.
    """
    if not sessions:
        raise EmptyInput("no sessions to validate")
    horizon = Horizon.covering([s.arrival for s in sessions])
    buckets = build_buckets(sessions, model.grid, horizon)
    fit = validate_arrival_fit(model.arrival, buckets)
    synth = generate_sessions(model, GenerationConfig(horizon=horizon, seed=seed))
    report = compare_real_synthetic(sessions, synth, model.grid)
    report.ks_per_slot = fit.results
    report.omitted = fit.omitted
    return report
