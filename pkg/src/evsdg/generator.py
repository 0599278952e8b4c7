"""Training and end-to-end synthesis of charging sessions.

A trained model bundles the arrival model with one mixture bank for
connected time and one for energy. Generation draws arrivals, then for each
arrival a connected time and an energy from the mixtures of its
(month, slot) cell; departure is arrival plus connected time.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np

from . import arrival as am
from .core import Horizon, MixKey, Session, SlotKey, TimeGrid
from .errors import EmptyTraining
from .ingest import TrainingBuckets, bucket_counts, build_buckets
from .mixture import EmConfig, MixtureBank, MixtureKind, fallback_plan, fit_mixture_bank, sample_gmm_positive_many

SCHEMA_VERSION = "1"
DEFAULT_MAX_DURATION_HOURS = 168.0
SECONDS_PER_DAY = 86400


class ArrivalFamily(str, enum.Enum):
    """Training-time choice of arrival model."""

    IAT = "iat"
    POISSON = "poisson"
    AUTO = "auto"  # per-slot counts, negative binomial where overdispersed


class LambdaMode(str, enum.Enum):
    PIECEWISE = "piecewise"
    SMOOTH = "smooth"


@dataclass(frozen=True)
class ModelMeta:
    trained_at: datetime
    n_training_sessions: int
    schema_version: str = SCHEMA_VERSION


@dataclass(frozen=True)
class SdgModel:
    arrival: am.ArrivalModel
    connected: MixtureBank
    energy: MixtureBank
    grid: TimeGrid
    meta: ModelMeta

    def __post_init__(self):
        if self.arrival.grid != self.grid:
            raise ValueError(f"arrival grid {self.arrival.grid} != model grid {self.grid}")
        for bank, kind in ((self.connected, MixtureKind.CONNECTED_TIME), (self.energy, MixtureKind.ENERGY)):
            if bank.kind is not kind:
                raise ValueError(f"expected a {kind.value} bank, got {bank.kind.value}")
            for key in bank.models:
                key.check(self.grid)
        if self.meta.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema version {self.meta.schema_version!r}")


@dataclass(frozen=True)
class TrainConfig:
    grid: TimeGrid = TimeGrid()
    arrival_family: ArrivalFamily = ArrivalFamily.AUTO
    lambda_mode: LambdaMode = LambdaMode.PIECEWISE
    fourier_order: int = am.DEFAULT_FOURIER_ORDER
    lambda_min: float = am.DEFAULT_LAMBDA_MIN
    lambda_max: float = am.DEFAULT_LAMBDA_MAX
    iat_boundary: am.BoundaryPolicy = am.BoundaryPolicy.RESTART
    overdispersion_threshold: float = am.OVERDISPERSION_THRESHOLD
    negbinom_min_occurrences: int = am.MIN_OCCURRENCES_FOR_NEGBINOM
    em: EmConfig = EmConfig()
    seed: int = 0


@dataclass
class FitReport:
    """What training did, for the command-line summary. Never persisted."""

    horizon: Horizon
    buckets: TrainingBuckets
    connected_plan: dict[MixKey, str] = field(default_factory=dict)
    energy_plan: dict[MixKey, str] = field(default_factory=dict)
    n_negbinom_cells: int = 0


def fit_sdg(sessions: list[Session], cfg: TrainConfig = TrainConfig()) -> tuple[SdgModel, FitReport]:
    """Fit arrival model and both mixture banks from sorted sessions."""
    if not sessions:
        raise EmptyTraining("no sessions to train on")
    grid = cfg.grid
    family = ArrivalFamily(cfg.arrival_family)
    horizon = Horizon.covering([s.arrival for s in sessions])
    buckets = build_buckets(sessions, grid, horizon)

    rate: am.RateModel = am.fit_lambda_piecewise(
        buckets.counts, buckets.observed_slot_hours, grid, (cfg.lambda_min, cfg.lambda_max)
    )
    if LambdaMode(cfg.lambda_mode) is LambdaMode.SMOOTH:
        rate = am.fit_lambda_curve(rate, grid, cfg.fourier_order)
    if family is ArrivalFamily.AUTO:
        counts = am.choose_count_family(buckets.counts, cfg.overdispersion_threshold, cfg.negbinom_min_occurrences)
    else:
        counts = am.CountFamily()
    arrival_model = am.ArrivalModel(
        rate=rate,
        grid=grid,
        counts=counts,
        iat_boundary_policy=cfg.iat_boundary,
        sampler=am.SamplerKind.IAT if family is ArrivalFamily.IAT else am.SamplerKind.COUNTS,
    )

    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    connected = fit_mixture_bank(
        buckets.durations, MixtureKind.CONNECTED_TIME, cfg.em, np.random.default_rng(seeds[0]), grid.slots_per_day
    )
    energy = fit_mixture_bank(
        buckets.energies, MixtureKind.ENERGY, cfg.em, np.random.default_rng(seeds[1]), grid.slots_per_day
    )
    # a whole-day stamp: never a raw session timestamp, and reproducible
    meta = ModelMeta(trained_at=horizon.end_datetime, n_training_sessions=len(sessions))
    model = SdgModel(arrival_model, connected, energy, grid, meta)
    report = FitReport(
        horizon=horizon,
        buckets=buckets,
        connected_plan=fallback_plan(buckets.durations, cfg.em),
        energy_plan=fallback_plan(buckets.energies, cfg.em),
        n_negbinom_cells=len(counts.negbinom),
    )
    return model, report


# ------------------------------------------------------------- generation


@dataclass(frozen=True)
class GenerationConfig:
    horizon: Horizon
    seed: int
    arrival_mode: am.SamplerKind | None = None  # None: the model's own sampler
    max_duration_hours: float = DEFAULT_MAX_DURATION_HOURS

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if not self.max_duration_hours > 0:
            raise ValueError("max_duration_hours must be positive")


@dataclass(frozen=True, eq=False)
class SessionArrays:
    """Columnar generated sessions; times are whole seconds since the horizon start."""

    horizon: Horizon
    arrival_s: np.ndarray
    departure_s: np.ndarray
    energy_kwh: np.ndarray

    def __len__(self) -> int:
        return int(self.arrival_s.size)

    def to_sessions(self) -> list[Session]:
        start = np.datetime64(self.horizon.start_datetime, "s")
        arr = (start + self.arrival_s.astype("timedelta64[s]")).tolist()
        dep = (start + self.departure_s.astype("timedelta64[s]")).tolist()
        return [Session(a, d, e) for a, d, e in zip(arr, dep, self.energy_kwh.tolist())]


def generate_arrays(model: SdgModel, cfg: GenerationConfig) -> SessionArrays:
    rng = np.random.default_rng(cfg.seed)
    horizon = cfg.horizon
    offsets = am.sample_offsets(model.arrival, horizon, rng, cfg.arrival_mode)
    arrival_s = np.floor(offsets * 3600.0).astype(np.int64)

    months = np.array([d.month for d in horizon.days()], dtype=np.int64)
    month = months[arrival_s // SECONDS_PER_DAY]
    slot = (arrival_s % SECONDS_PER_DAY) // (model.grid.slot_minutes * 60)
    S = model.grid.slots_per_day
    cell = month * S + slot

    durations = np.empty(arrival_s.size)
    energies = np.empty(arrival_s.size)
    cells = np.unique(cell)
    groups = [(MixKey(int(c // S), int(c % S)), np.flatnonzero(cell == c)) for c in cells]
    for key, idx in groups:
        durations[idx] = sample_gmm_positive_many(
            model.connected.lookup(key), idx.size, rng, upper=cfg.max_duration_hours
        )
    for key, idx in groups:
        energies[idx] = sample_gmm_positive_many(model.energy.lookup(key), idx.size, rng)

    duration_s = np.maximum(np.rint(durations * 3600.0), 1).astype(np.int64)
    return SessionArrays(horizon, arrival_s, arrival_s + duration_s, energies)


def generate_sessions(model: SdgModel, cfg: GenerationConfig) -> list[Session]:
    """Synthetic sessions over ``cfg.horizon``, sorted by arrival.

    Arrivals lie inside the horizon; departures may run past its end.
    Connected times above ``max_duration_hours`` are redrawn up to 100
    times and then clamped. Output depends only on (model, cfg).
    """
    return generate_arrays(model, cfg).to_sessions()


# -------------------------------------------------------------- summaries


@dataclass(frozen=True)
class DistributionSummary:
    n: int
    mean: float
    stddev: float
    p5: float
    p50: float
    p95: float

    @classmethod
    def of(cls, values) -> "DistributionSummary | None":
        x = np.asarray(values, dtype=float)
        if x.size == 0:
            return None
        p5, p50, p95 = np.quantile(x, [0.05, 0.5, 0.95])
        sd = float(x.std(ddof=1)) if x.size > 1 else 0.0
        return cls(int(x.size), float(x.mean()), sd, float(p5), float(p50), float(p95))


@dataclass(frozen=True)
class CountSummary:
    occurrences: int
    mean: float
    variance: float | None  # None with a single occurrence


@dataclass(frozen=True)
class Summary:
    n_sessions: int
    counts: dict[SlotKey, CountSummary]
    duration_hours: DistributionSummary | None
    energy_kwh: DistributionSummary | None


def count_moments(sessions: list[Session], grid: TimeGrid, horizon: Horizon | None = None) -> dict[SlotKey, CountSummary]:
    if not sessions:
        return {}
    horizon = horizon or Horizon.covering([s.arrival for s in sessions])
    counts, _ = bucket_counts(sessions, grid, horizon)
    out = {}
    for key in sorted(counts):
        x = np.asarray(counts[key], dtype=float)
        out[key] = CountSummary(int(x.size), float(x.mean()), float(x.var(ddof=1)) if x.size > 1 else None)
    return out


def summarize(sessions: list[Session], grid: TimeGrid, horizon: Horizon | None = None) -> Summary:
    """Totals, per-cell count moments and duration/energy distribution summaries.

    Count moments run over every occurrence of each cell in ``horizon``
    (default: the whole days spanned by the sessions).
    """
    return Summary(
        n_sessions=len(sessions),
        counts=count_moments(sessions, grid, horizon),
        duration_hours=DistributionSummary.of([s.connected_hours for s in sessions]),
        energy_kwh=DistributionSummary.of([s.energy_kwh for s in sessions]),
    )

