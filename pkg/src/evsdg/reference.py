"""Ground-truth session generator with known parameters.

Used as an oracle in tests and for demos: hourly arrival rates per daytype
(optionally scaled per month), Poisson or gamma-mixed (negative binomial)
hourly counts, and fixed mixtures for connected time and energy. It shares
no sampling code with the trainable model.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import timedelta

import numpy as np

from .core import Daytype, Horizon, Session

# arrivals per hour, hour 0 .. 23
WEEKDAY_RATES = (
    0.5, 0.5, 0.5, 0.5, 0.5, 0.8, 1.5, 4.0, 6.0, 5.5, 4.0, 3.5,
    3.5, 3.5, 3.0, 3.0, 3.5, 5.0, 4.5, 3.5, 2.5, 2.0, 1.2, 0.6,
)
WEEKEND_RATES = (
    0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.6, 1.0, 2.0, 3.0, 3.5, 4.0,
    4.0, 3.5, 3.5, 3.0, 3.0, 3.0, 2.5, 2.0, 1.5, 1.0, 0.8, 0.5,
)


@dataclass(frozen=True)
class Mixture:
    weights: tuple[float, ...]
    means: tuple[float, ...]
    stddevs: tuple[float, ...]

    @property
    def mean(self) -> float:
        return sum(w * m for w, m in zip(self.weights, self.means))


DURATION_MIXTURE = Mixture((0.6, 0.4), (2.0, 4.5), (0.6, 1.0))  # hours, mean 3.0
ENERGY_MIXTURE = Mixture((0.5, 0.5), (5.0, 11.0), (1.5, 2.0))  # kWh, mean 8.0


@dataclass(frozen=True)
class ReferenceProfile:
    weekday_rates: tuple[float, ...] = WEEKDAY_RATES
    weekend_rates: tuple[float, ...] = WEEKEND_RATES
    month_factors: tuple[float, ...] = (1.0,) * 12
    duration: Mixture = DURATION_MIXTURE
    energy: Mixture = ENERGY_MIXTURE
    # gamma-Poisson dispersion r per hourly count; None gives plain Poisson counts
    dispersion: float | None = None

    def rate(self, month: int, daytype: Daytype, hour: int) -> float:
        table = self.weekend_rates if daytype is Daytype.WEEKEND else self.weekday_rates
        return table[hour] * self.month_factors[month - 1]


def _positive_mixture_draws(mix: Mixture, n: int, rng: np.random.Generator) -> np.ndarray:
    out = np.empty(n)
    todo = np.arange(n)
    while todo.size:
        comp = rng.choice(len(mix.weights), size=todo.size, p=mix.weights)
        x = rng.normal(np.take(mix.means, comp), np.take(mix.stddevs, comp))
        ok = x > 0
        out[todo[ok]] = x[ok]
        todo = todo[~ok]
    return out


def reference_sessions(profile: ReferenceProfile, horizon: Horizon, seed: int) -> list[Session]:
    """Sessions arriving in ``horizon``, whole-second timestamps, sorted by arrival."""
    rng = np.random.default_rng(seed)
    hour_rates = []
    for day in horizon.days():
        dt = Daytype.of(day)
        hour_rates.extend(profile.rate(day.month, dt, h) for h in range(24))
    mu = np.asarray(hour_rates)
    if profile.dispersion is None:
        counts = rng.poisson(mu)
    else:
        counts = rng.poisson(rng.gamma(profile.dispersion, mu / profile.dispersion))
    hour_index = np.repeat(np.arange(mu.size), counts)
    arrival_s = np.sort((hour_index * 3600 + np.floor(rng.random(hour_index.size) * 3600)).astype(np.int64))
    duration_s = np.maximum(np.rint(_positive_mixture_draws(profile.duration, arrival_s.size, rng) * 3600), 1)
    energy = _positive_mixture_draws(profile.energy, arrival_s.size, rng)

    start = horizon.start_datetime
    return [
        Session(start + timedelta(seconds=int(a)), start + timedelta(seconds=int(a + d)), float(e))
        for a, d, e in zip(arrival_s, duration_s.astype(np.int64), energy)
    ]


def expected_rate_table(profile: ReferenceProfile) -> dict[tuple[int, Daytype, int], float]:
    """True hourly rate for every (month, daytype, hour)."""
    return {
        (m, dt, h): profile.rate(m, dt, h) for m in range(1, 13) for dt in (Daytype.WEEKDAY, Daytype.WEEKEND) for h in range(24)
    }

