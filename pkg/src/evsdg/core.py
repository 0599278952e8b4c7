"""Domain types, the time-of-day grid and slot-key arithmetic.

All timestamps are naive wall-clock datetimes of the charging network.
No DST handling is done; the slot index is computed from wall-clock
minutes since midnight.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from typing import Iterator

MINUTES_PER_DAY = 1440


class Daytype(str, enum.Enum):
    WEEKDAY = "weekday"
    WEEKEND = "weekend"

    @classmethod
    def of(cls, day: date) -> "Daytype":
        """Saturday and Sunday are weekend days; holidays are not special-cased."""
        return cls.WEEKEND if day.weekday() >= 5 else cls.WEEKDAY

    @property
    def index(self) -> int:
        return 0 if self is Daytype.WEEKDAY else 1


DAYTYPES = (Daytype.WEEKDAY, Daytype.WEEKEND)


@dataclass(frozen=True)
class TimeGrid:
    """Fixed-width time-of-day slots."""

    slot_minutes: int = 60

    def __post_init__(self):
        if not isinstance(self.slot_minutes, int) or isinstance(self.slot_minutes, bool):
            raise TypeError("slot_minutes must be an int")
        if self.slot_minutes < 1 or MINUTES_PER_DAY % self.slot_minutes:
            raise ValueError(f"slot_minutes={self.slot_minutes} must divide 1440 evenly")

    @property
    def slots_per_day(self) -> int:
        return MINUTES_PER_DAY // self.slot_minutes

    @property
    def slot_hours(self) -> float:
        return self.slot_minutes / 60.0

    def slot_of(self, t: datetime) -> int:
        return (t.hour * 60 + t.minute) // self.slot_minutes

    def slot_center_hours(self) -> list[float]:
        return [(s + 0.5) * self.slot_hours for s in range(self.slots_per_day)]

    def slot_keys(self) -> Iterator["SlotKey"]:
        """All 12 x 2 x slots_per_day cells in sorted order."""
        for month in range(1, 13):
            for daytype in DAYTYPES:
                for slot in range(self.slots_per_day):
                    yield SlotKey(month, daytype, slot)

    def mix_keys(self) -> Iterator["MixKey"]:
        for month in range(1, 13):
            for slot in range(self.slots_per_day):
                yield MixKey(month, slot)


@dataclass(frozen=True, order=True)
class SlotKey:
    month: int
    daytype: Daytype
    slot: int

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise ValueError(f"month {self.month} outside 1..12")
        if self.slot < 0 or self.slot >= MINUTES_PER_DAY:
            raise ValueError(f"slot {self.slot} out of range")
        if not isinstance(self.daytype, Daytype):
            object.__setattr__(self, "daytype", Daytype(self.daytype))

    def check(self, grid: TimeGrid) -> "SlotKey":
        if self.slot >= grid.slots_per_day:
            raise ValueError(f"slot {self.slot} >= slots_per_day {grid.slots_per_day}")
        return self

    @property
    def mix_key(self) -> "MixKey":
        return MixKey(self.month, self.slot)


@dataclass(frozen=True, order=True)
class MixKey:
    month: int
    slot: int

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise ValueError(f"month {self.month} outside 1..12")
        if self.slot < 0 or self.slot >= MINUTES_PER_DAY:
            raise ValueError(f"slot {self.slot} out of range")

    def check(self, grid: TimeGrid) -> "MixKey":
        if self.slot >= grid.slots_per_day:
            raise ValueError(f"slot {self.slot} >= slots_per_day {grid.slots_per_day}")
        return self


@dataclass(frozen=True)
class Horizon:
    """Half-open date range ``[start, end)``."""

    start: date
    end: date

    def __post_init__(self):
        if isinstance(self.start, datetime) or isinstance(self.end, datetime):
            raise TypeError("Horizon takes dates, not datetimes")
        if self.end <= self.start:
            raise ValueError(f"empty horizon: end {self.end} <= start {self.start}")

    @property
    def n_days(self) -> int:
        return (self.end - self.start).days

    @property
    def hours(self) -> float:
        return 24.0 * self.n_days

    @property
    def start_datetime(self) -> datetime:
        return datetime(self.start.year, self.start.month, self.start.day)

    @property
    def end_datetime(self) -> datetime:
        return datetime(self.end.year, self.end.month, self.end.day)

    def days(self) -> Iterator[date]:
        for i in range(self.n_days):
            yield self.start + timedelta(days=i)

    def contains(self, t: datetime) -> bool:
        return self.start_datetime <= t < self.end_datetime

    @classmethod
    def covering(cls, times: list[datetime]) -> "Horizon":
        """Smallest whole-day horizon containing every timestamp."""
        if not times:
            raise ValueError("cannot build a horizon from no timestamps")
        lo = min(times).date()
        hi = max(times).date() + timedelta(days=1)
        return cls(lo, hi)


@dataclass(frozen=True)
class Session:
    """One charging event."""

    arrival: datetime
    departure: datetime
    energy_kwh: float

    def __post_init__(self):
        if not self.departure > self.arrival:
            raise ValueError(f"departure {self.departure} not after arrival {self.arrival}")
        if not (math.isfinite(self.energy_kwh) and self.energy_kwh > 0):
            raise ValueError(f"energy_kwh must be positive and finite, got {self.energy_kwh}")

    @property
    def connected_hours(self) -> float:
        return connected_hours(self)


def slot_key_of(t: datetime, grid: TimeGrid) -> SlotKey:
    return SlotKey(t.month, Daytype.of(t.date()), grid.slot_of(t))


def mix_key_of(t: datetime, grid: TimeGrid) -> MixKey:
    return MixKey(t.month, grid.slot_of(t))


def connected_hours(s: Session) -> float:
    return (s.departure - s.arrival).total_seconds() / 3600.0


def slot_start(day: date, slot: int, grid: TimeGrid) -> datetime:
    return datetime(day.year, day.month, day.day) + timedelta(minutes=slot * grid.slot_minutes)
