"""CSV parsing and per-cell bucketing of training sessions."""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime
from typing import IO, Iterable

from .core import Daytype, Horizon, MixKey, Session, SlotKey, TimeGrid, mix_key_of, slot_key_of
from .errors import ArrivalOutsideHorizon, IngestError, SessionRecordError

HEADER = ("session_id", "arrival_time", "departure_time", "energy_kwh")
TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%S"

STRICT = "strict"
SKIP_BAD = "skip_bad"


@dataclass
class TrainingBuckets:
    iats: dict[SlotKey, list[float]] = field(default_factory=dict)
    counts: dict[SlotKey, list[int]] = field(default_factory=dict)
    observed_slot_hours: dict[SlotKey, float] = field(default_factory=dict)
    durations: dict[MixKey, list[float]] = field(default_factory=dict)
    energies: dict[MixKey, list[float]] = field(default_factory=dict)


def _parse_timestamp(text: str) -> datetime:
    # strptime accepts unpadded fields; the file format requires the exact width
    if len(text) != 19:
        raise ValueError(text)
    return datetime.strptime(text, TIMESTAMP_FORMAT)


def _parse_row(row: list[str], line_number: int) -> Session:
    if len(row) < 4 or any(not cell.strip() for cell in row[:4]):
        raise SessionRecordError(line_number, "MissingField")
    _, arr_text, dep_text, energy_text = (cell.strip() for cell in row[:4])
    try:
        arrival = _parse_timestamp(arr_text)
        departure = _parse_timestamp(dep_text)
    except ValueError:
        raise SessionRecordError(line_number, "MalformedTimestamp") from None
    if departure <= arrival:
        raise SessionRecordError(line_number, "NegativeDuration", f"{arr_text} -> {dep_text}")
    try:
        energy = float(energy_text)
    except ValueError:
        raise SessionRecordError(line_number, "NonPositiveEnergy", energy_text) from None
    if not (math.isfinite(energy) and energy > 0):
        raise SessionRecordError(line_number, "NonPositiveEnergy", energy_text)
    return Session(arrival, departure, energy)


def parse_sessions(
    source: IO[bytes] | bytes, policy: str = STRICT
) -> tuple[list[Session], list[SessionRecordError]]:
    """Read sessions from a UTF-8 CSV byte stream.

    The header must start with ``session_id,arrival_time,departure_time,energy_kwh``;
    further columns are ignored. Under ``policy="strict"`` the first bad row
    raises its :class:`SessionRecordError`; under ``"skip_bad"`` bad rows are
    skipped and returned alongside the parsed sessions.

    Sessions come back sorted by arrival (stable).
    """
    if policy not in (STRICT, SKIP_BAD):
        raise ValueError(f"unknown policy {policy!r}")
    raw = source if isinstance(source, (bytes, bytearray)) else source.read()
    try:
        text = bytes(raw).decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise IngestError(f"source is not UTF-8: {exc}") from None

    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise IngestError("missing header row") from None
    if tuple(cell.strip() for cell in header[:4]) != HEADER:
        raise IngestError(f"bad header {header!r}; expected {','.join(HEADER)}")

    sessions: list[Session] = []
    errors: list[SessionRecordError] = []
    for row in reader:
        line_number = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        try:
            sessions.append(_parse_row(row, line_number))
        except SessionRecordError as err:
            if policy == STRICT:
                raise
            errors.append(err)
    sessions.sort(key=lambda s: s.arrival)
    return sessions, errors


def write_sessions(sessions: Iterable[Session], sink: IO[str], id_prefix: str = "syn-") -> int:
    """Write sessions in the ingest CSV format; returns the row count."""
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(HEADER)
    n = 0
    for n, s in enumerate(sessions, start=1):
        writer.writerow(
            (
                f"{id_prefix}{n:06d}",
                s.arrival.strftime(TIMESTAMP_FORMAT),
                s.departure.strftime(TIMESTAMP_FORMAT),
                repr(float(s.energy_kwh)),
            )
        )
    return n


def bucket_iats(sessions: list[Session], grid: TimeGrid) -> dict[SlotKey, list[float]]:
    """Inter-arrival times in hours, each owned by the slot of the earlier arrival."""
    out: dict[SlotKey, list[float]] = defaultdict(list)
    for prev, cur in zip(sessions, sessions[1:]):
        dt = (cur.arrival - prev.arrival).total_seconds() / 3600.0
        out[slot_key_of(prev.arrival, grid)].append(dt)
    return dict(out)


def bucket_counts(
    sessions: list[Session], grid: TimeGrid, horizon: Horizon
) -> tuple[dict[SlotKey, list[int]], dict[SlotKey, float]]:
    """Arrival counts for every calendar occurrence of every slot in the horizon.

    Returns ``(counts, observed_hours)``; each list in ``counts`` has one entry
    per occurrence, in calendar order, zeros included.
    """
    per_occurrence: dict[tuple, int] = defaultdict(int)
    for s in sessions:
        if not horizon.contains(s.arrival):
            raise ArrivalOutsideHorizon(f"arrival {s.arrival} outside [{horizon.start}, {horizon.end})")
        per_occurrence[(s.arrival.date(), grid.slot_of(s.arrival))] += 1

    counts: dict[SlotKey, list[int]] = defaultdict(list)
    for day in horizon.days():
        daytype = Daytype.of(day)
        for slot in range(grid.slots_per_day):
            counts[SlotKey(day.month, daytype, slot)].append(per_occurrence.get((day, slot), 0))
    hours = {k: len(v) * grid.slot_hours for k, v in counts.items()}
    return dict(counts), hours


def bucket_mixture_data(
    sessions: list[Session], grid: TimeGrid
) -> tuple[dict[MixKey, list[float]], dict[MixKey, list[float]]]:
    durations: dict[MixKey, list[float]] = defaultdict(list)
    energies: dict[MixKey, list[float]] = defaultdict(list)
    for s in sessions:
        key = mix_key_of(s.arrival, grid)
        durations[key].append(s.connected_hours)
        energies[key].append(s.energy_kwh)
    return dict(durations), dict(energies)


def build_buckets(sessions: list[Session], grid: TimeGrid, horizon: Horizon | None = None) -> TrainingBuckets:
    """All training statistics at once. The horizon defaults to the whole days spanned by the data."""
    if horizon is None:
        horizon = Horizon.covering([s.arrival for s in sessions])
    counts, hours = bucket_counts(sessions, grid, horizon)
    durations, energies = bucket_mixture_data(sessions, grid)
    return TrainingBuckets(
        iats=bucket_iats(sessions, grid),
        counts=counts,
        observed_slot_hours=hours,
        durations=durations,
        energies=energies,
    )

