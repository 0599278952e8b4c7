from __future__ import annotations

import io
from datetime import date, datetime, timedelta

import pytest
from hypothesis import given, settings, strategies as st

from evsdg.core import Daytype, Horizon, MixKey, Session, SlotKey, TimeGrid
from evsdg.errors import ArrivalOutsideHorizon, IngestError, SessionRecordError
from evsdg.ingest import (
    SKIP_BAD,
    STRICT,
    bucket_counts,
    bucket_iats,
    bucket_mixture_data,
    build_buckets,
    parse_sessions,
    write_sessions,
)

HEADER = b"session_id,arrival_time,departure_time,energy_kwh\n"
H60 = TimeGrid(60)


def parse(body: bytes, policy=SKIP_BAD):
    return parse_sessions(HEADER + body, policy)


def at(*args) -> datetime:
    return datetime(*args)


def sess(arrival: datetime, hours: float = 1.0, energy: float = 5.0) -> Session:
    return Session(arrival, arrival + timedelta(hours=hours), energy)


def test_one_good_row():
    sessions, errors = parse(b"s1,2020-01-06T10:00:00,2020-01-06T12:30:00,7.4\n")
    assert errors == []
    assert sessions == [Session(at(2020, 1, 6, 10), at(2020, 1, 6, 12, 30), 7.4)]


def test_negative_duration_skipped():
    sessions, errors = parse(b"s1,2020-01-06T12:00:00,2020-01-06T10:00:00,7.4\n")
    assert sessions == []
    assert [e.reason for e in errors] == ["NegativeDuration"]
    assert errors[0].line_number == 2


def test_header_only():
    assert parse(b"") == ([], [])


@pytest.mark.parametrize(
    "row, reason",
    [
        (b"s1,2020-01-06 10:00:00,2020-01-06T12:30:00,7.4", "MalformedTimestamp"),
        (b"s1,2020-01-06T10:00,2020-01-06T12:30:00,7.4", "MalformedTimestamp"),
        (b"s1,2020-02-30T10:00:00,2020-03-01T12:30:00,7.4", "MalformedTimestamp"),
        (b"s1,2020-01-06T10:00:00,2020-01-06T10:00:00,7.4", "NegativeDuration"),
        (b"s1,2020-01-06T10:00:00,2020-01-06T12:30:00,0", "NonPositiveEnergy"),
        (b"s1,2020-01-06T10:00:00,2020-01-06T12:30:00,-1.5", "NonPositiveEnergy"),
        (b"s1,2020-01-06T10:00:00,2020-01-06T12:30:00,", "MissingField"),
        (b"s1,2020-01-06T10:00:00", "MissingField"),
    ],
)
def test_bad_rows(row, reason):
    sessions, errors = parse(row + b"\n")
    assert sessions == [] and [e.reason for e in errors] == [reason]
    with pytest.raises(SessionRecordError) as info:
        parse(row + b"\n", STRICT)
    assert info.value.reason == reason


def test_skip_bad_keeps_good_rows_sorted():
    body = (
        b"b,2020-01-06T11:00:00,2020-01-06T12:00:00,2\n"
        b"x,garbage,2020-01-06T12:00:00,2\n"
        b"a,2020-01-06T09:00:00,2020-01-06T10:00:00,1,extra\n"
    )
    sessions, errors = parse(body)
    assert [s.energy_kwh for s in sessions] == [1.0, 2.0]
    assert [(e.line_number, e.reason) for e in errors] == [(3, "MalformedTimestamp")]


@pytest.mark.parametrize("raw", [b"", b"id,arrival,departure,energy\n", b"\xff\xfe\n"])
def test_bad_header(raw):
    with pytest.raises(IngestError):
        parse_sessions(raw, SKIP_BAD)


def test_bom_and_crlf_accepted():
    raw = b"\xef\xbb\xbf" + HEADER.replace(b"\n", b"\r\n") + b"s1,2020-01-06T10:00:00,2020-01-06T12:30:00,7.4\r\n"
    sessions, errors = parse_sessions(raw, STRICT)
    assert len(sessions) == 1 and not errors


def test_write_then_parse_is_exact():
    sessions = [
        Session(at(2020, 1, 6, 10), at(2020, 1, 6, 12, 30, 1), 7.4),
        Session(at(2020, 1, 6, 10, 0, 5), at(2020, 1, 8, 0, 0), 0.1 + 0.2),
    ]
    buf = io.StringIO()
    assert write_sessions(sessions, buf) == 2
    text = buf.getvalue()
    assert text.splitlines()[1].startswith("syn-000001,2020-01-06T10:00:00,")
    back, errors = parse_sessions(text.encode(), STRICT)
    assert back == sessions and not errors


def test_iats_examples():
    assert bucket_iats([sess(at(2020, 1, 6, 10)), sess(at(2020, 1, 6, 10, 30))], H60) == {
        SlotKey(1, Daytype.WEEKDAY, 10): [0.5]
    }
    assert bucket_iats([sess(at(2020, 1, 6, 10))], H60) == {}
    iats = bucket_iats([sess(at(2020, 1, 6, 10, 50)), sess(at(2020, 1, 6, 11, 10))], H60)
    assert list(iats) == [SlotKey(1, Daytype.WEEKDAY, 10)]
    assert iats[SlotKey(1, Daytype.WEEKDAY, 10)][0] == pytest.approx(1 / 3)


def test_duplicate_arrivals_give_zero_iat():
    iats = bucket_iats([sess(at(2020, 1, 6, 10)), sess(at(2020, 1, 6, 10))], H60)
    assert iats == {SlotKey(1, Daytype.WEEKDAY, 10): [0.0]}


def test_counts_single_monday():
    monday = Horizon(date(2020, 1, 6), date(2020, 1, 7))
    sessions = [sess(at(2020, 1, 6, 10, m)) for m in (0, 20, 59)]
    counts, hours = bucket_counts(sessions, H60, monday)
    key = SlotKey(1, Daytype.WEEKDAY, 10)
    assert counts[key] == [3] and hours[key] == 1.0
    assert sum(map(sum, counts.values())) == 3


def test_counts_zeros_included_and_weekend_occurrences():
    two_mondays = Horizon(date(2020, 1, 6), date(2020, 1, 14))
    counts, _ = bucket_counts([], H60, two_mondays)
    assert counts[SlotKey(1, Daytype.WEEKDAY, 3)] == [0] * 6  # Mon..Fri, Mon
    week = Horizon(date(2020, 1, 6), date(2020, 1, 13))
    counts, hours = bucket_counts([], H60, week)
    assert all(len(counts[SlotKey(1, Daytype.WEEKEND, s)]) == 2 for s in range(24))
    assert sum(hours.values()) == week.hours


def test_counts_outside_horizon():
    with pytest.raises(ArrivalOutsideHorizon):
        bucket_counts([sess(at(2020, 1, 7, 1))], H60, Horizon(date(2020, 1, 6), date(2020, 1, 7)))


def test_mixture_buckets():
    a = Session(at(2020, 1, 6, 10, 15), at(2020, 1, 6, 12, 45), 7.4)
    b = Session(at(2020, 1, 6, 10, 40), at(2020, 1, 6, 11, 40), 3.0)
    durations, energies = bucket_mixture_data([a, b], H60)
    assert durations == {MixKey(1, 10): [2.5, 1.0]}
    assert energies == {MixKey(1, 10): [7.4, 3.0]}
    assert MixKey(1, 11) not in durations


arrivals = st.lists(
    st.datetimes(min_value=datetime(2021, 1, 1), max_value=datetime(2021, 3, 31, 23, 59, 59)), max_size=60
)


@settings(max_examples=50, deadline=None)
@given(arrivals, st.sampled_from([15, 60, 240]))
def test_conservation(times, minutes):
    grid = TimeGrid(minutes)
    sessions = sorted((sess(t.replace(microsecond=0)) for t in times), key=lambda s: s.arrival)
    horizon = Horizon(date(2021, 1, 1), date(2021, 4, 1))
    b = build_buckets(sessions, grid, horizon)
    assert sum(map(len, b.iats.values())) == max(0, len(sessions) - 1)
    assert sum(map(sum, b.counts.values())) == len(sessions)
    assert sum(b.observed_slot_hours.values()) == pytest.approx(horizon.hours)
    assert sum(map(len, b.durations.values())) == len(sessions)
