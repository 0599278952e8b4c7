from __future__ import annotations

import io
import math
from datetime import date, datetime, timedelta

import numpy as np
import pytest

from evsdg import arrival as am
from evsdg.core import Daytype, Horizon, MixKey, Session, SlotKey, TimeGrid
from evsdg.errors import EmptyTraining
from evsdg.generator import (
    ArrivalFamily,
    GenerationConfig,
    LambdaMode,
    ModelMeta,
    SdgModel,
    TrainConfig,
    count_moments,
    fit_sdg,
    generate_arrays,
    generate_sessions,
    summarize,
)
from evsdg.ingest import STRICT, build_buckets, parse_sessions, write_sessions
from evsdg.mixture import EmConfig, Gmm, MixtureBank
from evsdg.reference import DURATION_MIXTURE, ENERGY_MIXTURE, ReferenceProfile, expected_rate_table, reference_sessions

H60 = TimeGrid(60)
SPRING = Horizon(date(2021, 3, 1), date(2021, 5, 30))  # 90 days


def truth_model(profile: ReferenceProfile, grid=H60) -> SdgModel:
    """The reference generator's parameters written as a trainable model."""
    rates = expected_rate_table(profile)
    table = am.LambdaTable({k: rates[(k.month, k.daytype, k.slot)] for k in grid.slot_keys()})
    dur = Gmm(*(getattr(DURATION_MIXTURE, f) for f in ("weights", "means", "stddevs")))
    energy = Gmm(*(getattr(ENERGY_MIXTURE, f) for f in ("weights", "means", "stddevs")))
    return SdgModel(
        am.ArrivalModel(table, grid),
        MixtureBank("connected_time", {}, dur),
        MixtureBank("energy", {}, energy),
        grid,
        ModelMeta(datetime(2021, 1, 1), 0),
    )


def csv_bytes(sessions) -> bytes:
    buf = io.StringIO()
    write_sessions(sessions, buf)
    return buf.getvalue().encode()


def test_near_zero_rate_gives_no_sessions():
    table = am.LambdaTable({k: 1e-300 for k in H60.slot_keys()}, 1e-300, 1000.0)
    g = Gmm((1.0,), (2.0,), (0.5,))
    model = SdgModel(
        am.ArrivalModel(table, H60), MixtureBank("connected_time", {}, g), MixtureBank("energy", {}, g),
        H60, ModelMeta(datetime(2021, 1, 1), 0),
    )
    for mode in (am.SamplerKind.COUNTS, am.SamplerKind.IAT):
        assert generate_sessions(model, GenerationConfig(SPRING, seed=1, arrival_mode=mode)) == []


@pytest.mark.parametrize("mode", [None, am.SamplerKind.IAT])
def test_same_seed_same_bytes(small_model, mode):
    cfg = GenerationConfig(Horizon(date(2022, 1, 1), date(2022, 1, 15)), seed=42, arrival_mode=mode)
    first = csv_bytes(generate_sessions(small_model, cfg))
    assert first == csv_bytes(generate_sessions(small_model, cfg))
    other = GenerationConfig(cfg.horizon, seed=43, arrival_mode=mode)
    assert first != csv_bytes(generate_sessions(small_model, other))


def test_generated_sessions_are_valid(small_model):
    h = Horizon(date(2022, 6, 1), date(2022, 6, 11))
    arrays = generate_arrays(small_model, GenerationConfig(h, seed=5))
    sessions = arrays.to_sessions()
    assert len(sessions) == len(arrays) > 0
    assert all(h.contains(s.arrival) for s in sessions)
    assert all(s.departure > s.arrival and s.energy_kwh > 0 for s in sessions)
    assert [s.arrival for s in sessions] == sorted(s.arrival for s in sessions)
    assert all(s.arrival.microsecond == 0 and s.departure.microsecond == 0 for s in sessions)


def test_duration_cap():
    g = Gmm((1.0,), (500.0,), (1.0,))
    m = truth_model(ReferenceProfile())
    m = SdgModel(m.arrival, MixtureBank("connected_time", {}, g), m.energy, m.grid, m.meta)
    sessions = generate_sessions(m, GenerationConfig(Horizon(date(2021, 1, 4), date(2021, 1, 5)), seed=0, max_duration_hours=10))
    assert sessions and all(s.connected_hours == 10.0 for s in sessions)


def test_departures_may_pass_horizon_end():
    m = truth_model(ReferenceProfile())
    h = Horizon(date(2021, 1, 4), date(2021, 1, 6))
    sessions = generate_sessions(m, GenerationConfig(h, seed=3))
    assert any(s.departure >= h.end_datetime for s in sessions)


def test_flat_rate_ground_truth_round_trip(fast_em):
    flat = ReferenceProfile(weekday_rates=(2.0,) * 24, weekend_rates=(2.0,) * 24)
    real = reference_sessions(flat, SPRING, seed=21)
    model, _ = fit_sdg(real, TrainConfig(em=fast_em, seed=1))
    synth = generate_sessions(model, GenerationConfig(Horizon(date(2022, 3, 1), date(2022, 5, 30)), seed=8))
    per_day = len(synth) / 90
    assert abs(per_day - 48) <= 3
    assert 2.8 <= np.mean([s.connected_hours for s in synth]) <= 3.2
    assert 7.6 <= np.mean([s.energy_kwh for s in synth]) <= 8.4


def test_per_slot_means_match_truth():
    profile = ReferenceProfile()
    m = truth_model(profile)
    synth = generate_sessions(m, GenerationConfig(SPRING, seed=13))
    moments = count_moments(synth, H60, SPRING)
    rates = expected_rate_table(profile)
    z = []
    for key, c in moments.items():
        lam = rates[(key.month, key.daytype, key.slot)]
        z.append((c.mean - lam) / math.sqrt(lam / c.occurrences))
    z = np.abs(z)
    assert len(z) == 3 * 2 * 24
    assert np.all(z < 3.0), z.max()


def test_ingest_of_generated_output(small_model):
    h = Horizon(date(2022, 2, 1), date(2022, 2, 8))
    sessions = generate_sessions(small_model, GenerationConfig(h, seed=2))
    back, errors = parse_sessions(csv_bytes(sessions), STRICT)
    assert back == sessions and not errors
    buckets = build_buckets(back, small_model.grid, h)
    assert sum(map(sum, buckets.counts.values())) == len(sessions)
    assert sum(map(len, buckets.durations.values())) == len(sessions)


def test_fit_report_and_modes(small_sessions, fast_em):
    model, report = fit_sdg(small_sessions, TrainConfig(em=fast_em, arrival_family=ArrivalFamily.IAT,
                                                        lambda_mode=LambdaMode.SMOOTH, fourier_order=3))
    assert isinstance(model.arrival.rate, am.LambdaCurve)
    assert model.arrival.sampler is am.SamplerKind.IAT
    assert report.horizon == Horizon(date(2021, 1, 4), date(2021, 1, 25))
    assert model.meta.n_training_sessions == len(small_sessions)
    assert model.meta.trained_at == datetime(2021, 1, 25)
    with pytest.raises(EmptyTraining):
        fit_sdg([])


def test_training_is_deterministic(small_sessions, small_model, fast_em):
    again, _ = fit_sdg(small_sessions, TrainConfig(em=fast_em, seed=3))
    assert again == small_model


def test_summarize():
    empty = summarize([], H60)
    assert empty.n_sessions == 0 and empty.counts == {}
    assert empty.duration_hours is None and empty.energy_kwh is None
    one = Session(datetime(2021, 1, 4, 10, 5), datetime(2021, 1, 4, 12, 5), 6.0)
    s = summarize([one], H60)
    key = SlotKey(1, Daytype.WEEKDAY, 10)
    assert s.counts[key].mean == 1.0 and s.counts[key].occurrences == 1
    assert sum(c.mean * c.occurrences for c in s.counts.values()) == 1
    assert s.duration_hours.p50 == 2.0 and s.energy_kwh.mean == 6.0
