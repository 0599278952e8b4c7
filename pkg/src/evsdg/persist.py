"""Canonical JSON model files.

A model file holds fitted parameters only: rate table or curve
coefficients, count-family parameters, mixture parameters, the grid and a
little metadata. Keys are sorted and floats use Python's shortest
round-trip repr, so ``save(load(f)) == f`` byte for byte.
"""

from __future__ import annotations

import json
import math
from datetime import datetime
from typing import IO, Any

from . import arrival as am
from .core import MixKey, SlotKey, TimeGrid
from .errors import InvariantViolation, ParseError, SchemaVersionMismatch
from .generator import SCHEMA_VERSION, ModelMeta, SdgModel
from .mixture import Gmm, MixtureBank, MixtureKind


# ------------------------------------------------------------------- encode


def _gmm_doc(g: Gmm) -> dict:
    return {"weights": list(g.weights), "means": list(g.means), "stddevs": list(g.stddevs)}


def _bank_doc(bank: MixtureBank) -> dict:
    return {
        "kind": bank.kind.value,
        "cells": [{"month": k.month, "slot": k.slot, **_gmm_doc(bank.models[k])} for k in sorted(bank.models)],
        "pooled_fallback": _gmm_doc(bank.pooled_fallback),
    }


def _slot_fields(k: SlotKey) -> dict:
    return {"month": k.month, "daytype": k.daytype.value, "slot": k.slot}


def _arrival_doc(model: am.ArrivalModel) -> dict:
    rate = model.rate
    doc: dict[str, Any] = {
        "bounds": {"lambda_min": rate.lambda_min, "lambda_max": rate.lambda_max},
        "count_family": [
            {**_slot_fields(k), "family": "negbinom", "r": nb.r, "p": nb.p}
            for k, nb in sorted(model.counts.negbinom.items())
        ],
        "iat_boundary_policy": model.iat_boundary_policy.value,
        "sampler": model.sampler.value,
    }
    if isinstance(rate, am.LambdaTable):
        doc["mode"] = "table"
        doc["entries"] = [{**_slot_fields(k), "lambda": v} for k, v in sorted(rate.values.items())]
    else:
        doc["mode"] = "curve"
        doc["order"] = rate.order
        doc["coefficients"] = [
            {"month": m, "daytype": d.value, "a0": c.a0, "a": list(c.a), "b": list(c.b)}
            for (m, d), c in sorted(rate.coefficients.items())
        ]
    return doc


def model_to_document(m: SdgModel) -> dict:
    return {
        "schema_version": m.meta.schema_version,
        "grid": {"slot_minutes": m.grid.slot_minutes},
        "meta": {
            "trained_at": m.meta.trained_at.isoformat(timespec="seconds"),
            "n_training_sessions": m.meta.n_training_sessions,
        },
        "arrival": _arrival_doc(m.arrival),
        "connected": _bank_doc(m.connected),
        "energy": _bank_doc(m.energy),
    }


def dumps_model(m: SdgModel) -> str:
    return json.dumps(model_to_document(m), sort_keys=True, indent=2, allow_nan=False, ensure_ascii=False) + "\n"


def save_model(m: SdgModel, sink: IO[bytes]) -> None:
    sink.write(dumps_model(m).encode("utf-8"))


# ------------------------------------------------------------------- decode


def _int(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise InvariantViolation(f"{where}: expected an integer, got {value!r}")
    return value


def _float(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise InvariantViolation(f"{where}: expected a finite number, got {value!r}")
    return float(value)


def _floats(value: Any, where: str) -> tuple[float, ...]:
    if not isinstance(value, list):
        raise InvariantViolation(f"{where}: expected a list, got {value!r}")
    return tuple(_float(v, where) for v in value)


def _get(doc: Any, key: str, where: str) -> Any:
    if not isinstance(doc, dict) or key not in doc:
        raise InvariantViolation(f"{where}: missing field {key!r}")
    return doc[key]


def _slot_key(doc: dict, grid: TimeGrid, where: str) -> SlotKey:
    try:
        return SlotKey(
            _int(_get(doc, "month", where), where),
            _get(doc, "daytype", where),
            _int(_get(doc, "slot", where), where),
        ).check(grid)
    except ValueError as exc:
        raise InvariantViolation(f"{where}: {exc}") from None


def _gmm(doc: Any, where: str) -> Gmm:
    try:
        return Gmm(
            _floats(_get(doc, "weights", where), where),
            _floats(_get(doc, "means", where), where),
            _floats(_get(doc, "stddevs", where), where),
        )
    except ValueError as exc:
        raise InvariantViolation(f"{where}: {exc}") from None


def _bank(doc: Any, kind: MixtureKind, grid: TimeGrid) -> MixtureBank:
    name = kind.value
    if _get(doc, "kind", name) != kind.value:
        raise InvariantViolation(f"{name}: wrong bank kind {doc.get('kind')!r}")
    models = {}
    for cell in _get(doc, "cells", name):
        where = f"{name} cell (month={cell.get('month')}, slot={cell.get('slot')})"
        try:
            key = MixKey(_int(_get(cell, "month", where), where), _int(_get(cell, "slot", where), where)).check(grid)
        except ValueError as exc:
            raise InvariantViolation(f"{where}: {exc}") from None
        if key in models:
            raise InvariantViolation(f"{where}: duplicate cell")
        models[key] = _gmm(cell, where)
    return MixtureBank(kind, models, _gmm(_get(doc, "pooled_fallback", name), f"{name} pooled_fallback"))


def _arrival(doc: Any, grid: TimeGrid) -> am.ArrivalModel:
    bounds = _get(doc, "bounds", "arrival")
    lo = _float(_get(bounds, "lambda_min", "arrival.bounds"), "arrival.bounds")
    hi = _float(_get(bounds, "lambda_max", "arrival.bounds"), "arrival.bounds")
    mode = _get(doc, "mode", "arrival")
    try:
        if mode == "table":
            values = {}
            for e in _get(doc, "entries", "arrival"):
                where = f"arrival entry (month={e.get('month')}, daytype={e.get('daytype')}, slot={e.get('slot')})"
                key = _slot_key(e, grid, where)
                if key in values:
                    raise InvariantViolation(f"{where}: duplicate entry")
                values[key] = _float(_get(e, "lambda", where), where)
            rate: am.RateModel = am.LambdaTable(values, lo, hi)
        elif mode == "curve":
            order = _int(_get(doc, "order", "arrival"), "arrival.order")
            coefs = {}
            for c in _get(doc, "coefficients", "arrival"):
                where = f"arrival curve (month={c.get('month')}, daytype={c.get('daytype')})"
                month = _int(_get(c, "month", where), where)
                key = (month, am.Daytype(_get(c, "daytype", where)))
                coefs[key] = am.CurveCoefficients(
                    _float(_get(c, "a0", where), where), _floats(_get(c, "a", where), where), _floats(_get(c, "b", where), where)
                )
            rate = am.LambdaCurve(coefs, order, lo, hi)
        else:
            raise InvariantViolation(f"arrival: unknown mode {mode!r}")

        negbinom = {}
        for e in _get(doc, "count_family", "arrival"):
            where = f"count family (month={e.get('month')}, daytype={e.get('daytype')}, slot={e.get('slot')})"
            if _get(e, "family", where) != "negbinom":
                raise InvariantViolation(f"{where}: unknown family {e.get('family')!r}")
            negbinom[_slot_key(e, grid, where)] = am.NegBinom(
                _float(_get(e, "r", where), where), _float(_get(e, "p", where), where)
            )
        return am.ArrivalModel(
            rate=rate,
            grid=grid,
            counts=am.CountFamily(negbinom),
            iat_boundary_policy=_get(doc, "iat_boundary_policy", "arrival"),
            sampler=_get(doc, "sampler", "arrival"),
        )
    except (ValueError, TypeError) as exc:
        raise InvariantViolation(f"arrival: {exc}") from None


def document_to_model(doc: Any) -> SdgModel:
    if not isinstance(doc, dict):
        raise InvariantViolation("model file must hold a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"schema_version {version!r} is not supported (expected {SCHEMA_VERSION!r})")
    try:
        grid = TimeGrid(_int(_get(_get(doc, "grid", "model"), "slot_minutes", "grid"), "grid.slot_minutes"))
    except ValueError as exc:
        raise InvariantViolation(f"grid: {exc}") from None
    meta_doc = _get(doc, "meta", "model")
    try:
        trained_at = datetime.fromisoformat(_get(meta_doc, "trained_at", "meta"))
    except (TypeError, ValueError):
        raise InvariantViolation(f"meta: bad trained_at {meta_doc.get('trained_at')!r}") from None
    n_training = _int(_get(meta_doc, "n_training_sessions", "meta"), "meta.n_training_sessions")
    if n_training < 0:
        raise InvariantViolation("meta: n_training_sessions must be >= 0")
    meta = ModelMeta(trained_at, n_training, version)
    try:
        return SdgModel(
            arrival=_arrival(_get(doc, "arrival", "model"), grid),
            connected=_bank(_get(doc, "connected", "model"), MixtureKind.CONNECTED_TIME, grid),
            energy=_bank(_get(doc, "energy", "model"), MixtureKind.ENERGY, grid),
            grid=grid,
            meta=meta,
        )
    except (ValueError, TypeError) as exc:
        raise InvariantViolation(str(exc)) from None


def loads_model(text: str) -> SdgModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None
    return document_to_model(doc)


def load_model(source: IO[bytes]) -> SdgModel:
    raw = source.read()
    try:
        text = raw.decode("utf-8") if isinstance(raw, (bytes, bytearray)) else raw
    except UnicodeDecodeError as exc:
        raise ParseError(f"model file is not UTF-8: {exc}") from None
    return loads_model(text)
