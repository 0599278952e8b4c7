"""Trainable synthetic data generator for electric-vehicle charging sessions."""

from .core import Daytype, Horizon, MixKey, Session, SlotKey, TimeGrid, connected_hours, slot_key_of
from .generator import GenerationConfig, SdgModel, TrainConfig, fit_sdg, generate_sessions, summarize
from .ingest import parse_sessions, write_sessions
from .persist import load_model, save_model

__all__ = [
    "Daytype",
    "GenerationConfig",
    "Horizon",
    "MixKey",
    "SdgModel",
    "Session",
    "SlotKey",
    "TimeGrid",
    "TrainConfig",
    "connected_hours",
    "fit_sdg",
    "generate_sessions",
    "load_model",
    "parse_sessions",
    "save_model",
    "slot_key_of",
    "summarize",
    "write_sessions",
]

__version__ = "0.1.0"
