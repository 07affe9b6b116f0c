"""Temporal link prediction with memory and multi-hop neighborhood common neighbors."""

from .cn import DEFAULT_HOPS, extract_batch
from .events import EventLog, NeighborDictionary, ingest, read_csv, update_dictionary
from .pipeline import RunConfig, evaluate_stream, run_experiment, train_epoch
from .synth import synth_generate

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_HOPS",
    "EventLog",
    "NeighborDictionary",
    "RunConfig",
    "evaluate_stream",
    "extract_batch",
    "ingest",
    "read_csv",
    "run_experiment",
    "synth_generate",
    "train_epoch",
    "update_dictionary",
]
