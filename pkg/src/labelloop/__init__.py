"""Batched greedy decoding for Transducer and TDT models."""

from .counters import CallCounters
from .decoders import (
    DecodeRequest,
    decode,
    decode_frame_looping,
    decode_label_looping_rnnt,
    decode_label_looping_tdt,
    decode_sequential,
    decode_sequential_rnnt,
    decode_sequential_tdt,
)
from .errors import ConfigError, ContractError, DeterminismError, EquivalenceError
from .hypotheses import BatchedHyps, DecodeOutcome
from .model import ModelConfig, ModelWeights, SyntheticTransducer, generate_model, load_model, save_model
from .table_model import TableModel

__all__ = [
    "BatchedHyps",
    "CallCounters",
    "ConfigError",
    "ContractError",
    "DecodeOutcome",
    "DecodeRequest",
    "DeterminismError",
    "EquivalenceError",
    "ModelConfig",
    "ModelWeights",
    "SyntheticTransducer",
    "TableModel",
    "decode",
    "decode_frame_looping",
    "decode_label_looping_rnnt",
    "decode_label_looping_tdt",
    "decode_sequential",
    "decode_sequential_rnnt",
    "decode_sequential_tdt",
    "generate_model",
    "load_model",
    "save_model",
]
