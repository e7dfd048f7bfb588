"""Seeded random (model, batch) cases for equivalence testing and benchmarks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelConfig, SyntheticTransducer
from .tensor import FLOAT

# Blank bias range that gives a mix of blank-heavy models and models that
# emit long label runs (exercising the max-symbols cap) at V in [3, 50].
BLANK_BIAS_RANGE = (0.3, 0.6)
MAX_SYMBOLS_CHOICES = (2, 3, 5, 10)


@dataclass
class Case:
    seed: int
    cfg: ModelConfig
    model: SyntheticTransducer
    enc: np.ndarray
    lengths: np.ndarray
    max_symbols: int = 10


def random_encoder_batch(rng: np.random.Generator, lengths: np.ndarray, enc_dim: int) -> np.ndarray:
    """Standard-normal features, zero beyond each utterance's length."""
    T_max = int(lengths.max()) if len(lengths) else 0
    enc = rng.standard_normal((len(lengths), T_max, enc_dim)).astype(FLOAT)
    for b, n in enumerate(lengths):
        enc[b, n:] = 0.0
    return enc


def random_case(
    seed: int,
    decoder_kind: str = "rnnt",
    vocab: tuple[int, int] = (3, 50),
    dims: tuple[int, int] = (4, 32),
    batch: tuple[int, int] = (1, 16),
    frames: tuple[int, int] = (0, 60),
    max_duration: tuple[int, int] = (1, 4),
) -> Case:
    """One random configuration; all ranges are inclusive."""
    rng = np.random.default_rng(seed)

    def pick(lo_hi):
        return int(rng.integers(lo_hi[0], lo_hi[1] + 1))

    cfg = ModelConfig(
        vocab_size=pick(vocab),
        enc_dim=pick(dims),
        pred_dim=pick(dims),
        joint_dim=pick(dims),
        predictor_kind=str(rng.choice(["recurrent", "stateless"])),
        decoder_kind=decoder_kind,
        max_duration=pick(max_duration) if decoder_kind == "tdt" else 0,
        blank_bias=float(rng.uniform(*BLANK_BIAS_RANGE)),
    )
    B = pick(batch)
    lengths = rng.integers(frames[0], frames[1] + 1, size=B).astype(np.int64)
    enc = random_encoder_batch(rng, lengths, cfg.enc_dim)
    # small caps make the guard fire often; drawn last so earlier draws are stable
    max_symbols = int(rng.choice(MAX_SYMBOLS_CHOICES))
    model = SyntheticTransducer.from_seed(seed, cfg)
    return Case(seed, cfg, model, enc, lengths, max_symbols)
