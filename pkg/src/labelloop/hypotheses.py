"""Batch-parallel storage for partial greedy hypotheses."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from .errors import ContractError
from .tensor import FLOAT


@dataclass
class DecodeOutcome:
    """Final hypothesis of one utterance."""

    tokens: list[int]
    timestamps: list[int]
    score: np.float32
    durations: list[int] | None = None

    def __post_init__(self):
        self.score = np.float32(self.score)
        if len(self.tokens) != len(self.timestamps):
            raise ContractError("tokens and timestamps must have equal length")
        if self.durations is not None and len(self.durations) != len(self.tokens):
            raise ContractError("durations must match tokens in length")

    def identical(self, other: DecodeOutcome) -> bool:
        """Equality with the score compared bit-for-bit."""
        return (
            self.tokens == other.tokens
            and self.timestamps == other.timestamps
            and self.durations == other.durations
            and score_bits(self.score) == score_bits(other.score)
        )

    def to_json(self, text: str | None = None) -> str:
        doc: dict = {"tokens": self.tokens, "timestamps": self.timestamps}
        if self.durations is not None:
            doc["durations"] = self.durations
        # float32 -> float64 is exact and repr() round-trips
        doc["score"] = float(self.score)
        if text is not None:
            doc["text"] = text
        return json.dumps(doc)

    @classmethod
    def from_json(cls, line: str) -> DecodeOutcome:
        doc = json.loads(line)
        return cls(doc["tokens"], doc["timestamps"], np.float32(doc["score"]), doc.get("durations"))


def score_bits(x) -> int:
    return int(np.float32(x).view(np.uint32))


def first_divergence(a: DecodeOutcome, b: DecodeOutcome) -> str | None:
    """Describe where two outcomes first differ, or None if identical."""
    if a.identical(b):
        return None
    for field in ("tokens", "timestamps", "durations"):
        xs, ys = getattr(a, field) or [], getattr(b, field) or []
        for i, (x, y) in enumerate(zip(xs, ys)):
            if x != y:
                return f"{field}[{i}]: {x} != {y}"
        if len(xs) != len(ys):
            return f"{field}: length {len(xs)} != {len(ys)}"
    return f"score: {float(a.score)!r} != {float(b.score)!r}"


def write_jsonl(outcomes: Iterable[DecodeOutcome], fh: TextIO, texts: Iterable[str | None] | None = None) -> None:
    texts = iter(texts) if texts is not None else None
    for o in outcomes:
        fh.write(o.to_json(next(texts) if texts is not None else None) + "\n")


def read_jsonl(fh: TextIO) -> list[DecodeOutcome]:
    return [DecodeOutcome.from_json(line) for line in fh if line.strip()]


def default_capacity(max_frames: int) -> int:
    """Initial hypothesis capacity for a batch whose longest input has ``max_frames``."""
    return max(1, math.ceil(max_frames / 2))


class BatchedHyps:
    """Hypotheses of a whole batch held in ``[B, capacity]`` arrays.

    Appends are masked: each call writes one slot per selected row at that
    row's current length. Capacity doubles when a selected row is full.
    """

    def __init__(self, batch_size: int, initial_capacity: int, with_durations: bool = False, blank: int | None = None):
        if batch_size < 1:
            raise ContractError(f"batch_size must be >= 1, got {batch_size}")
        if initial_capacity < 1:
            raise ContractError(f"initial_capacity must be >= 1, got {initial_capacity}")
        self.batch_size = batch_size
        self.capacity = initial_capacity
        self.initial_capacity = initial_capacity
        # label ids >= blank (blank itself, BOS) are rejected on append
        self.blank = blank
        self.current_lengths = np.zeros(batch_size, dtype=np.int64)
        self.transcripts = np.zeros((batch_size, initial_capacity), dtype=np.int64)
        self.timestamps = np.zeros((batch_size, initial_capacity), dtype=np.int64)
        self.durations = np.zeros((batch_size, initial_capacity), dtype=np.int64) if with_durations else None
        self.scores = np.zeros(batch_size, dtype=FLOAT)
        self.reallocations = 0
        self._rows = np.arange(batch_size)

    def grow(self) -> None:
        """Double the capacity, keeping existing contents."""
        pad = ((0, 0), (0, self.capacity))
        self.transcripts = np.pad(self.transcripts, pad)
        self.timestamps = np.pad(self.timestamps, pad)
        if self.durations is not None:
            self.durations = np.pad(self.durations, pad)
        self.capacity *= 2
        self.reallocations += 1

    def add_results(
        self,
        add_mask: np.ndarray,
        labels: np.ndarray,
        times: np.ndarray,
        step_scores: np.ndarray | None = None,
        durations: np.ndarray | None = None,
    ) -> None:
        """Append ``labels`` (with frame ``times``) to rows selected by ``add_mask``.

        ``step_scores``, when given, is added to the score of every row,
        selected or not.
        """
        B = self.batch_size
        add_mask = np.asarray(add_mask)
        if add_mask.dtype != np.bool_ or add_mask.shape != (B,):
            raise ContractError(f"add_mask must be bool[{B}]")
        labels = np.asarray(labels)
        times = np.asarray(times)
        if labels.shape != (B,) or times.shape != (B,):
            raise ContractError("labels and times must have one entry per batch row")
        if (durations is None) != (self.durations is None):
            raise ContractError("durations must be given exactly when the store tracks them")
        if add_mask.any():
            chosen = labels[add_mask]
            if chosen.min() < 0 or (self.blank is not None and chosen.max() >= self.blank):
                raise ContractError("only real labels (not blank / BOS) can be appended")
            if (self.current_lengths[add_mask] >= self.capacity).any():
                self.grow()
            rows = self._rows[add_mask]
            pos = self.current_lengths[add_mask]
            self.transcripts[rows, pos] = chosen
            self.timestamps[rows, pos] = times[add_mask]
            if self.durations is not None:
                self.durations[rows, pos] = np.asarray(durations)[add_mask]
            self.current_lengths += add_mask
        if step_scores is not None:
            self.scores += np.asarray(step_scores, dtype=FLOAT)

    def add_scores(self, mask: np.ndarray, step_scores: np.ndarray) -> None:
        """Accumulate ``step_scores`` into the rows selected by ``mask`` only."""
        self.scores[mask] += step_scores[mask]

    def unpack(self) -> list[DecodeOutcome]:
        out = []
        for b in range(self.batch_size):
            n = int(self.current_lengths[b])
            out.append(
                DecodeOutcome(
                    tokens=self.transcripts[b, :n].tolist(),
                    timestamps=self.timestamps[b, :n].tolist(),
                    score=self.scores[b],
                    durations=self.durations[b, :n].tolist() if self.durations is not None else None,
                )
            )
        return out
