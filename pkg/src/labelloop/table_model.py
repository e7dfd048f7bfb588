"""Table-driven model that forces a chosen alignment per utterance.

The model speaks the same predictor/joint interface as
:class:`labelloop.model.SyntheticTransducer`. Its encoder "features" are
``(utterance, frame)`` pairs and its predictor state counts consumed labels,
so the joint can look up which alignment step a row is at and emit a
one-hot-dominant logit row for it.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .errors import ConfigError, ContractError
from .tensor import FLOAT

BLANK_MARK = "<b>"
FORCED_LOGIT = 10.0

# Alignments from the two-utterance CAT / DOG illustration, 4 frames each.
CAT_DOG_ALIGNMENTS = ["C <b> <b> A T <b> <b>", "<b> D <b> <b> O G <b>"]


class TableModel:
    def __init__(
        self,
        vocab: Sequence[str],
        alignments: Sequence[Sequence],
        decoder_kind: str = "rnnt",
    ):
        if not vocab:
            raise ConfigError("table model needs a non-empty vocabulary")
        if len(set(vocab)) != len(vocab) or BLANK_MARK in vocab:
            raise ConfigError("vocabulary entries must be unique and must not be the blank mark")
        if decoder_kind not in ("rnnt", "tdt"):
            raise ConfigError(f"unknown decoder_kind {decoder_kind!r}")
        self.vocab = list(vocab)
        self.vocab_size = len(self.vocab)
        self.blank = self.vocab_size
        self.bos = self.vocab_size + 1
        self.is_tdt = decoder_kind == "tdt"
        self.decoder_kind = decoder_kind
        self.enc_dim = 2
        self._index = {tok: i for i, tok in enumerate(self.vocab)}
        self.alignments = [self._parse(a) for a in alignments]
        self.max_duration = max(
            [1] + [d for align in self.alignments for _, d in align]
        ) if self.is_tdt else 0
        self.frames: list[int] = []
        self._lookup: list[dict[tuple[int, int], int]] = []
        for u, align in enumerate(self.alignments):
            T, table = self._replay(align)
            self.frames.append(T)
            self._lookup.append(table)

    @classmethod
    def cat_dog(cls) -> TableModel:
        return cls(vocab=sorted("CATDOG"), alignments=[a.split() for a in CAT_DOG_ALIGNMENTS])

    # -- parsing / replay --------------------------------------------------------

    def _token_id(self, tok) -> int:
        if tok is None or tok == BLANK_MARK:
            return self.blank
        if isinstance(tok, (int, np.integer)) and not isinstance(tok, bool):
            if not 0 <= tok <= self.blank:
                raise ConfigError(f"token id {tok} out of range")
            return int(tok)
        if tok not in self._index:
            raise ConfigError(f"token {tok!r} not in vocabulary")
        return self._index[tok]

    def _parse(self, align) -> list[tuple[int, int | None]]:
        if isinstance(align, str):
            align = align.split()
        steps = []
        for entry in align:
            if self.is_tdt:
                if not isinstance(entry, (list, tuple)) or len(entry) != 2:
                    raise ConfigError(f"TDT alignment entries must be (token, duration), got {entry!r}")
                tok, dur = entry
                if int(dur) < 0:
                    raise ConfigError(f"negative duration in {entry!r}")
                steps.append((self._token_id(tok), int(dur)))
            else:
                steps.append((self._token_id(entry), None))
        return steps

    def _replay(self, align) -> tuple[int, dict[tuple[int, int], int]]:
        """Walk the alignment with greedy-decoding time rules.

        Returns the frame count and a map ``(frame, labels_so_far) -> step``.
        """
        t = n = 0
        table = {}
        for i, (tok, dur) in enumerate(align):
            table[(t, n)] = i
            if tok == self.blank:
                t += max(dur, 1) if self.is_tdt else 1
            else:
                n += 1
                t += dur if self.is_tdt else 0
        T = t
        for (ts, _), i in table.items():
            if ts >= T:
                raise ConfigError(f"alignment step {i} falls at or after the final frame {T}")
        return T, table

    # -- fixture helpers ------------------------------------------------------------

    def step(self, utt: int, step: int) -> tuple[int, int | None]:
        """The forced emission at ``step`` of utterance ``utt``."""
        if not 0 <= utt < len(self.alignments):
            raise ContractError(f"utterance {utt} out of range")
        align = self.alignments[utt]
        if not 0 <= step < len(align):
            raise ContractError(f"step {step} out of range for alignment of length {len(align)}")
        return align[step]

    def encoder_inputs(self) -> tuple[np.ndarray, np.ndarray]:
        """``(enc [B, T_max, 2], lengths [B])`` carrying (utterance, frame) pairs."""
        B = len(self.alignments)
        T_max = max(self.frames, default=0)
        enc = np.zeros((B, T_max, 2), dtype=FLOAT)
        enc[:, :, 0] = np.arange(B, dtype=FLOAT)[:, None]
        enc[:, :, 1] = np.arange(T_max, dtype=FLOAT)[None, :]
        return enc, np.array(self.frames, dtype=np.int64)

    def text(self, tokens: Sequence[int]) -> str:
        return "".join(self.vocab[k] for k in tokens)

    def to_dict(self) -> dict:
        out = []
        for align in self.alignments:
            if self.is_tdt:
                out.append([[self._name(k), d] for k, d in align])
            else:
                out.append([self._name(k) for k, _ in align])
        return {
            "format": "labelloop-table",
            "decoder_kind": self.decoder_kind,
            "vocab": self.vocab,
            "alignments": out,
        }

    def _name(self, k: int) -> str:
        return BLANK_MARK if k == self.blank else self.vocab[k]

    @classmethod
    def from_dict(cls, doc: dict) -> TableModel:
        try:
            return cls(doc["vocab"], doc["alignments"], doc.get("decoder_kind", "rnnt"))
        except KeyError as exc:
            raise ConfigError(f"table model file missing field {exc}") from exc

    # -- model interface --------------------------------------------------------------

    def init_state(self, batch: int) -> np.ndarray:
        return np.full((batch, 1), -1.0, dtype=FLOAT)

    def predictor_step(self, states: np.ndarray, tokens: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        tokens = np.asarray(tokens)
        if tokens.shape != (states.shape[0],):
            raise ContractError("tokens do not match states")
        if tokens.size and (tokens.min() < 0 or tokens.max() > self.bos):
            raise ContractError(f"token id out of range [0, {self.bos}]")
        new = states + FLOAT(1.0)
        return new, new.copy()

    def project_encoder(self, enc: np.ndarray) -> np.ndarray:
        return enc.astype(FLOAT, copy=True)

    def project_predictor(self, dec: np.ndarray) -> np.ndarray:
        return dec.astype(FLOAT, copy=True)

    def joint(self, enc_proj: np.ndarray, pred_proj: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
        B = enc_proj.shape[0]
        logits = np.zeros((B, self.vocab_size + 1), dtype=FLOAT)
        durs = np.zeros((B, self.max_duration + 1), dtype=FLOAT) if self.is_tdt else None
        for b in range(B):
            u, t, n = int(enc_proj[b, 0]), int(enc_proj[b, 1]), int(pred_proj[b, 0])
            i = self._lookup[u].get((t, n)) if 0 <= u < len(self._lookup) else None
            # rows off the alignment (inactive / wasted rows) get a harmless blank
            tok, dur = self.alignments[u][i] if i is not None else (self.blank, 1)
            logits[b, tok] = FORCED_LOGIT
            if durs is not None:
                durs[b, dur] = FORCED_LOGIT
        return logits, durs
