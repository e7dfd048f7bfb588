"""Greedy Transducer decoding: sequential oracles and two batched schedules.

All decoders share the same per-step rules so their outputs agree exactly:

* the joint is evaluated at the current frame with the predictor output
  for the last emitted label (BOS before any label);
* every evaluation adds the log-probability of its argmax choice to the
  score (TDT: token log-prob + duration log-prob);
* RNNT: blank advances one frame, a label keeps the frame;
* TDT: a label advances by its predicted duration, blank by
  ``max(duration, 1)``;
* after ``max_symbols`` labels on one frame without advancing, the frame is
  advanced by one.

Frame-looping is the conventional batched schedule: all rows share one
frame index and rows that are done wait for the others. Label-looping finds
one label per row per outer iteration, scanning over blanks with only the
joint in the inner loop, so the predictor runs once per emitted label.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .counters import CallCounters
from .errors import ConfigError, ContractError
from .hypotheses import BatchedHyps, DecodeOutcome, default_capacity
from .tensor import argmax_row, argmax_rows, log_softmax_at, log_softmax_rows, masked_assign

ALGORITHMS = ("sequential", "frame_looping", "label_looping")
DEFAULT_MAX_SYMBOLS = 10


@dataclass
class DecodeRequest:
    enc: np.ndarray
    input_lengths: np.ndarray
    algorithm: str = "label_looping"
    precompute_projections: bool = True
    max_symbols_per_frame: int = DEFAULT_MAX_SYMBOLS
    decoder_kind: str | None = None

    def __post_init__(self):
        self.enc = np.asarray(self.enc, dtype=np.float32)
        self.input_lengths = np.asarray(self.input_lengths, dtype=np.int64).reshape(-1)
        self.algorithm = self.algorithm.replace("-", "_")
        if self.enc.ndim != 3:
            raise ContractError(f"enc must be [B, T, D], got shape {self.enc.shape}")
        B, T_max = self.enc.shape[:2]
        if self.input_lengths.shape != (B,):
            raise ContractError(f"need {B} input lengths, got {self.input_lengths.shape[0]}")
        if B and (self.input_lengths.min() < 0 or self.input_lengths.max() > T_max):
            raise ContractError(f"input lengths must lie in [0, {T_max}]")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.max_symbols_per_frame < 1:
            raise ConfigError("max_symbols_per_frame must be >= 1")


class _Model:
    """Model wrapper that counts calls and applies the projection schedule.

    With ``precompute`` the encoder projection runs once over the whole input
    and the predictor projection once per predictor call; otherwise both run
    inside every joint evaluation.
    """

    def __init__(self, model, enc: np.ndarray, precompute: bool, counters: CallCounters):
        self.model = model
        self.enc = enc
        self.precompute = precompute
        self.c = counters
        if precompute:
            B, T = enc.shape[:2]
            self.enc_proj = model.project_encoder(enc) if B * T else None
            self.c.encoder_projection_row_evaluations += B * T
        self.dec = None
        self.pred_proj = None

    def predictor(self, states, tokens, wasted: int = 0):
        dec, new_states = self.model.predictor_step(states, tokens)
        self.c.predictor_batched_invocations += 1
        self.c.predictor_element_evaluations += len(tokens)
        self.c.wasted_element_evaluations += int(wasted)
        self.dec = dec
        if self.precompute:
            self.pred_proj = self.model.project_predictor(dec)
            self.c.predictor_projection_evaluations += 1
        return dec, new_states

    def joint(self, times: np.ndarray, wasted: int = 0):
        B = len(times)
        rows = np.arange(B)
        # finished rows may point past their frames; clamp to stay in the tensor
        times = np.minimum(times, self.enc.shape[1] - 1)
        if self.precompute:
            enc_proj, pred_proj = self.enc_proj[rows, times], self.pred_proj
        else:
            enc_proj = self.model.project_encoder(self.enc[rows, times])
            pred_proj = self.model.project_predictor(self.dec)
            self.c.encoder_projection_row_evaluations += B
            self.c.predictor_projection_evaluations += 1
        self.c.joint_batched_invocations += 1
        self.c.joint_element_evaluations += B
        self.c.wasted_element_evaluations += int(wasted)
        return self.model.joint(enc_proj, pred_proj)


# -- sequential oracles ------------------------------------------------------------


def decode_sequential_rnnt(
    model,
    enc_row: np.ndarray,
    max_symbols: int = DEFAULT_MAX_SYMBOLS,
    precompute: bool = True,
    counters: CallCounters | None = None,
    trace: list | None = None,
) -> DecodeOutcome:
    """Decode one utterance ``enc_row [T, D_e]`` one step at a time.

    ``trace``, if given, receives one ``(frame, token)`` tuple per joint
    evaluation.
    """
    if model.is_tdt:
        raise ConfigError("decode_sequential_rnnt needs an RNNT model")
    c = counters if counters is not None else CallCounters()
    T = enc_row.shape[0]
    m = _Model(model, enc_row[None], precompute, c)
    tokens, times = [], []
    score = np.float32(0.0)
    if T == 0:
        return DecodeOutcome(tokens, times, score)
    _, state = m.predictor(model.init_state(1), np.array([model.bos]))
    t = symbols = 0
    while t < T:
        logits, _ = m.joint(np.array([t]))
        k = argmax_row(logits[0])
        score = score + log_softmax_at(logits[0], k)
        if trace is not None:
            trace.append((t, k))
        if k == model.blank:
            t += 1
            symbols = 0
            continue
        tokens.append(k)
        times.append(t)
        _, state = m.predictor(state, np.array([k]))
        symbols += 1
        if symbols >= max_symbols:
            t += 1
            symbols = 0
    return DecodeOutcome(tokens, times, score)


def decode_sequential_tdt(
    model,
    enc_row: np.ndarray,
    max_symbols: int = DEFAULT_MAX_SYMBOLS,
    precompute: bool = True,
    counters: CallCounters | None = None,
    trace: list | None = None,
) -> DecodeOutcome:
    """Single-utterance TDT decode; frames advance by predicted durations.

    ``trace`` receives ``(frame, token, duration)`` per joint evaluation.
    """
    if not model.is_tdt:
        raise ConfigError("decode_sequential_tdt needs a TDT model")
    c = counters if counters is not None else CallCounters()
    T = enc_row.shape[0]
    m = _Model(model, enc_row[None], precompute, c)
    tokens, times, durations = [], [], []
    score = np.float32(0.0)
    if T == 0:
        return DecodeOutcome(tokens, times, score, durations)
    _, state = m.predictor(model.init_state(1), np.array([model.bos]))
    t = symbols = 0
    while t < T:
        logits, dur_logits = m.joint(np.array([t]))
        k = argmax_row(logits[0])
        d = argmax_row(dur_logits[0])
        score = score + (log_softmax_at(logits[0], k) + log_softmax_at(dur_logits[0], d))
        if trace is not None:
            trace.append((t, k, d))
        if k == model.blank:
            t += max(d, 1)
            symbols = 0
            continue
        tokens.append(k)
        times.append(t)
        durations.append(d)
        _, state = m.predictor(state, np.array([k]))
        if d > 0:
            t += d
            symbols = 0
        else:
            symbols += 1
            if symbols >= max_symbols:
                t += 1
                symbols = 0
    return DecodeOutcome(tokens, times, score, durations)


def decode_sequential(model, req: DecodeRequest, counters: CallCounters | None = None) -> list[DecodeOutcome]:
    """Run the single-utterance oracle on every row of a batch request."""
    fn = decode_sequential_tdt if model.is_tdt else decode_sequential_rnnt
    return [
        fn(model, req.enc[b, : req.input_lengths[b]], req.max_symbols_per_frame, req.precompute_projections, counters)
        for b in range(req.enc.shape[0])
    ]


# -- frame-looping (conventional batched) ---------------------------------------------


def decode_frame_looping(model, req: DecodeRequest, counters: CallCounters | None = None) -> list[DecodeOutcome]:
    """Batched RNNT decode with a shared frame index.

    Predictor state is committed only for rows that emitted a label; rows
    past their own length are held blank. A row that reaches the
    max-symbols cap is masked like a blank row for the rest of the frame.
    """
    if model.is_tdt:
        raise ConfigError("frame-looping decoding supports RNNT models only")
    c = counters if counters is not None else CallCounters()
    enc, lengths, max_symbols = req.enc, req.input_lengths, req.max_symbols_per_frame
    B = enc.shape[0]
    if B == 0:
        return []
    T_loop = int(lengths.max())
    hyps = BatchedHyps(B, default_capacity(T_loop), blank=model.blank)
    if T_loop == 0:
        return hyps.unpack()
    m = _Model(model, enc, req.precompute_projections, c)
    state = model.init_state(B)
    last = np.full(B, model.bos, dtype=np.int64)
    for t in range(T_loop):
        c.outer_loop_iterations += 1
        live = t < lengths
        frame = np.full(B, t, dtype=np.int64)
        idle = int((~live).sum())
        _, new_state = m.predictor(state, last, wasted=idle)
        logits, _ = m.joint(frame, wasted=idle)
        k = argmax_rows(logits)
        hyps.add_scores(live, log_softmax_rows(logits, k))
        blank_mask = ~live | (k == model.blank)
        masked_assign(state, ~blank_mask, new_state)
        symbols = np.zeros(B, dtype=np.int64)
        while not blank_mask.all():
            c.inner_loop_iterations += 1
            emit = ~blank_mask
            hyps.add_results(emit, k, frame)
            last[emit] = k[emit]
            symbols[emit] += 1
            capped = symbols >= max_symbols
            masked = int((blank_mask | capped).sum())
            _, new_state = m.predictor(state, last, wasted=masked)
            logits, _ = m.joint(frame, wasted=masked)
            k = argmax_rows(logits)
            hyps.add_scores(emit & ~capped, log_softmax_rows(logits, k))
            blank_mask |= capped | (k == model.blank)
            masked_assign(state, ~blank_mask, new_state)
    return hyps.unpack()


# -- label-looping ------------------------------------------------------------------------


def _decode_label_looping(model, req: DecodeRequest, counters: CallCounters | None, tdt: bool) -> list[DecodeOutcome]:
    c = counters if counters is not None else CallCounters()
    enc, lengths, max_symbols = req.enc, req.input_lengths, req.max_symbols_per_frame
    B = enc.shape[0]
    if B == 0:
        return []
    T_max = int(lengths.max())
    hyps = BatchedHyps(B, default_capacity(T_max), with_durations=tdt, blank=model.blank)
    if T_max == 0:
        return hyps.unpack()
    m = _Model(model, enc, req.precompute_projections, c)
    blank = model.blank

    time = np.zeros(B, dtype=np.int64)
    # frame advances owed by rows that just emitted a label (TDT duration or
    # max-symbols cap); applied when the row next starts scanning
    pending = np.zeros(B, dtype=np.int64)
    symbols = np.zeros(B, dtype=np.int64)
    last = np.full(B, model.bos, dtype=np.int64)
    labels = np.full(B, blank, dtype=np.int64)
    durs = np.zeros(B, dtype=np.int64)

    _, state = m.predictor(model.init_state(B), last)
    while True:
        moved = pending > 0
        time += pending
        symbols[moved] = 0
        pending[:] = 0
        active = time < lengths
        # every pass through here follows a predictor call; its rows for
        # finished utterances are never looked at
        c.wasted_element_evaluations += int((~active).sum())
        if not active.any():
            break
        c.outer_loop_iterations += 1

        # inner loop: only the joint runs; rows on blank move forward until
        # each active row has a label or runs out of frames
        scanning = active.copy()
        first = True
        while scanning.any():
            if not first:
                c.inner_loop_iterations += 1
            first = False
            logits, dur_logits = m.joint(time, wasted=B - int(scanning.sum()))
            k = argmax_rows(logits)
            step_scores = log_softmax_rows(logits, k)
            if tdt:
                d = argmax_rows(dur_logits)
                step_scores = step_scores + log_softmax_rows(dur_logits, d)
                durs[scanning] = d[scanning]
            hyps.add_scores(scanning, step_scores)
            labels[scanning] = k[scanning]
            on_blank = scanning & (k == blank)
            time[on_blank] += np.maximum(durs[on_blank], 1) if tdt else 1
            symbols[on_blank] = 0
            scanning = on_blank & (time < lengths)

        found = active & (time < lengths)
        if not found.any():
            break
        hyps.add_results(found, labels, time, durations=durs if tdt else None)
        if tdt:
            jump = found & (durs > 0)
            pending[jump] = durs[jump]
            symbols[found & (durs == 0)] += 1
        else:
            symbols[found] += 1
        capped = found & (pending == 0) & (symbols >= max_symbols)
        pending[capped] = 1
        last[found] = labels[found]
        # no state masking: rows that did not find a label are finished, and
        # their predictor output is never read
        _, state = m.predictor(state, last)
    return hyps.unpack()


def decode_label_looping_rnnt(model, req: DecodeRequest, counters: CallCounters | None = None) -> list[DecodeOutcome]:
    if model.is_tdt:
        raise ConfigError("decode_label_looping_rnnt needs an RNNT model")
    return _decode_label_looping(model, req, counters, tdt=False)


def decode_label_looping_tdt(model, req: DecodeRequest, counters: CallCounters | None = None) -> list[DecodeOutcome]:
    if not model.is_tdt:
        raise ConfigError("decode_label_looping_tdt needs a TDT model")
    return _decode_label_looping(model, req, counters, tdt=True)


def decode(model, req: DecodeRequest, counters: CallCounters | None = None) -> list[DecodeOutcome]:
    """Dispatch on ``req.algorithm`` and the model's decoder kind."""
    kind = "tdt" if model.is_tdt else "rnnt"
    if req.decoder_kind is not None and req.decoder_kind != kind:
        raise ConfigError(f"request asks for {req.decoder_kind} but the model is {kind}")
    if req.enc.shape[0] and req.enc.shape[2] != model.enc_dim:
        raise ConfigError(f"encoder features have dim {req.enc.shape[2]}, model expects {model.enc_dim}")
    if req.algorithm == "sequential":
        return decode_sequential(model, req, counters)
    if req.algorithm == "frame_looping":
        return decode_frame_looping(model, req, counters)
    if kind == "tdt":
        return decode_label_looping_tdt(model, req, counters)
    return decode_label_looping_rnnt(model, req, counters)
