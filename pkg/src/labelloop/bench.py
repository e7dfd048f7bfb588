"""Timing harness: warm-up runs, averaged timed runs, RTFx and counter ratios."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .counters import CallCounters
from .decoders import DecodeRequest, decode
from .errors import ContractError, DeterminismError, EquivalenceError
from .hypotheses import DecodeOutcome, first_divergence

# 10 ms hop x 8x subsampling
DEFAULT_FRAME_SECONDS = 0.08


def compute_audio_seconds(input_lengths, frame_seconds: float = DEFAULT_FRAME_SECONDS) -> float:
    if frame_seconds <= 0:
        raise ContractError(f"frame_seconds must be positive, got {frame_seconds}")
    return float(np.sum(np.asarray(input_lengths, dtype=np.int64))) * frame_seconds


def rtfx(audio_seconds: float, decode_seconds: float) -> float | None:
    """Seconds of audio decoded per second of wall-clock; None when undefined."""
    if audio_seconds <= 0 or decode_seconds <= 0:
        return None
    return audio_seconds / decode_seconds


@dataclass
class BenchReport:
    algorithm: str
    batch_size: int
    total_audio_seconds: float
    warmup_runs: int
    measured_runs: int
    run_seconds: list[float]
    mean_seconds: float
    rtfx: float | None
    counters: dict[str, int]
    precompute_projections: bool = True
    comparison: dict | None = None
    outcomes: list[DecodeOutcome] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "batch_size": self.batch_size,
            "precompute_projections": self.precompute_projections,
            "total_audio_seconds": self.total_audio_seconds,
            "warmup_runs": self.warmup_runs,
            "measured_runs": self.measured_runs,
            "run_seconds": self.run_seconds,
            "mean_seconds": self.mean_seconds,
            "rtfx": self.rtfx,
            "counters": self.counters,
            "comparison": self.comparison,
        }


def _same(a: list[DecodeOutcome], b: list[DecodeOutcome]) -> bool:
    return len(a) == len(b) and all(x.identical(y) for x, y in zip(a, b))


def run_bench(
    model,
    req: DecodeRequest,
    warmup: int = 2,
    measured: int = 3,
    frame_seconds: float = DEFAULT_FRAME_SECONDS,
    decoder: Callable = decode,
    clock: Callable[[], int] = time.perf_counter_ns,
) -> BenchReport:
    """Decode ``warmup`` times untimed, then ``measured`` times timed.

    Every run must reproduce the first run's outcomes and counters exactly.
    """
    if measured < 1:
        raise ContractError(f"measured must be >= 1, got {measured}")
    if warmup < 0:
        raise ContractError(f"warmup must be >= 0, got {warmup}")
    reference: list[DecodeOutcome] | None = None
    ref_counters: CallCounters | None = None
    timings = []
    for run in range(warmup + measured):
        counters = CallCounters()
        start = clock()
        outcomes = decoder(model, req, counters)
        elapsed = clock() - start
        if reference is None:
            reference, ref_counters = outcomes, counters
        elif not _same(reference, outcomes):
            raise DeterminismError(f"run {run} of {req.algorithm} produced different outcomes")
        elif counters != ref_counters:
            raise DeterminismError(f"run {run} of {req.algorithm} produced different call counts")
        if run >= warmup:
            timings.append(elapsed / 1e9)
    mean = sum(timings) / len(timings)
    audio = compute_audio_seconds(req.input_lengths, frame_seconds)
    return BenchReport(
        algorithm=req.algorithm,
        batch_size=int(req.enc.shape[0]),
        total_audio_seconds=audio,
        warmup_runs=warmup,
        measured_runs=measured,
        run_seconds=timings,
        mean_seconds=mean,
        rtfx=rtfx(audio, mean),
        counters=ref_counters.as_dict(),
        precompute_projections=req.precompute_projections,
        outcomes=reference,
    )


def compare_reports(baseline: BenchReport, candidate: BenchReport) -> dict:
    """Relative speedup of ``candidate`` over ``baseline`` plus counter ratios.

    Counter ratios are baseline / candidate, so values above 1 mean the
    candidate did less of that work.
    """
    if len(baseline.outcomes) != len(candidate.outcomes):
        raise EquivalenceError("reports cover different numbers of utterances")
    for u, (a, b) in enumerate(zip(baseline.outcomes, candidate.outcomes)):
        diff = first_divergence(a, b)
        if diff is not None:
            raise EquivalenceError(f"utterance {u}: {diff}")
    if baseline.rtfx is not None and candidate.rtfx is not None:
        speedup = candidate.rtfx / baseline.rtfx
    elif candidate.mean_seconds > 0:
        speedup = baseline.mean_seconds / candidate.mean_seconds
    else:
        speedup = None
    ratios = {}
    for name, base in baseline.counters.items():
        cand = candidate.counters[name]
        ratios[name] = base / cand if cand else None
    return {
        "baseline": baseline.algorithm,
        "candidate": candidate.algorithm,
        "batch_size": candidate.batch_size,
        "baseline_rtfx": baseline.rtfx,
        "candidate_rtfx": candidate.rtfx,
        "speedup": speedup,
        "counter_ratios": ratios,
    }


def _fmt(x: float | None, spec: str = ".1f") -> str:
    return "n/a" if x is None else format(x, spec)


def format_comparison_table(comparisons: list[dict]) -> str:
    """Text table: batch | RTFx, baseline | RTFx, candidate | rel. speedup."""
    if not comparisons:
        return ""
    base, cand = comparisons[0]["baseline"], comparisons[0]["candidate"]
    head = ["batch", f"RTFx, {base}", f"RTFx, {cand}", "rel. speedup", "predictor calls ratio"]
    rows = [
        [
            str(c["batch_size"]),
            _fmt(c["baseline_rtfx"]),
            _fmt(c["candidate_rtfx"]),
            _fmt(c["speedup"], ".2f"),
            _fmt(c["counter_ratios"].get("predictor_batched_invocations"), ".2f"),
        ]
        for c in comparisons
    ]
    widths = [max(len(r[i]) for r in [head] + rows) for i in range(len(head))]
    lines = [" | ".join(h.rjust(w) for h, w in zip(head, widths))]
    lines.append("-+-".join("-" * w for w in widths))
    lines += [" | ".join(v.rjust(w) for v, w in zip(r, widths)) for r in rows]
    return "\n".join(lines)


def format_counters_table(baseline: BenchReport, candidate: BenchReport) -> str:
    names = list(baseline.counters)
    width = max(len(n) for n in names)
    lines = [f"{'counter'.ljust(width)} | {baseline.algorithm:>14} | {candidate.algorithm:>14}"]
    for n in names:
        lines.append(f"{n.ljust(width)} | {baseline.counters[n]:>14} | {candidate.counters[n]:>14}")
    return "\n".join(lines)
