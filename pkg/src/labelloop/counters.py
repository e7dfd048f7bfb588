"""Call-count instrumentation shared by the decoders and the bench harness."""

from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass
class CallCounters:
    """How much model work a decode performed.

    ``*_batched_invocations`` count calls (one per kernel launch on a GPU);
    ``*_element_evaluations`` count batch rows processed by those calls.
    ``wasted_element_evaluations`` counts predictor and joint rows whose
    result was discarded: rows of finished utterances, or rows masked out
    because they already found what the current loop is searching for.
    """

    predictor_batched_invocations: int = 0
    predictor_element_evaluations: int = 0
    joint_batched_invocations: int = 0
    joint_element_evaluations: int = 0
    wasted_element_evaluations: int = 0
    encoder_projection_row_evaluations: int = 0
    predictor_projection_evaluations: int = 0
    inner_loop_iterations: int = 0
    outer_loop_iterations: int = 0

    def as_dict(self) -> dict[str, int]:
        return asdict(self)

    def __iadd__(self, other: CallCounters) -> CallCounters:
        for k, v in other.as_dict().items():
            setattr(self, k, getattr(self, k) + v)
        return self
