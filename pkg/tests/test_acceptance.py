"""Acceptance checks; each test prints one ``criterion N: PASS/FAIL`` line."""

import json
import math
import time
from functools import lru_cache

import numpy as np
import pytest

from labelloop import decoders
from labelloop.bench import compare_reports, run_bench
from labelloop.cli import main
from labelloop.corpus import random_case, random_encoder_batch
from labelloop.counters import CallCounters
from labelloop.decoders import (
    DecodeRequest,
    decode_frame_looping,
    decode_label_looping_rnnt,
    decode_label_looping_tdt,
    decode_sequential_rnnt,
    decode_sequential_tdt,
)
from labelloop.hypotheses import BatchedHyps
from labelloop.model import ModelConfig, SyntheticTransducer
from labelloop.table_model import TableModel

N_CONFIGS = 500
TIME_BUDGET_S = 120.0


def same(xs, ys):
    return len(xs) == len(ys) and all(x.identical(y) for x, y in zip(xs, ys))


def guard_hits(outcome, max_symbols):
    """Runs of ``max_symbols`` labels that share one frame (guard forced a step)."""
    hits = run = 0
    prev = None
    for t, d in zip(outcome.timestamps, outcome.durations or [0] * len(outcome.tokens)):
        run = run + 1 if t == prev else 1
        prev = t
        if d == 0 and run >= max_symbols and run % max_symbols == 0:
            hits += 1
    return hits


def call_record(case, counters, outcomes):
    return {
        "seed": case.seed,
        "calls": counters.predictor_batched_invocations,
        "max_len": max((len(o.tokens) for o in outcomes), default=0),
        "T": int(case.lengths.max()) if len(case.lengths) else 0,
    }


@lru_cache(maxsize=None)
def rnnt_corpus():
    start = time.perf_counter()
    stats = {"mismatches": [], "label_calls": [], "frame_calls": [], "guard_hits": 0,
             "stateless": 0, "recurrent": 0, "empty_rows": 0, "mixed_lengths": 0, "decodes": 0}
    for seed in range(N_CONFIGS):
        case = random_case(seed, "rnnt")
        ms = case.max_symbols
        stats[case.cfg.predictor_kind] += 1
        stats["empty_rows"] += int((case.lengths == 0).sum())
        stats["mixed_lengths"] += int(len(set(case.lengths.tolist())) > 1)
        oracle = [decode_sequential_rnnt(case.model, case.enc[b, :n], ms) for b, n in enumerate(case.lengths)]
        stats["guard_hits"] += sum(guard_hits(o, ms) for o in oracle)
        for precompute in (True, False):
            for name, fn in (("label", decode_label_looping_rnnt), ("frame", decode_frame_looping)):
                c = CallCounters()
                req = DecodeRequest(case.enc, case.lengths, f"{name}_looping", precompute, ms)
                out = fn(case.model, req, c)
                stats["decodes"] += 1
                if not same(out, oracle):
                    stats["mismatches"].append((seed, name, precompute))
                stats[f"{name}_calls"].append(call_record(case, c, out))
    stats["seconds"] = time.perf_counter() - start
    return stats


@lru_cache(maxsize=None)
def tdt_corpus():
    start = time.perf_counter()
    stats = {"mismatches": [], "label_calls": [], "blank_d0": 0, "label_d0": 0, "guard_hits": 0,
             "d_max": set(), "decodes": 0}
    for seed in range(N_CONFIGS):
        case = random_case(seed, "tdt")
        ms = case.max_symbols
        stats["d_max"].add(case.cfg.max_duration)
        oracle = []
        for b, n in enumerate(case.lengths):
            trace = []
            oracle.append(decode_sequential_tdt(case.model, case.enc[b, :n], ms, trace=trace))
            stats["blank_d0"] += sum(1 for _, k, d in trace if k == case.model.blank and d == 0)
            stats["label_d0"] += sum(1 for _, k, d in trace if k != case.model.blank and d == 0)
        stats["guard_hits"] += sum(guard_hits(o, ms) for o in oracle)
        for precompute in (True, False):
            c = CallCounters()
            out = decode_label_looping_tdt(case.model, DecodeRequest(case.enc, case.lengths, "label_looping", precompute, ms), c)
            stats["decodes"] += 1
            if not same(out, oracle):
                stats["mismatches"].append((seed, precompute))
            stats["label_calls"].append(call_record(case, c, out))
    stats["seconds"] = time.perf_counter() - start
    return stats


def test_criterion_1_rnnt_oracle_equivalence(record_criterion):
    s = rnnt_corpus()
    ok = (
        not s["mismatches"]
        and s["seconds"] < TIME_BUDGET_S
        and s["stateless"] > 0
        and s["recurrent"] > 0
        and s["empty_rows"] > 0
        and s["guard_hits"] > 0
    )
    record_criterion(
        1, ok,
        f"{N_CONFIGS} RNNT configs x 2 batched algorithms x precompute on/off: "
        f"{len(s['mismatches'])} mismatches in {s['decodes']} decodes, "
        f"{s['recurrent']} recurrent / {s['stateless']} stateless, {s['guard_hits']} guard hits, "
        f"{s['seconds']:.1f} s",
    )
    assert not s["mismatches"], s["mismatches"][:5]
    assert s["seconds"] < TIME_BUDGET_S
    assert s["stateless"] and s["recurrent"] and s["empty_rows"] and s["mixed_lengths"]
    assert s["guard_hits"] > 0


def test_criterion_2_tdt_oracle_equivalence(record_criterion):
    s = tdt_corpus()
    ok = (
        not s["mismatches"]
        and s["seconds"] < TIME_BUDGET_S
        and s["blank_d0"] > 0
        and s["label_d0"] > 0
        and s["d_max"] == {1, 2, 3, 4}
    )
    record_criterion(
        2, ok,
        f"{N_CONFIGS} TDT configs x precompute on/off: {len(s['mismatches'])} mismatches in "
        f"{s['decodes']} decodes; blank d=0 steps {s['blank_d0']}, label d=0 steps {s['label_d0']}, "
        f"guard hits {s['guard_hits']}, {s['seconds']:.1f} s",
    )
    assert not s["mismatches"], s["mismatches"][:5]
    assert s["seconds"] < TIME_BUDGET_S
    assert s["blank_d0"] > 0 and s["label_d0"] > 0
    assert s["d_max"] == {1, 2, 3, 4}


def test_criterion_3_predictor_call_minimality(record_criterion):
    label = rnnt_corpus()["label_calls"] + tdt_corpus()["label_calls"]
    bad_label = [
        r for r in label
        if r["calls"] != (r["max_len"] + 1 if r["T"] > 0 else 0)
    ]
    bad_frame = []
    strict_cases = 0
    for lab, frm in zip(rnnt_corpus()["label_calls"], rnnt_corpus()["frame_calls"]):
        if frm["calls"] < lab["calls"]:
            bad_frame.append(frm)
        if lab["max_len"] > 0 and lab["T"] >= 2:
            strict_cases += 1
            if frm["calls"] <= lab["calls"]:
                bad_frame.append(frm)
    ok = not bad_label and not bad_frame
    record_criterion(
        3, ok,
        f"label-looping calls == max hypothesis length + 1 on {len(label) - len(bad_label)}/{len(label)} "
        f"decodes; frame-looping >= (strictly > on {strict_cases} non-empty cases), {len(bad_frame)} violations",
    )
    assert not bad_label, bad_label[:5]
    assert not bad_frame, bad_frame[:5]


def test_criterion_4_cat_dog(record_criterion):
    m = TableModel.cat_dog()
    enc, lengths = m.encoder_inputs()
    texts, calls = {}, {}
    for algo in ("sequential", "frame_looping", "label_looping"):
        c = CallCounters()
        out = decoders.decode(m, DecodeRequest(enc, lengths, algo), c)
        texts[algo] = [m.text(o.tokens) for o in out]
        calls[algo] = c.predictor_batched_invocations
    ok = (
        all(t == ["CAT", "DOG"] for t in texts.values())
        and calls["label_looping"] == 4
        and calls["frame_looping"] == 10
    )
    record_criterion(
        4, ok,
        f"texts {texts['sequential']}/{texts['frame_looping']}/{texts['label_looping']}, "
        f"predictor calls label-looping {calls['label_looping']}, frame-looping {calls['frame_looping']}",
    )
    assert all(t == ["CAT", "DOG"] for t in texts.values())
    assert calls["label_looping"] == 4
    assert calls["frame_looping"] == 10


def test_criterion_5_precompute_identity(record_criterion):
    mismatches, count_errors = [], []
    for i in range(50):
        seed = 20_000 + i
        case = random_case(seed, "tdt" if i % 2 else "rnnt")
        for algo in ("sequential", "label_looping") + (() if i % 2 else ("frame_looping",)):
            runs = {}
            for pre in (True, False):
                c = CallCounters()
                req = DecodeRequest(case.enc, case.lengths, algo, pre, case.max_symbols)
                runs[pre] = (decoders.decode(case.model, req, c), c)
            if not same(runs[True][0], runs[False][0]):
                mismatches.append((seed, algo))
            on = runs[True][1]
            if on.predictor_projection_evaluations != on.predictor_batched_invocations:
                count_errors.append((seed, algo))
    ok = not mismatches and not count_errors
    record_criterion(
        5, ok,
        f"50 configs: {len(mismatches)} on/off mismatches, {len(count_errors)} cases where "
        "predictor projections != predictor calls with precompute on",
    )
    assert not mismatches and not count_errors


def _batch_independence(kind, algo, rng):
    cfg = ModelConfig(vocab_size=20, enc_dim=12, pred_dim=10, joint_dim=16,
                      predictor_kind="recurrent", decoder_kind=kind,
                      max_duration=3 if kind == "tdt" else 0, blank_bias=0.4)
    model = SyntheticTransducer.from_seed(77, cfg)
    lengths = rng.integers(0, 60, size=50)
    enc = random_encoder_batch(rng, lengths, cfg.enc_dim)
    single = []
    for u in range(50):
        n = int(lengths[u])
        single += decoders.decode(model, DecodeRequest(enc[u : u + 1, :n], lengths[u : u + 1], algo))
    bad = 0
    for size in (4, 16):
        order = rng.permutation(50)
        for lo in range(0, 50, size):
            idx = order[lo : lo + size]
            T = int(lengths[idx].max())
            out = decoders.decode(model, DecodeRequest(enc[idx, :T], lengths[idx], algo))
            bad += sum(not o.identical(single[u]) for o, u in zip(out, idx))
    return bad


def test_criterion_6_batch_composition_independence(record_criterion):
    rng = np.random.default_rng(6)
    results = {
        (kind, algo): _batch_independence(kind, algo, rng)
        for kind, algo in (("rnnt", "label_looping"), ("rnnt", "frame_looping"), ("tdt", "label_looping"))
    }
    ok = not any(results.values())
    detail = ", ".join(f"{k}/{a}: {n} diffs" for (k, a), n in results.items())
    record_criterion(6, ok, f"50 utterances at B=1 vs shuffled batches of 4 and 16 ({detail})")
    assert ok


def test_criterion_7_batched_hyps_shadow(record_criterion):
    rng = np.random.default_rng(7)
    mismatches = bound_violations = 0
    for _ in range(10_000):
        B = int(rng.integers(1, 9))
        cap = int(rng.integers(1, 9))
        steps = int(rng.integers(0, 41))
        p = rng.uniform(0.1, 1.0)
        h = BatchedHyps(B, cap, blank=100)
        shadow_tok = [[] for _ in range(B)]
        shadow_time = [[] for _ in range(B)]
        for s in range(steps):
            m = rng.random(B) < p
            labels = rng.integers(0, 100, size=B)
            h.add_results(m, labels, np.full(B, s))
            for b in np.flatnonzero(m):
                shadow_tok[b].append(int(labels[b]))
                shadow_time[b].append(s)
        out = h.unpack()
        if [o.tokens for o in out] != shadow_tok or [o.timestamps for o in out] != shadow_time:
            mismatches += 1
        if h.reallocations > math.log2(h.capacity / h.initial_capacity) + 1:
            bound_violations += 1
    ok = mismatches == 0 and bound_violations == 0
    record_criterion(
        7, ok,
        f"10000 masked-append sequences: {mismatches} shadow mismatches, {bound_violations} reallocation-bound violations",
    )
    assert ok


def test_criterion_8_measurement_protocol(record_criterion, tmp_path, capsys, monkeypatch):
    assert main(["gen", "--out-dir", str(tmp_path), "--seed", "1", "--batch", "4", "--frames", "20", "40"]) == 0
    calls = {"frame": 0, "label": 0}

    def counted(name, fn):
        def wrapper(model, req, counters=None):
            calls[name] += 1
            return fn(model, req, counters)
        return wrapper

    monkeypatch.setattr(decoders, "decode_frame_looping", counted("frame", decode_frame_looping))
    monkeypatch.setattr(decoders, "decode_label_looping_rnnt", counted("label", decode_label_looping_rnnt))
    report = tmp_path / "bench.json"
    code = main(["bench", "--data", str(tmp_path), "--json", str(report)])
    protocol_calls = dict(calls)
    doc = json.loads(report.read_text())
    base = doc["baseline"]
    rtfx_consistent = base["rtfx"] == base["total_audio_seconds"] / base["mean_seconds"]
    mean_consistent = base["mean_seconds"] == sum(base["run_seconds"]) / 3

    # a decoder that changes its answer between runs must be refused
    flips = iter(range(100))

    def flaky(model, req, counters=None):
        out = decode_label_looping_rnnt(model, req, counters)
        if next(flips) == 3:
            out[0].tokens.append(0)
            out[0].timestamps.append(0)
        return out

    monkeypatch.setattr(decoders, "decode_label_looping_rnnt", flaky)
    flaky_code = main(["bench", "--data", str(tmp_path)])

    # exact RTFx arithmetic: 125 frames x 0.08 s = 10 s audio, 0.5 s per run
    ticks = iter(range(0, 10**12, 500_000_000))
    exact = run_bench(TableModel.cat_dog(), DecodeRequest(np.zeros((1, 125, 2), np.float32), [125]),
                      clock=ticks.__next__)
    capsys.readouterr()

    ok = (
        code == 0
        and protocol_calls == {"frame": 5, "label": 5}
        and (base["warmup_runs"], base["measured_runs"], len(base["run_seconds"])) == (2, 3, 3)
        and rtfx_consistent
        and mean_consistent
        and flaky_code == 1
        and exact.rtfx == 20.0
    )
    record_criterion(
        8, ok,
        f"default bench ran {protocol_calls['frame']} + {protocol_calls['label']} decodes (2 warm-up + 3 timed each), "
        f"run-to-run divergence exit {flaky_code}, 10 s audio / 0.5 s mean -> RTFx {exact.rtfx}",
    )
    assert code == 0
    assert protocol_calls == {"frame": 5, "label": 5}
    assert (base["warmup_runs"], base["measured_runs"], len(base["run_seconds"])) == (2, 3, 3)
    assert rtfx_consistent and mean_consistent
    assert flaky_code == 1
    assert exact.rtfx == 20.0


@pytest.mark.slow
def test_criterion_9_desk_scale_trend(record_criterion):
    """Informational: wall-clock is logged, only equivalence and counters are asserted."""
    cfg = ModelConfig(vocab_size=1024, enc_dim=64, pred_dim=64, joint_dim=64, blank_bias=0.5)
    model = SyntheticTransducer.from_seed(0, cfg)
    rng = np.random.default_rng(9)
    lengths = np.full(32, 200)
    enc = random_encoder_batch(rng, lengths, cfg.enc_dim)
    reports = [
        run_bench(model, DecodeRequest(enc, lengths, algo), warmup=0, measured=1)
        for algo in ("frame_looping", "label_looping")
    ]
    cmp = compare_reports(*reports)
    base, cand = reports
    faster = cand.mean_seconds <= base.mean_seconds
    pred_ratio = cmp["counter_ratios"]["predictor_batched_invocations"]
    joint_ratio = cmp["counter_ratios"]["joint_batched_invocations"]
    record_criterion(
        9, "INFO" if faster else "INFO (soft check not met)",
        f"B=32 T=200 V=1024: frame-looping {base.mean_seconds:.2f} s, label-looping {cand.mean_seconds:.2f} s "
        f"(speedup {cmp['speedup']:.2f}); predictor calls {base.counters['predictor_batched_invocations']} vs "
        f"{cand.counters['predictor_batched_invocations']}, joint calls {base.counters['joint_batched_invocations']} "
        f"vs {cand.counters['joint_batched_invocations']} (ratio {joint_ratio:.2f})",
    )
    assert pred_ratio > 1
