"""Command-line entry point: ``labelloop gen|decode|verify|bench``.

Exit codes: 0 success, 1 verification / equivalence failure, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import decoders
from .bench import (
    DEFAULT_FRAME_SECONDS,
    compare_reports,
    format_comparison_table,
    format_counters_table,
    run_bench,
)
from .corpus import random_case, random_encoder_batch
from .counters import CallCounters
from .decoders import DEFAULT_MAX_SYMBOLS, DecodeRequest
from .errors import ConfigError, ContractError, DeterminismError, EquivalenceError
from .hypotheses import first_divergence, write_jsonl
from .model import ModelConfig, generate_model, load_model, save_model
from .table_model import TableModel
from .tensor import read_ltf, save_ltf

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE = 0, 1, 2
ALGO_CHOICES = ("sequential", "frame-looping", "label-looping")
FIXTURES = ("cat-dog",)


class UsageError(Exception):
    pass


def _default_seed() -> int:
    raw = os.environ.get("TL_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"TL_SEED must be an integer, got {raw!r}") from None


# -- gen ------------------------------------------------------------------------------


def cmd_gen(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.fixture == "cat-dog":
        tm = TableModel.cat_dog()
        (out / "model.json").write_text(json.dumps(tm.to_dict(), indent=2) + "\n")
        enc, lengths = tm.encoder_inputs()
    else:
        seed = args.seed if args.seed is not None else _default_seed()
        cfg = ModelConfig(
            vocab_size=args.vocab,
            enc_dim=args.enc_dim,
            pred_dim=args.pred_dim,
            joint_dim=args.joint_dim,
            predictor_kind=args.predictor,
            decoder_kind=args.decoder,
            max_duration=args.max_duration if args.decoder == "tdt" else 0,
            blank_bias=args.blank_bias,
        )
        t_lo, t_hi = args.frames
        if not 0 <= t_lo <= t_hi:
            raise UsageError(f"--frames needs 0 <= MIN <= MAX, got {t_lo} {t_hi}")
        if args.batch < 0:
            raise UsageError("--batch must be >= 0")
        save_model(out / "model.json", cfg, seed, generate_model(seed, cfg))
        # data stream is separate from the weight stream so either can change alone
        rng = np.random.default_rng([seed, 1])
        lengths = rng.integers(t_lo, t_hi + 1, size=args.batch).astype(np.int64)
        enc = random_encoder_batch(rng, lengths, cfg.enc_dim)
    save_ltf(out / "enc.ltf", enc)
    (out / "lengths.json").write_text(json.dumps([int(n) for n in lengths]) + "\n")
    print(f"wrote {out}/model.json, enc.ltf, lengths.json ({len(lengths)} utterances)", file=sys.stderr)
    return EXIT_OK


# -- shared input handling ------------------------------------------------------------


def _inputs(args):
    data = Path(args.data) if args.data else None

    def resolve(explicit, name):
        if explicit:
            return Path(explicit)
        if data is None:
            raise UsageError(f"give --{name.split('.')[0]} or --data DIR")
        return data / name

    model_path = resolve(args.model, "model.json")
    enc_path = resolve(args.enc, "enc.ltf")
    lengths_path = resolve(args.lengths, "lengths.json")
    for p in (model_path, enc_path, lengths_path):
        if not p.exists():
            raise UsageError(f"{p}: no such file")
    model = load_model(model_path)
    enc = read_ltf(enc_path)
    if enc.ndim != 3:
        raise UsageError(f"{enc_path}: encoder output must be rank 3 [B, T, D], got {enc.shape}")
    lengths = np.asarray(json.loads(lengths_path.read_text()), dtype=np.int64).reshape(-1)
    kind = "tdt" if model.is_tdt else "rnnt"
    if args.decoder is not None and args.decoder != kind:
        raise UsageError(f"--decoder {args.decoder} does not match the {kind} model")
    return model, enc, lengths


def _check_algo(model, algo: str) -> None:
    if algo == "frame-looping" and model.is_tdt:
        raise UsageError("frame-looping supports RNNT models only")


def _batches(enc: np.ndarray, lengths: np.ndarray, batch_size: int | None):
    B = enc.shape[0]
    step = batch_size or max(B, 1)
    for lo in range(0, B, step):
        sl = slice(lo, lo + step)
        sub_len = lengths[sl]
        T = int(sub_len.max()) if len(sub_len) else 0
        yield enc[sl, :T], sub_len


def _request(args, enc, lengths, algo: str) -> DecodeRequest:
    return DecodeRequest(
        enc,
        lengths,
        algorithm=algo,
        precompute_projections=args.precompute,
        max_symbols_per_frame=args.max_symbols or DEFAULT_MAX_SYMBOLS,
    )


def _decode_all(model, args, enc, lengths, algo, counters):
    outcomes = []
    for sub_enc, sub_len in _batches(enc, lengths, args.batch_size):
        outcomes += decoders.decode(model, _request(args, sub_enc, sub_len, algo), counters)
    return outcomes


# -- decode -----------------------------------------------------------------------------


def cmd_decode(args) -> int:
    model, enc, lengths = _inputs(args)
    _check_algo(model, args.algo)
    counters = CallCounters()
    outcomes = _decode_all(model, args, enc, lengths, args.algo, counters)
    texts = [model.text(o.tokens) for o in outcomes] if isinstance(model, TableModel) else None
    if args.out and args.out != "-":
        with open(args.out, "w") as fh:
            write_jsonl(outcomes, fh, texts)
    else:
        write_jsonl(outcomes, sys.stdout, texts)
    print(json.dumps({"algorithm": args.algo, "counters": counters.as_dict()}), file=sys.stderr)
    return EXIT_OK


# -- verify -----------------------------------------------------------------------------


def _verify_case(model, args, enc, lengths, algos, label: str) -> str | None:
    results = {}
    for algo in algos:
        results[algo] = _decode_all(model, args, enc, lengths, algo, CallCounters())
    ref_algo = algos[0]
    for algo in algos[1:]:
        for u, (a, b) in enumerate(zip(results[ref_algo], results[algo])):
            diff = first_divergence(a, b)
            if diff is not None:
                return f"{label}: {ref_algo} vs {algo} differ at utterance {u}, {diff}"
    return None


def cmd_verify(args) -> int:
    algos = [a for chunk in args.algos for a in chunk.split(",") if a]
    for a in algos:
        if a not in ALGO_CHOICES:
            raise UsageError(f"unknown algorithm {a!r}")
    if len(set(algos)) < 2:
        raise UsageError("verify needs at least two distinct algorithms")
    failures = 0
    checked = 0
    if args.random:
        kind = args.decoder or "rnnt"
        base = args.seed if args.seed is not None else _default_seed()
        for i in range(args.random):
            case = random_case(base + i, kind)
            for a in algos:
                _check_algo(case.model, a)
            case_args = argparse.Namespace(**vars(args))
            if args.max_symbols is None:
                case_args.max_symbols = case.max_symbols
            msg = _verify_case(case.model, case_args, case.enc, case.lengths, algos,
                               f"case seed={case.seed} max_symbols={case_args.max_symbols}")
            checked += 1
            if msg:
                failures += 1
                print(msg, file=sys.stderr)
                break
    else:
        model, enc, lengths = _inputs(args)
        for a in algos:
            _check_algo(model, a)
        msg = _verify_case(model, args, enc, lengths, algos, "input")
        checked = 1
        if msg:
            failures += 1
            print(msg, file=sys.stderr)
    if failures:
        print(f"FAIL: outcomes diverge ({', '.join(algos)})", file=sys.stderr)
        return EXIT_MISMATCH
    print(f"OK: {checked} case(s) identical across {', '.join(algos)}")
    return EXIT_OK


# -- bench ------------------------------------------------------------------------------


def cmd_bench(args) -> int:
    model, enc, lengths = _inputs(args)
    for a in (args.baseline, args.candidate):
        _check_algo(model, a)

    def chunked(m, req, counters):
        # decode the whole corpus in --batch-size chunks as one timed run
        return _decode_all(m, args, req.enc, req.input_lengths, req.algorithm, counters)

    reports = []
    for algo in (args.baseline, args.candidate):
        req = _request(args, enc, lengths, algo)
        reports.append(
            run_bench(model, req, warmup=args.warmup, measured=args.measured,
                      frame_seconds=args.frame_seconds, decoder=chunked)
        )
    base, cand = reports
    comparison = compare_reports(base, cand)
    if args.batch_size:
        comparison["batch_size"] = args.batch_size
    cand.comparison = comparison
    print(format_comparison_table([comparison]))
    print()
    print(format_counters_table(base, cand))
    print()
    print(f"wall-clock: {base.algorithm} {base.mean_seconds:.6f} s, {cand.algorithm} {cand.mean_seconds:.6f} s "
          f"(mean of runs {base.warmup_runs + 1}-{base.warmup_runs + base.measured_runs})")
    if args.json:
        doc = {"baseline": base.to_dict(), "candidate": cand.to_dict(), "comparison": comparison}
        Path(args.json).write_text(json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


# -- parser -------------------------------------------------------------------------------


def _add_input_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="directory holding model.json, enc.ltf, lengths.json (as written by gen)")
    p.add_argument("--model", help="model manifest or table-model JSON")
    p.add_argument("--enc", help="encoder outputs, LTF1 [B, T, D]")
    p.add_argument("--lengths", help="JSON list of per-utterance frame counts")


def _add_decode_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--decoder", choices=("rnnt", "tdt"), help="expected decoder kind of the model")
    p.add_argument("--precompute", action=argparse.BooleanOptionalAction, default=True,
                   help="precompute encoder/predictor projections (default: on)")
    p.add_argument("--max-symbols", type=int, default=None,
                   help=f"labels allowed per frame before forcing a step (default: {DEFAULT_MAX_SYMBOLS}; "
                   "verify --random draws one per case)")
    p.add_argument("--batch-size", type=int, default=None, help="split input into batches of this size")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="labelloop", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a synthetic model and encoder outputs")
    g.add_argument("--out-dir", required=True)
    g.add_argument("--fixture", choices=FIXTURES)
    g.add_argument("--seed", type=int, default=None, help="default: $TL_SEED or 0")
    g.add_argument("--vocab", type=int, default=32)
    g.add_argument("--enc-dim", type=int, default=16)
    g.add_argument("--pred-dim", type=int, default=16)
    g.add_argument("--joint-dim", type=int, default=16)
    g.add_argument("--predictor", choices=("recurrent", "stateless"), default="recurrent")
    g.add_argument("--decoder", choices=("rnnt", "tdt"), default="rnnt")
    g.add_argument("--max-duration", type=int, default=4)
    g.add_argument("--blank-bias", type=float, default=0.45)
    g.add_argument("--batch", type=int, default=8)
    g.add_argument("--frames", type=int, nargs=2, metavar=("MIN", "MAX"), default=(20, 60))
    g.set_defaults(func=cmd_gen)

    d = sub.add_parser("decode", help="decode encoder outputs to JSON-lines hypotheses")
    _add_input_args(d)
    _add_decode_args(d)
    d.add_argument("--algo", choices=ALGO_CHOICES, default="label-looping")
    d.add_argument("--out", help="output JSONL path (default: stdout)")
    d.set_defaults(func=cmd_decode)

    v = sub.add_parser("verify", help="check that several algorithms agree bit for bit")
    _add_input_args(v)
    _add_decode_args(v)
    v.add_argument("--algos", nargs="+", default=["sequential,label-looping"],
                   help="algorithms to compare, e.g. sequential label-looping frame-looping")
    v.add_argument("--random", type=int, default=0, metavar="N", help="check N seeded random cases instead of files")
    v.add_argument("--seed", type=int, default=None, help="first seed for --random (default: $TL_SEED or 0)")
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="time two algorithms on the same input")
    _add_input_args(b)
    _add_decode_args(b)
    b.add_argument("--baseline", choices=ALGO_CHOICES, default="frame-looping")
    b.add_argument("--candidate", choices=ALGO_CHOICES, default="label-looping")
    b.add_argument("--warmup", type=int, default=2)
    b.add_argument("--measured", type=int, default=3)
    b.add_argument("--frame-seconds", type=float, default=DEFAULT_FRAME_SECONDS)
    b.add_argument("--json", help="write both reports and the comparison as JSON")
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "batch_size", None) is not None and args.batch_size < 1:
        parser.error("--batch-size must be >= 1")
    if getattr(args, "max_symbols", None) is not None and args.max_symbols < 1:
        parser.error("--max-symbols must be >= 1")
    try:
        return args.func(args)
    except (UsageError, ConfigError, ContractError) as exc:
        print(f"labelloop {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EquivalenceError, DeterminismError) as exc:
        print(f"labelloop {args.command}: {exc}", file=sys.stderr)
        return EXIT_MISMATCH


if __name__ == "__main__":
    sys.exit(main())
