"""Transducer model contract and a seeded synthetic implementation.

Every model exposes the same five calls the decoders need:

* ``init_state(batch)`` / ``predictor_step(states, tokens)``
* ``project_encoder(enc)`` / ``project_predictor(dec)``
* ``joint(enc_proj, pred_proj) -> (logits, dur_logits | None)``

States are arrays with a leading batch axis, so decoders can select and
overwrite rows with :func:`labelloop.tensor.masked_assign` without knowing
what the state holds.

Label ids: ``0..V-1`` are real labels, ``V`` is blank, ``V+1`` is BOS.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError
from .tensor import FLOAT, dump_ltf, linear, matmat, read_ltf, save_ltf

PREDICTOR_KINDS = ("recurrent", "stateless")
DECODER_KINDS = ("rnnt", "tdt")


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    enc_dim: int
    pred_dim: int
    joint_dim: int
    predictor_kind: str = "recurrent"
    decoder_kind: str = "rnnt"
    max_duration: int = 0
    # added to the blank output bias after generation; lets synthetic models
    # balance blank against label emissions
    blank_bias: float = 0.0

    def __post_init__(self):
        if self.vocab_size < 1:
            raise ConfigError(f"vocab_size must be >= 1, got {self.vocab_size}")
        for name in ("enc_dim", "pred_dim", "joint_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.predictor_kind not in PREDICTOR_KINDS:
            raise ConfigError(f"unknown predictor_kind {self.predictor_kind!r}")
        if self.decoder_kind not in DECODER_KINDS:
            raise ConfigError(f"unknown decoder_kind {self.decoder_kind!r}")
        if self.decoder_kind == "tdt" and self.max_duration < 1:
            raise ConfigError("TDT models need max_duration >= 1")
        if not math.isfinite(self.blank_bias):
            raise ConfigError("blank_bias must be finite")

    @property
    def blank(self) -> int:
        return self.vocab_size

    @property
    def bos(self) -> int:
        return self.vocab_size + 1

    @property
    def is_tdt(self) -> bool:
        return self.decoder_kind == "tdt"

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass
class ModelWeights:
    Emb: np.ndarray
    b_h: np.ndarray
    W_enc: np.ndarray
    b_enc: np.ndarray
    W_pred: np.ndarray
    b_pred: np.ndarray
    W_out: np.ndarray
    b_out: np.ndarray
    W_h: np.ndarray | None = None
    W_dur: np.ndarray | None = None
    b_dur: np.ndarray | None = None

    def items(self):
        """(name, array) pairs in canonical order, skipping absent tensors."""
        for name in WEIGHT_ORDER:
            arr = getattr(self, name)
            if arr is not None:
                yield name, arr

    def checksum(self) -> str:
        h = hashlib.sha256()
        for name, arr in self.items():
            buf = io.BytesIO()
            dump_ltf(arr, buf)
            h.update(name.encode())
            h.update(buf.getvalue())
        return h.hexdigest()

    def validate(self, cfg: ModelConfig) -> None:
        V, De, Dp, Dj = cfg.vocab_size, cfg.enc_dim, cfg.pred_dim, cfg.joint_dim
        expected = {
            "Emb": (V + 2, Dp),
            "b_h": (Dp,),
            "W_enc": (Dj, De),
            "b_enc": (Dj,),
            "W_pred": (Dj, Dp),
            "b_pred": (Dj,),
            "W_out": (V + 1, Dj),
            "b_out": (V + 1,),
        }
        if cfg.predictor_kind == "recurrent":
            expected["W_h"] = (Dp, Dp)
        if cfg.is_tdt:
            expected["W_dur"] = (cfg.max_duration + 1, Dj)
            expected["b_dur"] = (cfg.max_duration + 1,)
        for name in WEIGHT_ORDER:
            arr = getattr(self, name)
            if name not in expected:
                if arr is not None:
                    raise ConfigError(f"weight {name} not used by this config")
                continue
            if arr is None or arr.shape != expected[name]:
                got = None if arr is None else arr.shape
                raise ConfigError(f"weight {name}: expected shape {expected[name]}, got {got}")
            if arr.dtype != FLOAT or not np.isfinite(arr).all():
                raise ConfigError(f"weight {name} must be finite float32")


WEIGHT_ORDER = (
    "Emb", "W_h", "b_h", "W_enc", "b_enc", "W_pred", "b_pred", "W_out", "b_out", "W_dur", "b_dur",
)


class _Uniform:
    """Uniform [-0.5, 0.5) doubles from numpy's PCG64 raw 64-bit stream.

    Uses ``random_raw`` (top 53 bits -> [0, 1)) rather than ``Generator``
    methods because the raw PCG64 stream is stable across numpy releases.
    """

    def __init__(self, seed: int):
        self._bits = np.random.PCG64(seed)

    def draw(self, shape: tuple[int, ...]) -> np.ndarray:
        n = int(np.prod(shape, dtype=np.int64))
        raw = self._bits.random_raw(n) if n else np.zeros(0, dtype=np.uint64)
        unit = (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return (unit - 0.5).reshape(shape)


def generate_model(seed: int, cfg: ModelConfig) -> ModelWeights:
    """Deterministic weights: each entry ~ U[-0.5, 0.5) / sqrt(fan_in).

    Tensors are drawn in ``WEIGHT_ORDER`` from a single PCG64 stream seeded
    with ``seed``. The embedding has fan-in 1 (one-hot input); biases share
    the fan-in of their layer.
    """
    if seed < 0:
        raise ConfigError(f"seed must be non-negative, got {seed}")
    rng = _Uniform(seed)
    V, De, Dp, Dj = cfg.vocab_size, cfg.enc_dim, cfg.pred_dim, cfg.joint_dim

    def draw(shape, fan_in):
        return (rng.draw(shape) / math.sqrt(fan_in)).astype(FLOAT)

    w = {"Emb": draw((V + 2, Dp), 1)}
    if cfg.predictor_kind == "recurrent":
        w["W_h"] = draw((Dp, Dp), Dp)
    w["b_h"] = draw((Dp,), Dp)
    w["W_enc"] = draw((Dj, De), De)
    w["b_enc"] = draw((Dj,), De)
    w["W_pred"] = draw((Dj, Dp), Dp)
    w["b_pred"] = draw((Dj,), Dp)
    w["W_out"] = draw((V + 1, Dj), Dj)
    w["b_out"] = draw((V + 1,), Dj)
    if cfg.is_tdt:
        w["W_dur"] = draw((cfg.max_duration + 1, Dj), Dj)
        w["b_dur"] = draw((cfg.max_duration + 1,), Dj)
    w["b_out"][cfg.blank] += FLOAT(cfg.blank_bias)
    weights = ModelWeights(**w)
    weights.validate(cfg)
    return weights


class SyntheticTransducer:
    """tanh-recurrent (or stateless) predictor, additive tanh joiner."""

    def __init__(self, cfg: ModelConfig, weights: ModelWeights):
        weights.validate(cfg)
        self.cfg = cfg
        self.weights = weights
        self.vocab_size = cfg.vocab_size
        self.blank = cfg.blank
        self.bos = cfg.bos
        self.is_tdt = cfg.is_tdt
        self.enc_dim = cfg.enc_dim

    @classmethod
    def from_seed(cls, seed: int, cfg: ModelConfig) -> SyntheticTransducer:
        return cls(cfg, generate_model(seed, cfg))

    def init_state(self, batch: int) -> np.ndarray:
        if self.cfg.predictor_kind == "recurrent":
            return np.zeros((batch, self.cfg.pred_dim), dtype=FLOAT)
        return np.full(batch, self.bos, dtype=np.int64)

    def predictor_step(self, states: np.ndarray, tokens: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        tokens = np.asarray(tokens)
        if tokens.shape != (states.shape[0],):
            raise ContractError(f"tokens shape {tokens.shape} does not match {states.shape[0]} states")
        if tokens.size and (tokens.min() < 0 or tokens.max() > self.bos):
            raise ContractError(f"token id out of range [0, {self.bos}]")
        w = self.weights
        emb = w.Emb[tokens]
        if self.cfg.predictor_kind == "recurrent":
            if states.shape[1:] != (self.cfg.pred_dim,):
                raise ContractError(f"recurrent state must be [B, {self.cfg.pred_dim}]")
            h = np.tanh((matmat(states, w.W_h) + emb) + w.b_h)
            return h, h.copy()
        dec = np.tanh(emb + w.b_h)
        return dec, tokens.astype(np.int64)

    def project_encoder(self, enc: np.ndarray) -> np.ndarray:
        """Apply the encoder projection to ``[..., D_e]`` rows."""
        if enc.shape[-1] != self.cfg.enc_dim:
            raise ContractError(f"encoder rows must have dim {self.cfg.enc_dim}, got {enc.shape}")
        flat = enc.reshape(-1, enc.shape[-1])
        out = linear(flat, self.weights.W_enc, self.weights.b_enc)
        return out.reshape(enc.shape[:-1] + (self.cfg.joint_dim,))

    def project_predictor(self, dec: np.ndarray) -> np.ndarray:
        if dec.ndim != 2 or dec.shape[1] != self.cfg.pred_dim:
            raise ContractError(f"predictor output must be [B, {self.cfg.pred_dim}], got {dec.shape}")
        return linear(dec, self.weights.W_pred, self.weights.b_pred)

    def joint(self, enc_proj: np.ndarray, pred_proj: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
        if enc_proj.shape != pred_proj.shape or enc_proj.ndim != 2 or enc_proj.shape[1] != self.cfg.joint_dim:
            raise ContractError(f"joint shape mismatch: {enc_proj.shape} vs {pred_proj.shape}")
        z = np.tanh(enc_proj + pred_proj)
        w = self.weights
        logits = linear(z, w.W_out, w.b_out)
        dur = linear(z, w.W_dur, w.b_dur) if self.is_tdt else None
        return logits, dur


# -- model files ----------------------------------------------------------------


def save_model(path: str | Path, cfg: ModelConfig, seed: int, weights: ModelWeights | None = None) -> None:
    """Write a JSON manifest; with ``weights`` also write one LTF1 file per tensor."""
    path = Path(path)
    manifest: dict = {"format": "labelloop-model", "config": asdict(cfg), "seed": seed}
    if weights is not None:
        files = {}
        for name, arr in weights.items():
            fname = f"{path.stem}.{name}.ltf"
            save_ltf(path.parent / fname, arr)
            files[name] = fname
        manifest["weights"] = files
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_model(path: str | Path):
    """Load a synthetic-model manifest or a table-model fixture file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    kind = doc.get("format")
    if kind == "labelloop-table":
        from .table_model import TableModel

        return TableModel.from_dict(doc)
    if kind != "labelloop-model":
        raise ConfigError(f"{path}: unknown model format {kind!r}")
    cfg = ModelConfig.from_dict(doc["config"])
    if "weights" in doc:
        arrays = {name: read_ltf(path.parent / fname) for name, fname in doc["weights"].items()}
        unknown = set(arrays) - set(WEIGHT_ORDER)
        if unknown:
            raise ConfigError(f"unknown weight tensors {sorted(unknown)}")
        return SyntheticTransducer(cfg, ModelWeights(**arrays))
    return SyntheticTransducer.from_seed(int(doc["seed"]), cfg)
