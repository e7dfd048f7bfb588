"""Dense float32 kernels with a fixed accumulation order.

Tensors are plain ``numpy.ndarray`` objects of dtype float32 and rank 1-3.
Every reduction here sums in ascending index order in single precision, so a
batched call and a loop of per-row calls give bitwise-identical results.
numpy's own ``matmul``/``sum`` make no such promise (BLAS blocking, pairwise
summation), which is why they are not used on the decoding path.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .errors import ContractError

FLOAT = np.float32
LTF_MAGIC = b"LTF1"

# Above this many products per call, accumulate column-by-column instead of
# materialising the [N, m, n] product cube. Both schedules perform the same
# float operations in the same order.
_CUBE_LIMIT = 1 << 18


def as_tensor(x, rank: int | None = None) -> np.ndarray:
    arr = np.asarray(x, dtype=FLOAT)
    if not 1 <= arr.ndim <= 3:
        raise ContractError(f"tensor rank must be 1-3, got {arr.ndim}")
    if rank is not None and arr.ndim != rank:
        raise ContractError(f"expected rank {rank}, got shape {arr.shape}")
    return arr


def _check_matrix(W: np.ndarray, name: str = "W") -> None:
    if W.ndim != 2:
        raise ContractError(f"{name} must be a matrix, got shape {W.shape}")
    if W.dtype != FLOAT:
        raise ContractError(f"{name} must be float32, got {W.dtype}")


def matvec(W: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``out[i] = sum_j W[i, j] * x[j]`` summed over ascending ``j``."""
    _check_matrix(W)
    if x.ndim != 1 or x.shape[0] != W.shape[1]:
        raise ContractError(f"matvec shape mismatch: W{W.shape} x{x.shape}")
    return matmat(x[None, :], W)[0]


def matmat(X: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Row-wise ``matvec``: ``out[r] = matvec(W, X[r])`` for every row of ``X``.

    Each output element is ``((0 + p_0) + p_1) + ... + p_{n-1}`` with
    ``p_j = W[i, j] * X[r, j]``, all rounded to float32.
    """
    _check_matrix(W)
    if X.ndim != 2 or X.shape[1] != W.shape[1]:
        raise ContractError(f"matmat shape mismatch: X{X.shape} W{W.shape}")
    if X.dtype != FLOAT:
        raise ContractError(f"X must be float32, got {X.dtype}")
    rows, n = X.shape
    m = W.shape[0]
    if n == 0 or rows == 0:
        return np.zeros((rows, m), dtype=FLOAT)
    if rows * m * n <= _CUBE_LIMIT:
        products = X[:, None, :] * W[None, :, :]
        # adding +0 reproduces the loop's initial accumulator (fixes -0.0 sums)
        return np.add.accumulate(products, axis=2)[:, :, -1] + FLOAT(0.0)
    out = np.zeros((rows, m), dtype=FLOAT)
    for j in range(n):
        out += X[:, j, None] * W[None, :, j]
    return out


def linear(X: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``matmat(X, W) + b`` with the bias added after the full sum."""
    if b.ndim != 1 or b.shape[0] != W.shape[0]:
        raise ContractError(f"bias shape {b.shape} does not match W{W.shape}")
    return matmat(X, W) + b


def argmax_row(v: np.ndarray) -> int:
    """Index of the maximum; ties resolve to the lowest index."""
    if v.ndim != 1 or v.shape[0] == 0:
        raise ContractError(f"argmax_row needs a non-empty vector, got shape {v.shape}")
    return int(np.argmax(v))


def argmax_rows(M: np.ndarray) -> np.ndarray:
    if M.ndim != 2 or M.shape[1] == 0:
        raise ContractError(f"argmax_rows needs a non-empty matrix, got shape {M.shape}")
    return np.argmax(M, axis=1)


def log_softmax_rows(M: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """``log_softmax(M[r])[idx[r]]`` for each row, in float32.

    Max-subtracted; the exponentials are summed left to right.
    """
    if M.ndim != 2 or M.shape[1] == 0:
        raise ContractError(f"log_softmax_rows needs a non-empty matrix, got shape {M.shape}")
    idx = np.asarray(idx)
    if idx.shape != (M.shape[0],):
        raise ContractError(f"index vector shape {idx.shape} does not match {M.shape[0]} rows")
    if idx.size and (idx.min() < 0 or idx.max() >= M.shape[1]):
        raise ContractError("log_softmax index out of range")
    peak = M.max(axis=1)
    shifted = M - peak[:, None]
    total = np.add.accumulate(np.exp(shifted), axis=1)[:, -1]
    chosen = M[np.arange(M.shape[0]), idx]
    return chosen - (peak + np.log(total))


def log_softmax_at(v: np.ndarray, i: int) -> np.float32:
    if v.ndim != 1:
        raise ContractError(f"log_softmax_at needs a vector, got shape {v.shape}")
    return log_softmax_rows(v[None, :], np.array([i]))[0]


def masked_assign(dest: np.ndarray, mask: np.ndarray, src: np.ndarray) -> None:
    """Copy rows of ``src`` into ``dest`` where ``mask`` is true, in place."""
    if dest.shape != src.shape:
        raise ContractError(f"masked_assign shape mismatch: {dest.shape} vs {src.shape}")
    if mask.dtype != np.bool_ or mask.shape != (dest.shape[0],):
        raise ContractError(f"mask must be bool[{dest.shape[0]}], got {mask.dtype}{mask.shape}")
    dest[mask] = src[mask]


def gather_time_rows(enc: np.ndarray, times: np.ndarray) -> np.ndarray:
    """``out[b] = enc[b, times[b], :]``."""
    if enc.ndim != 3:
        raise ContractError(f"enc must be [B, T, D], got shape {enc.shape}")
    times = np.asarray(times)
    B, T, _ = enc.shape
    if times.shape != (B,):
        raise ContractError(f"times shape {times.shape} does not match batch {B}")
    if B and (times.min() < 0 or times.max() >= T):
        raise ContractError(f"time index out of range [0, {T})")
    return enc[np.arange(B), times]


# -- LTF1 binary format -----------------------------------------------------
# magic "LTF1", u8 rank, rank x u32 LE extents, f32 LE row-major payload


def dump_ltf(arr: np.ndarray, fh: BinaryIO) -> None:
    arr = np.ascontiguousarray(arr, dtype=FLOAT)
    if not 1 <= arr.ndim <= 3:
        raise ContractError(f"LTF1 supports rank 1-3, got {arr.ndim}")
    fh.write(LTF_MAGIC)
    fh.write(struct.pack("<B", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(arr.astype("<f4").tobytes())


def load_ltf(fh: BinaryIO) -> np.ndarray:
    if fh.read(4) != LTF_MAGIC:
        raise ContractError("not an LTF1 file (bad magic)")
    header = fh.read(1)
    if len(header) != 1:
        raise ContractError("truncated LTF1 header")
    rank = header[0]
    if not 1 <= rank <= 3:
        raise ContractError(f"LTF1 rank must be 1-3, got {rank}")
    raw = fh.read(4 * rank)
    if len(raw) != 4 * rank:
        raise ContractError("truncated LTF1 extents")
    dims = struct.unpack(f"<{rank}I", raw)
    count = int(np.prod(dims, dtype=np.int64))
    payload = fh.read(4 * count)
    if len(payload) != 4 * count:
        raise ContractError(f"LTF1 payload has {len(payload)} bytes, expected {4 * count}")
    return np.frombuffer(payload, dtype="<f4").astype(FLOAT).reshape(dims)


def save_ltf(path: str | Path, arr: np.ndarray) -> None:
    with open(path, "wb") as fh:
        dump_ltf(arr, fh)


def read_ltf(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        return load_ltf(fh)
