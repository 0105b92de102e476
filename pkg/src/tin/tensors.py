"""Dense float tensors, seeded RNG, reductions, and binary round-trip IO.

Feature maps are plain numpy arrays in row-major (C) order, float64 by
default; float32 is available for benchmarking only. The axis order is
[T, C, H, W], with an optional leading batch axis. There is no implicit
broadcasting across mismatched shapes in the operators built on top of
this module; mismatches are hard errors.
"""

from __future__ import annotations

import hashlib
import os
import struct

import numpy as np

from .errors import NonFiniteError, ShapeError

DEFAULT_DTYPE = np.float64

_MASK64 = (1 << 64) - 1


class Rng:
    """Counter-based seeded random stream (Philox under the hood).

    The same seed and the same call sequence produce the same values on
    every platform. Instances are not shareable across threads; derive a
    child stream per unit of work instead.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))

    def child(self, tag: str) -> "Rng":
        """Derive an independent stream keyed by this seed and a label."""
        h = hashlib.blake2b(digest_size=8)
        h.update(self.seed.to_bytes(8, "little"))
        h.update(tag.encode("utf-8"))
        return Rng(int.from_bytes(h.digest(), "little"))

    def uniform(self, shape, lo: float = 0.0, hi: float = 1.0, dtype=DEFAULT_DTYPE) -> np.ndarray:
        return rand_uniform(shape, self, lo, hi, dtype=dtype)

    def integers(self, lo: int, hi: int, shape=None) -> np.ndarray:
        return self._gen.integers(lo, hi, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def _checked_numel(shape) -> int:
    n = 1
    for e in shape:
        e = int(e)
        if e < 0:
            raise ShapeError(f"negative extent in shape {tuple(shape)}")
        n *= e
        if n > 2**62:
            raise ShapeError(f"element count overflow for shape {tuple(shape)}")
    return n


def zeros(shape, dtype=DEFAULT_DTYPE) -> np.ndarray:
    """All-zero tensor with the given extents."""
    _checked_numel(shape)
    return np.zeros(tuple(int(e) for e in shape), dtype=dtype)


def rand_uniform(shape, rng: Rng, lo: float = 0.0, hi: float = 1.0, dtype=DEFAULT_DTYPE) -> np.ndarray:
    """Uniform values in [lo, hi), deterministic under the rng's seed."""
    if not lo < hi:
        raise ShapeError(f"rand_uniform needs lo < hi, got [{lo}, {hi})")
    _checked_numel(shape)
    u = rng._gen.random(size=tuple(int(e) for e in shape), dtype=np.float64)
    out = np.asarray(lo + (hi - lo) * u)
    # Rounding can land exactly on hi when the interval is tiny; keep it open.
    np.minimum(out, np.nextafter(hi, lo), out=out)
    return out.astype(dtype, copy=False)


def mean_over(x: np.ndarray, axes) -> np.ndarray:
    """Arithmetic mean over the named axes; the result drops those axes."""
    axes = (axes,) if isinstance(axes, int) else tuple(axes)
    for a in axes:
        if not -x.ndim <= a < x.ndim:
            raise ShapeError(f"axis {a} invalid for shape {x.shape}")
        if x.shape[a] == 0:
            raise ShapeError(f"cannot reduce zero-extent axis {a} of shape {x.shape}")
    if len(set(a % x.ndim for a in axes)) != len(axes):
        raise ShapeError(f"duplicate axes {axes}")
    return np.mean(x, axis=axes)


def assert_finite(x: np.ndarray, what: str = "tensor") -> np.ndarray:
    # a single reduction: any NaN/Inf propagates into the sum
    if not np.isfinite(np.sum(x)):
        raise NonFiniteError(f"{what} contains NaN or Inf")
    return x


def flat_index(shape, multi) -> int:
    """Row-major flat index of a multi-index."""
    if len(multi) != len(shape):
        raise ShapeError(f"multi-index {multi} does not match rank of {tuple(shape)}")
    idx = 0
    for e, i in zip(shape, multi):
        if not 0 <= i < e:
            raise ShapeError(f"index {multi} out of bounds for shape {tuple(shape)}")
        idx = idx * e + i
    return idx


def multi_index(shape, flat: int):
    """Inverse of flat_index."""
    n = _checked_numel(shape)
    if not 0 <= flat < max(n, 1):
        raise ShapeError(f"flat index {flat} out of bounds for shape {tuple(shape)}")
    out = []
    for e in reversed(shape):
        out.append(flat % e)
        flat //= e
    return tuple(reversed(out))


def save_tensor(path, x: np.ndarray) -> None:
    """Binary round-trip format: little-endian uint64 rank and extents,
    then raw float64 values in row-major order."""
    x = np.asarray(x, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", x.ndim))
        fh.write(struct.pack(f"<{x.ndim}Q", *x.shape))
        fh.write(x.astype("<f8").tobytes(order="C"))


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        (rank,) = struct.unpack("<Q", fh.read(8))
        shape = struct.unpack(f"<{rank}Q", fh.read(8 * rank)) if rank else ()
        n = _checked_numel(shape)
        data = np.frombuffer(fh.read(8 * n), dtype="<f8", count=n)
    return data.reshape(shape).astype(np.float64)


def save_checkpoint(directory, params: dict) -> None:
    """One tensor file per named parameter plus a plain-text manifest."""
    os.makedirs(directory, exist_ok=True)
    lines = []
    for name in sorted(params):
        arr = np.asarray(params[name])
        save_tensor(os.path.join(directory, name + ".tnsr"), arr)
        lines.append(f"{name} = {','.join(str(e) for e in arr.shape)}\n")
    with open(os.path.join(directory, "manifest.txt"), "w") as fh:
        fh.writelines(lines)


def load_checkpoint(directory) -> dict:
    params = {}
    with open(os.path.join(directory, "manifest.txt")) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            name, _, shape_s = line.partition(" = ")
            arr = load_tensor(os.path.join(directory, name + ".tnsr"))
            want = tuple(int(e) for e in shape_s.split(",")) if shape_s else ()
            if arr.shape != want:
                raise ShapeError(f"checkpoint {name}: file shape {arr.shape} != manifest {want}")
            params[name] = arr
    return params
