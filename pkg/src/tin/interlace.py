"""Fractional temporal shift of grouped channels with per-frame attention.

The operator splits the channel axis into G shifted groups plus an
un-shifted remainder, resamples each shifted group along time at a
real-valued offset by linear interpolation (with a zero-padded boundary
buffer, so near-edge samples blend against zero and samples more than one
frame outside the clip are exactly zero), scales each shifted group
per-frame by an attention weight in (0, 2), and reassembles the map.

Sampling convention for a group with offset O, n0 = floor(O), f = O - n0:

    v[t] = (1 - f) * u[t + n0] + f * u[t + n0 + 1]

with out-of-range source frames contributing zero. At integer offsets the
gradient in O is the right-hand sub-derivative (f = 0 convention); that
kink is deliberate and flagged by the gradient checker.

Feature maps are [T, C, H, W] or [N, T, C, H, W]; offsets are [G] or
[N, G]; weights are [G, T] or [N, G, T]. Forward returns a tape holding
the saved input, floor indices, fractional parts and boundary masks,
which is consumed by exactly one backward call.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .tensors import assert_finite


@dataclass
class InterlaceConfig:
    """Channel partitioning and shift behaviour.

    g counts all shifted groups, mirrored ones included: with mirror on,
    groups [0, g/2) carry learned offsets and group g/2 + i carries the
    negation of group i's offset. shift_fraction is the portion of
    channels that shifts at all; the rest pass through untouched.
    weight_all_channels additionally scales the un-shifted block by the
    per-frame mean of the group weights (off by default).
    """

    t: int
    c: int
    g: int = 4
    shift_fraction: float = 0.25
    mirror: bool = True
    weight_all_channels: bool = False

    def __post_init__(self):
        if self.t < 1 or self.c < 1 or self.g < 0:
            raise ShapeError(f"invalid config t={self.t} c={self.c} g={self.g}")
        if self.g == 0:
            return
        if not 0.0 < self.shift_fraction <= 1.0:
            raise ShapeError(f"shift_fraction {self.shift_fraction} outside (0, 1]")
        cs = self.c * self.shift_fraction
        if abs(cs - round(cs)) > 1e-9:
            raise ShapeError(f"c={self.c} times shift_fraction={self.shift_fraction} is not integral")
        if round(cs) % self.g != 0:
            raise ShapeError(f"{round(cs)} shifted channels not divisible into {self.g} groups")
        if self.mirror and self.g % 2 != 0:
            raise ShapeError(f"mirroring needs an even group count, got g={self.g}")

    @property
    def c_shift(self) -> int:
        return 0 if self.g == 0 else round(self.c * self.shift_fraction)

    @property
    def group_size(self) -> int:
        return 0 if self.g == 0 else self.c_shift // self.g


def partition_channels(cfg: InterlaceConfig):
    """Disjoint channel ranges: G equal shifted groups, then the rest.

    Returns (groups, rest) where groups is a list of (lo, hi) pairs and
    rest is the un-shifted (lo, hi) range. Shifted groups sit at the
    lowest channel indices, contiguously, group-major.
    """
    if cfg.g == 0:
        return [], (0, cfg.c)
    gs = cfg.group_size
    groups = [(i * gs, (i + 1) * gs) for i in range(cfg.g)]
    return groups, (cfg.c_shift, cfg.c)


def validate_offsets(offsets: np.ndarray, cfg: InterlaceConfig) -> None:
    if offsets.shape[-1] != cfg.g:
        raise ShapeError(f"offsets have {offsets.shape[-1]} entries, config has g={cfg.g}")
    assert_finite(offsets, "offsets")
    if np.any(np.abs(offsets) >= cfg.t / 2):
        raise ShapeError(f"offset out of range (-{cfg.t / 2}, {cfg.t / 2})")
    if cfg.mirror and cfg.g:
        h = cfg.g // 2
        if not np.array_equal(offsets[..., h:], -offsets[..., :h]):
            raise ShapeError("mirror is on but offsets[g + G/2] != -offsets[g]")


def validate_weights(weights: np.ndarray, cfg: InterlaceConfig) -> None:
    if weights.shape[-2:] != (cfg.g, cfg.t):
        raise ShapeError(f"weights shaped {weights.shape}, expected (..., {cfg.g}, {cfg.t})")
    assert_finite(weights, "attention weights")
    if np.any(weights <= 0.0) or np.any(weights >= 2.0):
        raise ShapeError("attention weights must lie strictly inside (0, 2)")


@dataclass
class InterlaceTape:
    """Forward intermediates for the three vector-Jacobian products."""

    u: np.ndarray          # batched input [N, T, C, H, W]
    offsets: np.ndarray    # [N, G]
    weights: np.ndarray    # [N, G, T]
    n0: np.ndarray         # [N, G] int64 floor indices
    f: np.ndarray          # [N, G] fractional parts in [0, 1)
    masks: np.ndarray      # [N, G, 2, T] validity of the two taps
    tap0: np.ndarray       # [N, T, Cs, H, W] gathered input slices (floor taps)
    tap1: np.ndarray       # [N, T, Cs, H, W] gathered input slices (ceil taps)
    cfg: InterlaceConfig
    batched: bool
    consumed: bool = field(default=False)


def _gather_t(x: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """x: [N, T, ...]; pos: [N, T] frame indices, possibly out of range.

    Returns y with y[n, t] = x[n, pos[n, t]] where pos is a valid frame
    and exactly zero elsewhere.
    """
    t = x.shape[1]
    valid = (pos >= 0) & (pos < t)
    safe = np.clip(pos, 0, t - 1)
    expand = (...,) + (None,) * (x.ndim - 2)
    taken = np.take_along_axis(x, safe[expand], axis=1)
    return np.where(valid[expand], taken, x.dtype.type(0.0))


def _sample_t(x: np.ndarray, n0: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Two-tap interpolation along axis 1. x: [N, T, ...]; n0, f: [N]."""
    t = x.shape[1]
    pos = np.arange(t)[None, :] + n0[:, None]
    expand = (slice(None),) + (None,) * (x.ndim - 1)
    f = f.astype(x.dtype, copy=False)[expand]
    return (1.0 - f) * _gather_t(x, pos) + f * _gather_t(x, pos + 1)


def temporal_sample(u: np.ndarray, offset: float) -> np.ndarray:
    """Shift a whole tensor along its leading time axis by a real offset."""
    u = np.asarray(u)
    t = u.shape[0]
    if not abs(offset) < t / 2:
        raise ShapeError(f"|offset| = {abs(offset)} must be < T/2 = {t / 2}")
    n0 = int(np.floor(offset))
    f = float(offset) - n0
    ub = u[None] if u.ndim > 1 else u[None, :, None]
    out = _sample_t(ub, np.array([n0]), np.array([f]))
    return out[0] if u.ndim > 1 else out[0, :, 0]


def temporal_sample_vjp(u: np.ndarray, offset: float, grad_v: np.ndarray):
    """Gradients of temporal_sample w.r.t. the input and the offset.

    The input gradient is the transposed interpolation stencil, which is
    itself a temporal_sample at the negated offset.
    """
    u = np.asarray(u)
    grad_v = np.asarray(grad_v)
    if grad_v.shape != u.shape:
        raise ShapeError(f"grad shape {grad_v.shape} != input shape {u.shape}")
    grad_u = temporal_sample(grad_v, -offset)
    t = u.shape[0]
    n0 = int(np.floor(offset))
    pos = np.arange(t) + n0
    ub = u.reshape(1, t, -1)
    tap0 = _gather_t(ub, pos[None])
    tap1 = _gather_t(ub, pos[None] + 1)
    grad_offset = float(np.sum(grad_v.reshape(1, t, -1) * (tap1 - tap0)))
    return grad_u, grad_offset


def _batchify(u, offsets, weights, cfg: InterlaceConfig):
    u = np.asarray(u)
    offsets = np.asarray(offsets, dtype=u.dtype)
    weights = np.asarray(weights, dtype=u.dtype)
    if u.ndim == 4:
        batched = False
        ub = u[None]
        if offsets.ndim != 1 or weights.ndim != 2:
            raise ShapeError("unbatched input needs offsets [G] and weights [G, T]")
        ob, wb = offsets[None], weights[None]
    elif u.ndim == 5:
        batched = True
        ub = u
        if offsets.ndim != 2 or weights.ndim != 3 or offsets.shape[0] != u.shape[0] or weights.shape[0] != u.shape[0]:
            raise ShapeError("batched input needs offsets [N, G] and weights [N, G, T]")
        ob, wb = offsets, weights
    else:
        raise ShapeError(f"feature map must be rank 4 or 5, got shape {u.shape}")
    n, t, c = ub.shape[:3]
    if (t, c) != (cfg.t, cfg.c):
        raise ShapeError(f"input [T={t}, C={c}] does not match config [T={cfg.t}, C={cfg.c}]")
    return ub, ob, wb, batched


def _gather_tc(x: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """x: [N, T, C, H, W]; pos: [N, T, C] per-channel source frames.

    y[n, t, c] = x[n, pos[n, t, c], c] for valid positions, exactly zero
    otherwise.
    """
    t = x.shape[1]
    valid = (pos >= 0) & (pos < t)
    safe = np.clip(pos, 0, t - 1)
    taken = np.take_along_axis(x, safe[..., None, None], axis=1)
    return np.where(valid[..., None, None], taken, x.dtype.type(0.0))


def _per_channel(arr: np.ndarray, group_size: int) -> np.ndarray:
    """Expand a per-group quantity (axis 1) to the shifted channels."""
    return np.repeat(arr, group_size, axis=1)


def interlace_forward(u, offsets, weights, cfg: InterlaceConfig):
    """Apply the operator; returns (v, tape) with v the same shape as u."""
    ub, ob, wb, batched = _batchify(u, offsets, weights, cfg)
    validate_offsets(ob, cfg)
    validate_weights(wb, cfg)
    groups, rest = partition_channels(cfg)
    t = cfg.t

    v = ub.copy()
    n0 = np.floor(ob).astype(np.int64)
    f = ob - n0.astype(ob.dtype)
    base = np.arange(t)[None, :, None]
    tap0 = tap1 = None
    if cfg.g and not batched:
        # scalar per-group offsets: contiguous slice blending, no gathers
        for gi, (lo, hi) in enumerate(groups):
            xg = ub[0, :, lo:hi]
            yg = np.zeros_like(xg)
            for tap, coef in ((int(n0[0, gi]), 1.0 - float(f[0, gi])),
                              (int(n0[0, gi]) + 1, float(f[0, gi]))):
                t_lo, t_hi = max(0, -tap), min(t, t - tap)
                if t_lo < t_hi:
                    yg[t_lo:t_hi] += coef * xg[t_lo + tap:t_hi + tap]
            v[0, :, lo:hi] = wb[0, gi, :, None, None, None] * yg
    elif cfg.g:
        cs, gs = cfg.c_shift, cfg.group_size
        pos = base + _per_channel(n0, gs)[:, None, :]          # [N, T, Cs]
        fc = _per_channel(f, gs)[:, None, :, None, None]
        ec = _per_channel(wb, gs).swapaxes(1, 2)[..., None, None]
        xs = ub[:, :, :cs]
        tap0 = _gather_tc(xs, pos)
        tap1 = _gather_tc(xs, pos + 1)
        v[:, :, :cs] = ec * ((1.0 - fc) * tap0 + fc * tap1)
    if cfg.weight_all_channels and cfg.g and rest[0] < rest[1]:
        m = wb.mean(axis=1)
        v[:, :, rest[0]:] *= m[:, :, None, None, None]
    assert_finite(v, "interlace output")
    pos_g = np.arange(t)[None, None, :] + n0[:, :, None]        # [N, G, T]
    masks = np.stack([(pos_g >= 0) & (pos_g < t),
                      (pos_g + 1 >= 0) & (pos_g + 1 < t)], axis=2)
    tape = InterlaceTape(ub, ob, wb, n0, f, masks, tap0, tap1, cfg, batched)
    return (v if batched else v[0]), tape


def interlace_backward(grad_v, tape: InterlaceTape, cfg: InterlaceConfig | None = None):
    """Exact VJPs w.r.t. the input, the offsets and the attention weights.

    The tape is single-use; a second call on the same tape is an error.
    """
    if tape.consumed:
        raise ShapeError("interlace tape already consumed by a backward call")
    tape.consumed = True
    if cfg is not None and cfg != tape.cfg:
        raise ShapeError("config does not match the one recorded on the tape")
    cfg = tape.cfg
    grad_v = np.asarray(grad_v, dtype=tape.u.dtype)
    gb = grad_v[None] if not tape.batched else grad_v
    if gb.shape != tape.u.shape:
        raise ShapeError(f"grad shape {grad_v.shape} does not match forward input")
    _, rest = partition_channels(cfg)
    n, t = tape.u.shape[:2]

    grad_u = gb.copy()
    grad_off = np.zeros_like(tape.offsets)
    grad_w = np.zeros_like(tape.weights)

    if cfg.weight_all_channels and cfg.g and rest[0] < rest[1]:
        u_rest = tape.u[:, :, rest[0]:]
        g_rest = gb[:, :, rest[0]:]
        m = tape.weights.mean(axis=1)
        grad_u[:, :, rest[0]:] = m[:, :, None, None, None] * g_rest
        per_frame = np.sum(g_rest * u_rest, axis=(2, 3, 4)) / cfg.g
        grad_w += per_frame[:, None, :]

    if cfg.g:
        cs, gs = cfg.c_shift, cfg.group_size
        starts = np.arange(0, cs, gs)
        base = np.arange(t)[None, :, None]
        gs_block = gb[:, :, :cs]
        ec = _per_channel(tape.weights, gs).swapaxes(1, 2)[..., None, None]
        z = ec * gs_block
        # transposed stencil == sampling the weighted grad at -O
        neg = -_per_channel(tape.offsets, gs)
        n0m = np.floor(neg).astype(np.int64)
        fm = (neg - n0m.astype(neg.dtype))[:, None, :, None, None]
        pos_m = base + n0m[:, None, :]
        grad_u[:, :, :cs] = (1.0 - fm) * _gather_tc(z, pos_m) + fm * _gather_tc(z, pos_m + 1)

        tap0, tap1 = tape.tap0, tape.tap1
        if tap0 is None:  # the slice-based forward path does not store taps
            pos = base + _per_channel(tape.n0, gs)[:, None, :]
            tap0 = _gather_tc(tape.u[:, :, :cs], pos)
            tap1 = _gather_tc(tape.u[:, :, :cs], pos + 1)
        fc = _per_channel(tape.f, gs)[:, None, :, None, None]
        y = (1.0 - fc) * tap0 + fc * tap1
        # per-channel sums folded into groups; fixed reduction order
        gw_c = np.sum(gs_block * y, axis=(3, 4)).swapaxes(1, 2)          # [N, Cs, T]
        grad_w += np.add.reduceat(gw_c, starts, axis=1)
        go_c = np.sum(z * (tap1 - tap0), axis=(1, 3, 4))                 # [N, Cs]
        grad_off += np.add.reduceat(go_c, starts, axis=1)

    if not tape.batched:
        return grad_u[0], grad_off[0], grad_w[0]
    return grad_u, grad_off, grad_w
