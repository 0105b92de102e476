"""Central finite-difference verification of every hand-written backward.

check() compares an analytic vector-Jacobian product against the central
difference (f(x + eps e) - f(x - eps e)) / (2 eps) of the scalar
<cotangent, forward(x)>, coordinate by coordinate. Coordinates sitting
within 2 eps of a known kink (integer sampling offsets) are skipped and
reported rather than silently passed. Relative error is
|a - n| / max(|a|, |n|, 1e-8).

standard_checks() is the registry of every differentiable operation in
the package, shared by the test suite and the CLI.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteError, ShapeError
from .tensors import Rng, multi_index

EPS = 1e-5
TOL = 1e-6


@dataclass
class ParamReport:
    name: str
    max_rel_err: float
    max_abs_err: float
    worst_index: tuple
    n_checked: int
    n_skipped: int
    passed: bool


@dataclass
class GradReport:
    eps: float
    tol: float
    params: list
    kinks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.params)

    @property
    def max_rel_err(self) -> float:
        return max((p.max_rel_err for p in self.params), default=0.0)

    def to_dict(self) -> dict:
        return {
            "eps": self.eps, "tol": self.tol, "passed": self.passed,
            "kinks": [list(k) for k in self.kinks],
            "params": [{"name": p.name, "max_rel_err": p.max_rel_err,
                        "max_abs_err": p.max_abs_err, "worst_index": list(p.worst_index),
                        "n_checked": p.n_checked, "n_skipped": p.n_skipped,
                        "passed": p.passed} for p in self.params],
        }


def rel_err(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-8)


def check(forward, vjp, point: dict, *, eps: float = EPS, tol: float = TOL,
          rng: Rng | None = None, max_coords: int = 256, kink_dist=None) -> GradReport:
    """Verify vjp(point, v) against central differences of <v, forward(point)>.

    forward must be a pure function of the point dict; vjp returns a dict
    of gradients with the same keys. kink_dist, when given, maps
    (name, point) to per-coordinate distances from the nearest
    non-differentiable point; coordinates closer than 2 eps are skipped.
    """
    rng = rng or Rng(0)
    out0 = np.asarray(forward(point))
    if not np.all(np.isfinite(out0)):
        raise NonFiniteError("forward produced non-finite values at the check point")
    cot = rng.child("cotangent").uniform(out0.shape, -1.0, 1.0)
    analytic = vjp(point, cot)
    if set(analytic) != set(point):
        raise ShapeError(f"vjp keys {sorted(analytic)} != point keys {sorted(point)}")

    def scalar(p: dict) -> float:
        return float(np.sum(cot * np.asarray(forward(p))))

    reports, kinks = [], []
    for name in sorted(point):
        x = np.asarray(point[name], dtype=np.float64)
        a = np.asarray(analytic[name], dtype=np.float64)
        if a.shape != x.shape:
            raise ShapeError(f"gradient for {name!r} shaped {a.shape}, expected {x.shape}")
        n_total = x.size
        if n_total == 0:
            reports.append(ParamReport(name, 0.0, 0.0, (), 0, 0, True))
            continue
        if n_total <= max_coords:
            coords = np.arange(n_total)
        else:
            coords = rng.child(f"coords:{name}").permutation(n_total)[:max_coords]
        dist = None if kink_dist is None else np.asarray(kink_dist(name, point))
        worst = (0.0, 0.0, ())
        n_checked = n_skipped = 0
        for flat in coords:
            flat = int(flat)
            if dist is not None and dist.reshape(-1)[flat] < 2 * eps:
                kinks.append((name, flat))
                n_skipped += 1
                continue
            pert = dict(point)
            xp = x.copy()
            xp.reshape(-1)[flat] += eps
            pert[name] = xp
            f_plus = scalar(pert)
            xp = x.copy()
            xp.reshape(-1)[flat] -= eps
            pert[name] = xp
            f_minus = scalar(pert)
            numeric = (f_plus - f_minus) / (2 * eps)
            e = rel_err(float(a.reshape(-1)[flat]), numeric)
            if e >= worst[0]:
                worst = (e, abs(float(a.reshape(-1)[flat]) - numeric), multi_index(x.shape, flat))
            n_checked += 1
        reports.append(ParamReport(name, worst[0], worst[1], worst[2],
                                   n_checked, n_skipped, worst[0] < tol))
    return GradReport(eps, tol, reports, kinks)


def offset_kink_distance(offsets: np.ndarray) -> np.ndarray:
    """Distance of each sampling offset from the nearest integer."""
    offsets = np.asarray(offsets, dtype=np.float64)
    return np.abs(offsets - np.round(offsets))


# ---------------------------------------------------------------------------
# registry of every backward pass in the package

def _fractional_offsets(rng: Rng, cfg, margin: float = 0.1) -> np.ndarray:
    """Offsets with |O - round(O)| > margin, mirror-consistent."""
    g_learned = cfg.g // 2 if cfg.mirror else cfg.g
    vals = np.empty(g_learned)
    for i in range(g_learned):
        while True:
            o = float(rng.uniform([], -cfg.t / 2 + 0.05, cfg.t / 2 - 0.05)[()])
            if abs(o - round(o)) > margin:
                vals[i] = o
                break
    return np.concatenate([vals, -vals]) if cfg.mirror else vals


def standard_checks(seed: int = 0) -> list:
    """(name, forward, vjp, point, kink_dist, tol) for every operator."""
    from . import blocks, nets
    from .interlace import InterlaceConfig, interlace_backward, interlace_forward, \
        temporal_sample, temporal_sample_vjp

    rng = Rng(seed)
    checks = []

    # temporal sampling w.r.t. the input at a fixed fractional offset
    u0 = rng.child("ts_u").uniform([6, 3, 2, 2], -1.0, 1.0)
    checks.append((
        "temporal_sample.input",
        lambda p: temporal_sample(p["u"], 1.3),
        lambda p, cot: {"u": temporal_sample_vjp(p["u"], 1.3, cot)[0]},
        {"u": u0}, None, TOL))

    # temporal sampling w.r.t. the offset (fractional, plus a flagged kink)
    def ts_off_fwd(p):
        return temporal_sample(u0, float(p["offset"][0]))

    def ts_off_vjp(p, cot):
        return {"offset": np.array([temporal_sample_vjp(u0, float(p["offset"][0]), cot)[1]])}

    def ts_off_kinks(name, p):
        return offset_kink_distance(p["offset"])

    checks.append(("temporal_sample.offset", ts_off_fwd, ts_off_vjp,
                   {"offset": np.array([-0.7])}, ts_off_kinks, TOL))
    checks.append(("temporal_sample.offset_at_integer_kink", ts_off_fwd, ts_off_vjp,
                   {"offset": np.array([2.0])}, ts_off_kinks, TOL))

    # full interlace operator w.r.t. input, offsets, weights
    cfg = InterlaceConfig(t=6, c=8, g=4, shift_fraction=0.5, mirror=False)
    uin = rng.child("il_u").uniform([6, 8, 2, 2], -1.0, 1.0)
    off0 = _fractional_offsets(rng.child("il_off"), cfg)
    wgt0 = rng.child("il_w").uniform([4, 6], 0.2, 1.8)

    def il_fwd(p):
        return interlace_forward(p["u"], p["offsets"], p["weights"], cfg)[0]

    def il_vjp(p, cot):
        _, tape = interlace_forward(p["u"], p["offsets"], p["weights"], cfg)
        gu, go, gw = interlace_backward(cot, tape)
        return {"u": gu, "offsets": go, "weights": gw}

    def il_kinks(name, p):
        if name == "offsets":
            return offset_kink_distance(p["offsets"])
        return np.full(np.asarray(p[name]).size, np.inf)

    checks.append(("interlace", il_fwd, il_vjp,
                   {"u": uin, "offsets": off0, "weights": wgt0}, il_kinks, TOL))

    cfg_all = InterlaceConfig(t=6, c=8, g=2, shift_fraction=0.5, mirror=True,
                              weight_all_channels=True)
    off_m = _fractional_offsets(rng.child("ilm_off"), cfg_all)

    def ilm_fwd(p):
        offs = np.concatenate([p["half"], -p["half"]])
        return interlace_forward(p["u"], offs, p["weights"], cfg_all)[0]

    def ilm_vjp(p, cot):
        offs = np.concatenate([p["half"], -p["half"]])
        _, tape = interlace_forward(p["u"], offs, p["weights"], cfg_all)
        gu, go, gw = interlace_backward(cot, tape)
        return {"u": gu, "half": go[:1] - go[1:], "weights": gw}

    checks.append(("interlace.mirror_weight_all", ilm_fwd, ilm_vjp,
                   {"u": uin, "half": off_m[:1], "weights": rng.child("ilm_w").uniform([2, 6], 0.2, 1.8)},
                   None, TOL))

    # pooling
    checks.append((
        "pool_descriptor",
        lambda p: nets.pool_descriptor(p["u"]),
        lambda p, cot: {"u": nets.pool_descriptor_vjp(cot, p["u"].shape[-2], p["u"].shape[-1])},
        {"u": rng.child("pool").uniform([5, 3, 4, 4], -1.0, 1.0)}, None, TOL))

    # conv1d, C -> 1 (no bias) and C -> G (bias)
    z0 = rng.child("c1_z").uniform([2, 5, 7], -1.0, 1.0)
    k1 = rng.child("c1_k").uniform([1, 5, 3], -1.0, 1.0)

    def c1_fwd(p):
        return conv_apply(p["z"], p["kern"], None)

    def c1_vjp(p, cot):
        _, win = nets.conv1d_forward(p["z"], p["kern"], None)
        gz, gk, _ = nets.conv1d_vjp(cot, win, p["kern"], with_bias=False)
        return {"z": gz, "kern": gk}

    def conv_apply(z, kern, bias):
        return nets.conv1d_forward(z, kern, bias)[0]

    checks.append(("conv1d.single_out", c1_fwd, c1_vjp, {"z": z0, "kern": k1}, None, TOL))

    kg = rng.child("cg_k").uniform([4, 5, 3], -1.0, 1.0)
    bg = rng.child("cg_b").uniform([4], -1.0, 1.0)

    def cg_fwd(p):
        return conv_apply(p["z"], p["kern"], p["bias"])

    def cg_vjp(p, cot):
        _, win = nets.conv1d_forward(p["z"], p["kern"], p["bias"])
        gz, gk, gb = nets.conv1d_vjp(cot, win, p["kern"], with_bias=True)
        return {"z": gz, "kern": gk, "bias": gb}

    checks.append(("conv1d.multi_out", cg_fwd, cg_vjp,
                   {"z": z0, "kern": kg, "bias": bg}, None, TOL))

    # fully connected
    x0 = rng.child("fc_x").uniform([3, 6], -1.0, 1.0)
    w0 = rng.child("fc_w").uniform([4, 6], -1.0, 1.0)
    b0 = rng.child("fc_b").uniform([4], -1.0, 1.0)

    def fc_fwd(p):
        return nets.fc_forward(p["x"], p["w"], p["b"])

    def fc_vjp(p, cot):
        gx, gw, gb = nets.fc_vjp(cot, p["x"], p["w"])
        return {"x": gx, "w": gw, "b": gb}

    checks.append(("fc", fc_fwd, fc_vjp, {"x": x0, "w": w0, "b": b0}, None, TOL))

    # sigmoid (kept unsaturated so differences stay meaningful)
    xs = rng.child("sig").uniform([4, 5], -3.5, 3.5)
    checks.append((
        "sigmoid",
        lambda p: nets.sigmoid(p["x"]),
        lambda p, cot: {"x": nets.sigmoid_vjp(cot, nets.sigmoid(p["x"]))},
        {"x": xs}, None, TOL))

    # offset rescale, plain and mirrored
    raw0 = rng.child("rs").uniform([4], 0.05, 0.95)
    checks.append((
        "rescale_offsets",
        lambda p: nets.rescale_offsets(p["raw"], 8, False),
        lambda p, cot: {"raw": nets.rescale_offsets_vjp(cot, 8, False)},
        {"raw": raw0}, None, TOL))
    checks.append((
        "rescale_offsets.mirror",
        lambda p: nets.rescale_offsets(p["raw"], 8, True),
        lambda p, cot: {"raw": nets.rescale_offsets_vjp(cot, 8, True)},
        {"raw": raw0}, None, TOL))

    # offset net and weight net end to end on their own parameters
    onet = nets.OffsetNetParams(7, 5, 2, rng.child("onet"))
    onet.fc2_w[:] = rng.child("onet_w2").uniform([2, 7], -0.5, 0.5)
    onet.fc2_b[:] = rng.child("onet_b2").uniform([2], -0.5, 0.5)

    def onet_with(p):
        q = nets.OffsetNetParams(7, 5, 2, Rng(0))
        q.conv, q.fc1_w, q.fc1_b = p["conv"], p["fc1_w"], p["fc1_b"]
        q.fc2_w, q.fc2_b = p["fc2_w"], p["fc2_b"]
        return q

    zo = rng.child("onet_z").uniform([2, 5, 7], -1.0, 1.0)

    def on_fwd(p):
        return nets.offsetnet_forward(zo, onet_with(p))[0]

    def on_vjp(p, cot):
        q = onet_with(p)
        _, tape = nets.offsetnet_forward(zo, q)
        grads, _ = nets.offsetnet_vjp(cot, tape, q)
        return grads

    checks.append(("offsetnet.params", on_fwd, on_vjp,
                   dict(onet.named_params()), None, TOL))

    wnet = nets.WeightNetParams(7, 5, 3, rng.child("wnet"))
    wnet.conv[:] = rng.child("wnet_k").uniform([3, 5, 3], -0.5, 0.5)
    wnet.bias[:] = rng.child("wnet_b").uniform([3], -0.5, 0.5)

    def wnet_with(p):
        q = nets.WeightNetParams(7, 5, 3, Rng(0))
        q.conv, q.bias = p["conv"], p["bias"]
        return q

    def wn_fwd(p):
        return nets.weightnet_forward(zo, wnet_with(p))[0]

    def wn_vjp(p, cot):
        q = wnet_with(p)
        _, tape = nets.weightnet_forward(zo, q)
        grads, _ = nets.weightnet_vjp(cot, tape, q)
        return grads

    checks.append(("weightnet.params", wn_fwd, wn_vjp, dict(wnet.named_params()), None, TOL))

    # classification loss
    lg = rng.child("ce_x").uniform([3, 4], -2.0, 2.0)
    labels = np.array([0, 2, 3])

    def ce_fwd(p):
        from .blocks import cross_entropy
        return np.array([cross_entropy(p["logits"], labels)[0]])

    def ce_vjp(p, cot):
        from .blocks import cross_entropy
        return {"logits": float(cot[0]) * cross_entropy(p["logits"], labels)[1]}

    checks.append(("cross_entropy", ce_fwd, ce_vjp, {"logits": lg}, None, TOL))

    # the full block: every parameter plus the input, via the block's own tape
    checks.append(_block_check(rng.child("block")))
    # toy net end to end: deepest composition, looser tolerance
    checks.append(_toynet_check(rng.child("toynet")))
    return checks


def _nudged_block(rng: Rng):
    """A block whose nets are perturbed so offsets sit far from integers."""
    from . import blocks
    from .interlace import InterlaceConfig

    cfg = InterlaceConfig(t=4, c=8, g=2, shift_fraction=0.25, mirror=True)
    block = blocks.TinBlock(cfg, rng.child("params"), "tin")
    block.onet.fc2_w[:] = rng.child("w2").uniform([2, 4], -0.4, 0.4)
    block.onet.fc2_b[:] = np.array([0.35, -0.2])
    block.wnet.conv[:] = rng.child("wk").uniform(block.wnet.conv.shape, -0.3, 0.3)
    block.wnet.bias[:] = rng.child("wb").uniform([2], -0.3, 0.3)
    return block


def _block_check(rng: Rng):
    from . import blocks

    block = _nudged_block(rng)
    u0 = rng.child("u").uniform([4, 8, 2, 2], -1.0, 1.0)
    names = list(block.named_params())

    def load(p):
        for name in names:
            block.named_params()[name][:] = p[name]

    def fwd(p):
        load(p)
        return block.forward(p["u"])[0]

    def vjp(p, cot):
        load(p)
        v, tape = block.forward(p["u"])
        gu, grads = block.backward(cot, tape)
        grads["u"] = gu
        return grads

    point = {name: arr.copy() for name, arr in block.named_params().items()}
    point["u"] = u0
    return ("tin_block", fwd, vjp, point, None, TOL)


def _toynet_check(rng: Rng):
    """Deepest composition: the whole network mapping, checked as a VJP.

    Scales are pushed up so no weakly-connected coordinate has a gradient
    near the finite-difference noise floor; exact-zero coordinates (dead
    ReLUs, mirrored raw offsets) difference to exactly zero and are fine.
    """
    from . import blocks
    from .interlace import InterlaceConfig

    cfg = InterlaceConfig(t=4, c=8, g=2, shift_fraction=0.25, mirror=True)
    net = blocks.make_toy_net(4, 2, 3, rng.child("net"), hidden=8, temporal="tin",
                              cfg=cfg, head_scale=1.0)
    tin = net.tin_blocks()[0]
    tin.onet.conv *= 2.0
    tin.onet.fc1_w *= 1.5
    tin.onet.fc2_w[:] = rng.child("w2").uniform([2, 4], -0.5, 0.5)
    tin.onet.fc2_b[:] = np.array([0.5, -0.35])
    tin.wnet.conv[:] = rng.child("wk").uniform(tin.wnet.conv.shape, -0.15, 0.15)
    tin.wnet.bias[:] = rng.child("wb").uniform([2], -0.4, 0.4)
    for layer in net.layers:
        if layer.name in ("conv1", "conv2"):
            layer.w *= 2.0
    batch = rng.child("x").uniform([2, 4, 2, 3, 3], -2.0, 2.0)
    names = list(net.named_params())

    def load(p):
        for name in names:
            net.named_params()[name][:] = p[name]

    def fwd(p):
        load(p)
        return net.forward(p["x"])[0]

    def vjp(p, cot):
        load(p)
        _, tapes = net.forward(p["x"])
        gx, grads = net.backward(cot, tapes)
        grads["x"] = gx
        return grads

    point = {name: arr.copy() for name, arr in net.named_params().items()}
    point["x"] = batch
    return ("toy_net.end_to_end", fwd, vjp, point, None, 1e-5)


def run_standard_checks(seed: int = 0, max_coords: int = 256) -> dict:
    """Run the whole registry; returns {name: GradReport}."""
    out = {}
    for name, fwd, vjp, point, kink_dist, tol in standard_checks(seed):
        out[name] = check(fwd, vjp, point, tol=tol, rng=Rng(seed ^ 0x5EED),
                          max_coords=max_coords, kink_dist=kink_dist)
    return out


def reports_to_json(reports: dict) -> str:
    body = {name: rep.to_dict() for name, rep in sorted(reports.items())}
    body["passed"] = all(rep.passed for rep in reports.values())
    return json.dumps(body, indent=2, sort_keys=True)
