"""Optimization: L1 loss, Adam, cosine schedule, training loop, evaluation.

Each training step draws its batch and mask thresholds from a stream
seeded by (seed, step), so checkpoint/resume reproduces the exact loss
trace of an uninterrupted run.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import (
    BadMagicError,
    ConfigError,
    ContractError,
    NumericError,
    ShapeError,
    TruncatedFileError,
)
from .network import AtomicGenerator, GeneratorConfig, ScanContext
from .recursion import build_plan, reconstruct
from .tensor import Tensor

_CKPT_MAGIC = b"FRNW"
_CKPT_VERSION = 1


@dataclass
class TrainConfig:
    lr0: float = 4e-4
    lr_min: float = 1e-6
    batch: int = 32
    total_steps: int = 2000
    patch: int = 64
    bands: int = 32
    levels: int = 5
    refs: int = 4
    alpha: float = 0.5
    use_rgb: bool = True
    seed: int = 0
    eval_every: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    deep_supervision: bool = False

    def branch(self):
        """Tree arity n with n^levels = bands."""
        n = round(self.bands ** (1.0 / self.levels))
        if n < 2 or n ** self.levels != self.bands:
            raise ConfigError(
                f"bands={self.bands} is not an integer branch factor to the power levels={self.levels}"
            )
        return n

    def validate(self):
        if not self.lr_min < self.lr0:
            raise ConfigError(f"lr_min {self.lr_min} must be < lr0 {self.lr0}")
        if self.batch < 1:
            raise ConfigError(f"batch must be >= 1, got {self.batch}")
        if self.total_steps < 1:
            raise ConfigError(f"total_steps must be >= 1, got {self.total_steps}")
        if self.levels < 1:
            raise ConfigError(f"levels must be >= 1, got {self.levels}")
        if self.refs < 1:
            raise ConfigError(f"refs must be >= 1, got {self.refs}")
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigError(f"alpha must be in [0, 1), got {self.alpha}")
        self.branch()
        return self


def l1_loss(pred, gt):
    """Mean absolute difference over all entries; differentiable."""
    pred, gt = T._wrap(pred), T._wrap(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    return T.mean(T.abs_(T.sub(pred, gt)))


def interval_targets(cube, plan):
    """Per-level supervision targets: the cube averaged over each interval.

    Returns one [B, n^l, H, W] array per level, band order matching the
    sorted interval order used by the recursion.
    """
    cube = np.asarray(cube)
    targets = []
    for invocations in plan.level_specs:
        intervals = sorted(
            (child for inv in invocations for child in inv.children), key=lambda iv: iv[0]
        )
        targets.append(
            np.stack([cube[:, lo:hi].mean(axis=1) for lo, hi in intervals], axis=1)
        )
    return targets


class AdamState:
    """First/second moment buffers plus the shared step counter."""

    def __init__(self):
        self.step = 0
        self.m = {}
        self.v = {}


def adam_step(params, state: AdamState, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, in place over the parameter dict."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = p.grad
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ShapeError(f"grad shape {g.shape} != param shape {p.data.shape} for {name}")
        g = g.astype(np.float64)
        m = state.m.get(name)
        if m is None:
            m = np.zeros(p.data.shape, dtype=np.float32)
            state.v[name] = np.zeros(p.data.shape, dtype=np.float32)
        v = state.v[name]
        # moments kept in float32 so a checkpoint roundtrip is bit-exact
        m = (beta1 * m.astype(np.float64) + (1.0 - beta1) * g).astype(np.float32)
        v = (beta2 * v.astype(np.float64) + (1.0 - beta2) * g * g).astype(np.float32)
        state.m[name] = m
        state.v[name] = v
        update = lr * (m.astype(np.float64) / bc1) / (np.sqrt(v.astype(np.float64) / bc2) + eps)
        p.data = (p.data.astype(np.float64) - update).astype(p.data.dtype)
    return params, state


def cosine_lr(step, total, lr0=4e-4, lr_min=1e-6):
    """Cosine annealing from lr0 at step 0 to lr_min at step == total."""
    if step >= total:
        return lr_min
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + np.cos(np.pi * step / total))


def build_model(config: TrainConfig, gen_config=None, seed=None):
    """Recursion plan plus one generator per level, seeded deterministically."""
    config.validate()
    n = config.branch()
    gen_kw = dict(gen_config or {})
    in_channels = config.refs + (3 if config.use_rgb else 0)
    plan = build_plan(config.bands, n)
    rng = np.random.default_rng(config.seed if seed is None else seed)
    generators = []
    for _ in range(plan.levels):
        cfg = GeneratorConfig(
            in_channels=in_channels, out_channels=n, alpha=config.alpha, **gen_kw
        )
        generators.append(AtomicGenerator(cfg, rng=rng))
    return plan, generators


def model_params(generators):
    """Flat name -> Tensor dict over all levels."""
    out = {}
    for i, g in enumerate(generators):
        out.update(g.params(f"gen{i}."))
    return out


def save_checkpoint(path, step, params, adam: AdamState = None, config=None):
    """FRNW v1 writer; the config snapshot goes to a JSON sidecar."""
    path = Path(path)
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<I", _CKPT_VERSION))
        f.write(struct.pack("<Q", int(step)))

        def record(name, arr):
            nb = name.encode("utf-8")
            arr = np.ascontiguousarray(arr, dtype="<f4")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", arr.ndim))
            for d in arr.shape:
                f.write(struct.pack("<I", d))
            f.write(arr.tobytes())

        for name in sorted(params):
            p = params[name]
            record(name, p.data if isinstance(p, Tensor) else p)
        if adam is not None:
            for name in sorted(adam.m):
                record("adam.m/" + name, adam.m[name])
                record("adam.v/" + name, adam.v[name])
    if config is not None:
        Path(str(path) + ".json").write_text(json.dumps(config, indent=2, sort_keys=True))


def load_checkpoint(path):
    """Returns (step, params dict, AdamState, config dict or None)."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != _CKPT_MAGIC:
        raise BadMagicError(f"{path}: expected magic {_CKPT_MAGIC!r}, got {raw[:4]!r}")
    if len(raw) < 16:
        raise TruncatedFileError(f"{path}: header truncated")
    version = struct.unpack_from("<I", raw, 4)[0]
    if version != _CKPT_VERSION:
        raise BadMagicError(f"{path}: unsupported version {version}")
    step = struct.unpack_from("<Q", raw, 8)[0]
    off = 16
    blobs = {}
    while off < len(raw):
        if off + 2 > len(raw):
            raise TruncatedFileError(f"{path}: record header truncated at byte {off}")
        (nlen,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off : off + nlen].decode("utf-8")
        off += nlen
        if off + 1 > len(raw):
            raise TruncatedFileError(f"{path}: rank byte missing for {name}")
        rank = raw[off]
        off += 1
        if off + 4 * rank > len(raw):
            raise TruncatedFileError(f"{path}: dims truncated for {name}")
        dims = struct.unpack_from(f"<{rank}I", raw, off) if rank else ()
        off += 4 * rank
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        nbytes = 4 * count
        if off + nbytes > len(raw):
            raise TruncatedFileError(f"{path}: payload truncated for {name}")
        blobs[name] = np.frombuffer(raw, dtype="<f4", count=count, offset=off).reshape(dims).copy()
        off += nbytes
    params = {}
    adam = AdamState()
    adam.step = step
    for name, arr in blobs.items():
        if name.startswith("adam.m/"):
            adam.m[name[len("adam.m/") :]] = arr
        elif name.startswith("adam.v/"):
            adam.v[name[len("adam.v/") :]] = arr
        else:
            params[name] = arr
    sidecar = Path(str(path) + ".json")
    config = json.loads(sidecar.read_text()) if sidecar.exists() else None
    return step, params, adam, config


def load_params_into(generators, blobs):
    """Copy checkpoint blobs into live generator tensors; names must match."""
    live = model_params(generators)
    missing = set(live) - set(blobs)
    extra = set(blobs) - set(live)
    if missing or extra:
        raise ContractError(f"checkpoint/model mismatch: missing={sorted(missing)[:3]} extra={sorted(extra)[:3]}")
    for name, p in live.items():
        if blobs[name].shape != p.data.shape:
            raise ShapeError(f"{name}: checkpoint shape {blobs[name].shape} != model {p.data.shape}")
        p.data = blobs[name].astype(p.data.dtype)
    return generators


def _sample_batch(scenes, batch, patch, rng):
    """Aligned (rgb, cube) patch batch with random crops and flips."""
    rgbs, cubes = [], []
    for _ in range(batch):
        cube, rgb = scenes[int(rng.integers(len(scenes)))]
        _, H, W = cube.shape
        if H < patch or W < patch:
            raise ContractError(f"patch {patch} exceeds scene {H}x{W}")
        top = int(rng.integers(H - patch + 1))
        left = int(rng.integers(W - patch + 1))
        c = cube[:, top : top + patch, left : left + patch]
        r = rgb[:, top : top + patch, left : left + patch]
        if rng.integers(2):
            c, r = c[:, :, ::-1], r[:, :, ::-1]
        if rng.integers(2):
            c, r = c[:, ::-1, :], r[:, ::-1, :]
        cubes.append(np.ascontiguousarray(c))
        rgbs.append(np.ascontiguousarray(r))
    return np.stack(rgbs), np.stack(cubes)


def _grad_norm(params):
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    return float(np.sqrt(total))


def train_loop(config: TrainConfig, scenes, plan, generators, log_path=None, ckpt_path=None, start_step=0, stop_step=None, adam=None, log_hook=None, config_snapshot=None):
    """Run steps start_step..stop_step-1 (default total_steps); returns log entries.

    `scenes` is a list of (cube [K,H,W], rgb [3,H,W]) float32 pairs. Each
    step is seeded by (config.seed, step), so training is reproducible and
    resume-exact regardless of where it was interrupted.
    """
    config.validate()
    if plan.k_bands != config.bands:
        raise ContractError(f"plan bands {plan.k_bands} != config bands {config.bands}")
    params = model_params(generators)
    adam = adam or AdamState()
    end = config.total_steps if stop_step is None else stop_step
    log = []
    log_file = open(log_path, "a") if log_path else None
    try:
        for step in range(start_step, end):
            t0 = time.perf_counter()
            rng = np.random.default_rng([config.seed, step])
            rgb_np, cube_np = _sample_batch(scenes, config.batch, config.patch, rng)
            ctx = ScanContext(alpha=config.alpha, rng=rng)
            if config.deep_supervision:
                pred, lvls = reconstruct(
                    Tensor(rgb_np), plan, generators, ctx=ctx, S=config.refs,
                    use_rgb=config.use_rgb, return_levels=True,
                )
                loss = l1_loss(pred, Tensor(cube_np))
                for lvl, target in zip(lvls[:-1], interval_targets(cube_np, plan)[:-1]):
                    loss = T.add(loss, l1_loss(lvl, Tensor(target.astype(np.float32))))
            else:
                pred = reconstruct(Tensor(rgb_np), plan, generators, ctx=ctx, S=config.refs, use_rgb=config.use_rgb)
                loss = l1_loss(pred, Tensor(cube_np))
            loss_val = float(loss.data)
            lr = cosine_lr(step, config.total_steps, config.lr0, config.lr_min)
            for p in params.values():
                p.zero_grad()
            loss.backward()
            gnorm = _grad_norm(params)
            if not (np.isfinite(loss_val) and np.isfinite(gnorm)):
                raise NumericError(
                    f"non-finite training state at step {step}: loss={loss_val}, lr={lr}, grad_norm={gnorm}"
                )
            adam_step(params, adam, lr, config.beta1, config.beta2, config.eps)
            entry = {
                "step": step,
                "lr": float(lr),
                "loss": loss_val,
                "epsilon": [round(e, 6) for e in ctx.draws],
                "wall_ms": round(1000.0 * (time.perf_counter() - t0), 3),
            }
            log.append(entry)
            if log_file:
                log_file.write(json.dumps(entry) + "\n")
                log_file.flush()
            if log_hook:
                log_hook(entry)
    finally:
        if log_file:
            log_file.close()
    if ckpt_path:
        snapshot = asdict(config) if config_snapshot is None else config_snapshot
        save_checkpoint(ckpt_path, end, params, adam, snapshot)
    return log


def _tile_weight(tile, overlap, first_h, last_h, first_w, last_w):
    """Linear blending window; ramps only on edges shared with another tile."""
    ramp = np.ones(tile)
    if overlap > 0:
        rise = (np.arange(overlap) + 1.0) / (overlap + 1.0)
        wh = ramp.copy()
        ww = ramp.copy()
        if not first_h:
            wh[:overlap] = rise
        if not last_h:
            wh[-overlap:] = rise[::-1]
        if not first_w:
            ww[:overlap] = rise
        if not last_w:
            ww[-overlap:] = rise[::-1]
        return np.outer(wh, ww)
    return np.outer(ramp, ramp)


def predict_cube(rgb, plan, generators, S=4, use_rgb=True, alpha=0.5, tile=64, overlap=8):
    """Full-image inference by tiled reconstruction with linear blending.

    The tile shrinks to fit small images, staying a multiple of the
    generators' downsampling factor.
    """
    rgb = np.asarray(rgb, dtype=np.float32)
    _, H, W = rgb.shape
    mult = 2 ** generators[0].config.depth
    t = min(tile, (H // mult) * mult, (W // mult) * mult)
    if t < mult:
        raise ContractError(f"image {H}x{W} smaller than the minimum tile {mult}")
    if overlap >= t:
        raise ContractError(f"overlap {overlap} must be < tile {t}")
    stride = t - overlap
    rows = sorted({min(r, H - t) for r in range(0, H - t + stride, stride)} | {H - t})
    cols = sorted({min(c, W - t) for c in range(0, W - t + stride, stride)} | {W - t})
    acc = np.zeros((plan.k_bands, H, W), dtype=np.float64)
    wacc = np.zeros((H, W), dtype=np.float64)
    ctx = ScanContext(alpha=alpha, rng=None)
    for r in rows:
        for c in cols:
            patch = rgb[:, r : r + t, c : c + t]
            pred = reconstruct(Tensor(patch), plan, generators, ctx=ctx, S=S, use_rgb=use_rgb).data
            w = _tile_weight(t, overlap, r == rows[0], r == rows[-1], c == cols[0], c == cols[-1])
            acc[:, r : r + t, c : c + t] += pred.astype(np.float64) * w
            wacc[r : r + t, c : c + t] += w
    return (acc / wacc).astype(np.float32)


def evaluate(plan, generators, scenes, S=4, use_rgb=True, alpha=0.5, tile=64, overlap=8):
    """Per-scene MetricReports plus a voxel-weighted aggregate."""
    from . import metrics as M

    per_scene = []
    preds = []
    for cube, rgb in scenes:
        if cube.shape[0] != plan.k_bands:
            raise ShapeError(f"model produces {plan.k_bands} bands but scene has {cube.shape[0]}")
        pred = predict_cube(rgb, plan, generators, S=S, use_rgb=use_rgb, alpha=alpha, tile=tile, overlap=overlap)
        preds.append(pred)
        per_scene.append(M.compute_report(pred, cube))
    all_pred = np.concatenate([p.reshape(-1) for p in preds])
    all_gt = np.concatenate([c.reshape(-1) for c, _ in scenes])
    agg = M.MetricReport(
        psnr_db=M.psnr(all_pred[None, None], all_gt[None, None]),
        rmse_255=M.rmse(all_pred[None, None], all_gt[None, None]),
        ssim=float(np.mean([r.ssim for r in per_scene])),
        uiqi=float(np.mean([r.uiqi for r in per_scene])),
    )
    return agg, per_scene


def linear_baseline(rgb, phi):
    """Least-squares spectral upsampling: pseudo-inverse of the camera map."""
    rgb = np.asarray(rgb, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    pinv = np.linalg.pinv(phi.T)  # [L, 3]
    flat = rgb.reshape(3, -1)
    return (pinv @ flat).reshape(phi.shape[0], *rgb.shape[1:]).astype(np.float32)
