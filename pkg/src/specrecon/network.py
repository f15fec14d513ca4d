"""Atomic sub-band generator: a small U-Net built from BSSM blocks.

Maps S reference channels plus RGB to n new spectral channels. Width and
depth default to values that put the full 5-level recursion near 0.3M
learnable scalars.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError, ShapeError
from .scan import BSSMBlock
from .tensor import Tensor


@dataclass
class GeneratorConfig:
    in_channels: int = 7  # S reference channels + RGB
    out_channels: int = 2
    base_width: int = 16
    depth: int = 2
    blocks_per_stage: int = 1
    d_state: int = 8
    alpha: float = 0.5

    def validate(self):
        if self.in_channels < 1:
            raise ContractError(f"in_channels must be >= 1, got {self.in_channels}")
        if self.out_channels < 1:
            raise ContractError(f"out_channels must be >= 1, got {self.out_channels}")
        if self.base_width % 2 != 0:
            raise ContractError(f"base_width must be even, got {self.base_width}")
        if self.depth < 0:
            raise ContractError(f"depth must be >= 0, got {self.depth}")
        return self


class ScanContext:
    """Per-invocation epsilon policy for the band-aware masks.

    With an rng, each scan draws epsilon uniformly from [0, alpha]
    (training); without one, epsilon is fixed at alpha/2 (inference).
    Draws are recorded for logging.
    """

    def __init__(self, alpha=0.5, rng=None):
        self.alpha = float(alpha)
        self.rng = rng
        self.draws = []

    def draw(self):
        if self.rng is None:
            eps = self.alpha / 2.0
        else:
            eps = float(self.rng.uniform(0.0, self.alpha))
        self.draws.append(eps)
        return eps


class Conv2dLayer:
    def __init__(self, c_in, c_out, k, stride=1, rng=None, dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        bound = 1.0 / np.sqrt(c_in * k * k)
        self.w = Tensor(rng.uniform(-bound, bound, size=(c_out, c_in, k, k)).astype(dtype), requires_grad=True)
        self.b = Tensor(rng.uniform(-bound, bound, size=(c_out,)).astype(dtype), requires_grad=True)
        self.stride = stride
        self.padding = k // 2

    def __call__(self, x):
        return T.conv2d(x, self.w, self.b, stride=self.stride, padding=self.padding)

    def params(self, prefix):
        return {prefix + "w": self.w, prefix + "b": self.b}


# conditioning planes live in [0,1] with means near 0.5; a fixed affine
# rescale keeps the first-layer regression well conditioned
_IN_SHIFT = 0.5
_IN_SCALE = 4.0


class AtomicGenerator:
    """Encoder-decoder generator; output is linear (unbounded)."""

    def __init__(self, config: GeneratorConfig, rng=None):
        config.validate()
        self.config = config
        rng = rng or np.random.default_rng(0)
        widths = [config.base_width * (2 ** i) for i in range(config.depth + 1)]
        self.widths = widths

        self.embed = Conv2dLayer(config.in_channels, widths[0], 3, rng=rng)
        self.enc_down = []
        self.enc_blocks = []
        for i in range(1, config.depth + 1):
            self.enc_down.append(Conv2dLayer(widths[i - 1], widths[i], 3, stride=2, rng=rng))
            self.enc_blocks.append(
                [BSSMBlock(widths[i], config.d_state, rng=rng) for _ in range(config.blocks_per_stage)]
            )
        self.bottleneck = [
            BSSMBlock(widths[config.depth], config.d_state, rng=rng)
            for _ in range(config.blocks_per_stage)
        ]
        self.dec_fuse = []
        self.dec_blocks = []
        for i in range(config.depth, 0, -1):
            self.dec_fuse.append(Conv2dLayer(widths[i] + widths[i - 1], widths[i - 1], 1, rng=rng))
            self.dec_blocks.append(
                [BSSMBlock(widths[i - 1], config.d_state, rng=rng) for _ in range(config.blocks_per_stage)]
            )
        self.head = Conv2dLayer(widths[0], config.out_channels, 3, rng=rng)

    def params(self, prefix=""):
        out = {}
        out.update(self.embed.params(prefix + "embed."))
        for i, (down, blocks) in enumerate(zip(self.enc_down, self.enc_blocks)):
            out.update(down.params(f"{prefix}enc{i}.down."))
            for j, blk in enumerate(blocks):
                out.update(blk.params(f"{prefix}enc{i}.blk{j}."))
        for j, blk in enumerate(self.bottleneck):
            out.update(blk.params(f"{prefix}mid.blk{j}."))
        for i, (fuse, blocks) in enumerate(zip(self.dec_fuse, self.dec_blocks)):
            out.update(fuse.params(f"{prefix}dec{i}.fuse."))
            for j, blk in enumerate(blocks):
                out.update(blk.params(f"{prefix}dec{i}.blk{j}."))
        out.update(self.head.params(prefix + "head."))
        return out

    def forward(self, cond, ctx=None):
        cond = T._wrap(cond)
        cfg = self.config
        ctx = ctx or ScanContext(alpha=cfg.alpha)
        squeeze = cond.ndim == 3
        if squeeze:
            cond = T.reshape(cond, (1,) + cond.shape)
        B, C, H, W = cond.shape
        if C != cfg.in_channels:
            raise ShapeError(f"expected {cfg.in_channels} conditioning channels, got {C}")
        mult = 2 ** cfg.depth
        if H % mult or W % mult:
            raise ContractError(f"spatial size {H}x{W} must be a multiple of {mult}")

        x = self.embed(T.mul(T.sub(cond, _IN_SHIFT), _IN_SCALE))
        skips = [x]
        for down, blocks in zip(self.enc_down, self.enc_blocks):
            x = down(x)
            for blk in blocks:
                x = blk.forward(x, ctx.draw(), alpha=cfg.alpha)
            skips.append(x)
        for blk in self.bottleneck:
            x = blk.forward(x, ctx.draw(), alpha=cfg.alpha)
        for i, (fuse, blocks) in enumerate(zip(self.dec_fuse, self.dec_blocks)):
            x = T.upsample_nearest2x(x)
            skip = skips[cfg.depth - 1 - i]
            x = fuse(T.concat([x, skip], axis=1))
            for blk in blocks:
                x = blk.forward(x, ctx.draw(), alpha=cfg.alpha)
        out = self.head(x)
        if squeeze:
            out = T.reshape(out, out.shape[1:])
        return out


def atomic_generate(g: AtomicGenerator, cond, ctx=None):
    """One generator invocation: [S+3,H,W] -> [n,H,W] (batched forms allowed)."""
    return g.forward(cond, ctx=ctx)


def _conv_count(ci, co, k):
    return ci * co * k * k + co


def _bssm_count(c, n):
    # dwconv (9c+c) + 2 layer norms (4c) + a_log/w_b/w_c (3cn)
    # + delta projection (c^2+c) + d_skip (c)
    return c * c + 3 * c * n + 16 * c


def param_count(config: GeneratorConfig):
    """Exact learnable-scalar count of AtomicGenerator(config)."""
    config.validate()
    w = [config.base_width * (2 ** i) for i in range(config.depth + 1)]
    n = config.d_state
    b = config.blocks_per_stage
    total = _conv_count(config.in_channels, w[0], 3)
    for i in range(1, config.depth + 1):
        total += _conv_count(w[i - 1], w[i], 3) + b * _bssm_count(w[i], n)
    total += b * _bssm_count(w[config.depth], n)
    for i in range(config.depth, 0, -1):
        total += _conv_count(w[i] + w[i - 1], w[i - 1], 1) + b * _bssm_count(w[i - 1], n)
    total += _conv_count(w[0], config.out_channels, 3)
    return total
