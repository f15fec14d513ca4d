"""Coarse-to-fine recursion over spectral bands.

Builds the n-adic interval schedule over the K output channels, selects
nearest-band reference channels for each invocation, and drives the
per-level atomic generators from wide intervals down to single bands.
Sibling invocations within a level share that level's generator and are
evaluated as one stacked batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ContractError, ShapeError
from .network import ScanContext, atomic_generate
from .tensor import Tensor


@dataclass(frozen=True)
class Invocation:
    parent: tuple  # (lo, hi) channel interval, half-open
    children: tuple  # n disjoint (lo, hi) intervals partitioning parent


@dataclass
class RecursionPlan:
    k_bands: int
    branch: int
    levels: int
    level_specs: list  # level_specs[l] is the list of Invocations at level l+1


@dataclass
class LevelState:
    """Write-once map from generated interval to its [B,1,H,W] estimate."""

    rgb: Tensor
    generated: dict = field(default_factory=dict)

    def centers(self):
        return sorted(self.generated, key=lambda iv: (iv[0] + iv[1]) / 2.0)


def build_plan(K, n):
    """n-adic interval tree over channel indices [0, K); K must equal n^m."""
    if n < 2 or K < n:
        raise ContractError(f"need n >= 2 and K >= n, got K={K}, n={n}")
    m = round(np.log(K) / np.log(n))
    if n ** m != K:
        lower, upper = n ** m, n ** (m + 1)
        nearest = lower if abs(K - lower) <= abs(upper - K) else upper
        raise ContractError(f"K={K} is not a power of n={n}; nearest valid K is {nearest}")
    specs = []
    for level in range(1, m + 1):
        width = K // n ** level
        invocations = []
        for p in range(n ** (level - 1)):
            parent = (p * width * n, (p + 1) * width * n)
            children = tuple((parent[0] + i * width, parent[0] + (i + 1) * width) for i in range(n))
            invocations.append(Invocation(parent=parent, children=children))
        specs.append(invocations)
    return RecursionPlan(k_bands=K, branch=n, levels=m, level_specs=specs)


def _rgb_mean_plane(rgb):
    """Per-pixel mean of the RGB channels, kept as a [B,1,H,W] tensor."""
    return T.mean(rgb, axis=1, keepdims=True)


def select_references(state: LevelState, target_interval, S, use_rgb=True):
    """Conditioning stack: S nearest generated estimates plus the RGB planes.

    Nearest is measured between interval centers in channel-index space,
    ties broken toward the lower center; chosen references are ordered by
    center. Missing slots are filled with the per-pixel RGB mean.
    """
    if S < 1:
        raise ContractError(f"S must be >= 1, got {S}")
    target_c = (target_interval[0] + target_interval[1]) / 2.0
    intervals = list(state.generated)
    intervals.sort(key=lambda iv: (abs((iv[0] + iv[1]) / 2.0 - target_c), (iv[0] + iv[1]) / 2.0))
    chosen = intervals[:S]
    chosen.sort(key=lambda iv: (iv[0] + iv[1]) / 2.0)
    planes = [state.generated[iv] for iv in chosen]
    if len(planes) < S:
        pad = _rgb_mean_plane(state.rgb)
        planes.extend([pad] * (S - len(planes)))
    if use_rgb:
        planes.append(state.rgb)
    return T.concat(planes, axis=1)


def reconstruct(rgb, plan: RecursionPlan, generators, ctx=None, S=4, use_rgb=True, return_levels=False):
    """Run all levels wide-to-narrow; returns the [K,H,W] (or [B,K,H,W]) cube.

    `generators` holds one shared AtomicGenerator per level. Differentiable
    end to end.
    """
    rgb = T._wrap(rgb)
    squeeze = rgb.ndim == 3
    if squeeze:
        rgb = T.reshape(rgb, (1,) + rgb.shape)
    if len(generators) != plan.levels:
        raise ContractError(f"plan has {plan.levels} levels but got {len(generators)} generators")
    B = rgb.shape[0]
    state = LevelState(rgb=rgb)
    level_outputs = []
    for level_idx, invocations in enumerate(plan.level_specs):
        gen = generators[level_idx]
        conds = [select_references(state, inv.parent, S, use_rgb=use_rgb) for inv in invocations]
        stacked = conds[0] if len(conds) == 1 else T.concat(conds, axis=0)
        out = atomic_generate(gen, stacked, ctx=ctx)  # [B*k, n, H, W]
        new_state = LevelState(rgb=rgb)
        for i, inv in enumerate(invocations):
            block = out[i * B : (i + 1) * B]
            parent_est = state.generated.get(inv.parent)
            for j, child in enumerate(inv.children):
                if child in new_state.generated:
                    raise ContractError(f"interval {child} generated twice")
                est = block[:, j : j + 1]
                # refinement: children are corrections on the parent estimate
                if parent_est is not None:
                    est = T.add(est, parent_est)
                new_state.generated[child] = est
        state = new_state
        if return_levels:
            ordered = sorted(state.generated, key=lambda iv: iv[0])
            level_outputs.append(T.concat([state.generated[iv] for iv in ordered], axis=1))

    ordered = sorted(state.generated, key=lambda iv: iv[0])
    if [iv for iv in ordered] != [(i, i + 1) for i in range(plan.k_bands)]:
        raise ContractError("final level does not produce exactly the K unit intervals")
    cube = T.concat([state.generated[iv] for iv in ordered], axis=1)
    if squeeze:
        cube = T.reshape(cube, cube.shape[1:])
        level_outputs = [T.reshape(lo, lo.shape[1:]) for lo in level_outputs]
    if return_levels:
        return cube, level_outputs
    return cube


def one_shot_baseline(rgb, generator_wide, ctx=None, S=4, use_rgb=True):
    """Single-call baseline: all K channels from one generator invocation."""
    rgb = T._wrap(rgb)
    squeeze = rgb.ndim == 3
    if squeeze:
        rgb = T.reshape(rgb, (1,) + rgb.shape)
    K = generator_wide.config.out_channels
    expected_in = S + (3 if use_rgb else 0)
    if generator_wide.config.in_channels != expected_in:
        raise ShapeError(
            f"one-shot generator expects {generator_wide.config.in_channels} input channels, "
            f"but S={S}, use_rgb={use_rgb} provides {expected_in}"
        )
    state = LevelState(rgb=rgb)
    cond = select_references(state, (0, K), S, use_rgb=use_rgb)
    out = atomic_generate(generator_wide, cond, ctx=ctx)
    if squeeze:
        out = T.reshape(out, out.shape[1:])
    return out


def default_wavelengths(K, lo_nm=400.0, hi_nm=700.0):
    """Channel index -> wavelength, linear over [lo_nm, hi_nm]."""
    return np.linspace(lo_nm, hi_nm, K)
