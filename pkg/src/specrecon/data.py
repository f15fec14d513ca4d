"""Forward camera model, synthetic low-rank scenes, and dataset I/O.

Synthetic scenes are abundance-weighted mixtures of a few smooth endmember
spectra, so their band unfolding has numerical rank bounded by the number
of endmembers. Cubes persist in the planar "FRNC" format; real per-band
PNG directories load directly.
"""

from __future__ import annotations

import csv
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagicError,
    ContractError,
    DataError,
    DimensionOverflowError,
    ShapeError,
    TruncatedFileError,
)

_FRNC_MAGIC = b"FRNC"
_MAX_VOXELS = 2 ** 31


@dataclass
class SpectralCube:
    """L x H x W radiance volume in [0,1] with optional per-band wavelengths."""

    data: np.ndarray
    wavelengths: np.ndarray | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3:
            raise ShapeError(f"cube data must be 3-D (L,H,W), got {self.data.shape}")
        if self.wavelengths is not None:
            self.wavelengths = np.asarray(self.wavelengths, dtype=np.float32)
            if self.wavelengths.shape != (self.data.shape[0],):
                raise ShapeError("wavelengths length must equal band count")
            if np.any(np.diff(self.wavelengths) <= 0):
                raise ContractError("wavelengths must be strictly increasing")

    @property
    def bands(self):
        return self.data.shape[0]

    @property
    def height(self):
        return self.data.shape[1]

    @property
    def width(self):
        return self.data.shape[2]


@dataclass
class CRF:
    """L x 3 nonnegative spectral response matrix; columns (R,G,B) sum to 1."""

    phi: np.ndarray
    wavelengths: np.ndarray | None = None

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=np.float64)
        if self.phi.ndim != 2 or self.phi.shape[1] != 3:
            raise ShapeError(f"CRF must be L x 3, got {self.phi.shape}")
        if np.any(self.phi < 0):
            raise ContractError("CRF entries must be nonnegative")


@dataclass
class SceneSpec:
    """Endmember signatures [E,L] and per-pixel abundance maps [E,H,W] summing to 1."""

    endmembers: np.ndarray
    abundances: np.ndarray
    seed: int = 0

    def __post_init__(self):
        self.endmembers = np.asarray(self.endmembers, dtype=np.float64)
        self.abundances = np.asarray(self.abundances, dtype=np.float64)
        if self.endmembers.ndim != 2 or self.abundances.ndim != 3:
            raise ShapeError("endmembers must be [E,L], abundances [E,H,W]")
        if self.endmembers.shape[0] != self.abundances.shape[0]:
            raise ShapeError("endmember and abundance counts differ")
        if np.any(self.abundances < 0):
            raise ContractError("abundances must be nonnegative")
        sums = self.abundances.sum(axis=0)
        if np.abs(sums - 1.0).max() > 1e-6:
            raise ContractError("abundances must sum to 1 per pixel")


# -- camera model ---------------------------------------------------------------


def crf_project(cube: SpectralCube, crf: CRF):
    """Project a cube to RGB: per pixel X_c = sum_i phi_c(lambda_i) Y(lambda_i)."""
    if cube.bands != crf.phi.shape[0]:
        raise ShapeError(f"cube has {cube.bands} bands but CRF expects {crf.phi.shape[0]}")
    L, H, W = cube.data.shape
    flat = cube.data.reshape(L, H * W).astype(np.float64)
    rgb = (flat.T @ crf.phi).T.reshape(3, H, W)
    return rgb.astype(np.float32)


def crf_project_loop(cube: SpectralCube, crf: CRF):
    """Reference formulation: explicit per-band accumulation (float64)."""
    if cube.bands != crf.phi.shape[0]:
        raise ShapeError(f"cube has {cube.bands} bands but CRF expects {crf.phi.shape[0]}")
    L, H, W = cube.data.shape
    out = np.zeros((3, H, W), dtype=np.float64)
    for c in range(3):
        for i in range(L):
            out[c] += crf.phi[i, c] * cube.data[i].astype(np.float64)
    return out


def gaussian_crf(L, centers_nm=(600.0, 540.0, 460.0), sigma_nm=40.0, lo_nm=400.0, hi_nm=700.0):
    """Gaussian response per column, normalized so each column sums to 1."""
    if L < 3:
        raise ContractError(f"need at least 3 bands, got {L}")
    wl = np.linspace(lo_nm, hi_nm, L)
    phi = np.exp(-0.5 * ((wl[:, None] - np.asarray(centers_nm)[None, :]) / sigma_nm) ** 2)
    phi /= phi.sum(axis=0, keepdims=True)
    return CRF(phi=phi, wavelengths=wl)


# -- synthetic scenes -------------------------------------------------------------


def _smooth_field(rng, H, W, n_modes=4):
    """Low-frequency random field from a handful of 2-D cosines."""
    yy, xx = np.mgrid[0:H, 0:W]
    field = np.zeros((H, W))
    for _ in range(n_modes):
        fy, fx = rng.uniform(0.5, 2.5, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(0.5, 1.5)
        field += amp * np.cos(2 * np.pi * (fy * yy / H + fx * xx / W) + phase)
    return field


def make_scene_spec(E, L, H, W, seed=0):
    """Random smooth endmembers and softmax-mixed smooth abundances."""
    if E < 1:
        raise ContractError(f"need at least one endmember, got {E}")
    rng = np.random.default_rng(seed)
    idx = np.arange(L)
    signatures = np.zeros((E, L))
    for e in range(E):
        sig = np.full(L, rng.uniform(0.05, 0.2))
        for _ in range(rng.integers(2, 4)):
            center = rng.uniform(0, L - 1)
            width = rng.uniform(L / 8, L / 2)
            sig += rng.uniform(0.2, 1.0) * np.exp(-0.5 * ((idx - center) / width) ** 2)
        signatures[e] = sig
    if E == 1:
        abundances = np.ones((1, H, W))
    else:
        fields = np.stack([_smooth_field(rng, H, W) for _ in range(E)])
        fields = fields * 2.0  # sharpen the softmax for visible structure
        ex = np.exp(fields - fields.max(axis=0, keepdims=True))
        abundances = ex / ex.sum(axis=0, keepdims=True)
    return SceneSpec(endmembers=signatures, abundances=abundances, seed=seed)


def synth_scene(spec: SceneSpec, L=None, H=None, W=None, wavelengths=None):
    """Mix endmembers into a cube and rescale by the global max into [0,1].

    Only a positive global scale is applied so the spectral rank stays
    bounded by the endmember count.
    """
    E, Ls = spec.endmembers.shape
    _, Hs, Ws = spec.abundances.shape
    for name, want, have in (("L", L, Ls), ("H", H, Hs), ("W", W, Ws)):
        if want is not None and want != have:
            raise ShapeError(f"scene spec has {name}={have}, requested {want}")
    cube = np.einsum("el,ehw->lhw", spec.endmembers, spec.abundances)
    cube /= cube.max()
    if wavelengths is None:
        wavelengths = np.linspace(400.0, 700.0, Ls)
    return SpectralCube(data=cube.astype(np.float32), wavelengths=wavelengths)


# -- FRNC cube format --------------------------------------------------------------


def save_cube(cube: SpectralCube, path):
    """FRNC v1: magic, u32 version, u32 L/H/W, u8 wavelength flag, f32 payload."""
    L, H, W = cube.data.shape
    with open(path, "wb") as f:
        f.write(_FRNC_MAGIC)
        f.write(struct.pack("<IIII", 1, L, H, W))
        if cube.wavelengths is not None:
            f.write(struct.pack("<B", 1))
            f.write(cube.wavelengths.astype("<f4").tobytes())
        else:
            f.write(struct.pack("<B", 0))
        f.write(np.ascontiguousarray(cube.data, dtype="<f4").tobytes())


def load_cube(path):
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 21:
        raise TruncatedFileError(f"{path}: file shorter than FRNC header")
    if raw[:4] != _FRNC_MAGIC:
        raise BadMagicError(f"{path}: bad magic {raw[:4]!r}, expected {_FRNC_MAGIC!r}")
    version, L, H, W = struct.unpack_from("<IIII", raw, 4)
    if version != 1:
        raise DataError(f"{path}: unsupported FRNC version {version}")
    if L == 0 or H == 0 or W == 0 or L * H * W > _MAX_VOXELS:
        raise DimensionOverflowError(f"{path}: implausible dimensions {L}x{H}x{W}")
    (has_wl,) = struct.unpack_from("<B", raw, 20)
    off = 21
    wavelengths = None
    if has_wl:
        need = off + 4 * L
        if len(raw) < need:
            raise TruncatedFileError(f"{path}: wavelength table truncated")
        wavelengths = np.frombuffer(raw, dtype="<f4", count=L, offset=off).copy()
        off = need
    need = off + 4 * L * H * W
    if len(raw) < need:
        raise TruncatedFileError(
            f"{path}: payload truncated ({len(raw) - off} bytes, need {4 * L * H * W})"
        )
    data = np.frombuffer(raw, dtype="<f4", count=L * H * W, offset=off).reshape(L, H, W).copy()
    return SpectralCube(data=data, wavelengths=wavelengths)


# -- CRF CSV ------------------------------------------------------------------------


def save_crf_csv(crf: CRF, path):
    wl = crf.wavelengths
    if wl is None:
        wl = np.linspace(400.0, 700.0, crf.phi.shape[0])
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["wavelength_nm", "r", "g", "b"])
        for i in range(crf.phi.shape[0]):
            writer.writerow([f"{wl[i]:.6g}"] + [f"{v:.12g}" for v in crf.phi[i]])


def load_crf_csv(path):
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["wavelength_nm", "r", "g", "b"]:
            raise DataError(f"{path}: unexpected CRF CSV header {header}")
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise DataError(f"{path}: empty CRF CSV")
    arr = np.asarray(rows)
    return CRF(phi=arr[:, 1:], wavelengths=arr[:, 0])


# -- real band stacks ------------------------------------------------------------------


def load_png_band_dir(dirpath):
    """Directory of equally sized 8/16-bit grayscale images, one per band."""
    from PIL import Image

    names = sorted(
        n for n in os.listdir(dirpath)
        if n.lower().endswith((".png", ".pgm", ".bmp", ".tif", ".tiff"))
    )
    if not names:
        raise DataError(f"{dirpath}: no band images found")
    bands = []
    shape = None
    depth = None
    for name in names:
        img = Image.open(os.path.join(dirpath, name))
        arr = np.asarray(img)
        if arr.ndim != 2:
            raise DataError(f"{name}: expected grayscale, got shape {arr.shape}")
        if arr.dtype == np.uint8:
            scale = 255.0
        elif arr.dtype in (np.uint16, np.int32):
            scale = 65535.0
        else:
            raise DataError(f"{name}: unsupported bit depth {arr.dtype}")
        if shape is None:
            shape, depth = arr.shape, scale
        elif arr.shape != shape:
            raise DataError(f"{name}: size {arr.shape} differs from {shape}")
        elif scale != depth:
            raise DataError(f"{name}: bit depth differs from earlier bands")
        bands.append(arr.astype(np.float32) / scale)
    return SpectralCube(data=np.stack(bands))


# -- resampling and patches ---------------------------------------------------------------


def resample_bands(cube: SpectralCube, target_L):
    """Per-pixel linear interpolation onto target_L evenly spaced band positions."""
    if target_L < 2:
        raise ContractError(f"target_L must be >= 2, got {target_L}")
    L = cube.bands
    if target_L == L:
        return SpectralCube(data=cube.data.copy(), wavelengths=None if cube.wavelengths is None else cube.wavelengths.copy())
    pos = np.linspace(0.0, L - 1.0, target_L)
    i0 = np.clip(np.floor(pos).astype(int), 0, L - 2)
    frac = (pos - i0).astype(np.float32)
    data = cube.data[i0] * (1.0 - frac[:, None, None]) + cube.data[i0 + 1] * frac[:, None, None]
    wl = None
    if cube.wavelengths is not None:
        wl = cube.wavelengths[i0] * (1.0 - frac) + cube.wavelengths[i0 + 1] * frac
    return SpectralCube(data=data.astype(np.float32), wavelengths=wl)


@dataclass
class PatchPair:
    cube: np.ndarray  # [L, size, size]
    rgb: np.ndarray  # [3, size, size]
    top: int
    left: int
    flip_h: bool
    flip_v: bool


def crop_patches(cube: SpectralCube, rgb, size=64, count=1, seed=0, augment=True):
    """Aligned random crops with optional identical flip augmentation."""
    rgb = np.asarray(rgb, dtype=np.float32)
    L, H, W = cube.data.shape
    if rgb.shape != (3, H, W):
        raise ShapeError(f"rgb shape {rgb.shape} does not match cube spatial size {(H, W)}")
    if size > min(H, W):
        raise ContractError(f"patch size {size} exceeds image size {H}x{W}")
    rng = np.random.default_rng(seed)
    patches = []
    for _ in range(count):
        top = int(rng.integers(0, H - size + 1))
        left = int(rng.integers(0, W - size + 1))
        fh = bool(rng.integers(0, 2)) if augment else False
        fv = bool(rng.integers(0, 2)) if augment else False
        cp = cube.data[:, top : top + size, left : left + size]
        rp = rgb[:, top : top + size, left : left + size]
        if fh:
            cp, rp = cp[:, :, ::-1], rp[:, :, ::-1]
        if fv:
            cp, rp = cp[:, ::-1, :], rp[:, ::-1, :]
        patches.append(PatchPair(cube=np.ascontiguousarray(cp), rgb=np.ascontiguousarray(rp),
                                 top=top, left=left, flip_h=fh, flip_v=fv))
    return patches
