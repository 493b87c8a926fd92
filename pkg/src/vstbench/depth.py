"""Estimated-depth production: corruption, smoothing, and left-to-right warping.

The geometry-aware passthrough consumes an *estimated* depth map. Here the
estimate is manufactured from exact ground truth by applying the failure
modes of on-device stereo: edge fattening (foreground bleed), disparity
quantization, and multiplicative noise. Smoothing and the left-to-right
depth warp then mirror the rest of that pipeline.

Smoothing and quantization operate on inverse depth (disparity domain),
where stereo error actually lives.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .geometry import RigCalibration, reproject_pixel, destination_depth


class DepthError(ValueError):
    pass


@dataclass(eq=False)
class DepthMap:
    """Per-pixel z-depth in meters with a validity mask.

    ``filled`` , when present, marks pixels whose value came from hole
    filling rather than observation (provenance of the depth warp).
    """

    values: np.ndarray
    valid: np.ndarray
    filled: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.values.ndim != 2 or self.values.shape != self.valid.shape:
            raise DepthError("values and valid must be 2-D arrays of equal shape")
        vals = self.values[self.valid]
        if vals.size and (not np.all(np.isfinite(vals)) or np.any(vals <= 0)):
            raise DepthError("valid depth entries must be finite and positive")
        if self.filled is not None:
            self.filled = np.asarray(self.filled, dtype=bool)
            if self.filled.shape != self.values.shape:
                raise DepthError("filled mask shape mismatch")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @classmethod
    def constant(cls, depth: float, width: int, height: int) -> "DepthMap":
        return cls(np.full((height, width), float(depth)), np.ones((height, width), bool))

    def copy(self) -> "DepthMap":
        return DepthMap(self.values.copy(), self.valid.copy(),
                        None if self.filled is None else self.filled.copy())


@dataclass(frozen=True)
class DepthCorruptionSpec:
    """Stereo-like corruption of ground-truth depth.

    boundary_dilation_px: foreground bleed radius at occlusion edges.
    noise_sigma_rel: sigma of multiplicative log-normal noise.
    disparity_levels: quantization steps of inverse depth (None disables).
    """

    boundary_dilation_px: int = 2
    noise_sigma_rel: float = 0.02
    disparity_levels: int | None = 128
    seed: int = 0

    def __post_init__(self):
        if self.boundary_dilation_px < 0:
            raise DepthError("boundary_dilation_px must be >= 0")
        if self.noise_sigma_rel < 0:
            raise DepthError("noise_sigma_rel must be >= 0")
        if self.disparity_levels is not None and self.disparity_levels < 2:
            raise DepthError("disparity_levels must be >= 2 or None")

    @classmethod
    def disabled(cls) -> "DepthCorruptionSpec":
        return cls(boundary_dilation_px=0, noise_sigma_rel=0.0, disparity_levels=None)


@dataclass(frozen=True)
class SmoothingSpec:
    """Gaussian smoothing of inverse depth; sigma_px = 0 is a pass-through."""

    sigma_px: float = 0.0

    def __post_init__(self):
        if self.sigma_px < 0:
            raise DepthError("sigma_px must be >= 0")

    @property
    def kernel_radius(self) -> int:
        return int(np.ceil(3.0 * self.sigma_px)) if self.sigma_px > 0 else 0


def _min_filter(values: np.ndarray, radius: int) -> np.ndarray:
    """Separable square min filter with edge padding."""
    out = values
    for axis in (0, 1):
        padded = np.pad(out, [(radius, radius) if a == axis else (0, 0) for a in (0, 1)],
                        mode="edge")
        win = sliding_window_view(padded, 2 * radius + 1, axis=axis)
        out = win.min(axis=-1)
    return out


def corrupt_depth(gt: DepthMap, spec: DepthCorruptionSpec) -> DepthMap:
    """Degrade ground-truth depth the way a stereo estimator would.

    Order: foreground bleed at edges (min filter on depth), inverse-depth
    quantization, then multiplicative log-normal noise. Deterministic for a
    fixed seed; invalid pixels are passed through untouched.
    """
    vals = gt.values.copy()
    valid = gt.valid.copy()

    if spec.boundary_dilation_px > 0:
        work = np.where(valid, vals, np.inf)
        dilated = _min_filter(work, spec.boundary_dilation_px)
        vals = np.where(valid & np.isfinite(dilated), dilated, vals)

    if spec.disparity_levels is not None:
        inv = np.zeros_like(vals)
        inv[valid] = 1.0 / vals[valid]
        lo = inv[valid].min() if valid.any() else 0.0
        hi = inv[valid].max() if valid.any() else 0.0
        if hi > lo:
            step = (hi - lo) / (spec.disparity_levels - 1)
            q = np.round((inv - lo) / step) * step + lo
            vals = np.where(valid, 1.0 / np.maximum(q, 1e-12), vals)

    if spec.noise_sigma_rel > 0:
        rng = np.random.default_rng(spec.seed)
        g = rng.standard_normal(vals.shape)
        vals = np.where(valid, vals * np.exp(spec.noise_sigma_rel * g), vals)

    return DepthMap(vals, valid)


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _conv_axis(arr: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    """1-D correlation along an axis with zero padding, via shifted adds."""
    radius = (len(kernel) - 1) // 2
    out = np.zeros_like(arr)
    for j, w in enumerate(kernel):
        shift = j - radius
        src = [slice(None), slice(None)]
        dst = [slice(None), slice(None)]
        if shift > 0:
            src[axis] = slice(shift, None)
            dst[axis] = slice(None, -shift)
        elif shift < 0:
            src[axis] = slice(None, shift)
            dst[axis] = slice(-shift, None)
        out[tuple(dst)] += w * arr[tuple(src)]
    return out


def smooth_depth(d: DepthMap, spec: SmoothingSpec) -> DepthMap:
    """Validity-weighted separable Gaussian smoothing of inverse depth."""
    if spec.sigma_px == 0:
        return d.copy()
    kernel = _gaussian_kernel(spec.sigma_px)
    inv = np.zeros_like(d.values)
    inv[d.valid] = 1.0 / d.values[d.valid]
    weights = d.valid.astype(np.float64)

    num = _conv_axis(_conv_axis(inv * weights, kernel, 0), kernel, 1)
    den = _conv_axis(_conv_axis(weights, kernel, 0), kernel, 1)

    out_valid = d.valid & (den > 0)
    out_vals = d.values.copy()
    safe = np.where(den > 0, den, 1.0)
    smoothed_inv = num / safe
    ok = out_valid & (smoothed_inv > 0)
    out_vals[ok] = 1.0 / smoothed_inv[ok]
    return DepthMap(out_vals, out_valid & ok)


def warp_depth_left_to_right(d_left: DepthMap, rig: RigCalibration) -> DepthMap:
    """Forward-warp the left-camera depth into the right camera view.

    Each valid left pixel's 3-D point is projected into the right camera;
    nearest-pixel splatting with a z-buffer resolves overlaps (closest
    surface wins). Interior holes (disocclusions) are filled by extending
    the horizontal neighbor on the background side (larger depth) and are
    marked in the ``filled`` provenance mask; holes touching the left/right
    image border stay invalid.
    """
    h, w = d_left.values.shape
    k = rig.viewpoint("right_camera").intrinsics
    if (k.width, k.height) != (w, h):
        raise DepthError("depth map dimensions do not match right camera intrinsics")

    u, v = np.mgrid[0:h, 0:w][::-1]
    pixels = np.stack([u, v], axis=-1).astype(np.float64)
    dst_pix, valid = reproject_pixel(pixels, d_left.values, "left_camera", "right_camera", rig)
    dst_z = destination_depth(pixels, d_left.values, "left_camera", "right_camera", rig)
    valid = valid & d_left.valid

    iu = np.round(dst_pix[..., 0]).astype(np.int64)
    iv = np.round(dst_pix[..., 1]).astype(np.int64)
    inb = valid & (iu >= 0) & (iu < w) & (iv >= 0) & (iv < h)

    zbuf = np.full((h, w), np.inf)
    np.minimum.at(zbuf, (iv[inb], iu[inb]), dst_z[inb])
    written = np.isfinite(zbuf)

    vals = np.where(written, zbuf, 0.0)
    out_valid = written.copy()
    filled = np.zeros((h, w), bool)

    # Horizontal background-side hole fill, vectorized across rows.
    cols = np.arange(w)
    left_idx = np.where(written, cols, -1)
    left_idx = np.maximum.accumulate(left_idx, axis=1)
    right_idx = np.where(written, cols, w)
    right_idx = np.flip(np.minimum.accumulate(np.flip(right_idx, axis=1), axis=1), axis=1)

    hole = ~written
    interior = hole & (left_idx >= 0) & (right_idx < w)
    if interior.any():
        rows = np.nonzero(interior)[0]
        li = left_idx[interior]
        ri = right_idx[interior]
        lv = vals[rows, li]
        rv = vals[rows, ri]
        fill_vals = np.where(lv >= rv, lv, rv)  # background side = larger depth
        vals[interior] = fill_vals
        out_valid[interior] = True
        filled[interior] = True

    return DepthMap(vals, out_valid, filled)
