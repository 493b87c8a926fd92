"""The two view-synthesis modes under test.

Direct passthrough (``dp``) resamples the camera image through a single
plane-induced homography: cheap, depth-independent, and wrong everywhere
the scene is off the assumed plane. Geometry-aware passthrough (``gap``)
displaces a regular triangle mesh over the camera image using estimated
depth and rasterizes it into the eye view with a z-buffer; gaps at depth
discontinuities fill implicitly by triangle stretching.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .depth import DepthMap
from .geometry import (
    Homography,
    RigCalibration,
    destination_depth,
    plane_homography,
    reproject_pixel,
)
from .scene import RenderedFrame

MODE_NAMES = ("dp", "gap-raw", "gap-smooth", "gap-oversmooth")

_SAME_SIDE = {"left_camera": "left_eye", "right_camera": "right_eye"}


class PassthroughError(ValueError):
    pass


@dataclass(frozen=True)
class PlaneSpec:
    """Fronto-parallel projection plane for direct passthrough."""

    distance: float = 2.0

    def __post_init__(self):
        if self.distance <= 0:
            raise PassthroughError("plane distance must be positive")


def bilinear_sample(img: np.ndarray, x: np.ndarray, y: np.ndarray, cval: float = 0.0) -> np.ndarray:
    """Bilinear lookup at continuous pixel coords; cval outside [0, W-1] x [0, H-1].

    A tiny tolerance keeps coordinates that round-trip through rigid
    transforms from falling off the border.
    """
    h, w = img.shape
    eps = 1e-9
    inside = (x >= -eps) & (x <= w - 1.0 + eps) & (y >= -eps) & (y <= h - 1.0 + eps)
    xs = np.clip(x, 0.0, w - 1.0)
    ys = np.clip(y, 0.0, h - 1.0)
    i0 = np.clip(np.floor(xs).astype(np.int64), 0, w - 2)
    j0 = np.clip(np.floor(ys).astype(np.int64), 0, h - 2)
    fx = xs - i0
    fy = ys - j0
    val = (
        img[j0, i0] * (1 - fx) * (1 - fy)
        + img[j0, i0 + 1] * fx * (1 - fy)
        + img[j0 + 1, i0] * (1 - fx) * fy
        + img[j0 + 1, i0 + 1] * fx * fy
    )
    return np.where(inside, val, cval)


@dataclass(eq=False)
class WarpField:
    """Source-to-destination mapping sampled on a regular vertex grid."""

    grid_u: np.ndarray
    grid_v: np.ndarray
    dst: np.ndarray        # (ny, nx, 2) destination pixel per vertex
    dst_depth: np.ndarray  # (ny, nx) destination-frame z
    valid: np.ndarray      # (ny, nx)
    stride: int

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Evaluate the warp at source pixel coords (..., 2) by bilinear
        interpolation over the vertex grid; exact at the vertices."""
        p = np.asarray(points, dtype=np.float64)
        u = p[..., 0]
        v = p[..., 1]
        gu, gv = self.grid_u, self.grid_v
        i = np.clip(np.searchsorted(gu, u, side="right") - 1, 0, len(gu) - 2)
        j = np.clip(np.searchsorted(gv, v, side="right") - 1, 0, len(gv) - 2)
        du = gu[i + 1] - gu[i]
        dv = gv[j + 1] - gv[j]
        fu = np.clip((u - gu[i]) / du, 0.0, 1.0)
        fv = np.clip((v - gv[j]) / dv, 0.0, 1.0)
        out = (
            self.dst[j, i] * ((1 - fu) * (1 - fv))[..., None]
            + self.dst[j, i + 1] * (fu * (1 - fv))[..., None]
            + self.dst[j + 1, i] * ((1 - fu) * fv)[..., None]
            + self.dst[j + 1, i + 1] * (fu * fv)[..., None]
        )
        ok = (
            self.valid[j, i]
            & self.valid[j, i + 1]
            & self.valid[j + 1, i]
            & self.valid[j + 1, i + 1]
        )
        return np.where(ok[..., None], out, np.nan)


@dataclass(eq=False)
class SynthesizedView:
    """Eye-view image produced by a passthrough mode."""

    image: np.ndarray
    warp: WarpField
    mode: str
    disocclusion: np.ndarray
    eye_id: str
    frame_index: int = 0

    def __post_init__(self):
        if self.image.shape != self.disocclusion.shape:
            raise PassthroughError("image and disocclusion mask dimensions differ")


def _mesh_grid(width: int, height: int, stride: int) -> tuple[np.ndarray, np.ndarray]:
    gu = np.arange(0, width, stride)
    if gu[-1] != width - 1:
        gu = np.append(gu, width - 1)
    gv = np.arange(0, height, stride)
    if gv[-1] != height - 1:
        gv = np.append(gv, height - 1)
    return gu.astype(np.int64), gv.astype(np.int64)


def _check_same_side(frame: RenderedFrame, eye: str) -> None:
    expected = _SAME_SIDE.get(frame.viewpoint_id)
    if expected != eye:
        raise PassthroughError(
            f"frame from {frame.viewpoint_id!r} cannot feed {eye!r}; "
            "synthesis is per-side (left camera -> left eye)"
        )


def dp_reproject(
    frame: RenderedFrame,
    rig: RigCalibration,
    eye: str,
    plane: PlaneSpec = PlaneSpec(),
    stride: int = 4,
) -> SynthesizedView:
    """Direct passthrough: resample the camera image through the plane homography."""
    _check_same_side(frame, eye)
    cam = frame.viewpoint_id
    h_map = plane_homography(rig, cam, eye, plane.distance)
    h_inv = h_map.inverse()

    k_eye = rig.viewpoint(eye).intrinsics
    u, v = k_eye.pixel_grid()
    src = h_inv.apply(np.stack([u, v], axis=-1))
    image = bilinear_sample(frame.image, src[..., 0], src[..., 1], cval=0.0)

    gu, gv = _mesh_grid(k_eye.width, k_eye.height, stride)
    vu, vv = np.meshgrid(gu.astype(np.float64), gv.astype(np.float64))
    verts = np.stack([vu, vv], axis=-1)
    dst = h_map.apply(verts)
    depth = destination_depth(verts, np.full(vu.shape, plane.distance), cam, eye, rig)

    warp = WarpField(
        grid_u=gu,
        grid_v=gv,
        dst=dst,
        dst_depth=depth,
        valid=np.isfinite(depth) & (depth > 0),
        stride=stride,
    )
    return SynthesizedView(
        image=image,
        warp=warp,
        mode="dp",
        disocclusion=np.zeros(image.shape, bool),
        eye_id=eye,
        frame_index=frame.frame_index,
    )


def gap_reproject(
    frame: RenderedFrame,
    d_est: DepthMap,
    rig: RigCalibration,
    eye: str,
    stride: int = 4,
    stretch_ratio: float = 1.5,
    mode: str = "gap",
) -> SynthesizedView:
    """Geometry-aware passthrough: mesh forward warp with z-buffering.

    A vertex grid over the camera image is displaced per-vertex using the
    estimated depth, then each triangle is rasterized into the eye view
    (nearest surface wins). Pixels never covered by a triangle, and pixels
    covered by a triangle whose vertex depths span more than
    ``stretch_ratio``, are flagged in the disocclusion mask; uncovered
    pixels render as 0.
    """
    _check_same_side(frame, eye)
    if d_est.values.shape != frame.image.shape:
        raise PassthroughError("estimated depth dimensions do not match the frame")
    cam = frame.viewpoint_id
    k_eye = rig.viewpoint(eye).intrinsics
    h, w = frame.image.shape
    out_h, out_w = k_eye.height, k_eye.width

    gu, gv = _mesh_grid(w, h, stride)
    vu, vv = np.meshgrid(gu.astype(np.float64), gv.astype(np.float64))
    verts = np.stack([vu, vv], axis=-1)
    d_vert = d_est.values[gv[:, None], gu[None, :]]
    vert_ok = d_est.valid[gv[:, None], gu[None, :]]

    dst, reproj_ok = reproject_pixel(verts, d_vert, cam, eye, rig)
    zdst = destination_depth(verts, d_vert, cam, eye, rig)
    vert_ok = vert_ok & reproj_ok

    warp = WarpField(grid_u=gu, grid_v=gv, dst=dst, dst_depth=zdst,
                     valid=vert_ok, stride=stride)

    ny, nx = vu.shape
    vid = np.arange(ny * nx).reshape(ny, nx)
    q00 = vid[:-1, :-1].ravel()
    q10 = vid[:-1, 1:].ravel()
    q01 = vid[1:, :-1].ravel()
    q11 = vid[1:, 1:].ravel()
    tris = np.concatenate(
        [np.stack([q00, q10, q11], axis=1), np.stack([q00, q11, q01], axis=1)]
    )

    fx = dst[..., 0].ravel()[tris]
    fy = dst[..., 1].ravel()[tris]
    fz = zdst.ravel()[tris]
    fd = d_vert.ravel()[tris]
    fsu = vu.ravel()[tris]
    fsv = vv.ravel()[tris]
    ok = vert_ok.ravel()[tris].all(axis=1)

    with np.errstate(invalid="ignore"):
        stretch = np.where(ok, np.max(fd, axis=1) / np.maximum(np.min(fd, axis=1), 1e-12), 0.0)
    stretched = ok & (stretch > stretch_ratio)

    bbox_eps = 1e-9
    x0 = np.maximum(np.ceil(np.min(fx, axis=1) - bbox_eps), 0)
    x1 = np.minimum(np.floor(np.max(fx, axis=1) + bbox_eps), out_w - 1)
    y0 = np.maximum(np.ceil(np.min(fy, axis=1) - bbox_eps), 0)
    y1 = np.minimum(np.floor(np.max(fy, axis=1) + bbox_eps), out_h - 1)
    denom = (fy[:, 1] - fy[:, 2]) * (fx[:, 0] - fx[:, 2]) + (fx[:, 2] - fx[:, 1]) * (
        fy[:, 0] - fy[:, 2]
    )
    keep = ok & (x1 >= x0) & (y1 >= y0) & (np.abs(denom) > 1e-12)

    src_u = np.zeros((out_h, out_w))
    src_v = np.zeros((out_h, out_w))
    covered = np.zeros((out_h, out_w), bool)
    stretched_px = np.zeros((out_h, out_w), bool)

    if keep.any():
        fx, fy, fz, fsu, fsv = fx[keep], fy[keep], fz[keep], fsu[keep], fsv[keep]
        x0 = x0[keep].astype(np.int64)
        x1 = x1[keep].astype(np.int64)
        y0 = y0[keep].astype(np.int64)
        y1 = y1[keep].astype(np.int64)
        denom = denom[keep]
        tstretch = stretched[keep]

        bw = x1 - x0 + 1
        bh = y1 - y0 + 1
        counts = bw * bh
        ends = np.cumsum(counts)
        starts = ends - counts
        total = int(ends[-1])
        tid = np.repeat(np.arange(len(counts)), counts)
        k = np.arange(total) - starts[tid]
        px = x0[tid] + k % bw[tid]
        py = y0[tid] + k // bw[tid]

        lam0 = (
            (fy[tid, 1] - fy[tid, 2]) * (px - fx[tid, 2])
            + (fx[tid, 2] - fx[tid, 1]) * (py - fy[tid, 2])
        ) / denom[tid]
        lam1 = (
            (fy[tid, 2] - fy[tid, 0]) * (px - fx[tid, 2])
            + (fx[tid, 0] - fx[tid, 2]) * (py - fy[tid, 2])
        ) / denom[tid]
        lam2 = 1.0 - lam0 - lam1
        eps = -1e-9
        inside = (lam0 >= eps) & (lam1 >= eps) & (lam2 >= eps)

        tid = tid[inside]
        px = px[inside]
        py = py[inside]
        lam0 = lam0[inside]
        lam1 = lam1[inside]
        lam2 = lam2[inside]

        zc = lam0 * fz[tid, 0] + lam1 * fz[tid, 1] + lam2 * fz[tid, 2]
        suc = lam0 * fsu[tid, 0] + lam1 * fsu[tid, 1] + lam2 * fsu[tid, 2]
        svc = lam0 * fsv[tid, 0] + lam1 * fsv[tid, 1] + lam2 * fsv[tid, 2]

        pix = py * out_w + px
        order = np.lexsort((tid, zc, pix))
        spix = pix[order]
        first = np.ones(len(order), bool)
        first[1:] = spix[1:] != spix[:-1]
        win = order[first]

        flat_cov = covered.ravel()
        flat_cov[pix[win]] = True
        src_u.ravel()[pix[win]] = suc[win]
        src_v.ravel()[pix[win]] = svc[win]
        stretched_px.ravel()[pix[win]] = tstretch[tid[win]]

    image = np.where(covered, bilinear_sample(frame.image, src_u, src_v, cval=0.0), 0.0)
    disocc = (~covered) | stretched_px
    return SynthesizedView(
        image=image,
        warp=warp,
        mode=mode,
        disocclusion=disocc,
        eye_id=eye,
        frame_index=frame.frame_index,
    )
