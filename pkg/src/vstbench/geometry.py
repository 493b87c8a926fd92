"""Camera models, rigid poses, pinhole projection, and plane-induced homographies.

Conventions used throughout the package:

* Camera frame: x right, y down, z forward (optical axis). Depth is the
  z-coordinate of a point in the camera frame, not the ray length.
* Pixel centers sit at integer coordinates; (0, 0) is the center of the
  top-left pixel, so a width-W image spans u in [-0.5, W - 0.5].
* A ``Pose`` places a viewpoint in the shared rig (or world) frame:
  ``p_rig = R @ p_local + t``. Its translation is therefore the optical
  center expressed in the rig frame.

All functions are pure and broadcast over leading array dimensions.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ORTHONORMAL_TOL = 1e-9
_H_NORMALIZE_EPS = 1e-12

VIEWPOINT_NAMES = ("left_camera", "right_camera", "left_eye", "right_eye")


class GeometryError(ValueError):
    """Invalid geometric input (behind camera, degenerate mapping, ...)."""


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics: focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise GeometryError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width < 2 or self.height < 2:
            raise GeometryError(f"image size must be at least 2x2, got {self.width}x{self.height}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]],
            dtype=np.float64,
        )

    @property
    def inverse_matrix(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ],
            dtype=np.float64,
        )

    def pixel_grid(self) -> tuple[np.ndarray, np.ndarray]:
        """(u, v) coordinate arrays of shape (height, width), pixel centers."""
        v, u = np.mgrid[0 : self.height, 0 : self.width]
        return u.astype(np.float64), v.astype(np.float64)

    def contains(self, pixels: np.ndarray) -> np.ndarray:
        """True where a pixel coordinate lies on the pixel-center lattice extent."""
        p = np.asarray(pixels, dtype=np.float64)
        u, v = p[..., 0], p[..., 1]
        return (u >= 0.0) & (u <= self.width - 1.0) & (v >= 0.0) & (v <= self.height - 1.0)


class Pose:
    """Rigid transform placing a viewpoint in the rig frame: p_rig = R p + t."""

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation: np.ndarray, translation: np.ndarray):
        r = np.asarray(rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(translation, dtype=np.float64).reshape(3)
        err = np.linalg.norm(r.T @ r - np.eye(3))
        if err >= ORTHONORMAL_TOL:
            raise GeometryError(f"rotation is not orthonormal (||R^T R - I|| = {err:.3e})")
        if np.linalg.det(r) <= 0:
            raise GeometryError("rotation must have determinant +1")
        r.flags.writeable = False
        t.flags.writeable = False
        self.rotation = r
        self.translation = t

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    @staticmethod
    def from_translation(x: float, y: float, z: float) -> "Pose":
        return Pose(np.eye(3), np.array([x, y, z]))

    @staticmethod
    def rotation_y(angle_rad: float) -> np.ndarray:
        c, s = np.cos(angle_rad), np.sin(angle_rad)
        return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])

    @staticmethod
    def rotation_x(angle_rad: float) -> np.ndarray:
        c, s = np.cos(angle_rad), np.sin(angle_rad)
        return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])

    @staticmethod
    def rotation_z(angle_rad: float) -> np.ndarray:
        c, s = np.cos(angle_rad), np.sin(angle_rad)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Map local points (..., 3) into the rig frame."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def inverse_transform(self, points: np.ndarray) -> np.ndarray:
        """Map rig-frame points (..., 3) into the local frame."""
        p = np.asarray(points, dtype=np.float64)
        return (p - self.translation) @ self.rotation

    def compose(self, other: "Pose") -> "Pose":
        """self applied after other: result.transform(p) == self.transform(other.transform(p))."""
        return Pose(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def inverse(self) -> "Pose":
        return Pose(self.rotation.T, -self.rotation.T @ self.translation)

    def __repr__(self):
        return f"Pose(t={self.translation.tolist()})"


@dataclass(frozen=True)
class Viewpoint:
    """A pose plus intrinsics: one physical camera or one virtual eye."""

    pose: Pose
    intrinsics: CameraIntrinsics


class Homography:
    """3x3 projective map between pixel lattices, normalized so H[2,2] == 1."""

    __slots__ = ("matrix",)

    def __init__(self, matrix: np.ndarray):
        m = np.asarray(matrix, dtype=np.float64).reshape(3, 3)
        if abs(m[2, 2]) < _H_NORMALIZE_EPS:
            raise GeometryError("homography cannot be normalized: |H[2,2]| < 1e-12")
        m = m / m[2, 2]
        if abs(np.linalg.det(m)) <= _H_NORMALIZE_EPS:
            raise GeometryError("degenerate homography (determinant ~ 0)")
        m.flags.writeable = False
        self.matrix = m

    @staticmethod
    def identity() -> "Homography":
        return Homography(np.eye(3))

    def apply(self, pixels: np.ndarray) -> np.ndarray:
        """Map pixel coordinates (..., 2) through the homography."""
        p = np.asarray(pixels, dtype=np.float64)
        ones = np.ones(p.shape[:-1] + (1,))
        ph = np.concatenate([p, ones], axis=-1)
        q = ph @ self.matrix.T
        return q[..., :2] / q[..., 2:3]

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))

    def __repr__(self):
        return f"Homography({self.matrix.tolist()})"


@dataclass(frozen=True)
class RigCalibration:
    """Two cameras plus two virtual eye viewpoints, all in one rig frame."""

    left_camera: Viewpoint
    right_camera: Viewpoint
    left_eye: Viewpoint
    right_eye: Viewpoint

    def __post_init__(self):
        eye_baseline = np.linalg.norm(
            self.left_eye.pose.translation - self.right_eye.pose.translation
        )
        if eye_baseline <= 0:
            raise GeometryError("left/right eyes must differ (baseline > 0)")

    def viewpoint(self, name: str) -> Viewpoint:
        if name not in VIEWPOINT_NAMES:
            raise GeometryError(f"unknown viewpoint {name!r}, expected one of {VIEWPOINT_NAMES}")
        return getattr(self, name)


def project(points: np.ndarray, k: CameraIntrinsics) -> np.ndarray:
    """Project camera-frame points (..., 3) to pixels (..., 2).

    u = fx * x / z + cx, v = fy * y / z + cy. Raises for any z <= 0.
    """
    p = np.asarray(points, dtype=np.float64)
    z = p[..., 2]
    if np.any(z <= 0):
        raise GeometryError("behind camera: point has non-positive z")
    u = k.fx * p[..., 0] / z + k.cx
    v = k.fy * p[..., 1] / z + k.cy
    return np.stack([u, v], axis=-1)


def unproject(pixels: np.ndarray, depth: np.ndarray, k: CameraIntrinsics) -> np.ndarray:
    """Lift pixels (..., 2) at z-depth (...,) meters to camera-frame points (..., 3)."""
    p = np.asarray(pixels, dtype=np.float64)
    d = np.asarray(depth, dtype=np.float64)
    if np.any(d <= 0):
        raise GeometryError("invalid depth: must be positive")
    x = (p[..., 0] - k.cx) / k.fx * d
    y = (p[..., 1] - k.cy) / k.fy * d
    return np.stack([x, y, np.broadcast_to(d, x.shape)], axis=-1)


def reproject_pixel(
    pixels: np.ndarray,
    depths: np.ndarray,
    src: str,
    dst: str,
    rig: RigCalibration,
) -> tuple[np.ndarray, np.ndarray]:
    """Reproject source-view pixels with per-pixel depth into a destination view.

    Unprojects in the source frame, transforms through the rig, and projects
    with the destination intrinsics. Returns ``(pixels_dst, valid)`` where
    invalid entries (non-positive input depth, or point behind the destination
    viewpoint) hold NaN and are meant to be excluded from any statistics.
    """
    src_vp = rig.viewpoint(src)
    dst_vp = rig.viewpoint(dst)
    p = np.asarray(pixels, dtype=np.float64)
    d = np.asarray(depths, dtype=np.float64)
    d = np.broadcast_to(d, p.shape[:-1]).copy()

    valid = np.isfinite(d) & (d > 0)
    d[~valid] = 1.0  # placeholder, masked out below

    pts_src = unproject(p, d, src_vp.intrinsics)
    pts_rig = src_vp.pose.transform(pts_src)
    pts_dst = dst_vp.pose.inverse_transform(pts_rig)

    z = pts_dst[..., 2]
    valid &= z > 0
    z_safe = np.where(valid, z, 1.0)
    k = dst_vp.intrinsics
    out_u = k.fx * pts_dst[..., 0] / z_safe + k.cx
    out_v = k.fy * pts_dst[..., 1] / z_safe + k.cy
    out = np.stack([np.where(valid, out_u, np.nan), np.where(valid, out_v, np.nan)], axis=-1)
    return out, valid


def destination_depth(
    pixels: np.ndarray,
    depths: np.ndarray,
    src: str,
    dst: str,
    rig: RigCalibration,
) -> np.ndarray:
    """z-depth of the reprojected points in the destination frame (NaN where invalid)."""
    src_vp = rig.viewpoint(src)
    dst_vp = rig.viewpoint(dst)
    p = np.asarray(pixels, dtype=np.float64)
    d = np.asarray(depths, dtype=np.float64)
    d = np.broadcast_to(d, p.shape[:-1]).copy()
    valid = np.isfinite(d) & (d > 0)
    d[~valid] = 1.0
    pts_src = unproject(p, d, src_vp.intrinsics)
    pts_dst = dst_vp.pose.inverse_transform(src_vp.pose.transform(pts_src))
    z = pts_dst[..., 2]
    return np.where(valid, z, np.nan)


def relative_pose(rig: RigCalibration, src: str, dst: str) -> Pose:
    """Pose mapping source-frame points into the destination frame."""
    src_vp = rig.viewpoint(src)
    dst_vp = rig.viewpoint(dst)
    return dst_vp.pose.inverse().compose(src_vp.pose)


def plane_homography(rig: RigCalibration, src: str, dst: str, distance: float) -> Homography:
    """Homography induced by the fronto-parallel plane z = distance in the source frame.

    For points on that plane, applying the result to a source pixel equals
    the full reprojection with depth = distance:
    H = K_dst (R_rel + t_rel n^T / d) K_src^-1 with n = (0, 0, 1).
    """
    if distance <= 0:
        raise GeometryError("plane distance must be positive")
    rel = relative_pose(rig, src, dst)
    k_src = rig.viewpoint(src).intrinsics
    k_dst = rig.viewpoint(dst).intrinsics
    m = rel.rotation.copy()
    m[:, 2] += rel.translation / distance  # t n^T / d adds t/d to the z column
    h = k_dst.matrix @ m @ k_src.inverse_matrix
    return Homography(h)


def default_rig(
    eye_baseline: float = 0.063,
    camera_forward: float = 0.032,
    camera_outward: float = 0.012,
    fx: float = 500.0,
    fy: float = 500.0,
    width: int = 640,
    height: int = 480,
) -> RigCalibration:
    """Headset-like rig: cameras sit forward and outward of the eyes.

    The rig frame is centered between the eyes, x right, y down, z forward.
    """
    k = CameraIntrinsics(fx=fx, fy=fy, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
                         width=width, height=height)
    half_eye = eye_baseline / 2.0
    half_cam = half_eye + camera_outward
    return RigCalibration(
        left_camera=Viewpoint(Pose.from_translation(-half_cam, 0.0, camera_forward), k),
        right_camera=Viewpoint(Pose.from_translation(half_cam, 0.0, camera_forward), k),
        left_eye=Viewpoint(Pose.from_translation(-half_eye, 0.0, 0.0), k),
        right_eye=Viewpoint(Pose.from_translation(half_eye, 0.0, 0.0), k),
    )


def lateral_rig(baseline: float, fx: float = 500.0, width: int = 640, height: int = 480) -> RigCalibration:
    """Rig whose cameras are purely laterally offset from the eyes by ``baseline``.

    Useful for closed-form disparity checks: a camera->eye reprojection shifts
    pixels horizontally by fx * baseline / depth.
    """
    k = CameraIntrinsics(fx=fx, fy=fx, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
                         width=width, height=height)
    return RigCalibration(
        left_camera=Viewpoint(Pose.from_translation(-baseline, 0.0, 0.0), k),
        right_camera=Viewpoint(Pose.from_translation(baseline, 0.0, 0.0), k),
        left_eye=Viewpoint(Pose.identity(), k),
        right_eye=Viewpoint(Pose.from_translation(2 * baseline, 0.0, 0.0), k),
    )


# --- rig calibration file format -------------------------------------------
#
# JSON document:
# {
#   "viewpoints": {
#     "<name>": {
#       "rotation": [r00, r01, ..., r22],   # 9 numbers, row-major
#       "translation": [x, y, z],            # meters, rig frame
#       "intrinsics": {"fx":, "fy":, "cx":, "cy":, "width":, "height":}
#     }, ...  (all four of left_camera, right_camera, left_eye, right_eye)
#   }
# }


def rig_to_dict(rig: RigCalibration) -> dict:
    out = {}
    for name in VIEWPOINT_NAMES:
        vp = rig.viewpoint(name)
        out[name] = {
            "rotation": [float(x) for x in vp.pose.rotation.reshape(9)],
            "translation": [float(x) for x in vp.pose.translation],
            "intrinsics": {
                "fx": vp.intrinsics.fx,
                "fy": vp.intrinsics.fy,
                "cx": vp.intrinsics.cx,
                "cy": vp.intrinsics.cy,
                "width": vp.intrinsics.width,
                "height": vp.intrinsics.height,
            },
        }
    return {"viewpoints": out}


def rig_from_dict(data: dict) -> RigCalibration:
    try:
        vps = data["viewpoints"]
        parsed = {}
        for name in VIEWPOINT_NAMES:
            entry = vps[name]
            k = entry["intrinsics"]
            parsed[name] = Viewpoint(
                pose=Pose(np.array(entry["rotation"]).reshape(3, 3), np.array(entry["translation"])),
                intrinsics=CameraIntrinsics(
                    fx=float(k["fx"]), fy=float(k["fy"]), cx=float(k["cx"]), cy=float(k["cy"]),
                    width=int(k["width"]), height=int(k["height"]),
                ),
            )
    except KeyError as exc:
        raise GeometryError(f"rig calibration file missing key: {exc}") from exc
    return RigCalibration(**parsed)


def save_rig(rig: RigCalibration, path: str | Path) -> None:
    Path(path).write_text(json.dumps(rig_to_dict(rig), indent=2, sort_keys=True) + "\n")


def load_rig(path: str | Path) -> RigCalibration:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"rig calibration file not found: {p}")
    return rig_from_dict(json.loads(p.read_text()))
