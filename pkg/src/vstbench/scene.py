"""Procedural planar-patch scenes with exact ray-cast depth.

Scenes stand in for scanned indoor captures: every patch is a textured
planar parallelogram placed in the world frame, so ground-truth depth is
available analytically for any viewpoint. A scene plus a rig trajectory
yields stereo camera frames (image + exact depth) for the benchmark.

World frame matches the rig frame at the identity trajectory pose:
x right, y down, z forward from between the eyes.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .depth import DepthMap
from .geometry import Pose, RigCalibration, Viewpoint

_COPLANAR_TOL = 1e-9
_MIN_AREA = 1e-6


class SceneError(ValueError):
    pass


# --- procedural textures -----------------------------------------------------


@dataclass(frozen=True)
class CheckerTexture:
    squares: int = 8
    low: float = 0.15
    high: float = 0.85

    def sample(self, s: np.ndarray, t: np.ndarray) -> np.ndarray:
        i = np.floor(np.clip(s, 0.0, 1.0 - 1e-12) * self.squares)
        j = np.floor(np.clip(t, 0.0, 1.0 - 1e-12) * self.squares)
        return np.where((i + j) % 2 == 0, self.high, self.low)

    def to_dict(self) -> dict:
        return {"kind": "checker", "squares": self.squares, "low": self.low, "high": self.high}


@dataclass(frozen=True)
class NoiseTexture:
    """Seeded band-limited noise: bilinear interpolation of a random grid."""

    seed: int = 0
    cells: int = 24
    low: float = 0.35
    high: float = 0.8

    @property
    def _grid(self) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        return rng.uniform(self.low, self.high, (self.cells + 1, self.cells + 1))

    def sample(self, s: np.ndarray, t: np.ndarray) -> np.ndarray:
        g = self._grid
        x = np.clip(s, 0.0, 1.0) * self.cells
        y = np.clip(t, 0.0, 1.0) * self.cells
        i0 = np.clip(np.floor(x).astype(int), 0, self.cells - 1)
        j0 = np.clip(np.floor(y).astype(int), 0, self.cells - 1)
        fx = x - i0
        fy = y - j0
        return (
            g[j0, i0] * (1 - fx) * (1 - fy)
            + g[j0, i0 + 1] * fx * (1 - fy)
            + g[j0 + 1, i0] * (1 - fx) * fy
            + g[j0 + 1, i0 + 1] * fx * fy
        )

    def to_dict(self) -> dict:
        return {"kind": "noise", "seed": self.seed, "cells": self.cells,
                "low": self.low, "high": self.high}


def _smoothstep(x: np.ndarray) -> np.ndarray:
    u = np.clip(x, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


@dataclass(frozen=True)
class BlobGridTexture:
    """Bordered feature grid: G x G Gaussian spots inside a dark frame.

    The texture is defined in reference-raster pixel coordinates (pixel
    centers at integers, resolution x resolution). The dark border spans
    ``border_px`` from each patch edge; the border-to-field transition is
    smoothstepped over ``edge_softness_px`` so rendered edges localize
    without bias, with the 50% level exactly at ``border_px - 0.5``.
    """

    grid: int = 12
    resolution: int = 384
    border_px: int = 24
    blob_sigma_px: float = 1.5
    edge_softness_px: float = 3.0
    field_level: float = 0.92
    border_level: float = 0.06
    blob_level: float = 0.25

    def __post_init__(self):
        if self.grid * self.grid < 100:
            raise SceneError("feature grid must provide at least 100 features")
        if self.resolution <= 4 * self.border_px:
            raise SceneError("border leaves no interior")

    @property
    def pitch_px(self) -> float:
        return (self.resolution - 2 * self.border_px) / self.grid

    def feature_centers_px(self) -> np.ndarray:
        """(grid^2, 2) blob centers in reference-raster pixel coordinates."""
        idx = np.arange(self.grid)
        c = self.border_px - 0.5 + (idx + 0.5) * self.pitch_px
        cx, cy = np.meshgrid(c, c)
        return np.stack([cx.ravel(), cy.ravel()], axis=-1)

    def inner_corners_px(self) -> np.ndarray:
        """Corners of the border's inner edge (the detectable rectangle)."""
        b = self.border_px - 0.5
        r = self.resolution - self.border_px - 0.5
        return np.array([[b, b], [r, b], [r, r], [b, r]])

    def outer_corners_px(self) -> np.ndarray:
        r = self.resolution - 0.5
        return np.array([[-0.5, -0.5], [r, -0.5], [r, r], [-0.5, r]])

    def sample_px(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Intensity at reference-raster pixel coordinates."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        edge_dist = np.minimum(np.minimum(x, y), np.minimum(self.resolution - 1 - x, self.resolution - 1 - y))
        # 0 inside the border, 1 in the interior field
        interior = _smoothstep(
            (edge_dist - (self.border_px - 0.5)) / self.edge_softness_px + 0.5
        )
        base = self.border_level + (self.field_level - self.border_level) * interior

        pitch = self.pitch_px
        gx = np.clip(np.round((x - (self.border_px - 0.5)) / pitch - 0.5), 0, self.grid - 1)
        gy = np.clip(np.round((y - (self.border_px - 0.5)) / pitch - 0.5), 0, self.grid - 1)
        cx = self.border_px - 0.5 + (gx + 0.5) * pitch
        cy = self.border_px - 0.5 + (gy + 0.5) * pitch
        r2 = (x - cx) ** 2 + (y - cy) ** 2
        dip = (self.field_level - self.blob_level) * np.exp(-0.5 * r2 / self.blob_sigma_px**2)
        return base - dip * interior

    def sample(self, s: np.ndarray, t: np.ndarray) -> np.ndarray:
        r = self.resolution
        return self.sample_px(np.asarray(s) * r - 0.5, np.asarray(t) * r - 0.5)

    def reference_raster(self) -> np.ndarray:
        """The texture evaluated at reference pixel centers, shape (R, R)."""
        xx, yy = np.meshgrid(np.arange(self.resolution), np.arange(self.resolution))
        return self.sample_px(xx.astype(np.float64), yy.astype(np.float64))

    def to_dict(self) -> dict:
        return {
            "kind": "blob_grid",
            "grid": self.grid,
            "resolution": self.resolution,
            "border_px": self.border_px,
            "blob_sigma_px": self.blob_sigma_px,
            "edge_softness_px": self.edge_softness_px,
            "field_level": self.field_level,
            "border_level": self.border_level,
            "blob_level": self.blob_level,
        }


Texture = CheckerTexture | NoiseTexture | BlobGridTexture


def texture_from_dict(data: dict) -> Texture:
    kind = data.get("kind")
    args = {k: v for k, v in data.items() if k != "kind"}
    if kind == "checker":
        return CheckerTexture(**args)
    if kind == "noise":
        return NoiseTexture(**args)
    if kind == "blob_grid":
        return BlobGridTexture(**args)
    raise SceneError(f"unknown texture kind {kind!r}")


# --- patches and scenes ------------------------------------------------------


@dataclass(eq=False)
class TexturedPatch:
    """Planar parallelogram with a procedural texture.

    Corners run counter-clockwise seen from the front; the texture's s axis
    follows corner0 -> corner1 and t follows corner0 -> corner3.
    """

    corners: np.ndarray
    texture: Texture
    patch_id: str

    def __post_init__(self):
        c = np.asarray(self.corners, dtype=np.float64).reshape(4, 3)
        closure = np.linalg.norm(c[0] - c[1] + c[2] - c[3])
        if closure > _COPLANAR_TOL:
            raise SceneError(
                f"patch {self.patch_id!r}: corners are not a planar parallelogram "
                f"(closure {closure:.2e})"
            )
        eu = c[1] - c[0]
        ev = c[3] - c[0]
        if np.linalg.norm(np.cross(eu, ev)) <= _MIN_AREA:
            raise SceneError(f"patch {self.patch_id!r} is degenerate (area too small)")
        c.flags.writeable = False
        self.corners = c

    @property
    def origin(self) -> np.ndarray:
        return self.corners[0]

    @property
    def edge_u(self) -> np.ndarray:
        return self.corners[1] - self.corners[0]

    @property
    def edge_v(self) -> np.ndarray:
        return self.corners[3] - self.corners[0]

    @property
    def normal(self) -> np.ndarray:
        n = np.cross(self.edge_u, self.edge_v)
        return n / np.linalg.norm(n)

    def point_at(self, s: np.ndarray, t: np.ndarray) -> np.ndarray:
        """World point at patch-local coordinates (s, t) in [0, 1]^2."""
        s = np.asarray(s, dtype=np.float64)[..., None]
        t = np.asarray(t, dtype=np.float64)[..., None]
        return self.origin + s * self.edge_u + t * self.edge_v

    def to_dict(self) -> dict:
        return {
            "patch_id": self.patch_id,
            "corners": [[float(x) for x in row] for row in self.corners],
            "texture": self.texture.to_dict(),
        }


def rect_patch(
    patch_id: str,
    texture: Texture,
    center: tuple[float, float, float],
    width: float,
    height: float,
    yaw_deg: float = 0.0,
    pitch_deg: float = 0.0,
) -> TexturedPatch:
    """Rectangle at ``center``, fronto-parallel before yaw/pitch rotation."""
    r = Pose.rotation_y(np.deg2rad(yaw_deg)) @ Pose.rotation_x(np.deg2rad(pitch_deg))
    eu = r @ np.array([width, 0.0, 0.0])
    ev = r @ np.array([0.0, height, 0.0])
    c = np.asarray(center, dtype=np.float64)
    c0 = c - eu / 2 - ev / 2
    return TexturedPatch(np.stack([c0, c0 + eu, c0 + eu + ev, c0 + ev]), texture, patch_id)


@dataclass(eq=False)
class FiducialTarget:
    """A patch whose texture is a bordered blob grid usable for matching."""

    patch: TexturedPatch

    def __post_init__(self):
        if not isinstance(self.patch.texture, BlobGridTexture):
            raise SceneError("fiducial target requires a blob-grid texture")

    @property
    def texture(self) -> BlobGridTexture:
        return self.patch.texture

    def feature_points_3d(self) -> np.ndarray:
        """(G^2, 3) world positions of the blob centers."""
        centers = self.texture.feature_centers_px()
        r = self.texture.resolution
        s = (centers[:, 0] + 0.5) / r
        t = (centers[:, 1] + 0.5) / r
        return self.patch.point_at(s, t)

    def corner_points_3d(self) -> np.ndarray:
        return np.asarray(self.patch.corners)


@dataclass(eq=False)
class Scene:
    """Immutable collection of textured patches plus far-plane background."""

    patches: tuple[TexturedPatch, ...] = ()
    targets: tuple[FiducialTarget, ...] = ()
    background_depth: float = 10.0
    background_intensity: float = 0.5
    seed: int = 0
    name: str = "scene"

    def __post_init__(self):
        self.patches = tuple(self.patches)
        self.targets = tuple(self.targets)
        if self.background_depth <= 0:
            raise SceneError("background depth must be positive")

    def all_patches(self) -> tuple[TexturedPatch, ...]:
        return self.patches + tuple(t.patch for t in self.targets)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "background_depth": self.background_depth,
            "background_intensity": self.background_intensity,
            "seed": self.seed,
            "patches": [p.to_dict() for p in self.patches],
            "targets": [t.patch.to_dict() for t in self.targets],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scene":
        def parse(p):
            return TexturedPatch(np.array(p["corners"]), texture_from_dict(p["texture"]),
                                 p["patch_id"])

        return cls(
            patches=tuple(parse(p) for p in data.get("patches", [])),
            targets=tuple(FiducialTarget(parse(p)) for p in data.get("targets", [])),
            background_depth=float(data.get("background_depth", 10.0)),
            background_intensity=float(data.get("background_intensity", 0.5)),
            seed=int(data.get("seed", 0)),
            name=data.get("name", "scene"),
        )


def save_scene(scene: Scene, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scene.to_dict(), indent=2, sort_keys=True) + "\n")


def load_scene(path: str | Path) -> Scene:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"scene file not found: {p}")
    return Scene.from_dict(json.loads(p.read_text()))


# --- rendering ---------------------------------------------------------------


@dataclass(eq=False)
class RenderedFrame:
    """One camera view: grayscale image in [0, 1] plus exact depth."""

    image: np.ndarray
    depth: DepthMap
    viewpoint_id: str
    frame_index: int
    camera: Viewpoint

    def __post_init__(self):
        if self.image.shape != self.depth.values.shape:
            raise SceneError("image and depth dimensions differ")


def _trace(scene: Scene, camera: Viewpoint, du: float = 0.0, dv: float = 0.0):
    """Nearest patch intersection per pixel ray.

    Returns (depth, patch_index, a, b): z-depth of the nearest hit (background
    depth on miss), index into scene.all_patches() (-1 for miss), and the
    patch-local coordinates of the hit.
    """
    k = camera.intrinsics
    u, v = k.pixel_grid()
    dirs_cam = np.stack(
        [(u + du - k.cx) / k.fx, (v + dv - k.cy) / k.fy, np.ones_like(u)], axis=-1
    )
    rot = camera.pose.rotation
    origin = camera.pose.translation
    dirs = dirs_cam @ rot.T  # world-frame ray directions with unit camera-z

    depth = np.full(u.shape, scene.background_depth)
    hit_idx = np.full(u.shape, -1, dtype=np.int64)
    a_out = np.zeros(u.shape)
    b_out = np.zeros(u.shape)

    for idx, patch in enumerate(scene.all_patches()):
        n = patch.normal
        denom = dirs @ n
        num = float(n @ (patch.origin - origin))
        with np.errstate(divide="ignore", invalid="ignore"):
            s_hit = num / denom
        hit = np.isfinite(s_hit) & (np.abs(denom) > 1e-12) & (s_hit > 1e-6)

        pts = origin + s_hit[..., None] * dirs
        q = pts - patch.origin
        eu, ev = patch.edge_u, patch.edge_v
        # local coordinates via the 2x2 Gram system [eu.eu eu.ev; ev.eu ev.ev]
        g00, g01, g11 = eu @ eu, eu @ ev, ev @ ev
        det = g00 * g11 - g01 * g01
        qu = q @ eu
        qv = q @ ev
        a = (g11 * qu - g01 * qv) / det
        b = (g00 * qv - g01 * qu) / det
        hit &= (a >= 0.0) & (a <= 1.0) & (b >= 0.0) & (b <= 1.0)

        closer = hit & (s_hit < depth)
        depth = np.where(closer, s_hit, depth)
        hit_idx = np.where(closer, idx, hit_idx)
        a_out = np.where(closer, a, a_out)
        b_out = np.where(closer, b, b_out)

    return depth, hit_idx, a_out, b_out


def raycast_depth(scene: Scene, camera: Viewpoint) -> DepthMap:
    """Exact per-pixel z-depth of the nearest patch (background on miss)."""
    depth, _, _, _ = _trace(scene, camera)
    return DepthMap(depth, np.ones(depth.shape, bool))


def render(
    scene: Scene,
    camera: Viewpoint,
    viewpoint_id: str = "left_camera",
    frame_index: int = 0,
    supersample: int = 1,
) -> RenderedFrame:
    """Render the scene: nearest-hit texture sampling, deterministic per seed.

    ``supersample`` > 1 averages an N x N subpixel grid per pixel (depth is
    always the center-ray depth).
    """
    if supersample < 1:
        raise SceneError("supersample must be >= 1")
    patches = scene.all_patches()

    def shade(du: float, dv: float):
        depth, hit_idx, a, b = _trace(scene, camera, du, dv)
        img = np.full(depth.shape, scene.background_intensity)
        for idx, patch in enumerate(patches):
            mask = hit_idx == idx
            if mask.any():
                img[mask] = patch.texture.sample(a[mask], b[mask])
        return depth, img

    if supersample == 1:
        depth, img = shade(0.0, 0.0)
    else:
        offsets = (np.arange(supersample) + 0.5) / supersample - 0.5
        acc = None
        for dv in offsets:
            for du in offsets:
                _, img = shade(float(du), float(dv))
                acc = img if acc is None else acc + img
        img = acc / (supersample * supersample)
        depth, _, _, _ = _trace(scene, camera)

    return RenderedFrame(
        image=img,
        depth=DepthMap(depth, np.ones(depth.shape, bool)),
        viewpoint_id=viewpoint_id,
        frame_index=frame_index,
        camera=camera,
    )


# --- trajectories and animation ----------------------------------------------


def default_trajectory(
    n_frames: int = 45,
    translation_amplitude: float = 0.02,
    rotation_amplitude_deg: float = 1.5,
) -> list[Pose]:
    """Small sinusoidal head sway: deterministic, closed form."""
    if n_frames < 1:
        raise SceneError("trajectory needs at least one pose")
    poses = []
    for i in range(n_frames):
        ph = 2.0 * np.pi * i / max(n_frames - 1, 1)
        tx = translation_amplitude * np.sin(1.3 * ph)
        ty = 0.5 * translation_amplitude * np.sin(0.9 * ph + 1.0)
        tz = 0.3 * translation_amplitude * np.sin(0.7 * ph + 2.0)
        yaw = np.deg2rad(rotation_amplitude_deg) * np.sin(1.1 * ph + 0.5)
        pitch = np.deg2rad(0.5 * rotation_amplitude_deg) * np.sin(0.8 * ph + 1.7)
        rot = Pose.rotation_y(yaw) @ Pose.rotation_x(pitch)
        poses.append(Pose(rot, np.array([tx, ty, tz])))
    return poses


def static_trajectory(n_frames: int) -> list[Pose]:
    return [Pose.identity() for _ in range(n_frames)]


def camera_in_world(rig: RigCalibration, rig_pose: Pose, viewpoint_id: str) -> Viewpoint:
    vp = rig.viewpoint(viewpoint_id)
    return Viewpoint(rig_pose.compose(vp.pose), vp.intrinsics)


def animate_rig(
    scene: Scene,
    rig: RigCalibration,
    trajectory: list[Pose],
    supersample: int = 1,
) -> list[tuple[RenderedFrame, RenderedFrame]]:
    """One (left, right) camera frame pair per trajectory pose."""
    if len(trajectory) < 1:
        raise SceneError("trajectory needs at least one pose")
    frames = []
    for i, rig_pose in enumerate(trajectory):
        left = render(scene, camera_in_world(rig, rig_pose, "left_camera"),
                      "left_camera", i, supersample)
        right = render(scene, camera_in_world(rig, rig_pose, "right_camera"),
                       "right_camera", i, supersample)
        frames.append((left, right))
    return frames


# --- benchmark scene suite -----------------------------------------------------


def plane_scene(distance: float = 2.0, name: str | None = None,
                texture: Texture | None = None) -> Scene:
    """Single fronto-parallel plane spanning the frustum at ``distance``."""
    tex = texture or CheckerTexture(squares=12)
    size = max(4.0, 3.2 * distance)
    return Scene(
        patches=(rect_patch("plane", tex, (0.0, 0.0, distance), size, size * 0.8),),
        name=name or f"plane_{distance:g}m",
    )


def two_plane_scene() -> Scene:
    """Foreground card over a distant wall; one strong vertical occlusion edge."""
    bg = rect_patch("background", NoiseTexture(seed=11), (0.0, 0.0, 3.0), 8.0, 6.0)
    fg = rect_patch("foreground", CheckerTexture(squares=6, low=0.2, high=0.9),
                    (-0.15, 0.0, 0.7), 0.5, 0.4)
    return Scene(patches=(bg, fg), name="two_plane")


def cluttered_scene() -> Scene:
    """Multi-patch room, 0.5-4 m, with occluders over slanted surfaces."""
    patches = (
        rect_patch("wall", NoiseTexture(seed=21), (0.0, 0.0, 4.0), 10.0, 8.0),
        rect_patch("slanted_panel", NoiseTexture(seed=22, cells=16),
                   (0.3, 0.1, 2.5), 2.6, 2.0, yaw_deg=50.0),
        rect_patch("desk", CheckerTexture(squares=10, low=0.3, high=0.7),
                   (-0.4, 0.35, 1.2), 0.9, 0.5, pitch_deg=-60.0),
        rect_patch("near_box", CheckerTexture(squares=4, low=0.25, high=0.8),
                   (-0.25, -0.05, 0.6), 0.22, 0.3),
        rect_patch("mid_card", NoiseTexture(seed=23, cells=8, low=0.4, high=0.9),
                   (0.35, -0.15, 1.5), 0.45, 0.35),
        rect_patch("far_poster", NoiseTexture(seed=24, cells=12),
                   (0.9, 0.2, 3.2), 1.1, 0.9, yaw_deg=-25.0),
        rect_patch("hanging_sign", CheckerTexture(squares=5, low=0.35, high=0.95),
                   (0.1, -0.45, 2.2), 0.5, 0.3),
    )
    return Scene(patches=patches, name="cluttered")


def fiducial_scene(
    target_distance: float = 1.0,
    target_size: float = 0.5,
    target_center_x: float = 0.05,
    occluder: bool = True,
) -> Scene:
    """Blob-grid target plus a nearby foreground edge over a distant wall."""
    target = FiducialTarget(
        rect_patch("target", BlobGridTexture(),
                   (target_center_x, 0.0, target_distance), target_size, target_size)
    )
    patches = [rect_patch("backdrop", NoiseTexture(seed=31), (0.0, 0.0, 3.0), 8.0, 6.0)]
    if occluder:
        # right edge sits left of the target with clearance for trajectory sway
        patches.append(
            rect_patch("occluder", CheckerTexture(squares=5, low=0.45, high=0.75),
                       (-0.33, 0.0, 0.5), 0.3, 0.4)
        )
    return Scene(patches=tuple(patches), targets=(target,), name="fiducial")


def benchmark_suite() -> dict[str, Scene]:
    """The default four-scene suite used by the benchmark pipeline."""
    return {
        "plane_2m": plane_scene(2.0, name="plane_2m"),
        "two_plane": two_plane_scene(),
        "cluttered": cluttered_scene(),
        "fiducial": fiducial_scene(),
    }
