"""Evaluation metrics for passthrough modes.

Two families:

* Spatial reprojection error: reproject every pixel into the eye view twice,
  once with estimated and once with ground-truth depth, and take the L1 norm
  of the pixel residual. Accompanied by plain depth MAE and depth error
  bucketed by ground-truth range.
* Planar-target warping error: detect a known bordered blob-grid target in
  the synthesized image, match its features against the reference texture,
  fit a homography with RANSAC, and report the fit residuals. A clip-level
  runner averages the residuals over frames.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .depth import DepthMap
from .geometry import Homography, RigCalibration, Viewpoint, project, reproject_pixel
from .passthrough import SynthesizedView, WarpField, bilinear_sample
from .scene import BlobGridTexture, FiducialTarget


class MetricError(ValueError):
    pass


class TargetDetectionError(MetricError):
    pass


# --- error statistics ---------------------------------------------------------


@dataclass(frozen=True)
class ErrorStats:
    mean: float
    std: float
    median: float
    p90: float
    count: int

    @classmethod
    def from_values(cls, values: np.ndarray) -> "ErrorStats":
        v = np.asarray(values, dtype=np.float64).ravel()
        if v.size == 0:
            raise MetricError("no valid samples to summarize")
        med, p90 = np.percentile(v, [50, 90])
        return cls(mean=float(v.mean()), std=float(v.std()),
                   median=float(med), p90=float(p90), count=int(v.size))

    def as_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "median": self.median,
                "p90": self.p90, "count": self.count}


@dataclass(eq=False)
class SpatialErrorMap:
    """Per-pixel L1 reprojection error in pixels, with validity mask."""

    errors: np.ndarray
    valid: np.ndarray

    def stats(self) -> ErrorStats:
        return ErrorStats.from_values(self.errors[self.valid])


def spatial_reprojection_error(
    d_est: DepthMap,
    d_gt: DepthMap,
    rig: RigCalibration,
    src: str,
    dst: str,
) -> tuple[SpatialErrorMap, ErrorStats]:
    """L1 distance between eye projections under estimated vs true depth.

    A pixel contributes only if both depths are valid and both reprojections
    land inside the destination frame in front of the viewpoint. Note that
    the reprojected coordinate is a Moebius function of depth, which makes
    the per-pixel residual (and with this masking rule, the whole metric)
    symmetric under swapping the two maps.
    """
    if d_est.values.shape != d_gt.values.shape:
        raise MetricError("depth map dimensions differ")
    h, w = d_est.values.shape
    u, v = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    pixels = np.stack([u, v], axis=-1)

    p_est, ok_est = reproject_pixel(pixels, d_est.values, src, dst, rig)
    p_gt, ok_gt = reproject_pixel(pixels, d_gt.values, src, dst, rig)

    k_dst = rig.viewpoint(dst).intrinsics
    valid = (
        d_est.valid & d_gt.valid & ok_est & ok_gt
    )
    valid &= np.where(valid, k_dst.contains(np.nan_to_num(p_est)), False)
    valid &= np.where(valid, k_dst.contains(np.nan_to_num(p_gt)), False)

    err = np.zeros((h, w))
    err[valid] = np.abs(p_est[valid] - p_gt[valid]).sum(axis=-1)
    emap = SpatialErrorMap(err, valid)
    return emap, emap.stats()


def depth_mae(d_est: DepthMap, d_gt: DepthMap) -> ErrorStats:
    """Stats of |D_est - D_GT| in meters over the valid overlap."""
    if d_est.values.shape != d_gt.values.shape:
        raise MetricError("depth map dimensions differ")
    m = d_est.valid & d_gt.valid
    if not m.any():
        raise MetricError("no valid overlap between depth maps")
    return ErrorStats.from_values(np.abs(d_est.values[m] - d_gt.values[m]))


@dataclass(frozen=True)
class DepthErrorByRange:
    """Per-range-bin mean absolute depth error, all in millimeters."""

    bin_edges_mm: tuple[float, ...]
    mae_mm: tuple[float, ...]
    counts: tuple[int, ...]

    def rows(self) -> list[dict]:
        return [
            {
                "range_lo_mm": self.bin_edges_mm[i],
                "range_hi_mm": self.bin_edges_mm[i + 1],
                "mae_mm": self.mae_mm[i],
                "count": self.counts[i],
            }
            for i in range(len(self.mae_mm))
        ]


def default_range_bins_mm() -> np.ndarray:
    return np.arange(250.0, 4000.0 + 1, 250.0)


def depth_error_by_range(
    d_est: DepthMap,
    d_gt: DepthMap,
    bin_edges_mm: np.ndarray | None = None,
) -> DepthErrorByRange:
    """Bucket |D_est - D_GT| by ground-truth depth range."""
    edges = np.asarray(bin_edges_mm if bin_edges_mm is not None else default_range_bins_mm(),
                       dtype=np.float64)
    if len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise MetricError("bin edges must be increasing with at least one bin")
    m = d_est.valid & d_gt.valid
    if not m.any():
        raise MetricError("no valid overlap between depth maps")
    gt_mm = d_gt.values[m] * 1000.0
    err_mm = np.abs(d_est.values[m] - d_gt.values[m]) * 1000.0
    idx = np.digitize(gt_mm, edges) - 1
    nbins = len(edges) - 1
    mae = []
    counts = []
    for b in range(nbins):
        sel = idx == b
        counts.append(int(sel.sum()))
        mae.append(float(err_mm[sel].mean()) if sel.any() else float("nan"))
    return DepthErrorByRange(tuple(edges.tolist()), tuple(mae), tuple(counts))


# --- homography fitting ---------------------------------------------------------


@dataclass(frozen=True)
class Correspondence:
    """Reference-texture point matched to a passthrough-image point."""

    reference: tuple[float, float]
    observed: tuple[float, float]
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise MetricError(f"confidence {self.confidence} outside [0, 1]")


def _hartley_normalize(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = pts.mean(axis=0)
    scale = np.linalg.norm(pts - c, axis=1).mean()
    s = np.sqrt(2.0) / scale if scale > 1e-12 else 1.0
    t = np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])
    ph = np.concatenate([pts, np.ones((len(pts), 1))], axis=1)
    return (ph @ t.T)[:, :2], t


def fit_homography_dlt(src: np.ndarray, dst: np.ndarray) -> Homography:
    """Least-squares DLT with Hartley normalization (exact for 4 points)."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[0] < 4:
        raise MetricError("homography fit needs at least 4 point pairs")
    sn, t_src = _hartley_normalize(src)
    dn, t_dst = _hartley_normalize(dst)
    n = len(sn)
    a = np.zeros((2 * n, 9))
    x, y = sn[:, 0], sn[:, 1]
    u, w = dn[:, 0], dn[:, 1]
    a[0::2, 0] = -x
    a[0::2, 1] = -y
    a[0::2, 2] = -1.0
    a[0::2, 6] = u * x
    a[0::2, 7] = u * y
    a[0::2, 8] = u
    a[1::2, 3] = -x
    a[1::2, 4] = -y
    a[1::2, 5] = -1.0
    a[1::2, 6] = w * x
    a[1::2, 7] = w * y
    a[1::2, 8] = w
    _, _, vt = np.linalg.svd(a)
    h_norm = vt[-1].reshape(3, 3)
    return Homography(np.linalg.inv(t_dst) @ h_norm @ t_src)


def _any_collinear(pts: np.ndarray, tol: float = 1e-6) -> bool:
    for skip in range(4):
        tri = np.delete(pts, skip, axis=0)
        area = abs(
            (tri[1, 0] - tri[0, 0]) * (tri[2, 1] - tri[0, 1])
            - (tri[2, 0] - tri[0, 0]) * (tri[1, 1] - tri[0, 1])
        )
        if area < tol:
            return True
    return False


@dataclass(frozen=True)
class RansacParams:
    inlier_threshold: float = 3.0
    max_iterations: int = 2000
    confidence: float = 0.999
    seed: int = 0


@dataclass(eq=False)
class RansacResult:
    homography: Homography
    inliers: np.ndarray
    residuals: np.ndarray
    iterations: int

    @property
    def n_inliers(self) -> int:
        return int(self.inliers.sum())


def fit_homography_ransac(
    matches: list[Correspondence],
    params: RansacParams = RansacParams(),
) -> RansacResult:
    """RANSAC homography: 4-point DLT hypotheses, adaptive iteration count,
    least-squares refit on the inlier set.

    Residuals are Euclidean distances between mapped reference points and
    observations, reported for every supplied match.
    """
    if len(matches) < 4:
        raise MetricError(f"RANSAC needs at least 4 matches, got {len(matches)}")
    refs = np.array([m.reference for m in matches], dtype=np.float64)
    obs = np.array([m.observed for m in matches], dtype=np.float64)
    n = len(matches)
    rng = np.random.default_rng(params.seed)

    best_count = -1
    best_inliers = None
    needed = params.max_iterations
    it = 0
    while it < min(needed, params.max_iterations):
        it += 1
        idx = rng.choice(n, size=4, replace=False)
        if _any_collinear(refs[idx]) or _any_collinear(obs[idx]):
            continue
        try:
            h = fit_homography_dlt(refs[idx], obs[idx])
        except Exception:
            continue
        res = np.linalg.norm(h.apply(refs) - obs, axis=1)
        inliers = res < params.inlier_threshold
        count = int(inliers.sum())
        if count > best_count:
            best_count = count
            best_inliers = inliers
            w = count / n
            if w > 0:
                denom = np.log1p(-min(w**4, 1 - 1e-12))
                needed = min(
                    params.max_iterations,
                    int(np.ceil(np.log(1.0 - params.confidence) / denom)) if denom < 0 else 1,
                )

    if best_inliers is None or best_count < 4:
        raise MetricError("RANSAC failed to find a non-degenerate hypothesis")

    h_final = fit_homography_dlt(refs[best_inliers], obs[best_inliers])
    residuals = np.linalg.norm(h_final.apply(refs) - obs, axis=1)
    return RansacResult(
        homography=h_final,
        inliers=residuals < params.inlier_threshold,
        residuals=residuals,
        iterations=it,
    )


# --- target detection -----------------------------------------------------------


@dataclass(eq=False)
class TargetDetection:
    quad: np.ndarray            # (4, 2) outer patch corners in image pixels
    inner_quad: np.ndarray      # (4, 2) inner border-edge corners
    crop: np.ndarray            # (R, R) rectified at reference resolution
    crop_to_image: Homography   # reference/crop pixels -> image pixels
    mode: str


def _largest_component(mask: np.ndarray, exclude_border: bool = True) -> np.ndarray:
    """Largest 4-connected component of a boolean mask (run-based union-find).

    ``exclude_border`` drops components touching the image border: synthesized
    views carry dark out-of-frustum sentinel bands along the edges, while a
    fully visible target never reaches them.
    """
    h, w = mask.shape
    parent: list[int] = []

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: int, b: int) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra

    runs = []  # (row, start, end, label)
    touches: list[bool] = []
    prev_runs: list[tuple[int, int, int]] = []  # (start, end, label) of previous row
    for row in range(h):
        line = mask[row]
        if not line.any():
            prev_runs = []
            continue
        padded = np.concatenate([[False], line, [False]])
        d = np.diff(padded.astype(np.int8))
        starts = np.nonzero(d == 1)[0]
        ends = np.nonzero(d == -1)[0]
        cur = []
        for s, e in zip(starts, ends):
            label = len(parent)
            parent.append(label)
            touches.append(row in (0, h - 1) or s == 0 or e == w)
            for ps, pe, plabel in prev_runs:
                if s < pe and ps < e:  # columns overlap
                    union(plabel, label)
            cur.append((int(s), int(e), label))
            runs.append((row, int(s), int(e), label))
        prev_runs = cur

    if not runs:
        return np.zeros_like(mask)

    sizes: dict[int, int] = {}
    border_roots: set[int] = set()
    for (row, s, e, label), touch in zip(runs, touches):
        root = find(label)
        sizes[root] = sizes.get(root, 0) + (e - s)
        if touch:
            border_roots.add(root)
    candidates = {k: v for k, v in sizes.items() if not (exclude_border and k in border_roots)}
    if not candidates:
        return np.zeros_like(mask)
    biggest = max(candidates, key=lambda k: candidates[k])
    out = np.zeros_like(mask)
    for row, s, e, label in runs:
        if find(label) == biggest:
            out[row, s:e] = True
    return out


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Andrew monotone chain; returns hull vertices counter-clockwise."""
    pts = np.unique(points, axis=0)
    if len(pts) < 3:
        return pts
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(tuple(p))
    upper = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(tuple(p))
    return np.array(lower[:-1] + upper[:-1], dtype=np.float64)


def _coarse_quad(hull: np.ndarray) -> np.ndarray:
    """Four extreme hull vertices of a convex quad, ordered around the centroid."""
    c = hull.mean(axis=0)
    p0 = hull[np.argmax(np.linalg.norm(hull - c, axis=1))]
    p1 = hull[np.argmax(np.linalg.norm(hull - p0, axis=1))]
    d = p1 - p0
    norm = np.array([-d[1], d[0]])
    side = (hull - p0) @ norm
    p2 = hull[np.argmax(side)]
    p3 = hull[np.argmin(side)]
    quad = np.stack([p0, p1, p2, p3])
    ang = np.arctan2(quad[:, 1] - c[1], quad[:, 0] - c[0])
    return quad[np.argsort(ang)]


def _quad_area(quad: np.ndarray) -> float:
    x, y = quad[:, 0], quad[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _fit_line_tls(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Total-least-squares line: returns (point_on_line, unit_direction)."""
    c = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - c)
    return c, vt[0]


def _intersect_lines(c1, d1, c2, d2) -> np.ndarray:
    a = np.stack([d1, -d2], axis=1)
    t = np.linalg.solve(a, c2 - c1)
    return c1 + t[0] * d1


def _refine_inner_edges(
    image: np.ndarray,
    quad: np.ndarray,
    border_frac: float,
    samples_per_side: int = 24,
    profile_halfwidth: float = 3.0,
    profile_step: float = 0.25,
) -> np.ndarray:
    """Sub-pixel inner-border corners via edge-transition fitting.

    For each side of the coarse outer quad, intensity profiles are sampled
    along the inward normal across the dark-to-light border transition. The
    edge model is a monotone ramp between the border and field plateaus; its
    50% level crossing localizes the edge on each profile, a total-least-
    squares line is fit per side, and adjacent lines intersect in corners.
    """
    c = quad.mean(axis=0)
    lines = []
    for k in range(4):
        a = quad[k]
        b = quad[(k + 1) % 4]
        direction = b - a
        inward = np.array([-direction[1], direction[0]])
        inward /= np.linalg.norm(inward)
        if (c - a) @ inward < 0:
            inward = -inward
        # distance to the opposite side along the inward normal
        far = 0.5 * ((quad[(k + 2) % 4] - a) @ inward + (quad[(k + 3) % 4] - a) @ inward)
        offset = border_frac * far
        # window wide enough to absorb coarse-quad error from border smearing
        # (warp stretch) but still inside the dark band on the outer side
        halfwidth = float(np.clip(0.45 * offset, profile_halfwidth, 10.0))
        steps = np.arange(-halfwidth, halfwidth + 1e-9, profile_step)

        ts = np.linspace(0.12, 0.88, samples_per_side)
        base = a[None, :] + ts[:, None] * direction[None, :] + offset * inward[None, :]
        pos = base[:, None, :] + steps[None, :, None] * inward[None, None, :]
        prof = bilinear_sample(image, pos[..., 0], pos[..., 1], cval=0.0)

        lo = np.median(prof[:, :4], axis=1)
        hi = np.median(prof[:, -4:], axis=1)
        level = 0.5 * (lo + hi)

        edge_pts = []
        for i in range(len(ts)):
            if hi[i] - lo[i] < 0.1:  # no usable contrast on this profile
                continue
            above = prof[i] >= level[i]
            if not above.any() or above[0]:
                continue
            j = int(np.argmax(above))
            denom = prof[i, j] - prof[i, j - 1]
            frac = (level[i] - prof[i, j - 1]) / denom if abs(denom) > 1e-12 else 0.5
            s_star = steps[j - 1] + float(np.clip(frac, 0.0, 1.0)) * profile_step
            edge_pts.append(base[i] + s_star * inward)
        if len(edge_pts) < samples_per_side // 2:
            raise TargetDetectionError(
                f"border edge {k}: too few usable edge profiles "
                f"({len(edge_pts)}/{samples_per_side})"
            )
        lines.append(_fit_line_tls(np.array(edge_pts)))

    corners = []
    for k in range(4):
        c1, d1 = lines[(k - 1) % 4]
        c2, d2 = lines[k]
        corners.append(_intersect_lines(c1, d1, c2, d2))
    return np.array(corners)


def _order_to_expected(quad: np.ndarray, expected: np.ndarray) -> np.ndarray:
    """Reorder 4 detected corners to minimize total distance to expectations."""
    best = None
    best_cost = np.inf
    base = list(range(4))
    for start in range(4):
        for flip in (1, -1):
            order = [base[(start + flip * i) % 4] for i in range(4)]
            cost = np.linalg.norm(quad[order] - expected, axis=1).sum()
            if cost < best_cost:
                best_cost = cost
                best = order
    return quad[best]


def _canonical_order(quad: np.ndarray) -> np.ndarray:
    c = quad.mean(axis=0)
    ang = np.arctan2(quad[:, 1] - c[1], quad[:, 0] - c[0])
    ordered = quad[np.argsort(ang)]
    start = np.argmin(ordered[:, 0] + ordered[:, 1])
    return np.roll(ordered, -start, axis=0)


def expected_target_quad(
    target: FiducialTarget,
    camera: Viewpoint,
    warp: WarpField | None = None,
) -> np.ndarray:
    """Outer target corners projected into the (possibly warped) image."""
    corners = target.corner_points_3d()
    local = camera.pose.inverse_transform(corners)
    pix = project(local, camera.intrinsics)
    if warp is not None:
        pix = warp.apply(pix)
    return pix


def _rectify(image: np.ndarray, h_ref_to_img: Homography, resolution: int) -> np.ndarray:
    xx, yy = np.meshgrid(
        np.arange(resolution, dtype=np.float64), np.arange(resolution, dtype=np.float64)
    )
    pts = h_ref_to_img.apply(np.stack([xx, yy], axis=-1))
    return bilinear_sample(image, pts[..., 0], pts[..., 1], cval=0.0)


def detect_target(
    image: np.ndarray,
    target: FiducialTarget,
    expected_quad: np.ndarray | None = None,
    mode: str = "detect",
    min_size_px: float = 200.0,
    dark_threshold: float = 0.22,
) -> TargetDetection:
    """Locate the bordered target and return its rectified crop.

    ``detect`` treats the image as a black box: threshold-and-contour for the
    dark border, gradient-fit sub-pixel refinement of its inner edge, and a
    four-point rectification. ``oracle`` instead trusts ``expected_quad``
    (the known corners pushed through the ground-truth warp). When provided
    in detect mode, ``expected_quad`` only disambiguates corner ordering.
    """
    tex = target.texture
    r = tex.resolution

    if mode == "oracle":
        if expected_quad is None:
            raise MetricError("oracle mode needs expected_quad")
        quad = np.asarray(expected_quad, dtype=np.float64)
        if np.isnan(quad).any():
            raise TargetDetectionError("expected quad falls outside the warp field")
        h_map = fit_homography_dlt(tex.outer_corners_px(), quad)
        inner = h_map.apply(tex.inner_corners_px())
        return TargetDetection(quad=quad, inner_quad=inner,
                               crop=_rectify(image, h_map, r),
                               crop_to_image=h_map, mode="oracle")
    if mode != "detect":
        raise MetricError(f"unknown detection mode {mode!r}")

    mask = image < dark_threshold
    if not mask.any():
        raise TargetDetectionError("target not found: no pixels below the border threshold")
    component = _largest_component(mask)
    ys, xs = np.nonzero(component)
    if len(xs) < 400:
        raise TargetDetectionError(
            f"target not found: largest dark region has only {len(xs)} pixels"
        )
    hull = _convex_hull(np.stack([xs, ys], axis=-1).astype(np.float64))
    coarse = _coarse_quad(hull)
    area = _quad_area(coarse)
    if area < min_size_px * min_size_px:
        raise TargetDetectionError(
            f"target too small: quad area {area:.0f} px^2 < {min_size_px}^2"
        )

    border_frac = tex.border_px / r
    inner = _refine_inner_edges(image, coarse, border_frac)
    if expected_quad is not None:
        inner = _order_to_expected(inner, np.asarray(expected_quad, dtype=np.float64))
    else:
        inner = _canonical_order(inner)

    h_map = fit_homography_dlt(tex.inner_corners_px(), inner)
    quad = h_map.apply(tex.outer_corners_px())
    return TargetDetection(quad=quad, inner_quad=inner,
                           crop=_rectify(image, h_map, r),
                           crop_to_image=h_map, mode="detect")


# --- feature matching -----------------------------------------------------------


@functools.lru_cache(maxsize=8)
def _reference_raster_cached(texture: BlobGridTexture) -> np.ndarray:
    return texture.reference_raster()


def match_features(
    target: FiducialTarget,
    crop: np.ndarray,
    crop_to_image: Homography | None = None,
    search_radius: int = 6,
    template_radius: int = 8,
    confidence_threshold: float = 0.3,
) -> list[Correspondence]:
    """Match every reference blob against the rectified crop by NCC.

    Each blob's template is correlated over a +-search_radius window; the
    peak is refined to sub-pixel by a quadratic fit and becomes the observed
    point (mapped to image pixels when ``crop_to_image`` is given).
    Correlation peak value is the match confidence; matches below
    ``confidence_threshold`` are discarded.
    """
    tex = target.texture
    raster = _reference_raster_cached(tex)
    r = tex.resolution
    if crop.shape != (r, r):
        raise MetricError(f"crop must be {r}x{r}, got {crop.shape}")
    centers = tex.feature_centers_px()
    tr = template_radius
    sr = search_radius

    matches: list[Correspondence] = []
    for cx, cy in centers:
        icx, icy = int(round(cx)), int(round(cy))
        if not (tr + sr <= icx < r - tr - sr and tr + sr <= icy < r - tr - sr):
            continue
        template = raster[icy - tr : icy + tr + 1, icx - tr : icx + tr + 1]
        region = crop[icy - tr - sr : icy + tr + sr + 1, icx - tr - sr : icx + tr + sr + 1]
        windows = sliding_window_view(region, (2 * tr + 1, 2 * tr + 1))

        t0 = template - template.mean()
        tnorm = np.sqrt((t0 * t0).sum())
        wmean = windows.mean(axis=(-2, -1), keepdims=True)
        w0 = windows - wmean
        wnorm = np.sqrt((w0 * w0).sum(axis=(-2, -1)))
        corr = np.einsum("ijkl,kl->ij", w0, t0)
        denom = wnorm * tnorm
        ncc = np.where(denom > 1e-12, corr / np.maximum(denom, 1e-12), 0.0)

        peak_flat = int(np.argmax(ncc))
        py, px = np.unravel_index(peak_flat, ncc.shape)
        conf = float(np.clip(ncc[py, px], 0.0, 1.0))
        if conf < confidence_threshold:
            continue

        def parabola(cm, c0, cp):
            denom_p = cm - 2 * c0 + cp
            if abs(denom_p) < 1e-12:
                return 0.0
            return float(np.clip(0.5 * (cm - cp) / denom_p, -1.0, 1.0))

        dx = parabola(ncc[py, px - 1], ncc[py, px], ncc[py, px + 1]) if 0 < px < 2 * sr else 0.0
        dy = parabola(ncc[py - 1, px], ncc[py, px], ncc[py + 1, px]) if 0 < py < 2 * sr else 0.0

        shift = np.array([px - sr + dx, py - sr + dy])
        observed_crop = np.array([cx, cy]) + shift
        observed = (
            crop_to_image.apply(observed_crop) if crop_to_image is not None else observed_crop
        )
        matches.append(
            Correspondence(
                reference=(float(cx), float(cy)),
                observed=(float(observed[0]), float(observed[1])),
                confidence=conf,
            )
        )
    return matches


# --- clip-level warping metric -----------------------------------------------------


@dataclass(frozen=True)
class WarpingParams:
    search_radius: int = 6
    template_radius: int = 8
    confidence_threshold: float = 0.3
    min_matches: int = 100
    detection_mode: str = "detect"
    residuals_over: str = "all"  # "all" confidence-filtered matches, or "inliers"
    localization_noise_sigma: float = 0.0
    noise_seed: int = 0
    ransac: RansacParams = field(default_factory=RansacParams)


@dataclass(eq=False)
class FrameWarpResult:
    frame_index: int
    n_matches: int
    residuals: np.ndarray | None
    insufficient: bool
    message: str = ""

    @property
    def mean(self) -> float:
        return float(self.residuals.mean()) if self.residuals is not None else float("nan")


@dataclass(eq=False)
class WarpingReport:
    frames: list[FrameWarpResult]
    mean: float
    std: float
    median: float
    p90: float
    frames_used: int
    matches_per_frame: list[int]

    def as_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std": self.std,
            "median": self.median,
            "p90": self.p90,
            "frames_used": self.frames_used,
            "frames_total": len(self.frames),
            "matches_per_frame": self.matches_per_frame,
            "insufficient_frames": [f.frame_index for f in self.frames if f.insufficient],
        }


def warping_error(
    clip: list[SynthesizedView],
    target: FiducialTarget,
    cameras: list[Viewpoint],
    params: WarpingParams = WarpingParams(),
) -> WarpingReport:
    """Residual warping error of a planar target over a clip.

    Per frame: detect -> match -> RANSAC homography -> residuals. The report
    aggregates the mean +- std of per-frame means plus the pooled median and
    90th percentile. Frames with fewer than ``min_matches`` confident matches
    are flagged insufficient and skipped.
    """
    if len(clip) < 1:
        raise MetricError("clip must contain at least one frame")
    if len(cameras) != len(clip):
        raise MetricError("need one camera viewpoint per frame")

    results: list[FrameWarpResult] = []
    for view, camera in zip(clip, cameras):
        idx = view.frame_index
        try:
            expected = expected_target_quad(target, camera, view.warp)
            det = detect_target(view.image, target, expected_quad=expected,
                                mode=params.detection_mode)
            matches = match_features(
                target, det.crop, det.crop_to_image,
                search_radius=params.search_radius,
                template_radius=params.template_radius,
                confidence_threshold=params.confidence_threshold,
            )
        except MetricError as exc:
            results.append(FrameWarpResult(idx, 0, None, True, str(exc)))
            continue

        if params.localization_noise_sigma > 0:
            rng = np.random.default_rng([params.noise_seed, idx])
            noise = rng.normal(0.0, params.localization_noise_sigma, (len(matches), 2))
            matches = [
                replace(m, observed=(m.observed[0] + n[0], m.observed[1] + n[1]))
                for m, n in zip(matches, noise)
            ]

        if len(matches) < params.min_matches:
            results.append(FrameWarpResult(
                idx, len(matches), None, True,
                f"insufficient matches: {len(matches)} < {params.min_matches}"))
            continue

        fit = fit_homography_ransac(matches, params.ransac)
        residuals = fit.residuals[fit.inliers] if params.residuals_over == "inliers" else fit.residuals
        results.append(FrameWarpResult(idx, len(matches), residuals, False))

    usable = [f for f in results if not f.insufficient]
    if not usable:
        raise MetricError(
            "all frames insufficient: " + "; ".join(f.message for f in results[:5])
        )
    per_frame_means = np.array([f.mean for f in usable])
    pooled = np.concatenate([f.residuals for f in usable])
    med, p90 = np.percentile(pooled, [50, 90])
    return WarpingReport(
        frames=results,
        mean=float(per_frame_means.mean()),
        std=float(per_frame_means.std(ddof=1)) if len(per_frame_means) > 1 else 0.0,
        median=float(med),
        p90=float(p90),
        frames_used=len(usable),
        matches_per_frame=[f.n_matches for f in results],
    )
