"""Find joints, members, load arrows and supports in a text-free binary
sketch.

The stages run in a fixed order and each one works on what the previous
stages left behind: joints (erosion survivors), members (ink between joint
centres), then the residual after masking both out, arrows in the residual,
and finally supports in what remains once arrows are removed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage
from skimage.morphology import skeletonize

from . import raster
from .raster import Region


class SegmentationError(ValueError):
    pass


@dataclass(frozen=True)
class Joint:
    id: int
    center: tuple[float, float]
    radius_est: float


@dataclass(frozen=True)
class MemberSeg:
    id: int
    joint_a: int
    joint_b: int
    coverage: float
    midpoint: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class ArrowSeg:
    id: int
    region: Region = field(repr=False)
    orientation_deg: float
    tip: tuple[float, float]
    tail: tuple[float, float]
    target_joint: int


@dataclass(frozen=True)
class SupportSeg:
    id: int
    kind: str  # "pinned" | "roller"
    apex_joint: Optional[int]
    roll_angle_deg: Optional[float]
    apex: tuple[float, float] = (0.0, 0.0)
    region: Optional[Region] = field(default=None, repr=False)


@dataclass(frozen=True)
class SegParams:
    joint_se_radius: Optional[float] = None  # None: 1.5 x median stroke thickness
    joint_se_factor: float = 1.5
    member_coverage_min: float = 0.90
    joint_exclusion: float = 1.5  # member sampling skips this many joint radii
    collinear_tol_px: float = 2.0
    collinear_tol_frac: float = 0.01
    member_band_margin: float = 1.5  # px cleared beyond half the stroke width
    residual_min_area: int = 12  # residual specks below this are dropped
    arrow_line_min: float = 0.95
    arrow_shift_min: float = 0.01
    support_band: tuple[float, float] = (0.65, 0.75)
    support_shift_min: float = 0.01
    roller_dilation_frac: float = 0.20  # disk diameter as a fraction of max bbox side
    roller_line_min: float = 0.95
    orphan_factor: float = 3.0


@dataclass
class Segmentation:
    joints: list
    members: list
    arrows: list
    supports: list
    stroke_width: float
    issues: list = field(default_factory=list)  # (code, subject, message)
    stages: dict = field(default_factory=dict)  # name -> mask, for debugging


# ---------------------------------------------------------------------------
# Joints


def stroke_thickness(img: np.ndarray) -> float:
    """Typical line width: twice the median distance-to-background over the
    skeleton."""
    img = np.asarray(img, dtype=bool)
    if not img.any():
        return 1.0
    skel = skeletonize(img)
    if not skel.any():
        return 1.0
    dist = ndimage.distance_transform_edt(np.pad(img, 1))[1:-1, 1:-1]
    return float(2.0 * np.median(dist[skel]))


def detect_joints(img: np.ndarray, se_radius: float) -> list[Joint]:
    """Joints are the blobs that survive erosion by a disk of ``se_radius``."""
    if se_radius < 1:
        raise SegmentationError("se_radius must be >= 1")
    img = np.asarray(img, dtype=bool)
    se = raster.disk(se_radius)
    survivors = raster.erode(img, se)
    labels, n = raster.label_image(survivors, 8)
    if n == 0:
        raise SegmentationError("no joints found")
    joints = []
    slices = ndimage.find_objects(labels)
    pad = se.reach + 1
    for i, sl in enumerate(slices, start=1):
        y0, x0 = max(sl[0].start - pad, 0), max(sl[1].start - pad, 0)
        y1, x1 = min(sl[0].stop + pad, img.shape[0]), min(sl[1].stop + pad, img.shape[1])
        local = labels[y0:y1, x0:x1] == i
        ys, xs = np.nonzero(local)
        center = (float(xs.mean() + x0), float(ys.mean() + y0))
        grown = raster.dilate(local, se)
        joints.append((center, math.sqrt(float(grown.sum()) / math.pi)))
    # ids follow raster order of the centres so reruns are stable
    joints.sort(key=lambda j: (round(j[0][1], 6), round(j[0][0], 6)))
    return [Joint(k, c, r) for k, (c, r) in enumerate(joints, start=1)]


# ---------------------------------------------------------------------------
# Members


def _segment_samples(a, b, skip_a: float, skip_b: float) -> np.ndarray:
    (xa, ya), (xb, yb) = a, b
    L = math.hypot(xb - xa, yb - ya)
    if L <= skip_a + skip_b:
        return np.zeros((0, 2))
    t = np.arange(skip_a, L - skip_b + 1e-9, 1.0) / L
    return np.column_stack((xa + t * (xb - xa), ya + t * (yb - ya)))


def _point_segment_distance(p, a, b) -> tuple[float, float]:
    """Distance from p to segment ab and the projection parameter."""
    (px, py), (xa, ya), (xb, yb) = p, a, b
    dx, dy = xb - xa, yb - ya
    L2 = dx * dx + dy * dy
    t = ((px - xa) * dx + (py - ya) * dy) / L2 if L2 else 0.0
    tc = min(1.0, max(0.0, t))
    return math.hypot(px - (xa + tc * dx), py - (ya + tc * dy)), t


def detect_members(
    img: np.ndarray,
    joints: list[Joint],
    coverage_min: float = 0.90,
    params: SegParams = SegParams(),
) -> list[MemberSeg]:
    """Test every joint pair for ink along the centre-to-centre segment, then
    drop spans that run straight through an intermediate joint."""
    if len(joints) < 2:
        return []
    img = np.asarray(img, dtype=bool)
    near = raster.dilate(img, raster.disk(1))
    h, w = img.shape
    by_id = {j.id: j for j in joints}
    cand: dict[tuple[int, int], float] = {}
    for i, ja in enumerate(joints):
        for jb in joints[i + 1 :]:
            pts = _segment_samples(ja.center, jb.center, params.joint_exclusion * ja.radius_est, params.joint_exclusion * jb.radius_est)
            if len(pts) == 0:
                continue
            xs = np.clip(np.rint(pts[:, 0]).astype(int), 0, w - 1)
            ys = np.clip(np.rint(pts[:, 1]).astype(int), 0, h - 1)
            cov = float(near[ys, xs].mean())
            if cov >= coverage_min:
                cand[(min(ja.id, jb.id), max(ja.id, jb.id))] = cov

    def linked(p, q):
        return (min(p, q), max(p, q)) in cand

    kept = {}
    for (a, b), cov in cand.items():
        A, B = by_id[a].center, by_id[b].center
        span = math.hypot(B[0] - A[0], B[1] - A[1])
        tol = max(params.collinear_tol_px, params.collinear_tol_frac * span)
        through = False
        for j in joints:
            if j.id in (a, b):
                continue
            d, t = _point_segment_distance(j.center, A, B)
            if 0.0 < t < 1.0 and d <= tol and linked(a, j.id) and linked(j.id, b):
                through = True
                break
        if not through:
            kept[(a, b)] = cov
    out = []
    for k, ((a, b), cov) in enumerate(sorted(kept.items()), start=1):
        A, B = by_id[a].center, by_id[b].center
        out.append(MemberSeg(k, a, b, cov, ((A[0] + B[0]) / 2.0, (A[1] + B[1]) / 2.0)))
    return out


def subtract_segmented(
    img: np.ndarray,
    joints: list[Joint],
    members: list[MemberSeg],
    stroke_width: float = 3.0,
    params: SegParams = SegParams(),
) -> np.ndarray:
    """Clear joint disks (1.5 radii) and a band of half the stroke width plus
    a margin around every member centre line."""
    out = np.asarray(img, dtype=bool).copy()
    if not out.any():
        return out
    h, w = out.shape
    by_id = {j.id: j for j in joints}
    for j in joints:
        _clear_disk(out, j.center, params.joint_exclusion * j.radius_est)
    half = stroke_width / 2.0 + params.member_band_margin
    for m in members:
        (xa, ya), (xb, yb) = by_id[m.joint_a].center, by_id[m.joint_b].center
        x0, x1 = int(max(math.floor(min(xa, xb) - half), 0)), int(min(math.ceil(max(xa, xb) + half), w - 1))
        y0, y1 = int(max(math.floor(min(ya, yb) - half), 0)), int(min(math.ceil(max(ya, yb) + half), h - 1))
        if x1 < x0 or y1 < y0:
            continue
        yy, xx = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
        dx, dy = xb - xa, yb - ya
        L2 = dx * dx + dy * dy
        t = np.clip(((xx - xa) * dx + (yy - ya) * dy) / L2, 0.0, 1.0) if L2 else np.zeros_like(xx, dtype=float)
        d = np.hypot(xx - (xa + t * dx), yy - (ya + t * dy))
        out[y0 : y1 + 1, x0 : x1 + 1] &= d > half
    return out


def _clear_disk(img: np.ndarray, center, radius: float) -> None:
    h, w = img.shape
    cx, cy = center
    x0, x1 = max(int(math.floor(cx - radius)), 0), min(int(math.ceil(cx + radius)), w - 1)
    y0, y1 = max(int(math.floor(cy - radius)), 0), min(int(math.ceil(cy + radius)), h - 1)
    if x1 < x0 or y1 < y0:
        return
    yy, xx = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    img[y0 : y1 + 1, x0 : x1 + 1] &= (xx - cx) ** 2 + (yy - cy) ** 2 > radius * radius


# ---------------------------------------------------------------------------
# Arrows


def is_arrow(region: Region, line_min: float = 0.95, shift_min: float = 0.01) -> bool:
    return region.line_similarity > line_min and region.centroid_shift > shift_min


def detect_arrows(residual: np.ndarray, params: SegParams = SegParams()) -> list[Region]:
    """Regions that are both line-like and lopsided (a head at one end)."""
    return [r for r in raster.connected_components(residual) if is_arrow(r, params.arrow_line_min, params.arrow_shift_min)]


def _extreme_mean(coords: np.ndarray, direction) -> tuple[float, float]:
    p = coords @ np.asarray(direction, dtype=float)
    sel = coords[p >= p.max() - 0.5]
    return float(sel[:, 0].mean()), float(sel[:, 1].mean())


def arrow_geometry(region: Region, joints: list[Joint], arrow_id: int | None = None) -> ArrowSeg:
    """Tip, tail and pointing direction (degrees, y-up) of an arrow region;
    the load goes to the joint nearest the tip."""
    if not joints:
        raise SegmentationError("no joints to attach the arrow to")
    sxx, syy, sxy = region.covariance
    if region.area < 2 or abs(sxx - syy) < 1e-12 and abs(sxy) < 1e-12:
        raise SegmentationError("ambiguous arrow")
    ux, uy = region.major_axis
    (bx, by), (cx, cy) = region.bbox_center, region.centroid
    side = (cx - bx) * ux + (cy - by) * uy
    if side == 0.0:
        raise SegmentationError("ambiguous arrow")
    if side < 0:
        ux, uy = -ux, -uy
    coords = region.coords.astype(float)
    tip = _extreme_mean(coords, (ux, uy))
    tail = _extreme_mean(coords, (-ux, -uy))
    if tip == tail:
        raise SegmentationError("ambiguous arrow")
    orientation = math.degrees(math.atan2(-(tip[1] - tail[1]), tip[0] - tail[0])) % 360.0
    target = min(joints, key=lambda j: (math.hypot(j.center[0] - tip[0], j.center[1] - tip[1]), j.id))
    return ArrowSeg(region.id if arrow_id is None else arrow_id, region, orientation, tip, tail, target.id)


def corner_rule_orientation(region: Region) -> float:
    """Direction (degrees, y-up) from the bbox corner farthest from the
    centroid to the corner nearest it.  Only meaningful for diagonal arrows."""
    x0, y0, x1, y1 = region.bbox
    cx, cy = region.centroid
    corners = [(x0, y0), (x1, y0), (x0, y1), (x1, y1)]
    near = min(corners, key=lambda c: math.hypot(c[0] - cx, c[1] - cy))
    far = (x0 + x1 - near[0], y0 + y1 - near[1])
    return math.degrees(math.atan2(-(near[1] - far[1]), near[0] - far[0])) % 360.0


# ---------------------------------------------------------------------------
# Supports


def is_support_shape(region: Region, band=(0.65, 0.75), shift_min: float = 0.01) -> bool:
    return band[0] <= region.fill_ratio <= band[1] and region.centroid_shift > shift_min


def detect_supports(
    residual: np.ndarray,
    joints: list[Joint],
    params: SegParams = SegParams(),
) -> tuple[list[SupportSeg], list[tuple[str, str, str]]]:
    """Triangles (after hole filling) are supports; a line caught by the
    triangle's dilation makes it a roller rolling along that line.

    Returns the supports and a list of (code, subject, message) issues.
    """
    filled = raster.fill_holes(residual)
    regions = raster.connected_components(filled)
    labels, _ = raster.label_image(filled, 8)
    triangles = [r for r in regions if is_support_shape(r, params.support_band, params.support_shift_min)]
    by_label = {r.id: r for r in regions}
    supports, issues = [], []
    h, w = filled.shape
    for k, tri in enumerate(triangles, start=1):
        radius = params.roller_dilation_frac * max(tri.bbox_extent) / 2.0
        se = raster.disk(radius)
        pad = se.reach + 1
        x0, y0, x1, y1 = tri.bbox
        X0, Y0 = max(x0 - pad, 0), max(y0 - pad, 0)
        X1, Y1 = min(x1 + pad, w - 1), min(y1 + pad, h - 1)
        local = np.zeros((Y1 - Y0 + 1, X1 - X0 + 1), dtype=bool)
        local[tri.coords[:, 1] - Y0, tri.coords[:, 0] - X0] = True
        grown = raster.dilate(local, se)
        hit = set(np.unique(labels[Y0 : Y1 + 1, X0 : X1 + 1][grown]).tolist()) - {0, tri.id}
        kind, angle = "pinned", None
        if len(hit) == 1:
            other = by_label[hit.pop()]
            # the collided blob is judged as drawn, which is what eroding the
            # merged blob back with the same disk recovers on its far side
            if other.line_similarity > params.roller_line_min:
                kind, angle = "roller", other.major_axis_angle % 180.0
        apex = _support_apex(tri)
        joint = _nearest_joint(apex, joints)
        if joint is None or math.hypot(joint.center[0] - apex[0], joint.center[1] - apex[1]) > params.orphan_factor * joint.radius_est:
            issues.append(("orphan-support", f"support {k}", f"orphan support near pixel ({apex[0]:.0f}, {apex[1]:.0f})"))
            supports.append(SupportSeg(k, kind, None, angle, apex, tri))
        else:
            supports.append(SupportSeg(k, kind, joint.id, angle, apex, tri))
    return supports, issues


def _support_apex(tri: Region) -> tuple[float, float]:
    """Middle of the side the centroid is shifted away from."""
    (bx, by), (cx, cy) = tri.bbox_center, tri.centroid
    dx, dy = bx - cx, by - cy
    n = math.hypot(dx, dy)
    if n == 0.0:
        dx, dy, n = 0.0, -1.0, 1.0
    return _extreme_mean(tri.coords.astype(float), (dx / n, dy / n))


def _nearest_joint(p, joints: list[Joint]) -> Optional[Joint]:
    if not joints:
        return None
    return min(joints, key=lambda j: (math.hypot(j.center[0] - p[0], j.center[1] - p[1]), j.id))


# ---------------------------------------------------------------------------
# Whole pipeline


def segment(img: np.ndarray, params: SegParams = SegParams()) -> Segmentation:
    """Run every stage on a text-free binary image."""
    img = np.asarray(img, dtype=bool)
    stages = {"input": img}
    thickness = stroke_thickness(img)
    se_radius = params.joint_se_radius or max(1.0, params.joint_se_factor * thickness)
    joints = detect_joints(img, se_radius)
    stages["joints"] = raster.erode(img, raster.disk(se_radius))
    members = detect_members(img, joints, params.member_coverage_min, params)
    residual = subtract_segmented(img, joints, members, thickness, params)
    residual, _ = raster.remove_small_regions(residual, params.residual_min_area)
    stages["residual"] = residual
    arrow_regions = detect_arrows(residual, params)
    arrows = []
    issues = []
    for k, r in enumerate(sorted(arrow_regions, key=lambda r: (r.bbox[1], r.bbox[0])), start=1):
        try:
            arrows.append(arrow_geometry(r, joints, k))
        except SegmentationError as e:
            issues.append(("ambiguous-arrow", f"arrow {k}", str(e)))
    stages["arrows"] = raster.render_regions(arrow_regions, img.shape)
    rest = residual & ~stages["arrows"]
    supports, sup_issues = detect_supports(rest, joints, params)
    issues += sup_issues
    stages["supports"] = raster.render_regions([s.region for s in supports], img.shape)
    return Segmentation(joints, members, arrows, supports, thickness, issues, stages)
