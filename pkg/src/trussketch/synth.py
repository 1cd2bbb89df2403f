"""Synthetic truss sketches with known ground truth.

Joints are filled disks, members plain strokes between centres, supports
outlined apex-cut triangles hanging just below their joint (a roller adds a
line under the base, tilted to the rolling direction), loads are arrows whose
tip stops just short of the joint, and every arrow carries a text label set
in the template font.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage
from skimage.draw import polygon as fill_polygon

from . import raster
from .font import render_text
from .trussmodel import PINNED, ROLLER, LoadSpec, MemberSpec, ModelError, Node, SupportSpec, TrussModel


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class RenderParams:
    canvas: tuple[int, int] = (1000, 700)  # width, height
    stroke_px: float = 3.0
    joint_radius_px: float = 11.0
    arrow_length: float = 64.0
    arrow_shaft_px: float = 3.0
    head_length: float = 16.0
    head_width: float = 10.0
    tip_gap: float = 4.0  # between the joint clearing circle and the arrow tip
    support_width: float = 40.0
    support_height: float = 30.0
    support_top_frac: float = 0.4  # top edge as a fraction of the base
    support_outline_px: float = 3.0
    support_gap: float = 4.0  # between the joint clearing circle and the support top
    roller_length: float = 48.0
    roller_px: float = 4.0
    roller_gap: float = 2.0  # pixel distance from the outline to the nearest roller pixel
    label_offset: float = 26.0  # from the arrow axis to the label centre
    label_slope: str = "along"  # "along" the arrow or "horizontal"
    slope_jitter_deg: float = 0.0
    clearance: float = 6.0  # minimum gap between unrelated symbols
    text_clearance: float = 14.0  # minimum gap between a label and anything else
    ink: int = 0
    paper: int = 255


@dataclass
class Sketch:
    gray: np.ndarray
    layers: dict = field(default_factory=dict)  # name -> bool mask
    labels: list = field(default_factory=list)  # (text, center, slope_deg, load id)


def _disk_mask(mask: np.ndarray, center, radius: float) -> None:
    h, w = mask.shape
    cx, cy = center
    x0, x1 = max(int(math.floor(cx - radius)), 0), min(int(math.ceil(cx + radius)), w - 1)
    y0, y1 = max(int(math.floor(cy - radius)), 0), min(int(math.ceil(cy + radius)), h - 1)
    if x1 < x0 or y1 < y0:
        return
    yy, xx = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    mask[y0 : y1 + 1, x0 : x1 + 1] |= (xx - cx) ** 2 + (yy - cy) ** 2 <= radius * radius


def _polygon(mask: np.ndarray, pts) -> None:
    pts = np.asarray(pts, dtype=float)
    rr, cc = fill_polygon(pts[:, 1], pts[:, 0], shape=mask.shape)
    mask[rr, cc] = True


def _bar(mask: np.ndarray, a, b, width: float) -> None:
    """Filled rectangle of ``width`` along segment ab (flat ends).

    The centre is snapped to the half-pixel grid and the pixel set is made
    point-symmetric, so a plain bar has no centroid shift at any angle.
    """
    (xa, ya), (xb, yb) = a, b
    L = math.hypot(xb - xa, yb - ya)
    if L == 0:
        return
    cx, cy = round((xa + xb)) / 2.0, round((ya + yb)) / 2.0
    hx, hy = (xb - xa) / 2.0, (yb - ya) / 2.0
    nx, ny = -(yb - ya) / L * width / 2.0, (xb - xa) / L * width / 2.0
    pts = np.array([(cx - hx + nx, cy - hy + ny), (cx + hx + nx, cy + hy + ny),
                    (cx + hx - nx, cy + hy - ny), (cx - hx - nx, cy - hy - ny)])
    rr, cc = fill_polygon(pts[:, 1], pts[:, 0])
    rr = np.concatenate([rr, (2 * cy - rr).astype(int)])
    cc = np.concatenate([cc, (2 * cx - cc).astype(int)])
    keep = (rr >= 0) & (rr < mask.shape[0]) & (cc >= 0) & (cc < mask.shape[1])
    mask[rr[keep], cc[keep]] = True


def _screen_dir(angle_deg: float) -> tuple[float, float]:
    a = math.radians(angle_deg)
    return math.cos(a), -math.sin(a)


def _check_inside(mask: np.ndarray, what: str) -> None:
    if mask[0, :].any() or mask[-1, :].any() or mask[:, 0].any() or mask[:, -1].any():
        raise LayoutError(f"unrenderable layout: {what} leaves the canvas")


def _overlap(a: np.ndarray, b: np.ndarray, gap: float) -> bool:
    if not a.any() or not b.any():
        return False
    return bool((raster.dilate(a, raster.disk(gap)) & b).any())


def support_polygon(center, p: RenderParams) -> list[tuple[float, float]]:
    cx, cy = center
    top = cy + 1.5 * p.joint_radius_px + p.support_gap
    base = top + p.support_height
    hw, tw = p.support_width / 2.0, p.support_width * p.support_top_frac / 2.0
    return [(cx - tw, top), (cx + tw, top), (cx + hw, base), (cx - hw, base)]


def draw_support(mask: np.ndarray, center, kind: str, roll_angle: Optional[float], p: RenderParams) -> None:
    poly = support_polygon(center, p)
    outer = np.zeros_like(mask)
    _polygon(outer, poly)
    inner = raster.erode(outer, raster.disk(p.support_outline_px / 2.0))
    inner = raster.erode(inner, raster.disk(p.support_outline_px / 2.0))
    mask |= outer & ~inner
    if kind != ROLLER:
        return
    base = poly[2][1]
    d = _screen_dir(roll_angle or 0.0)
    half = p.roller_length / 2.0
    cx = center[0]
    # lower the line until its nearest pixel is roller_gap px from the outline
    outline = outer & ~inner
    dist = ndimage.distance_transform_edt(~outline)
    off = p.roller_px / 2.0
    for _ in range(200):
        cy = base + off
        a = (cx - d[0] * half, cy - d[1] * half)
        b = (cx + d[0] * half, cy + d[1] * half)
        line = np.zeros_like(mask)
        _bar(line, a, b, p.roller_px)
        if line.any() and dist[line].min() >= p.roller_gap:
            break
        off += 0.25
    mask |= line


def arrow_points(joint_center, direction_deg: float, p: RenderParams):
    """Tip and tail (pixels) of an arrow pushing on a joint along
    ``direction_deg`` (y-up degrees)."""
    d = _screen_dir(direction_deg)
    reach = 1.5 * p.joint_radius_px + p.tip_gap
    tip = (joint_center[0] - d[0] * reach, joint_center[1] - d[1] * reach)
    tail = (tip[0] - d[0] * p.arrow_length, tip[1] - d[1] * p.arrow_length)
    return tip, tail


def draw_arrow(mask: np.ndarray, tip, tail, p: RenderParams) -> None:
    L = math.hypot(tip[0] - tail[0], tip[1] - tail[1])
    ux, uy = (tip[0] - tail[0]) / L, (tip[1] - tail[1]) / L
    neck = (tip[0] - ux * p.head_length, tip[1] - uy * p.head_length)
    _bar(mask, tail, (neck[0] + ux, neck[1] + uy), p.arrow_shaft_px)
    hw = p.head_width / 2.0
    _polygon(mask, [tip, (neck[0] - uy * hw, neck[1] + ux * hw), (neck[0] + uy * hw, neck[1] - ux * hw)])


def format_magnitude(kn: float) -> str:
    return f"{kn:g}kN"


def _paste(mask: np.ndarray, glyphs: np.ndarray, center) -> bool:
    h, w = glyphs.shape
    x0 = int(round(center[0] - w / 2.0))
    y0 = int(round(center[1] - h / 2.0))
    if x0 < 1 or y0 < 1 or x0 + w >= mask.shape[1] - 1 or y0 + h >= mask.shape[0] - 1:
        return False
    mask[y0 : y0 + h, x0 : x0 + w] |= glyphs
    return True


def _label_slope(direction_deg: float, p: RenderParams, rng) -> float:
    if p.label_slope == "horizontal":
        s = 0.0
    else:
        s = (direction_deg + 90.0) % 180.0 - 90.0
    if p.slope_jitter_deg:
        s += float(rng.uniform(-p.slope_jitter_deg, p.slope_jitter_deg))
    return s


def render_sketch(model: TrussModel, params: RenderParams = RenderParams(), seed: int = 0) -> Sketch:
    """Draw ``model`` (pixel positions) and return the image with its layers.

    Raises LayoutError ("unrenderable layout") when symbols would touch or
    leave the canvas, or when a label would sit nearer another symbol than
    its own arrow.
    """
    p = params
    rng = np.random.default_rng(seed)
    W, H = p.canvas
    shape = (H, W)
    pos = {n.id: n.pos_px for n in model.nodes}
    ids = sorted(pos)
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            if math.hypot(pos[a][0] - pos[b][0], pos[a][1] - pos[b][1]) < 2.0 * p.joint_radius_px + p.clearance:
                raise LayoutError(f"coincident nodes {a} and {b}")

    frame = np.zeros(shape, dtype=bool)
    for m in model.members:
        _bar(frame, pos[m.node_a], pos[m.node_b], p.stroke_px)
    for n in model.nodes:
        _disk_mask(frame, pos[n.id], p.joint_radius_px)
    _check_inside(frame, "frame")

    supports = []
    for s in model.supports:
        layer = np.zeros(shape, dtype=bool)
        draw_support(layer, pos[s.node], s.kind, s.roll_angle_deg, p)
        _check_inside(layer, f"support at node {s.node}")
        supports.append(layer)

    arrows, arrow_info = [], []
    for ld in model.loads:
        layer = np.zeros(shape, dtype=bool)
        tip, tail = arrow_points(pos[ld.node], ld.direction_deg, p)
        draw_arrow(layer, tip, tail, p)
        _check_inside(layer, f"load {ld.id}")
        arrows.append(layer)
        arrow_info.append((ld, tip, tail))

    symbols = [("frame", frame)] + [(f"support {k}", m) for k, m in enumerate(supports, 1)] + [(f"arrow {k}", m) for k, m in enumerate(arrows, 1)]
    for i, (na, ma) in enumerate(symbols):
        for nb, mb in symbols[i + 1 :]:
            gap = p.clearance
            if na == "frame" and nb.startswith("support"):
                gap = 1.0  # the support hangs just under its joint by design
            if _overlap(ma, mb, gap):
                raise LayoutError(f"unrenderable layout: {na} and {nb} overlap")

    # label targets: arrow bbox centres and member midpoints
    targets = []
    for k, layer in enumerate(arrows):
        ys, xs = np.nonzero(layer)
        targets.append(("arrow", k, ((xs.min() + xs.max()) / 2.0, (ys.min() + ys.max()) / 2.0)))
    for m in model.members:
        (xa, ya), (xb, yb) = pos[m.node_a], pos[m.node_b]
        targets.append(("member", m.id, ((xa + xb) / 2.0, (ya + yb) / 2.0)))

    everything = frame.copy()
    for m in supports + arrows:
        everything |= m
    text = np.zeros(shape, dtype=bool)
    labels = []
    for k, (ld, tip, tail) in enumerate(arrow_info):
        if ld.magnitude is None:
            continue
        word = format_magnitude(ld.magnitude)
        slope = _label_slope(ld.direction_deg, p, rng)
        glyphs = render_text(word, slope)
        mid = ((tip[0] + tail[0]) / 2.0, (tip[1] + tail[1]) / 2.0)
        d = _screen_dir(ld.direction_deg)
        placed = False
        for side in (1.0, -1.0):
            for extra in (0.0, 8.0, 16.0):
                off = p.label_offset + extra
                c = (mid[0] - d[1] * off * side, mid[1] + d[0] * off * side)
                own = math.hypot(c[0] - targets[k][2][0], c[1] - targets[k][2][1])
                rivals = [math.hypot(c[0] - t[2][0], c[1] - t[2][1]) for t in targets if not (t[0] == "arrow" and t[1] == k)]
                if rivals and min(rivals) <= own + 4.0:
                    continue
                trial = np.zeros(shape, dtype=bool)
                if not _paste(trial, glyphs, c):
                    continue
                if _overlap(trial, everything | text, p.text_clearance):
                    continue
                text |= trial
                labels.append((word, c, slope, ld.id))
                placed = True
                break
            if placed:
                break
        if not placed:
            raise LayoutError(f"unrenderable layout: no room for the label of load {ld.id}")

    ink = everything | text
    gray = np.where(ink, p.ink, p.paper).astype(np.uint8)
    layers = {"frame": frame, "supports": _union(supports, shape), "arrows": _union(arrows, shape), "text": text}
    return Sketch(gray, layers, labels)


def _union(masks, shape):
    out = np.zeros(shape, dtype=bool)
    for m in masks:
        out |= m
    return out


def generate_sketch(model: TrussModel, params: RenderParams = RenderParams(), seed: int = 0) -> np.ndarray:
    return render_sketch(model, params, seed).gray


# ---------------------------------------------------------------------------
# Random determinate trusses


ROLL_ANGLES = (0.0, 0.0, 0.0, 15.0, 30.0, 150.0, 165.0)
LOAD_MAGNITUDES = tuple(float(v) for v in range(1, 51)) + (2.5, 7.5, 12.5, 0.5)


def warren_model(
    rng,
    n_joints: int,
    params: RenderParams = RenderParams(),
    n_loads: Optional[int] = None,
) -> TrussModel:
    """A zigzag (Warren) truss: bottom and top nodes alternate, members join
    each node to the next two.  Pinned at the first bottom node, roller at
    the last one; m + r = 2j."""
    if n_joints < 3:
        raise ModelError("degenerate truss: need at least 3 joints")
    W, H = params.canvas
    margin = 150.0
    half = min(200.0, (W - 2 * margin) / (n_joints - 1))
    height = float(rng.uniform(1.1, 1.8)) * min(half * 1.6, 200.0)
    height = max(height, 4.0 * params.joint_radius_px + 40.0)
    tilt = float(rng.uniform(-0.12, 0.12))  # top chord slope
    span = half * (n_joints - 1)
    x0 = (W - span) / 2.0 + float(rng.uniform(-20, 20))
    yb = H / 2.0 + height / 2.0 + float(rng.uniform(-20, 20))
    nodes = []
    for i in range(n_joints):
        x = x0 + i * half
        y = yb if i % 2 == 0 else yb - height - tilt * (x - x0)
        nodes.append(Node(i + 1, (round(x, 3), round(y, 3))))
    members = []
    for i in range(n_joints - 1):
        members.append((i + 1, i + 2))
        if i + 2 < n_joints:
            members.append((i + 1, i + 3))
    members = tuple(MemberSpec(k, a, b) for k, (a, b) in enumerate(sorted(members), start=1))
    last_bottom = n_joints if n_joints % 2 == 1 else n_joints - 1
    roll = float(rng.choice(ROLL_ANGLES))
    supports = (SupportSpec(1, PINNED, None), SupportSpec(last_bottom, ROLLER, roll))
    model = TrussModel(tuple(nodes), members, supports, (), None)
    k = int(n_loads if n_loads is not None else rng.integers(1, 4))
    return _add_loads(model, rng, k, params)


def _free_directions(model: TrussModel, nid: int, params: RenderParams) -> list[float]:
    """Load directions whose arrow body stays clear of the joint's members
    and of a support hanging below it."""
    x, y = model.node(nid).pos_px
    busy = []
    for m in model.members:
        if nid in (m.node_a, m.node_b):
            ox, oy = model.node(m.node_b if m.node_a == nid else m.node_a).pos_px
            busy.append(math.degrees(math.atan2(-(oy - y), ox - x)))
    if model.support_at(nid) is not None:
        busy += [240.0, 270.0, 300.0]
    out = []
    for a in range(0, 360, 15):
        body = (a + 180.0) % 360.0  # the arrow sits on the far side of the tip
        if all(abs((body - b + 180.0) % 360.0 - 180.0) >= 40.0 for b in busy):
            out.append(float(a))
    return out


def _add_loads(model: TrussModel, rng, k: int, params: RenderParams) -> TrussModel:
    ids = model.node_ids()
    loads = []
    used = set()
    for lid in range(1, k + 1):
        choices = [n for n in ids if n not in used]
        if not choices:
            break
        nid = int(rng.choice(choices))
        dirs = _free_directions(model, nid, params)
        if not dirs:
            continue
        # gravity-like loads are the common case
        down = [d for d in dirs if d == 270.0]
        direction = 270.0 if down and rng.random() < 0.5 else float(rng.choice(dirs))
        mag = float(rng.choice(LOAD_MAGNITUDES))
        loads.append(LoadSpec(len(loads) + 1, nid, mag, direction))
        used.add(nid)
    return TrussModel(model.nodes, model.members, model.supports, tuple(loads), model.scale_m_per_px)


def random_sketch_model(seed: int, n_joints: Optional[int] = None, params: RenderParams = RenderParams(), tries: int = 50):
    """Seeded random truss that renders cleanly: returns (model, sketch)."""
    rng = np.random.default_rng(seed)
    n = int(n_joints) if n_joints is not None else int(rng.integers(3, 13))
    if n < 3:
        raise ModelError("degenerate truss: need at least 3 joints")
    last = None
    for attempt in range(tries):
        model = warren_model(rng, n, params)
        try:
            sketch = render_sketch(model, params, seed=seed * 1000 + attempt)
        except LayoutError as e:
            last = e
            continue
        return model, sketch
    raise LayoutError(f"unrenderable layout after {tries} attempts: {last}")


# ---------------------------------------------------------------------------
# Hazard map: a grid of loose symbols for classifier checks


@dataclass
class HazardTruth:
    arrows: list  # (cell center, direction_deg)
    supports: list  # (joint center, kind, roll angle or None)
    lines: list
    joints: list


def hazard_map(seed: int = 0, params: RenderParams = RenderParams(), cols: int = 6, rows: int = 4, cell: int = 160):
    """Loose lines, arrows, supports (with their joint) and joint disks on a
    grid, one symbol per cell.  Returns (gray image, HazardTruth)."""
    rng = np.random.default_rng(seed)
    kinds = ["arrow"] * 6 + ["line"] * 6 + ["pinned"] * 3 + ["roller"] * 4 + ["joint"] * 3
    kinds += ["line"] * max(0, cols * rows - len(kinds))
    kinds = [kinds[i] for i in rng.permutation(len(kinds))][: cols * rows]
    W, H = cols * cell, rows * cell
    mask = np.zeros((H, W), dtype=bool)
    truth = HazardTruth([], [], [], [])
    for k, kind in enumerate(kinds):
        cx = (k % cols + 0.5) * cell
        cy = (k // cols + 0.5) * cell
        if kind == "arrow":
            a = float(rng.uniform(0, 360))
            d = _screen_dir(a)
            half = params.arrow_length / 2.0
            tip = (cx + d[0] * half, cy + d[1] * half)
            tail = (cx - d[0] * half, cy - d[1] * half)
            draw_arrow(mask, tip, tail, params)
            truth.arrows.append(((cx, cy), a))
        elif kind == "line":
            a = float(rng.uniform(0, 180))
            d = _screen_dir(a)
            L = float(rng.uniform(50, 90)) / 2.0
            _bar(mask, (cx - d[0] * L, cy - d[1] * L), (cx + d[0] * L, cy + d[1] * L), params.stroke_px)
            truth.lines.append(((cx, cy), a))
        elif kind in ("pinned", "roller"):
            jc = (cx, cy - 45.0)
            _disk_mask(mask, jc, params.joint_radius_px)
            roll = float(rng.choice([0.0, 10.0, 20.0, 30.0, 150.0, 160.0, 170.0])) if kind == "roller" else None
            draw_support(mask, jc, kind, roll, params)
            truth.supports.append((jc, kind, roll))
        else:
            _disk_mask(mask, (cx, cy), params.joint_radius_px)
            truth.joints.append((cx, cy))
    gray = np.where(mask, params.ink, params.paper).astype(np.uint8)
    return gray, truth
