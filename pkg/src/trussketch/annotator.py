"""Result overlay, results export and the force report figure."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage

from . import font
from .solver import SolveResult, classify_determinacy
from .trussmodel import ROLLER, TrussModel, dumps

RGB = tuple[int, int, int]


@dataclass(frozen=True)
class OverlayStyle:
    joint_color: RGB = (230, 0, 0)
    member_color: RGB = (255, 110, 110)
    arrow_color: RGB = (235, 190, 0)
    support_color: RGB = (0, 160, 0)
    tension_color: RGB = (0, 60, 220)
    compression_color: RGB = (170, 0, 170)
    font_size: int = 18  # px; the template cells are 24, scaled down for crowded trusses
    label_format: str = "%.2f kN"
    tension_prefix: str = "+"
    compression_prefix: str = "−"
    line_width: int = 3
    joint_radius: int = 6

    def __post_init__(self):
        colors = [self.joint_color, self.member_color, self.arrow_color, self.support_color,
                  self.tension_color, self.compression_color]
        if len(set(colors)) != len(colors):
            raise ValueError("overlay colors must be distinct")
        if self.font_size < 8:
            raise ValueError("font size must be >= 8 px")


# -- text ------------------------------------------------------------------


def _plus_cell() -> np.ndarray:
    # the template font has no '+'; cross the '-' bar with a vertical one
    cell = font.default_templates().cells["-"].copy()
    ys, xs = np.nonzero(cell)
    cy, cx = (ys.min() + ys.max()) / 2.0, (xs.min() + xs.max()) / 2.0
    t = (ys.max() - ys.min() + 1) / 2.0
    half = 5.5
    yy, xx = np.mgrid[: cell.shape[0], : cell.shape[1]]
    return ((np.abs(xx - cx) < t) & (np.abs(yy - cy) <= half)) | ((np.abs(yy - cy) < t) & (np.abs(xx - cx) <= half))


def text_mask(text: str, size: int = 24, angle_deg: float = 0.0) -> np.ndarray:
    """Text in the template font, scaled to ``size`` px cells and turned
    counter-clockwise by ``angle_deg``."""
    text = text.replace("−", "-")
    cells = font.default_templates().cells
    canvas = np.zeros((font.CELL, font.ADVANCE * max(len(text) - 1, 0) + font.CELL), dtype=bool)
    for k, ch in enumerate(text):
        if ch == " ":
            continue
        glyph = _plus_cell() if ch == "+" else cells.get(ch)
        if glyph is None:
            raise ValueError(f"character {ch!r} cannot be drawn")
        canvas[:, k * font.ADVANCE : k * font.ADVANCE + font.CELL] |= glyph
    ys, xs = np.nonzero(canvas)
    if len(ys) == 0:
        return np.zeros((1, 1), dtype=bool)
    canvas = canvas[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]
    if size != font.CELL:
        canvas = ndimage.zoom(canvas.astype(np.float32), size / font.CELL, order=1) >= 0.5
    if angle_deg % 360.0:
        canvas = font._rotate_supersampled(canvas, angle_deg)
        ys, xs = np.nonzero(canvas)
        canvas = canvas[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]
    return canvas


def force_label(value: float, style: OverlayStyle) -> str:
    body = style.label_format % abs(value)
    if not any(c in "123456789" for c in body):  # rounds to zero: no sign
        return body
    return (style.tension_prefix if value > 0 else style.compression_prefix) + body


# -- overlay ---------------------------------------------------------------


def _screen(direction_deg: float) -> tuple[float, float]:
    a = math.radians(direction_deg)
    return math.cos(a), -math.sin(a)


def _draw_arrow(draw: ImageDraw.ImageDraw, node_px, direction_deg: float, style: OverlayStyle) -> None:
    dx, dy = _screen(direction_deg)
    x, y = node_px
    tip = (x - dx * 14.0, y - dy * 14.0)
    tail = (x - dx * 60.0, y - dy * 60.0)
    base = (tip[0] - dx * 14.0, tip[1] - dy * 14.0)
    draw.line([tail, base], fill=style.arrow_color, width=style.line_width)
    nx, ny = -dy * 6.0, dx * 6.0
    draw.polygon([tip, (base[0] + nx, base[1] + ny), (base[0] - nx, base[1] - ny)], fill=style.arrow_color)


def _draw_support(draw: ImageDraw.ImageDraw, node_px, kind: str, roll_angle: Optional[float], style: OverlayStyle) -> None:
    x, y = node_px
    top = y + 2 * style.joint_radius
    pts = [(x, top), (x + 14, top + 22), (x - 14, top + 22)]
    draw.polygon(pts, outline=style.support_color, width=style.line_width)
    if kind == ROLLER:
        a = math.radians(roll_angle or 0.0)
        dx, dy = math.cos(a) * 18.0, -math.sin(a) * 18.0
        cy = top + 29
        draw.line([(x - dx, cy - dy), (x + dx, cy + dy)], fill=style.support_color, width=style.line_width)


def _clamp_box(x0: int, y0: int, w: int, h: int, W: int, H: int) -> tuple[int, int]:
    return min(max(x0, 0), max(W - w, 0)), min(max(y0, 0), max(H - h, 0))


def _place_label(busy: np.ndarray, glyphs: np.ndarray, a, b, normal, offset: float) -> tuple[int, int]:
    """Top-left corner for a label of member a-b.

    First choice is the midpoint pushed ``offset`` along the normal, upper
    side first.  Then the label slides along the member and tries nearer and
    farther offsets.  The first spot with no collision wins; when every spot
    collides, the one covering the fewest busy pixels does.
    """
    H, W = busy.shape
    h, w = glyphs.shape
    best, best_key = None, None
    k = 0
    for scale in (1.0, 0.75, 1.5):
        for t in (0.5, 0.35, 0.65, 0.2, 0.8):
            for side in (1.0, -1.0):
                cx = a[0] + t * (b[0] - a[0]) + normal[0] * offset * scale * side
                cy = a[1] + t * (b[1] - a[1]) + normal[1] * offset * scale * side
                x, y = int(round(cx - w / 2.0)), int(round(cy - h / 2.0))
                x0, y0 = _clamp_box(x, y, w, h, W, H)
                window = busy[y0 : y0 + h, x0 : x0 + w]
                hits = int((window & glyphs[: window.shape[0], : window.shape[1]]).sum())
                shifted = (x0, y0) != (x, y)
                if hits == 0 and not shifted:
                    return x0, y0
                key = (hits, shifted, k)
                if best_key is None or key < best_key:
                    best, best_key = (x0, y0), key
                k += 1
    return best


def render_overlay(
    gray: np.ndarray,
    model: TrussModel,
    result: Optional[SolveResult] = None,
    style: OverlayStyle = OverlayStyle(),
) -> np.ndarray:
    """Draw the recognized structure, and the member forces when ``result``
    is given, over the input.  Returns an (H, W, 3) uint8 image."""
    gray = np.asarray(gray)
    if gray.ndim == 3:
        gray = gray[..., :3].mean(axis=2)
    base = np.clip(gray, 0, 255).astype(np.uint8)
    img = Image.fromarray(np.stack([base] * 3, axis=2), "RGB")
    if not model.nodes:
        return np.asarray(img).copy()
    draw = ImageDraw.Draw(img)
    pos = {n.id: n.pos_px for n in model.nodes}

    for m in model.members:
        if m.node_a in pos and m.node_b in pos:
            draw.line([pos[m.node_a], pos[m.node_b]], fill=style.member_color, width=style.line_width)
    for s in model.supports:
        if s.node in pos:
            _draw_support(draw, pos[s.node], s.kind, s.roll_angle_deg, style)
    for l in model.loads:
        if l.node in pos:
            _draw_arrow(draw, pos[l.node], l.direction_deg, style)
    r = style.joint_radius
    for n in model.nodes:
        x, y = n.pos_px
        draw.ellipse([x - r, y - r, x + r, y + r], fill=style.joint_color)

    out = np.asarray(img).copy()
    if result is None:
        return out

    H, W = base.shape
    busy = ndimage.binary_dilation((base < 128) | np.any(out != base[..., None], axis=2), iterations=3)
    for m in model.members:
        if m.id not in result.axial or m.node_a not in pos or m.node_b not in pos:
            continue
        value = result.axial[m.id]
        (xa, ya), (xb, yb) = pos[m.node_a], pos[m.node_b]
        slope = math.degrees(math.atan2(-(yb - ya), xb - xa))
        slope = (slope + 90.0) % 180.0 - 90.0  # keep the text upright
        glyphs = text_mask(force_label(value, style), style.font_size, slope)
        L = math.hypot(xb - xa, yb - ya) or 1.0
        normal = (-(yb - ya) / L, (xb - xa) / L)
        if normal[1] > 0 or (normal[1] == 0 and normal[0] < 0):
            normal = (-normal[0], -normal[1])  # upper side first
        x0, y0 = _place_label(busy, glyphs, (xa, ya), (xb, yb), normal, 1.2 * style.font_size)
        g = glyphs[: H - y0, : W - x0]
        color = style.compression_color if round(value, 2) < 0 else style.tension_color
        out[y0 : y0 + g.shape[0], x0 : x0 + g.shape[1]][g] = color
        busy[y0 : y0 + g.shape[0], x0 : x0 + g.shape[1]] |= ndimage.binary_dilation(g, iterations=6)[: g.shape[0], : g.shape[1]]
    return out


def save_png(rgb: np.ndarray, path: str | Path) -> None:
    # no timestamps or text chunks, so equal pixels give equal bytes
    Image.fromarray(np.asarray(rgb, dtype=np.uint8)).save(path, format="PNG", optimize=False)


# -- export ------------------------------------------------------------------


def member_key(model: TrussModel, member_id: int) -> str:
    """Member name when it is set and unique, else its id."""
    m = next(m for m in model.members if m.id == member_id)
    names = [x.name for x in model.members if x.name]
    if m.name and names.count(m.name) == 1 and not m.name.isdigit():
        return m.name
    return str(m.id)


def export_results(model: TrussModel, result: Optional[SolveResult] = None, issues=()) -> dict:
    """Model document with the analysis results embedded."""
    doc = model.to_dict()
    if result is not None:
        res = result.to_dict()
        res["axial_kN"] = {member_key(model, mid): v for mid, v in sorted(result.axial.items())}
        res["determinacy"] = classify_determinacy(model).kind
        doc["results"] = res
    doc["issues"] = [i.to_dict() for i in issues]
    return doc


def write_results(path: str | Path, model: TrussModel, result: Optional[SolveResult] = None, issues=()) -> None:
    Path(path).write_text(dumps(export_results(model, result, issues)), encoding="utf-8")


# -- report ------------------------------------------------------------------


def forces_table(model: TrussModel, result: SolveResult) -> str:
    """Member forces as CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["member", "node_a", "node_b", "length_m", "axial_kN", "state"])
    for m in model.members:
        n = result.axial[m.id]
        state = "tension" if n > 0 else "compression" if n < 0 else "zero"
        w.writerow([member_key(model, m.id), m.node_a, m.node_b, f"{model.length_m(m):.6g}", f"{n:.6g}", state])
    return buf.getvalue()


def report_figure(model: TrussModel, result: SolveResult, path: str | Path) -> None:
    """Members colored by axial force in meter coordinates, saved to ``path``."""
    import matplotlib

    matplotlib.use("Agg")
    from matplotlib import pyplot as plt
    from matplotlib.colors import TwoSlopeNorm

    values = [result.axial[m.id] for m in model.members]
    vmax = max((abs(v) for v in values), default=1.0) or 1.0
    norm = TwoSlopeNorm(vmin=-vmax, vcenter=0.0, vmax=vmax)
    cmap = plt.get_cmap("coolwarm_r")
    fig, ax = plt.subplots(figsize=(8, 5), dpi=100)
    pos = {n.id: n.pos_m for n in model.nodes}
    for m, v in zip(model.members, values):
        (xa, ya), (xb, yb) = pos[m.node_a], pos[m.node_b]
        ax.plot([xa, xb], [ya, yb], color=cmap(norm(v)), lw=4, solid_capstyle="round")
        ax.text((xa + xb) / 2, (ya + yb) / 2, f"{v:+.2f}", fontsize=8, ha="center", va="bottom")
    xs = [p[0] for p in pos.values()]
    ys = [p[1] for p in pos.values()]
    ax.scatter(xs, ys, color="k", s=16, zorder=3)
    for nid, (x, y) in pos.items():
        ax.annotate(str(nid), (x, y), textcoords="offset points", xytext=(4, 4), fontsize=8)
    for s in model.supports:
        x, y = pos[s.node]
        ax.plot([x], [y], marker="^" if s.kind != ROLLER else "o", ms=11, mfc="none", mec="g", zorder=2)
    sm = plt.cm.ScalarMappable(norm=norm, cmap=cmap)
    fig.colorbar(sm, ax=ax, label="axial force [kN], tension positive")
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title("Member axial forces")
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
