"""Oriented text reading: group glyph blobs into words, estimate the baseline
slope, de-rotate, match against templates and attach labels to arrows or
members.

Angles are degrees in the y-up convention: a word with slope 30 runs up and
to the right on screen.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import raster
from .font import TemplateSet, default_templates, normalize_char
from .raster import Region


class TextError(ValueError):
    pass


LABEL_RE = re.compile(r"^(-?\d+(?:\.\d+)?)(kN|N)?$")


@dataclass(frozen=True)
class OcrParams:
    area_band: tuple[float, float] = (0.5, 1.4)
    flip_mean: float = 0.5
    flip_min: float = 0.3
    tilt_retry_deg: float = 0.5  # re-read when the fitted baseline is off by this much
    tilt_retries: int = 3
    place_weight: float = 0.02  # score penalty per pixel of misplacement against the baseline
    min_piece_area: int = 5  # specks left after de-rotation are ignored


@dataclass(frozen=True)
class WordRegion:
    char_regions: tuple
    group_bbox: tuple[int, int, int, int]
    slope_deg: Optional[float] = None
    text: Optional[str] = None
    char_scores: Optional[tuple] = None

    @property
    def center(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.group_bbox
        return (x0 + x1) / 2.0, (y0 + y1) / 2.0

    @property
    def area(self) -> int:
        return sum(r.area for r in self.char_regions)

    @property
    def mean_score(self) -> float:
        return float(np.mean(self.char_scores)) if self.char_scores else 0.0


@dataclass(frozen=True)
class RecognizedLabel:
    text: str
    anchor: tuple[float, float]
    attached_to: Optional[tuple[str, int]]  # ("arrow" | "member", id) or None
    magnitude_kN: Optional[float] = None
    reversed: bool = False  # a negative label flips the load direction
    unit: Optional[str] = None
    name: Optional[str] = None
    issue: Optional[str] = None


# ---------------------------------------------------------------------------
# Grouping and slope


def group_words(chars, dilation_radius: float = 8, shape: tuple[int, int] | None = None) -> list[WordRegion]:
    """Merge character blobs into words by dilating them with a disk.

    ``chars`` is either a boolean image or a list of regions (then ``shape``
    is required).  Words come back in raster order of their bbox corner.
    """
    if isinstance(chars, np.ndarray):
        img = chars.astype(bool)
        regions = raster.connected_components(img)
    else:
        regions = list(chars)
        if shape is None:
            raise TextError("shape is required when grouping regions")
        img = raster.render_regions(regions, shape)
    if not regions:
        return []
    labels, _ = raster.label_image(raster.dilate(img, raster.disk(dilation_radius)), 8)
    groups: dict[int, list[Region]] = {}
    for r in regions:
        x, y = r.coords[0]
        groups.setdefault(int(labels[y, x]), []).append(r)
    words = []
    for members in groups.values():
        x0 = min(r.bbox[0] for r in members)
        y0 = min(r.bbox[1] for r in members)
        x1 = max(r.bbox[2] for r in members)
        y1 = max(r.bbox[3] for r in members)
        words.append(WordRegion(tuple(_order_along_axis(members)), (x0, y0, x1, y1)))
    words.sort(key=lambda w: (w.group_bbox[1], w.group_bbox[0]))
    return words


def _word_axis(regions: Sequence[Region]) -> np.ndarray:
    """Unit vector (x, y-up) along the largest spread of the word's ink,
    pointing right (or up when vertical)."""
    pts = np.vstack([r.coords for r in regions]).astype(float)
    pts[:, 1] = -pts[:, 1]
    if len(pts) < 2 or not np.ptp(pts, axis=0).any():
        return np.array([1.0, 0.0])
    d = pts - pts.mean(axis=0)
    _, _, vt = np.linalg.svd(d, full_matrices=False)
    u = vt[0]
    if u[0] < -1e-12 or (abs(u[0]) <= 1e-12 and u[1] < 0):
        u = -u
    return u


def _frame_boxes(regions: Sequence[Region], u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Box area and box centre (x, y-up) of each region, with the box taken
    in the word's own frame so that rotating the word leaves areas alone."""
    n = np.array([-u[1], u[0]])
    areas, centers = [], []
    for r in regions:
        p = r.coords.astype(float)
        p[:, 1] = -p[:, 1]
        a, b = p @ u, p @ n
        areas.append((np.ptp(a) + 1.0) * (np.ptp(b) + 1.0))
        mid_a, mid_b = (a.min() + a.max()) / 2.0, (b.min() + b.max()) / 2.0
        centers.append(mid_a * u + mid_b * n)
    return np.array(areas), np.array(centers).reshape(-1, 2)


def _valid_mask(areas: np.ndarray, band=(0.5, 1.4)) -> np.ndarray:
    if len(areas) == 0:
        return np.zeros(0, dtype=bool)
    # punctuation drags the plain mean down far enough to push full-size
    # glyphs over the upper bound, so undersized blobs are left out of it
    mean = float(areas.mean())
    mean = float(areas[areas >= band[0] * mean].mean())
    return (areas >= band[0] * mean) & (areas <= band[1] * mean)


def valid_chars(word: WordRegion, band=(0.5, 1.4)) -> list[Region]:
    """Glyphs whose box area is within ``band`` of the word's mean (the
    ones that take part in the slope estimate)."""
    if not word.char_regions:
        return []
    areas, _ = _frame_boxes(word.char_regions, _word_axis(word.char_regions))
    keep = _valid_mask(areas, band)
    return [r for r, k in zip(word.char_regions, keep) if k]


def _order_along_axis(regions: list[Region]) -> list[Region]:
    if len(regions) < 2:
        return list(regions)
    u = _word_axis(regions)
    _, centers = _frame_boxes(regions, u)
    proj = centers @ u
    return [regions[k] for k in sorted(range(len(regions)), key=lambda k: (proj[k], regions[k].id))]


def estimate_text_slope(word: WordRegion, band=(0.5, 1.4)) -> float:
    """Mean slope of the segments joining consecutive full-size glyph
    centres, left to right along the word.

    Returns degrees in (-90, 90]."""
    regions = word.char_regions
    if not regions:
        raise TextError("slope underdetermined")
    u = _word_axis(regions)
    areas, centers = _frame_boxes(regions, u)
    pts = centers[_valid_mask(areas, band)]
    if len(pts) < 3:
        raise TextError("slope underdetermined")
    pts = pts[np.argsort(pts @ u, kind="stable")]
    phi = math.atan2(u[1], u[0])
    deltas = []
    for a, b in zip(pts[:-1], pts[1:]):
        v = b - a
        deltas.append(math.atan2(u[0] * v[1] - u[1] * v[0], u[0] * v[0] + u[1] * v[1]))
    slope = math.degrees(phi + float(np.mean(deltas)))
    slope = (slope + 90.0) % 180.0 - 90.0
    return 90.0 if slope == -90.0 else slope


# ---------------------------------------------------------------------------
# Recognition


def _word_mask(word: WordRegion, margin: int = 2) -> np.ndarray:
    x0, y0, x1, y1 = word.group_bbox
    out = np.zeros((y1 - y0 + 1 + 2 * margin, x1 - x0 + 1 + 2 * margin), dtype=bool)
    for r in word.char_regions:
        out[r.coords[:, 1] - y0 + margin, r.coords[:, 0] - x0 + margin] = True
    return out


def _split_glyphs(mask: np.ndarray, min_area: int) -> list[np.ndarray]:
    """Cut an upright word into per-glyph masks, left to right.  Blobs whose
    column spans overlap by half the narrower one belong to one glyph."""
    labels, n = raster.label_image(mask, 8)
    pieces = []
    for i in range(1, n + 1):
        ys, xs = np.nonzero(labels == i)
        pieces.append([int(xs.min()), int(xs.max()), len(xs), [i]])
    pieces.sort(key=lambda p: (p[0], p[1]))
    merged: list[list] = []
    for p in pieces:
        if merged:
            q = merged[-1]
            overlap = min(p[1], q[1]) - max(p[0], q[0]) + 1
            if overlap >= 0.5 * min(p[1] - p[0] + 1, q[1] - q[0] + 1):
                merged[-1] = [min(p[0], q[0]), max(p[1], q[1]), p[2] + q[2], q[3] + p[3]]
                continue
        merged.append(p)
    out = []
    for p in merged:
        if p[2] < min_area:
            continue
        out.append(np.isin(labels, p[3]))
    return out


def _glyph_rows(mask: np.ndarray) -> tuple[int, int]:
    rows = np.nonzero(mask.any(axis=1))[0]
    return int(rows.min()), int(rows.max())


def read_upright(mask: np.ndarray, templates: TemplateSet, params: OcrParams = OcrParams()) -> tuple[str, list[float]]:
    """Read an already de-rotated word mask."""
    text, scores, _ = _read(mask, templates, params)
    return text, scores


def _read(mask: np.ndarray, templates: TemplateSet, params: OcrParams) -> tuple[str, list[float], float]:
    """Read an upright word; also returns the residual baseline tilt in
    degrees (y-up) implied by where the recognized glyphs sit.

    Shapes are compared size-free, so glyphs that differ mainly in size or
    height on the line (C/c, O/o/0, y/Y) are settled by where each glyph
    sits relative to a baseline fitted through the shape-only reads.
    """
    glyphs = _split_glyphs(mask, params.min_piece_area)
    if not glyphs:
        return "", [], 0.0
    all_scores = [templates.scores(normalize_char(g)) for g in glyphs]
    spans = np.array([_glyph_rows(g) for g in glyphs], dtype=float)
    cols = np.array([np.nonzero(g.any(axis=0))[0].mean() for g in glyphs])
    rows = np.array([templates.rows[c] for c in templates.charset], dtype=float)
    best = [int(np.argmax(s)) for s in all_scores]
    # word rows = offset + scale * cell rows, fitted on the shape-only reads
    ref = [i for i, k in enumerate(best) if rows[k, 1] - rows[k, 0] >= 10]
    if ref:
        scale = float(np.median([(spans[i, 1] - spans[i, 0]) / (rows[best[i], 1] - rows[best[i], 0]) for i in ref]))
    else:
        ref, scale = list(range(len(glyphs))), 1.0
    resid = np.array([(spans[i].sum() - scale * rows[best[i]].sum()) / 2.0 for i in range(len(glyphs))])
    offset = float(np.median(resid[ref]))
    tilt = 0.0
    if len(ref) >= 2:
        slopes = [
            (resid[j] - resid[i]) / (cols[j] - cols[i])
            for n, i in enumerate(ref)
            for j in ref[n + 1 :]
            if cols[j] != cols[i]
        ]
        if slopes:
            tilt = math.degrees(math.atan(-float(np.median(slopes))))
    text, final = [], []
    for s, (top, bottom), x in zip(all_scores, spans, cols):
        misfit = np.abs(top - offset - scale * rows[:, 0]) + np.abs(bottom - offset - scale * rows[:, 1])
        k = int(np.argmax(s - params.place_weight * misfit / scale))
        text.append(templates.charset[k])
        final.append(float(s[k]))
    return "".join(text), final, tilt


def _mean(scores) -> float:
    return float(np.mean(scores)) if scores else 0.0


def _read_at(mask: np.ndarray, angle: float, templates: TemplateSet, params: OcrParams) -> tuple[str, list[float], float]:
    """Read ``mask`` turned by ``-angle``; while the glyph placement shows a
    leftover baseline tilt, correct the angle and read again.  Returns the
    text, its scores and the angle finally used."""
    text, scores, tilt = _read(_turn(mask, -angle), templates, params)
    for _ in range(params.tilt_retries):
        if abs(tilt) < params.tilt_retry_deg:
            break
        text2, scores2, tilt2 = _read(_turn(mask, -(angle + tilt)), templates, params)
        if _mean(scores2) <= _mean(scores):
            break
        text, scores, angle, tilt = text2, scores2, angle + tilt, tilt2
    return text, scores, angle


def _recognize(word: WordRegion, templates: TemplateSet, params: OcrParams) -> tuple[str, list[float], float]:
    if not word.char_regions:
        raise TextError("empty word")
    mask = _word_mask(word)
    slope = word.slope_deg
    if slope is None:
        try:
            slope = estimate_text_slope(word, params.area_band)
        except TextError:
            slope = None
    angles = (0.0, 90.0, 180.0, 270.0) if slope is None else (slope, slope + 180.0)
    best = ("", [], 0.0)
    for k, angle in enumerate(angles):
        # Upside-down glyphs rarely score below the flip thresholds, so the
        # half-turn read runs even when the first read passes them.
        got = _read_at(mask, angle, templates, params)
        if k == 0 or _mean(got[1]) > _mean(best[1]):
            best = got
    text, scores, angle = best
    return text, scores, (angle + 180.0) % 360.0 - 180.0


def recognize_word(
    word: WordRegion,
    templates: TemplateSet | None = None,
    params: OcrParams = OcrParams(),
) -> tuple[str, list[float]]:
    """De-rotate the word by its slope and read it, and read it again half a
    turn further; the orientation with the higher mean score wins."""
    text, scores, _ = _recognize(word, templates or default_templates(), params)
    return text, scores


def _turn(mask: np.ndarray, angle_deg: float) -> np.ndarray:
    a = angle_deg % 360.0
    if a == 0.0:
        return mask
    if a in (90.0, 180.0, 270.0):
        return np.rot90(mask, int(a // 90))
    return raster.rotate(mask, angle_deg)


def read_words(words: list[WordRegion], templates: TemplateSet | None = None, params: OcrParams = OcrParams()) -> list[WordRegion]:
    """Recognize every word.  ``slope_deg`` of the result is the reading
    direction actually used, in (-180, 180]: the bbox-centre estimate after
    the baseline correction and the half-turn check."""
    templates = templates or default_templates()
    out = []
    for w in words:
        text, scores, angle = _recognize(w, templates, params)
        out.append(replace(w, slope_deg=angle, text=text, char_scores=tuple(scores)))
    return out


# ---------------------------------------------------------------------------
# Snapping and parsing


def parse_load_label(text: str) -> Optional[tuple[float, str]]:
    """``"12.5kN"`` -> (12.5, "kN"); a bare number counts as kN."""
    m = LABEL_RE.match(text)
    if not m:
        return None
    return float(m.group(1)), m.group(2) or "kN"


def snap_labels(words: Sequence[WordRegion], arrows: Sequence, members: Sequence) -> list[RecognizedLabel]:
    """Attach each word to the nearest arrow (bbox centre) or member
    (midpoint).  Arrows win exact ties, then the lower id."""
    targets = []
    for a in arrows:
        targets.append((a.region.bbox_center, 0, a.id))
    for m in members:
        targets.append((m.midpoint, 1, m.id))
    labels = []
    for w in words:
        text = w.text or ""
        cx, cy = w.center
        if not targets:
            labels.append(RecognizedLabel(text, (cx, cy), None, issue="no arrow or member to attach to"))
            continue
        (tx, ty), kind, ref = min(targets, key=lambda t: (math.hypot(t[0][0] - cx, t[0][1] - cy), t[1], t[2]))
        if kind == 1:
            labels.append(RecognizedLabel(text, (cx, cy), ("member", ref), name=text))
            continue
        parsed = parse_load_label(text)
        if parsed is None:
            labels.append(RecognizedLabel(text, (cx, cy), ("arrow", ref), issue="unparseable load magnitude"))
            continue
        value, unit = parsed
        kn = abs(value) / 1000.0 if unit == "N" else abs(value)
        labels.append(RecognizedLabel(text, (cx, cy), ("arrow", ref), kn, value < 0, unit))
    return labels
