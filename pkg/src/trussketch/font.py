"""Template glyphs for the OCR stage and the bitmap text renderer.

Glyph file layout (``*.trsk``)::

    TRSK1 <charset>\\n
    <for each char of charset, in order: 24 rows x 3 bytes, MSB first>

Each glyph is the raw 24 x 24 cell of a 24 px fixed-width font (pen at x=5,
baseline at row 18).  Normalized templates are derived from the cells at
load time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import raster

MAGIC = "TRSK1"
CELL = 24
CHARSET = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz.-/"
ADVANCE = 16
NORM = 24
NORM_BOX = 20
BLUR_SIGMA = 1.0  # tolerance to one-pixel stroke jitter from rotation
VARIANT_ANGLES = tuple(2.5 + 5.0 * k for k in range(18))

# upper/lower case letters whose shapes only differ in size
SIZE_TWINS = {c: c.lower() for c in "COSVWXZ"}


class GlyphFileError(ValueError):
    pass


def write_glyph_file(path: str | Path, cells: dict[str, np.ndarray], charset: str = CHARSET) -> None:
    out = bytearray(f"{MAGIC} {charset}\n".encode("ascii"))
    for ch in charset:
        cell = np.asarray(cells[ch], dtype=bool)
        if cell.shape != (CELL, CELL) or not cell.any():
            raise GlyphFileError(f"glyph {ch!r} must be a non-empty {CELL}x{CELL} bitmap")
        out += np.packbits(cell, axis=1).tobytes()
    Path(path).write_bytes(bytes(out))


def read_glyph_file(data: bytes) -> dict[str, np.ndarray]:
    head, sep, body = data.partition(b"\n")
    if not sep:
        raise GlyphFileError("missing header line")
    parts = head.decode("ascii").split(" ", 1)
    if parts[0] != MAGIC or len(parts) != 2:
        raise GlyphFileError(f"bad magic {parts[0]!r}")
    charset = parts[1]
    row_bytes = CELL // 8
    if len(body) != len(charset) * CELL * row_bytes:
        raise GlyphFileError("glyph data length does not match charset")
    bits = np.unpackbits(np.frombuffer(body, dtype=np.uint8).reshape(len(charset), CELL, row_bytes), axis=2)
    return {ch: bits[k].astype(bool) for k, ch in enumerate(charset)}


def normalize_char(mask: np.ndarray) -> np.ndarray:
    """Crop to ink, scale to fit a 20 px box keeping aspect, centre in 24 x 24.

    Returns a float image in [0, 1].
    """
    mask = np.asarray(mask, dtype=bool)
    ys, xs = np.nonzero(mask)
    out = np.zeros((NORM, NORM), dtype=np.float64)
    if len(xs) == 0:
        return out
    crop = mask[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1].astype(np.float64)
    h, w = crop.shape
    s = NORM_BOX / max(h, w)
    nh, nw = max(1, int(round(h * s))), max(1, int(round(w * s)))
    # sample the crop at the centres of the target pixels
    yy = (np.arange(nh) + 0.5) * (h / nh) - 0.5
    xx = (np.arange(nw) + 0.5) * (w / nw) - 0.5
    grid = np.meshgrid(yy, xx, indexing="ij")
    scaled = ndimage.map_coordinates(crop, grid, order=1, mode="nearest")
    y0, x0 = (NORM - nh) // 2, (NORM - nw) // 2
    out[y0 : y0 + nh, x0 : x0 + nw] = scaled
    return out


@dataclass(frozen=True)
class TemplateSet:
    """Immutable set of trained glyphs.

    ``cells`` are the raw font cells; ``templates`` is a (n_chars, 576)
    matrix of normalized, zero-mean, unit-norm glyph vectors for correlation.
    ``rows`` maps each char to the first and last inked row of its cell, i.e.
    its vertical placement relative to the shared baseline.  ``variants``
    holds extra vectors per glyph (the glyph after a rotate/de-rotate round
    trip) and ``owner`` the charset index of each variant row; a glyph scores
    its best-matching variant.
    """

    charset: str
    cells: dict = field(repr=False)
    templates: np.ndarray = field(repr=False)
    heights: dict = field(repr=False)
    rows: dict = field(repr=False)
    variants: np.ndarray = field(repr=False)
    starts: np.ndarray = field(repr=False)  # first variant row of each glyph

    @classmethod
    def from_cells(
        cls, cells: dict[str, np.ndarray], charset: str | None = None, variant_angles=VARIANT_ANGLES
    ) -> "TemplateSet":
        charset = charset or "".join(cells)
        vecs, variants, starts = [], [], []
        heights = {}
        rows = {}
        for ch in charset:
            cell = np.asarray(cells[ch], dtype=bool)
            base = _unit(_soften(normalize_char(cell)).ravel())
            vecs.append(base)
            starts.append(len(variants))
            variants.append(base)
            for a in variant_angles:
                turned = raster.rotate(_rotate_supersampled(_crop(cell), a), -a)
                variants.append(_unit(_soften(normalize_char(turned)).ravel()))
            ys = np.nonzero(cell.any(axis=1))[0]
            heights[ch] = int(ys.max() - ys.min() + 1)
            rows[ch] = (int(ys.min()), int(ys.max()))
        return cls(charset, dict(cells), np.vstack(vecs), heights, rows, np.vstack(variants), np.array(starts))

    def scores(self, normalized: np.ndarray) -> np.ndarray:
        """Score of one normalized character against every glyph, in [0, 1]:
        (1 + Pearson correlation) / 2, best over each glyph's variants."""
        v = _unit(_soften(np.asarray(normalized, dtype=np.float64)).ravel())
        r = np.maximum.reduceat(self.variants @ v, self.starts)
        return np.clip((1.0 + r) / 2.0, 0.0, 1.0)


def _crop(mask: np.ndarray) -> np.ndarray:
    ys, xs = np.nonzero(mask)
    return mask[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]


def _soften(img: np.ndarray) -> np.ndarray:
    return ndimage.gaussian_filter(img, BLUR_SIGMA, mode="constant") if BLUR_SIGMA > 0 else img


def _unit(v: np.ndarray) -> np.ndarray:
    v = v - v.mean()
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


@lru_cache(maxsize=None)
def default_templates() -> TemplateSet:
    data = resources.files("trussketch").joinpath("data/glyphs.trsk").read_bytes()
    cells = read_glyph_file(data)
    return TemplateSet.from_cells(cells, "".join(cells))


def load_templates(path: str | Path | None = None) -> TemplateSet:
    if path is None:
        return default_templates()
    cells = read_glyph_file(Path(path).read_bytes())
    return TemplateSet.from_cells(cells, "".join(cells))


def render_text(text: str, angle_deg: float = 0.0, templates: TemplateSet | None = None) -> np.ndarray:
    """Render ``text`` with the template font and rotate it CCW by ``angle_deg``.

    Returns a tight boolean mask (with a small margin).
    """
    templates = templates or default_templates()
    if not text:
        return np.zeros((1, 1), dtype=bool)
    canvas = np.zeros((CELL, ADVANCE * (len(text) - 1) + CELL), dtype=bool)
    for k, ch in enumerate(text):
        if ch == " ":
            continue
        if ch not in templates.cells:
            raise GlyphFileError(f"character {ch!r} not in the template charset")
        canvas[:, k * ADVANCE : k * ADVANCE + CELL] |= templates.cells[ch]
    ys, xs = np.nonzero(canvas)
    canvas = canvas[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]
    if angle_deg % 360.0 != 0.0:
        canvas = _rotate_supersampled(canvas, angle_deg)
    else:
        canvas = np.pad(canvas, 2)
    ys, xs = np.nonzero(canvas)
    return canvas[max(ys.min() - 1, 0) : ys.max() + 2, max(xs.min() - 1, 0) : xs.max() + 2]


def _rotate_supersampled(mask: np.ndarray, angle_deg: float, factor: int = 4) -> np.ndarray:
    # rotating a 4x upsampled copy and box-averaging back keeps thin strokes intact
    up = np.kron(np.pad(mask, 2).astype(np.float32), np.ones((factor, factor), np.float32))
    rot = ndimage.rotate(up, angle_deg, reshape=True, order=1, mode="constant", cval=0.0, prefilter=False)
    h, w = (rot.shape[0] // factor) * factor, (rot.shape[1] // factor) * factor
    rot = rot[:h, :w].reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))
    return np.pad(rot >= 0.5, 2)
