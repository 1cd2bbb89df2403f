"""Raster primitives: loading, binarization, labeling, binary morphology and
per-region shape metrics.

Images are plain numpy arrays indexed ``[y, x]``: a gray image is ``uint8``
with shape ``(height, width)``, a binary image is ``bool`` of the same shape
with ``True`` marking ink.  Pixel coordinates everywhere else in the package
are ``(x, y)`` with y pointing down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Iterable, Union

import numpy as np
from PIL import Image
from scipy import ndimage

__all__ = [
    "RasterError",
    "StructuringElement",
    "Region",
    "load_image",
    "save_gray",
    "save_binary",
    "binarize",
    "otsu_threshold",
    "connected_components",
    "label_image",
    "remove_small_regions",
    "erode",
    "dilate",
    "fill_holes",
    "region_metrics",
    "region_from_coords",
    "render_regions",
    "disk",
    "square",
    "complement",
]

ThresholdPolicy = Union[str, int, float]


class RasterError(ValueError):
    pass


# ---------------------------------------------------------------------------
# I/O


def load_image(path: str | Path) -> np.ndarray:
    """Read a PNG/BMP/... file as an 8-bit gray image.

    RGB input is reduced with the luma weights 0.299/0.587/0.114; transparent
    pixels are composited over white first.
    """
    with Image.open(path) as im:
        im.load()
        if im.mode in ("L", "1"):
            return np.asarray(im.convert("L"), dtype=np.uint8).copy()
        if im.mode in ("RGBA", "LA", "P", "PA"):
            rgba = im.convert("RGBA")
            bg = Image.new("RGBA", rgba.size, (255, 255, 255, 255))
            im = Image.alpha_composite(bg, rgba)
        rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
    luma = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return np.clip(np.rint(luma), 0, 255).astype(np.uint8)


def save_gray(img: np.ndarray, path: str | Path) -> None:
    Image.fromarray(np.asarray(img, dtype=np.uint8), mode="L").save(path, format="PNG")


def save_binary(img: np.ndarray, path: str | Path) -> None:
    """Write a mask as black ink on white."""
    save_gray(np.where(img, 0, 255).astype(np.uint8), path)


# ---------------------------------------------------------------------------
# Binarization


def otsu_threshold(gray: np.ndarray) -> int:
    """Return the threshold t minimizing the pooled intra-class variance of
    the split ``{v <= t}`` / ``{v > t}``.

    Exact rational arithmetic is used so that ties (flat stretches of the
    criterion) always resolve to the smallest t.
    """
    hist = np.bincount(np.asarray(gray, dtype=np.uint8).ravel(), minlength=256)
    levels = np.nonzero(hist)[0]
    if len(levels) < 2:
        raise RasterError("no separable foreground")
    n = int(hist.sum())
    total = int(np.dot(np.arange(256), hist))
    best_t, best = None, None
    n0 = s0 = 0
    # minimizing intra-class variance == maximizing between-class variance
    for t in range(255):
        n0 += int(hist[t])
        s0 += t * int(hist[t])
        n1 = n - n0
        if n0 == 0 or n1 == 0:
            continue
        between = Fraction((s0 * n - n0 * total) ** 2, n0 * n1)
        if best is None or between > best:
            best, best_t = between, t
    return int(best_t)


def binarize(gray: np.ndarray, threshold_policy: ThresholdPolicy = "auto") -> np.ndarray:
    """Split a gray image into ink (True) and paper (False).

    ``threshold_policy`` is ``"auto"`` or a number t.  A fixed t marks pixels
    darker than t as ink.  The automatic policy uses :func:`otsu_threshold`
    and takes whichever side of the split covers less than half the image,
    preferring the darker side on an exact tie.
    """
    gray = np.asarray(gray)
    if gray.ndim != 2 or gray.size == 0:
        raise RasterError("expected a non-empty 2-D gray image")
    if gray.min() == gray.max():
        raise RasterError("no separable foreground")
    if threshold_policy == "auto":
        t = otsu_threshold(gray)
        dark = gray <= t
        if np.count_nonzero(dark) * 2 <= gray.size:
            return dark
        return ~dark
    t = float(threshold_policy)
    fg = gray < t
    if not fg.any() or fg.all():
        raise RasterError("no separable foreground")
    return fg


# ---------------------------------------------------------------------------
# Structuring elements


@dataclass(frozen=True)
class StructuringElement:
    """A set of (dx, dy) offsets around an origin at (0, 0)."""

    offsets: tuple[tuple[int, int], ...]

    def __post_init__(self):
        offs = tuple(sorted({(int(dx), int(dy)) for dx, dy in self.offsets}))
        if not offs:
            raise RasterError("structuring element must be non-empty")
        if (0, 0) not in offs:
            raise RasterError("structuring element must contain the origin")
        object.__setattr__(self, "offsets", offs)

    @classmethod
    def from_offsets(cls, offsets: Iterable[tuple[int, int]]) -> "StructuringElement":
        return cls(tuple(offsets))

    @property
    def reach(self) -> int:
        return max(max(abs(dx), abs(dy)) for dx, dy in self.offsets)

    def reflect(self) -> "StructuringElement":
        return StructuringElement(tuple((-dx, -dy) for dx, dy in self.offsets))

    def runs(self) -> list[tuple[int, int, int]]:
        """Decompose into horizontal runs ``(dy, dx_start, dx_end)``."""
        by_row: dict[int, list[int]] = {}
        for dx, dy in self.offsets:
            by_row.setdefault(dy, []).append(dx)
        out = []
        for dy in sorted(by_row):
            xs = sorted(by_row[dy])
            start = prev = xs[0]
            for x in xs[1:]:
                if x != prev + 1:
                    out.append((dy, start, prev))
                    start = x
                prev = x
            out.append((dy, start, prev))
        return out


def disk(radius: float) -> StructuringElement:
    """All offsets with dx^2 + dy^2 <= radius^2."""
    if radius < 0:
        raise RasterError("radius must be >= 0")
    r = int(math.floor(radius))
    r2 = radius * radius
    return StructuringElement(
        tuple((dx, dy) for dy in range(-r, r + 1) for dx in range(-r, r + 1) if dx * dx + dy * dy <= r2)
    )


def square(size: int) -> StructuringElement:
    """A size x size block centred on the origin (odd sizes only)."""
    if size < 1 or size % 2 == 0:
        raise RasterError("square size must be a positive odd integer")
    h = size // 2
    return StructuringElement(tuple((dx, dy) for dy in range(-h, h + 1) for dx in range(-h, h + 1)))


# ---------------------------------------------------------------------------
# Morphology


def complement(img: np.ndarray) -> np.ndarray:
    return ~np.asarray(img, dtype=bool)


def _window_counts(padded_cs: np.ndarray, pad: int, shape, dy: int, x0: int, x1: int) -> np.ndarray:
    # padded_cs[:, k] = sum of padded[:, :k]
    h, w = shape
    rows = slice(pad + dy, pad + dy + h)
    hi = padded_cs[rows, pad + x1 + 1 : pad + x1 + 1 + w]
    lo = padded_cs[rows, pad + x0 : pad + x0 + w]
    return hi - lo


def _prepare(img: np.ndarray, se: StructuringElement):
    img = np.asarray(img, dtype=bool)
    pad = se.reach
    padded = np.pad(img, pad, mode="constant", constant_values=False)
    cs = np.zeros((padded.shape[0], padded.shape[1] + 1), dtype=np.int32)
    np.cumsum(padded, axis=1, out=cs[:, 1:])
    return img, pad, cs


def erode(img: np.ndarray, se: StructuringElement) -> np.ndarray:
    """Pixels z such that every offset of ``se`` placed at z lands on ink.

    Out-of-bounds pixels count as background.
    """
    img, pad, cs = _prepare(img, se)
    out = np.ones(img.shape, dtype=bool)
    for dy, x0, x1 in se.runs():
        out &= _window_counts(cs, pad, img.shape, dy, x0, x1) == (x1 - x0 + 1)
    return out


def dilate(img: np.ndarray, se: StructuringElement) -> np.ndarray:
    """Union of ``img`` translated by every offset of ``se``.

    Equivalently z is set iff the reflected element placed at z hits ink.
    """
    img = np.asarray(img, dtype=bool)
    # out[z] = OR_d img[z - d]: an erosion-style window over the reflected offsets
    refl = se.reflect()
    _, pad, cs = _prepare(img, refl)
    out = np.zeros(img.shape, dtype=bool)
    for dy, x0, x1 in refl.runs():
        out |= _window_counts(cs, pad, img.shape, dy, x0, x1) > 0
    return out


_FOUR = ndimage.generate_binary_structure(2, 1)
_EIGHT = ndimage.generate_binary_structure(2, 2)


def fill_holes(img: np.ndarray) -> np.ndarray:
    """Fill background pockets (4-connected) that do not reach the border."""
    img = np.asarray(img, dtype=bool)
    bg_labels, n = ndimage.label(~img, structure=_FOUR)
    if n == 0:
        return img.copy()
    border = np.concatenate([bg_labels[0, :], bg_labels[-1, :], bg_labels[:, 0], bg_labels[:, -1]])
    outside = np.zeros(n + 1, dtype=bool)
    outside[np.unique(border)] = True
    outside[0] = True  # label 0 is ink
    return img | ~outside[bg_labels]


# ---------------------------------------------------------------------------
# Regions


@dataclass(frozen=True, eq=False)
class Region:
    """One connected blob of ink with the metrics used by the classifiers.

    ``coords`` is an (N, 2) integer array of ``(x, y)`` pixel positions.
    """

    id: int
    coords: np.ndarray
    area: int
    bbox: tuple[int, int, int, int]
    bbox_center: tuple[float, float]
    centroid: tuple[float, float]
    bbox_extent: tuple[int, int]
    line_similarity: float
    centroid_shift: float
    covariance: tuple[float, float, float] = field(repr=False)

    @cached_property
    def pixels(self) -> frozenset[tuple[int, int]]:
        return frozenset(map(tuple, self.coords.tolist()))

    @property
    def fill_ratio(self) -> float:
        lbx, lby = self.bbox_extent
        return self.area / float(lbx * lby)

    @property
    def major_axis(self) -> tuple[float, float]:
        """Unit vector (x, y-down) along the direction of largest spread."""
        sxx, syy, sxy = self.covariance
        theta = 0.5 * math.atan2(2.0 * sxy, sxx - syy)
        return math.cos(theta), math.sin(theta)

    @property
    def major_axis_angle(self) -> float:
        """Major axis angle in degrees, y-up convention, in [0, 180)."""
        ux, uy = self.major_axis
        return math.degrees(math.atan2(-uy, ux)) % 180.0

    def mask(self, shape: tuple[int, int]) -> np.ndarray:
        out = np.zeros(shape, dtype=bool)
        out[self.coords[:, 1], self.coords[:, 0]] = True
        return out


def region_metrics(pixels) -> dict:
    """Shape metrics of a non-empty pixel set.

    ``pixels`` may be an (N, 2) array or any iterable of ``(x, y)`` pairs.
    The centroid shift is the centroid to bbox-centre distance divided by the
    bbox diagonal; line similarity is the eccentricity of the ellipse sharing
    the region's second central moments.
    """
    coords = _as_coords(pixels)
    if len(coords) == 0:
        raise RasterError("empty pixel set")
    xs = coords[:, 0].astype(np.float64)
    ys = coords[:, 1].astype(np.float64)
    min_x, max_x = int(coords[:, 0].min()), int(coords[:, 0].max())
    min_y, max_y = int(coords[:, 1].min()), int(coords[:, 1].max())
    bx, by = (min_x + max_x) / 2.0, (min_y + max_y) / 2.0
    cx, cy = float(xs.mean()), float(ys.mean())
    lbx, lby = max_x - min_x + 1, max_y - min_y + 1
    shift = math.hypot(bx - cx, by - cy) / math.hypot(lbx, lby)
    dx, dy = xs - cx, ys - cy
    sxx, syy, sxy = float(np.mean(dx * dx)), float(np.mean(dy * dy)), float(np.mean(dx * dy))
    return {
        "area": int(len(coords)),
        "bbox": (min_x, min_y, max_x, max_y),
        "bbox_center": (bx, by),
        "centroid": (cx, cy),
        "bbox_extent": (lbx, lby),
        "line_similarity": _eccentricity(sxx, syy, sxy),
        "centroid_shift": shift,
        "covariance": (sxx, syy, sxy),
    }


def _eccentricity(sxx: float, syy: float, sxy: float) -> float:
    half_tr = 0.5 * (sxx + syy)
    disc = math.sqrt(max(0.0, 0.25 * (sxx - syy) ** 2 + sxy * sxy))
    major, minor = half_tr + disc, half_tr - disc
    if major <= 0.0:
        return 1.0 if (sxx > 0 or syy > 0) else 0.0
    if minor <= 1e-12 * major:
        return 1.0
    return min(1.0, max(0.0, math.sqrt(1.0 - minor / major)))


def _as_coords(pixels) -> np.ndarray:
    if isinstance(pixels, np.ndarray):
        return pixels.reshape(-1, 2).astype(np.int64)
    pts = list(pixels)
    if not pts:
        return np.zeros((0, 2), dtype=np.int64)
    return np.asarray(sorted(pts), dtype=np.int64)


def region_from_coords(region_id: int, coords) -> Region:
    coords = _as_coords(coords)
    return Region(id=region_id, coords=coords, **region_metrics(coords))


def label_image(img: np.ndarray, connectivity: int = 8) -> tuple[np.ndarray, int]:
    if connectivity not in (4, 8):
        raise RasterError("connectivity must be 4 or 8")
    structure = _EIGHT if connectivity == 8 else _FOUR
    return ndimage.label(np.asarray(img, dtype=bool), structure=structure)


def connected_components(img: np.ndarray, connectivity: int = 8) -> list[Region]:
    """Label ink blobs; ids run 1..n in raster order of each blob's first pixel."""
    labels, n = label_image(img, connectivity)
    regions = []
    for i, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        ys, xs = np.nonzero(labels[sl] == i)
        coords = np.column_stack((xs + sl[1].start, ys + sl[0].start))
        regions.append(region_from_coords(i, coords))
    return regions


def render_regions(regions: Iterable[Region], shape: tuple[int, int]) -> np.ndarray:
    out = np.zeros(shape, dtype=bool)
    for r in regions:
        out[r.coords[:, 1], r.coords[:, 0]] = True
    return out


def remove_small_regions(img: np.ndarray, min_area: int) -> tuple[np.ndarray, list[Region]]:
    """Drop blobs smaller than ``min_area`` pixels.

    Returns the cleaned image and the dropped regions (the text candidates).
    """
    if min_area < 1:
        raise RasterError("min_area must be >= 1")
    img = np.asarray(img, dtype=bool)
    labels, n = label_image(img, 8)
    if n == 0:
        return img.copy(), []
    sizes = np.bincount(labels.ravel(), minlength=n + 1)
    small = sizes < min_area
    small[0] = False
    kept = img & ~small[labels]
    removed = []
    for i, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None or not small[i]:
            continue
        ys, xs = np.nonzero(labels[sl] == i)
        removed.append(region_from_coords(i, np.column_stack((xs + sl[1].start, ys + sl[0].start))))
    return kept, removed


def rotate(img: np.ndarray, angle_deg: float, pad: int = 2) -> np.ndarray:
    """Rotate a mask counter-clockwise (as seen on screen) by ``angle_deg``.

    Bilinear interpolation on the 0/1 mask, re-thresholded at 0.5.  The
    output canvas grows to hold the whole rotated mask plus ``pad`` pixels.
    """
    img = np.pad(np.asarray(img, dtype=np.float32), pad)
    out = ndimage.rotate(img, angle_deg, reshape=True, order=1, mode="constant", cval=0.0, prefilter=False)
    return out >= 0.5
