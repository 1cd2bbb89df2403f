"""Regenerate src/trussketch/data/glyphs.trsk from DejaVu Sans Mono Bold.

The font ships with matplotlib, so no extra download is needed:

    python tools/build_glyphs.py
"""

import os
import sys
from pathlib import Path

import matplotlib
import numpy as np
from PIL import Image, ImageDraw, ImageFont

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
from trussketch.font import CELL, CHARSET, write_glyph_file  # noqa: E402

FONT_SIZE = 22  # ink spans 23 rows once shifted up by 3 px
PEN_X = 5
PEN_Y = -3


def render_cell(font, ch):
    im = Image.new("L", (CELL, CELL), 0)
    ImageDraw.Draw(im).text((PEN_X, PEN_Y), ch, fill=255, font=font)
    return np.asarray(im) >= 128


def main():
    ttf = os.path.join(os.path.dirname(matplotlib.__file__), "mpl-data", "fonts", "ttf", "DejaVuSansMono-Bold.ttf")
    font = ImageFont.truetype(ttf, FONT_SIZE)
    cells = {ch: render_cell(font, ch) for ch in CHARSET}
    out = Path(__file__).resolve().parents[1] / "src" / "trussketch" / "data" / "glyphs.trsk"
    write_glyph_file(out, cells)
    print(f"wrote {out} ({len(cells)} glyphs)")


if __name__ == "__main__":
    main()
