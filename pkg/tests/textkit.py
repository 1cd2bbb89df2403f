"""Helpers that put template-rendered words on a blank canvas."""

import numpy as np

from trussketch import font


def canvas_with(text, angle=0.0, margin=10):
    m = font.render_text(text, angle)
    c = np.zeros((m.shape[0] + 2 * margin, m.shape[1] + 2 * margin), dtype=bool)
    c[margin : margin + m.shape[0], margin : margin + m.shape[1]] = m
    return c


def spaced_word(text, gap):
    """Glyphs cropped to their ink and laid out with exactly ``gap`` blank
    columns between neighbours, bottoms aligned on the cell baseline."""
    t = font.default_templates()
    cols = []
    for ch in text:
        cell = t.cells[ch]
        xs = np.nonzero(cell.any(axis=0))[0]
        cols.append(cell[:, xs.min() : xs.max() + 1])
        cols.append(np.zeros((font.CELL, gap), dtype=bool))
    return np.hstack(cols[:-1])
