"""Deterministic SVG attention grids.

Rows are target steps, columns source positions; cell darkness is the
attention weight and gold alignment links are drawn as cell outlines.
Output is plain SVG text so identical inputs give identical bytes.
"""

from xml.sax.saxutils import escape

import numpy as np

from attnalign.errors import ConsistencyError

CELL = 24
FONT = 12
FILL = "#1f4e96"
OUTLINE = "#d62728"


def render_heatmap(source, target, attention, gold_links=None):
    """SVG text for one sentence's attention matrix.

    source/target are token lists, attention a (len(target),
    len(source)) matrix, gold_links an optional set of (source index,
    target index) pairs to outline.
    """
    attention = np.asarray(attention, dtype=np.float64)
    if attention.shape != (len(target), len(source)):
        raise ConsistencyError(
            f"attention shape {attention.shape} does not match "
            f"{len(target)} target x {len(source)} source tokens")
    left = 10 + int(max((len(t) for t in target), default=1) * FONT * 0.62)
    top = 10 + int(max((len(s) for s in source), default=1) * FONT * 0.62)
    width = left + CELL * len(source) + 10
    height = top + CELL * len(target) + 10

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<g font-family="monospace" font-size="{FONT}" fill="black">',
    ]
    for i, tok in enumerate(source):
        x = left + i * CELL + CELL // 2
        parts.append(
            f'<text x="{x}" y="{top - 6}" text-anchor="start" '
            f'transform="rotate(-60 {x} {top - 6})">{escape(tok)}</text>')
    for t, tok in enumerate(target):
        y = top + t * CELL + CELL // 2 + FONT // 2 - 1
        parts.append(
            f'<text x="{left - 6}" y="{y}" text-anchor="end">'
            f'{escape(tok)}</text>')
    parts.append("</g>")

    for t in range(len(target)):
        for i in range(len(source)):
            weight = min(max(float(attention[t, i]), 0.0), 1.0)
            x = left + i * CELL
            y = top + t * CELL
            parts.append(
                f'<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" '
                f'fill="{FILL}" fill-opacity="{weight:.6f}" '
                f'stroke="#cccccc" stroke-width="0.5"/>')
    if gold_links:
        for i, t in sorted(gold_links):
            if not (0 <= i < len(source) and 0 <= t < len(target)):
                raise ConsistencyError(
                    f"gold link {i}-{t} outside the "
                    f"{len(source)}x{len(target)} grid")
            x = left + i * CELL
            y = top + t * CELL
            parts.append(
                f'<rect x="{x + 1}" y="{y + 1}" width="{CELL - 2}" '
                f'height="{CELL - 2}" fill="none" stroke="{OUTLINE}" '
                f'stroke-width="2"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
