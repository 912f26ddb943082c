"""SVG rendering tests."""

import re

import numpy as np
import pytest

from attnalign.errors import ConsistencyError
from attnalign.heatmap import render_heatmap


def cell_opacities(svg):
    return [float(m) for m in re.findall(r'fill-opacity="([0-9.]+)"', svg)]


class TestRenderHeatmap:
    def test_single_full_cell(self):
        svg = render_heatmap(["src"], ["tgt"], [[1.0]])
        assert svg.startswith("<svg ")
        assert cell_opacities(svg) == [1.0]

    def test_uniform_grid_equal_intensity(self):
        svg = render_heatmap(["a", "b"], ["x", "y"],
                             np.full((2, 2), 0.25))
        assert cell_opacities(svg) == [0.25] * 4

    def test_gold_link_outlined_once(self):
        svg = render_heatmap(["a", "b"], ["x", "y"],
                             np.full((2, 2), 0.25), gold_links={(0, 1)})
        outlines = re.findall(r'stroke="#d62728"', svg)
        assert len(outlines) == 1
        # the outline sits at column 0 (x of the first cell column) and
        # row 1 (y of the second row)
        m = re.search(r'<rect x="(\d+)" y="(\d+)" width="22" height="22" '
                      r'fill="none"', svg)
        assert m is not None

    def test_deterministic_bytes(self):
        args = (["a", "b"], ["x"], [[0.3, 0.7]], {(1, 0)})
        assert render_heatmap(*args) == render_heatmap(*args)

    def test_tokens_are_escaped(self):
        svg = render_heatmap(["<&>"], ["x"], [[1.0]])
        assert "&lt;&amp;&gt;" in svg

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ConsistencyError):
            render_heatmap(["a"], ["x", "y"], [[1.0]])

    def test_out_of_grid_link_rejected(self):
        with pytest.raises(ConsistencyError):
            render_heatmap(["a"], ["x"], [[1.0]], gold_links={(3, 0)})
