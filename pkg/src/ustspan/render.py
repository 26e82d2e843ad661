"""SVG rendering of a tree restricted to its window, spanning clusters highlighted."""
from __future__ import annotations

import xml.etree.ElementTree as ET

import numpy as np

from .clusters import ClusterLabeling
from .wilson import TreeState

BASE_STROKE = "#b8b8b8"
PALETTE = ["#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd",
           "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f"]


def _segments(pts_a: np.ndarray, pts_b: np.ndarray) -> str:
    return " ".join(f"M{a[0]:g} {a[1]:g}L{b[0]:g} {b[1]:g}" for a, b in zip(pts_a, pts_b))


def render_svg(tree: TreeState, labeling: ClusterLabeling, out_path, slab: tuple[int, int] | None = None,
               cell: float = 4.0, margin: float = 4.0) -> dict:
    """Write the window edges in a base stroke and each spanning cluster in its own colour.

    In three dimensions ``slab = (axis, level)`` selects the one-site-thick
    slice ``x[axis] == level`` that is drawn.  Returns element counts.
    """
    box = tree.box
    dim = box.dim
    if dim == 2:
        axes = (0, 1)
    elif slab is None:
        raise ValueError("a slab (axis, level) projection is required for dim > 2")
    else:
        axes = tuple(a for a in range(dim) if a != slab[0])
        if len(axes) != 2:
            raise ValueError("slab projection only supported for dim = 3")

    sites = labeling.sites
    coords = box.decode(sites)
    keep = np.ones(sites.size, dtype=bool) if slab is None else coords[:, slab[0]] == slab[1]
    sites, coords, comp = sites[keep], coords[keep], labeling.component[keep]
    par = tree.parent[sites]
    in_win = np.isin(par, sites) & (par != sites)
    u, v = sites[in_win], par[in_win]
    comp_e = comp[in_win]

    if coords.size:
        lo = coords[:, list(axes)].min(axis=0)
        hi = coords[:, list(axes)].max(axis=0)
    else:
        lo = hi = np.zeros(2, dtype=np.int64)

    def xy(flat):
        c = box.decode(flat)[:, list(axes)] if flat.size else np.zeros((0, 2), dtype=np.int64)
        return np.stack([margin + (c[:, 0] - lo[0]) * cell,
                         margin + (hi[1] - c[:, 1]) * cell], axis=1)

    width = 2 * margin + (hi[0] - lo[0]) * cell
    height = 2 * margin + (hi[1] - lo[1]) * cell
    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", version="1.1",
                     width=f"{width:g}", height=f"{height:g}",
                     viewBox=f"0 0 {width:g} {height:g}")
    ET.SubElement(svg, "rect", width="100%", height="100%", fill="white")
    base = ET.SubElement(svg, "g", id="window-edges", stroke=BASE_STROKE, fill="none")
    base.set("stroke-width", f"{cell / 4:g}")
    base.set("stroke-linecap", "round")
    if u.size:
        ET.SubElement(base, "path", d=_segments(xy(u), xy(v)))

    span_ids = labeling.comp_ids[labeling.spanning]
    hl = ET.SubElement(svg, "g", id="spanning-clusters", fill="none")
    hl.set("stroke-width", f"{cell / 2:g}")
    hl.set("stroke-linecap", "round")
    for i, cid in enumerate(span_ids):
        g = ET.SubElement(hl, "g", stroke=PALETTE[i % len(PALETTE)])
        g.set("class", "spanning-cluster")
        g.set("data-component", str(int(cid)))
        sel = comp_e == cid
        if sel.any():
            ET.SubElement(g, "path", d=_segments(xy(u[sel]), xy(v[sel])))
    ET.ElementTree(svg).write(out_path, encoding="utf-8", xml_declaration=True)
    return {"edges": int(u.size), "highlighted_groups": int(span_ids.size),
            "highlighted_edges": int(np.isin(comp_e, span_ids).sum())}
