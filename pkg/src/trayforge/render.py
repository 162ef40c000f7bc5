"""SVG top view of a tray layout, 1 px per mm.

Tray x runs right, tray y runs down. Footprints are filled by group from a
fixed palette so the output diffs cleanly between runs.
"""
from __future__ import annotations

import xml.etree.ElementTree as ET

from .packer import DEFAULT_HOLDER_BASE_MM, TrayLayout

PALETTE = {
    "ring": "#4e79a7",
    "ring_thick": "#2f4b7c",
    "needle": "#f28e2b",
    "thumb": "#59a14f",
    "gun": "#e15759",
}
OTHER_COLORS = ("#b07aa1", "#9c755f", "#76b7b2", "#edc948", "#bab0ac", "#ff9da7")
DIVIDER_COLOR = "#555555"
HOLDER_COLOR = "#222222"
HOLDER_MARK_MM = 8.0


def group_color(group: str) -> str:
    if group in PALETTE:
        return PALETTE[group]
    # stable across runs: sum of code points, not hash()
    return OTHER_COLORS[sum(map(ord, group)) % len(OTHER_COLORS)]


def _n(v: float) -> str:
    return f"{round(float(v), 3):g}"


def render_svg(layout: TrayLayout, holder_base_mm: float = DEFAULT_HOLDER_BASE_MM) -> str:
    tray = layout.tray
    svg = ET.Element("svg", {
        "xmlns": "http://www.w3.org/2000/svg",
        "width": _n(tray.width_mm),
        "height": _n(tray.length_mm),
        "viewBox": f"0 0 {_n(tray.width_mm)} {_n(tray.length_mm)}",
    })
    ET.SubElement(svg, "rect", {
        "x": "0", "y": "0", "width": _n(tray.width_mm), "height": _n(tray.length_mm),
        "fill": "#ffffff", "stroke": "#000000", "stroke-width": "1", "class": "tray",
    })
    # lower layers first so upper footprints sit on top
    for p in sorted(layout.placements, key=lambda p: (p.layer, p.column, p.x_mm, p.instrument_id, p.instance)):
        rect = ET.SubElement(svg, "rect", {
            "x": _n(p.x_mm - p.length_mm / 2), "y": _n(p.y_mm - p.width_mm / 2),
            "width": _n(p.length_mm), "height": _n(p.width_mm),
            "fill": group_color(str(p.group)), "fill-opacity": "0.6",
            "stroke": "#000000", "stroke-width": "0.5", "class": "instrument",
        })
        ET.SubElement(rect, "title").text = f"{p.instrument_id}#{p.instance} col {p.column} layer {p.layer}"
    for d in layout.dividers:
        ET.SubElement(svg, "rect", {
            "x": _n(d.x_mm - d.width_mm / 2), "y": _n(d.y_mm - d.thickness_mm / 2),
            "width": _n(d.width_mm), "height": _n(d.thickness_mm),
            "fill": DIVIDER_COLOR, "class": "divider",
        })
    for h in layout.holders:
        ET.SubElement(svg, "rect", {
            "x": "0", "y": _n(h.y_mm - holder_base_mm / 2),
            "width": _n(HOLDER_MARK_MM), "height": _n(holder_base_mm),
            "fill": HOLDER_COLOR, "class": "holder",
        })
    ET.indent(svg)
    return ET.tostring(svg, encoding="unicode") + "\n"
