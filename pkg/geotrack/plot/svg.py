"""Static SVG plots of predicted trajectories against ground truth.

Everything is drawn in UTM meters with one scale for both axes, so plotted
distances are comparable. Each trajectory is a ``<g>`` layer holding a
``<polyline>`` and one ``<circle>`` per frame.
"""

import logging
import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from geotrack.consistent.candidates import TrajectoryPrediction
from geotrack.errors import DataError, EmptyInputError
from geotrack.geo.geodesy import latlon_to_utm_arrays, utm_zone

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

SVG_NS = "http://www.w3.org/2000/svg"
TRUTH_ID = "truth"

METHOD_COLORS = {
    TRUTH_ID: "#222222",
    "nn": "#d62728",
    "ds": "#ff7f0e",
    "dp": "#2ca02c",
    "transretriever": "#1f77b4",
}
FALLBACK_COLORS = ("#9467bd", "#8c564b", "#e377c2", "#17becf")


@dataclass
class Layer:
    layer_id: str
    label: str
    xy: np.ndarray
    color: str
    dashed: bool = False


@dataclass
class SvgPlot:
    """Collects polylines in meters and renders them with equal aspect."""

    width: int = 800
    margin: int = 40
    title: str = ""
    layers: List[Layer] = field(default_factory=list)

    def add(self, layer_id: str, label: str, xy: np.ndarray, color: Optional[str] = None, dashed: bool = False) -> None:
        if color is None:
            color = METHOD_COLORS.get(layer_id, FALLBACK_COLORS[len(self.layers) % len(FALLBACK_COLORS)])
        self.layers.append(Layer(layer_id, label, np.asarray(xy, dtype=np.float64).reshape(-1, 2), color, dashed))

    def _transform(self) -> Tuple[np.ndarray, float, int]:
        points = np.concatenate([layer.xy for layer in self.layers])
        lo = points.min(axis=0)
        span = float(max(np.ptp(points[:, 0]), np.ptp(points[:, 1]), 1.0))
        scale = (self.width - 2 * self.margin) / span
        height = int(np.ceil(np.ptp(points[:, 1]) * scale)) + 2 * self.margin
        return lo, scale, height

    def render(self) -> ET.Element:
        if not self.layers:
            raise EmptyInputError("nothing to plot")
        lo, scale, height = self._transform()
        legend_h = 18 * len(self.layers) + 10
        root = ET.Element(
            "svg",
            {
                "xmlns": SVG_NS,
                "width": str(self.width),
                "height": str(height + legend_h),
                "viewBox": f"0 0 {self.width} {height + legend_h}",
                "data-meters-per-px": f"{1.0 / scale:.6g}",
            },
        )
        if self.title:
            ET.SubElement(root, "title").text = self.title
        for layer in self.layers:
            px = np.empty_like(layer.xy)
            px[:, 0] = self.margin + (layer.xy[:, 0] - lo[0]) * scale
            px[:, 1] = height - self.margin - (layer.xy[:, 1] - lo[1]) * scale
            group = ET.SubElement(root, "g", {"id": layer.layer_id, "data-label": layer.label})
            if len(px) > 1:
                attrs = {
                    "points": " ".join(f"{x:.2f},{y:.2f}" for x, y in px),
                    "fill": "none",
                    "stroke": layer.color,
                    "stroke-width": "2",
                }
                if layer.dashed:
                    attrs["stroke-dasharray"] = "6,4"
                ET.SubElement(group, "polyline", attrs)
            for x, y in px:
                ET.SubElement(group, "circle", {"cx": f"{x:.2f}", "cy": f"{y:.2f}", "r": "3", "fill": layer.color})
        legend = ET.SubElement(root, "g", {"id": "legend"})
        for i, layer in enumerate(self.layers):
            y = height + 14 + 18 * i
            ET.SubElement(legend, "rect", {"x": str(self.margin), "y": str(y - 9), "width": "12", "height": "12", "fill": layer.color})
            ET.SubElement(legend, "text", {"x": str(self.margin + 18), "y": str(y + 2), "font-size": "12"}).text = layer.label
        return root

    def to_string(self) -> str:
        return ET.tostring(self.render(), encoding="unicode", xml_declaration=True)

    def save(self, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        ET.ElementTree(self.render()).write(path, encoding="utf-8", xml_declaration=True)
        logger.info("wrote plot with %d layers to %s", len(self.layers), path)
        return path


def plot_trajectories(
    predictions: Sequence[TrajectoryPrediction],
    truth: Optional[Sequence[Tuple[float, float]]],
    out: PathLike,
    title: str = "",
) -> Path:
    """Truth polyline (dashed) plus one polyline per prediction.

    Truth is given as ``(lat, lon)`` and projected into the predictions' UTM
    zone, or its own zone when there are no predictions.
    """
    if not predictions and not truth:
        raise EmptyInputError("plot needs a ground truth or at least one trajectory")
    plot = SvgPlot(title=title)
    if truth:
        lat = np.array([p[0] for p in truth], dtype=np.float64)
        lon = np.array([p[1] for p in truth], dtype=np.float64)
        if predictions:
            zone, hemisphere = predictions[0].zone, predictions[0].hemisphere
        else:
            zone, hemisphere = utm_zone(lat[0], lon[0]), "N" if lat[0] >= 0 else "S"
        x, y = latlon_to_utm_arrays(lat, lon, zone, hemisphere)
        plot.add(TRUTH_ID, "ground truth", np.stack([x, y], axis=-1), dashed=True)
    seen: Dict[str, int] = {}
    for pred in predictions:
        count = seen.get(pred.method, 0)
        seen[pred.method] = count + 1
        layer_id = pred.method if count == 0 else f"{pred.method}-{count}"
        label = f"{pred.method} (objective {pred.objective:.1f})"
        plot.add(layer_id, label, np.asarray(pred.utm, dtype=np.float64), color=METHOD_COLORS.get(pred.method))
    return plot.save(out)


def read_polylines(path: PathLike) -> Dict[str, np.ndarray]:
    """Pixel vertices of every plotted layer, keyed by layer id."""
    try:
        root = ET.parse(path).getroot()
    except (ET.ParseError, OSError) as e:
        raise DataError(f"cannot parse SVG: {e}", path=str(path)) from e
    lines = {}
    for group in root.iter(f"{{{SVG_NS}}}g"):
        layer_id = group.get("id")
        if layer_id is None or layer_id == "legend":
            continue
        circles = [(float(c.get("cx")), float(c.get("cy"))) for c in group.iter(f"{{{SVG_NS}}}circle")]
        lines[layer_id] = np.asarray(circles, dtype=np.float64).reshape(-1, 2)
    return lines
