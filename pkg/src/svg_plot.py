"""
Native SVG figures: the pitchfork bifurcation diagram of a branch table and the
mu -> mu_star panel of a mu-limit table.
"""
from pathlib import Path
import logging
from typing import Dict, List, Optional, Sequence, Tuple
import xml.etree.ElementTree as ET

import numpy as np

from .errors import ConfigurationError
from .file_handler import ensure_directory

logger = logging.getLogger(__name__)

SVG_NS = "http://www.w3.org/2000/svg"
WIDTH = 640
HEIGHT = 480
MARGIN = 60
TICKS = 5
BRANCH_COLOR = "#1f4e9c"
MIRROR_COLOR = "#b33a3a"
TRIVIAL_COLOR = "#333333"
LEVEL_DASHES = ["4 3", "8 4", "2 2"]


class SvgCanvas:
    """A single panel with linear axes mapping data coordinates to pixels."""

    def __init__(self, x_range: Tuple[float, float], y_range: Tuple[float, float], title: str = "",
                 width: int = WIDTH, height: int = HEIGHT, margin: int = MARGIN):
        self.x0, self.x1 = _padded(x_range)
        self.y0, self.y1 = _padded(y_range)
        self.width = width
        self.height = height
        self.margin = margin
        self.root = ET.Element("svg", {
            "xmlns": SVG_NS, "width": str(width), "height": str(height),
            "viewBox": f"0 0 {width} {height}",
        })
        ET.SubElement(self.root, "rect", {"width": str(width), "height": str(height), "fill": "white"})
        if title:
            self.text(width / 2, margin / 2, title, anchor="middle", size=16)

    def px(self, x: float) -> float:
        return self.margin + (x - self.x0) / (self.x1 - self.x0) * (self.width - 2 * self.margin)

    def py(self, y: float) -> float:
        return self.height - self.margin - (y - self.y0) / (self.y1 - self.y0) * (self.height - 2 * self.margin)

    def text(self, x: float, y: float, label: str, anchor: str = "start", size: int = 12) -> ET.Element:
        node = ET.SubElement(self.root, "text", {
            "x": f"{x:.2f}", "y": f"{y:.2f}", "font-family": "sans-serif",
            "font-size": str(size), "text-anchor": anchor,
        })
        node.text = label
        return node

    def polyline(self, xs: Sequence[float], ys: Sequence[float], stroke: str, dash: Optional[str] = None,
                 width: float = 2.0, label: Optional[str] = None) -> ET.Element:
        points = " ".join(f"{self.px(x):.2f},{self.py(y):.2f}" for x, y in zip(xs, ys))
        attrs = {"points": points, "fill": "none", "stroke": stroke, "stroke-width": str(width)}
        if dash:
            attrs["stroke-dasharray"] = dash
        if label:
            attrs["class"] = label
        return ET.SubElement(self.root, "polyline", attrs)

    def marker(self, x: float, y: float, color: str, label: Optional[str] = None) -> ET.Element:
        attrs = {"cx": f"{self.px(x):.2f}", "cy": f"{self.py(y):.2f}", "r": "5", "fill": color}
        if label:
            attrs["class"] = label
        return ET.SubElement(self.root, "circle", attrs)

    def axes(self, x_label: str, y_label: str) -> None:
        left, right = self.margin, self.width - self.margin
        top, bottom = self.margin, self.height - self.margin
        frame = {"stroke": "black", "stroke-width": "1"}
        ET.SubElement(self.root, "line", {"x1": str(left), "y1": str(bottom), "x2": str(right), "y2": str(bottom), **frame})
        ET.SubElement(self.root, "line", {"x1": str(left), "y1": str(top), "x2": str(left), "y2": str(bottom), **frame})
        for tick in np.linspace(self.x0, self.x1, TICKS):
            self.text(self.px(tick), bottom + 18, f"{tick:.3g}", anchor="middle", size=10)
        for tick in np.linspace(self.y0, self.y1, TICKS):
            self.text(left - 6, self.py(tick) + 4, f"{tick:.3g}", anchor="end", size=10)
        self.text((left + right) / 2, self.height - 12, x_label, anchor="middle")
        label = self.text(16, (top + bottom) / 2, y_label, anchor="middle")
        label.set("transform", f"rotate(-90 16 {(top + bottom) / 2:.2f})")

    def legend(self, entries: Sequence[Tuple[str, str, Optional[str]]]) -> None:
        x = self.width - self.margin - 150
        for i, (name, color, dash) in enumerate(entries):
            y = self.margin + 14 + 16 * i
            attrs = {"x1": str(x), "y1": str(y), "x2": str(x + 24), "y2": str(y), "stroke": color, "stroke-width": "2"}
            if dash:
                attrs["stroke-dasharray"] = dash
            ET.SubElement(self.root, "line", attrs)
            self.text(x + 30, y + 4, name, size=11)

    def to_string(self) -> str:
        return ET.tostring(self.root, encoding="unicode")

    def save(self, output_path: Path) -> Optional[Path]:
        """Writes the SVG document. Returns None if it cannot be written."""
        if not ensure_directory(output_path.parent):
            return None
        try:
            with open(output_path, "w", encoding="utf-8") as f:
                f.write(self.to_string())
                f.write("\n")
            logger.info(f"Figura SVG salvata in: {output_path}")
            return output_path
        except OSError as e:
            logger.error(f"Errore I/O durante il salvataggio della figura {output_path}: {e}", exc_info=True)
            return None


def _padded(bounds: Tuple[float, float]) -> Tuple[float, float]:
    lo, hi = float(bounds[0]), float(bounds[1])
    if hi <= lo:
        pad = max(abs(lo), 1.0) * 0.05
        return lo - pad, hi + pad
    return lo, hi


def _column(rows: List[Dict[str, str]], name: str) -> np.ndarray:
    try:
        return np.array([float(row[name]) for row in rows])
    except KeyError as e:
        raise ConfigurationError(f"Colonna '{name}' mancante nella tabella") from e
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"Valore non numerico nella colonna '{name}': {e}") from e


def bifurcation_diagram(rows: List[Dict[str, str]], output_path: Path, norm: str = "l2_norm") -> Optional[Path]:
    """
    Pitchfork diagram of a branch table: the trivial branch (solid while stable,
    dashed past the onset), the onset marker and the arcs +||u|| and -||u||.

    The onset is the row with zero norm; without one, the smallest lambda is used.

    Args:
        rows (list[dict]): Rows of a branch CSV (read_csv).
        output_path (Path): Destination SVG.
        norm (str): Column used as amplitude.

    Returns:
        Path | None: The written figure, or None if it could not be saved.
    """
    if not rows:
        raise ConfigurationError("Tabella del ramo vuota: impossibile disegnare il diagramma")
    lam = _column(rows, "lambda")
    amp = _column(rows, norm)
    order = np.argsort(lam, kind="stable")
    lam, amp = lam[order], amp[order]
    zero = np.flatnonzero(amp == 0.0)
    if zero.size:
        onset = float(lam[zero[0]])
    else:
        onset = float(lam[0])
        logger.warning(f"Nessuna riga di innesco nella tabella: uso lambda minimo {onset:.6g}")
    nontrivial = lam >= onset

    span = max(float(lam[-1]) - onset, 1e-12)
    left = onset - 0.25 * span
    top = float(amp.max()) if amp.size else 1.0
    canvas = SvgCanvas((left, float(lam[-1])), (-top, top), title="Biforcazione a forcone")
    canvas.axes("lambda", f"±{norm}")
    canvas.polyline([left, onset], [0.0, 0.0], TRIVIAL_COLOR, label="trivial-stable")
    canvas.polyline([onset, float(lam[-1])], [0.0, 0.0], TRIVIAL_COLOR, dash="6 4", label="trivial-unstable")
    canvas.polyline(lam[nontrivial], amp[nontrivial], BRANCH_COLOR, label="branch-plus")
    canvas.polyline(lam[nontrivial], -amp[nontrivial], MIRROR_COLOR, label="branch-minus")
    canvas.marker(onset, 0.0, "black", label="onset")
    canvas.text(canvas.px(onset), canvas.py(0.0) + 20, f"lambda_1={onset:.5g}", anchor="middle", size=11)
    canvas.legend([("u", BRANCH_COLOR, None), ("-u", MIRROR_COLOR, None), ("0 instabile", TRIVIAL_COLOR, "6 4")])
    return canvas.save(output_path)


def mu_limit_panel(rows: List[Dict[str, str]], output_path: Path) -> Optional[Path]:
    """
    Critical-form norm against the truncated H_0^1 norms at each refinement
    level, as functions of mu.
    """
    if not rows:
        raise ConfigurationError("Tabella mu-limit vuota: impossibile disegnare il pannello")
    mu = _column(rows, "mu")
    hmu = _column(rows, "hmu_star")
    levels = []
    for i in range(1, 4):
        name = f"h10_trunc_L{i}"
        values = _column(rows, name)
        if np.all(np.isfinite(values)):
            levels.append((name, values))
    finite = [hmu] + [values for _, values in levels]
    top = max(float(np.max(v)) for v in finite)
    canvas = SvgCanvas((float(mu.min()), float(mu.max())), (0.0, top), title="mu -> mu*")
    canvas.axes("mu", "norma")
    canvas.polyline(mu, hmu, BRANCH_COLOR, label="hmu-star")
    entries = [("||u||_mu*", BRANCH_COLOR, None)]
    for (name, values), dash in zip(levels, LEVEL_DASHES):
        canvas.polyline(mu, values, MIRROR_COLOR, dash=dash, label=name)
        entries.append((name, MIRROR_COLOR, dash))
    canvas.legend(entries)
    return canvas.save(output_path)
