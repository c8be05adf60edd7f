"""Minimal hand-written SVG output: line charts for metric sweeps and 2-D
scatter plots of generated samples with optional trajectory paths."""

from __future__ import annotations

from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#17becf", "#7f7f7f")

MARGIN = 56


def _bounds(values, pad_fraction=0.08):
    lo, hi = min(values), max(values)
    if lo == hi:
        lo, hi = lo - 1.0, hi + 1.0
    pad = (hi - lo) * pad_fraction
    return lo - pad, hi + pad


class _Canvas:
    def __init__(self, width, height):
        self.width = width
        self.height = height
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}">',
            f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        ]

    def add(self, element: str):
        self.parts.append(element)

    def text(self, x, y, s, size=12, anchor="middle", color="#333"):
        self.add(f'<text x="{x:.1f}" y="{y:.1f}" font-size="{size}" '
                 f'text-anchor="{anchor}" fill="{color}" '
                 f'font-family="sans-serif">{escape(str(s))}</text>')

    def render(self) -> str:
        return "\n".join(self.parts) + "\n</svg>\n"


class _Axes:
    """Maps data coordinates onto the pixel frame and draws the frame."""

    def __init__(self, canvas: _Canvas, xs, ys, title, x_label, y_label):
        self.canvas = canvas
        self.x0, self.x1 = _bounds(xs)
        self.y0, self.y1 = _bounds(ys)
        self.left, self.top = MARGIN, MARGIN // 2 + 12
        self.right = canvas.width - MARGIN // 2
        self.bottom = canvas.height - MARGIN // 2 - 14
        canvas.add(f'<rect x="{self.left}" y="{self.top}" '
                   f'width="{self.right - self.left}" height="{self.bottom - self.top}" '
                   f'fill="none" stroke="#999"/>')
        canvas.text((self.left + self.right) / 2, 18, title, size=14)
        canvas.text((self.left + self.right) / 2, canvas.height - 6, x_label)
        canvas.add(f'<text x="14" y="{(self.top + self.bottom) / 2:.1f}" font-size="12" '
                   f'text-anchor="middle" fill="#333" font-family="sans-serif" '
                   f'transform="rotate(-90 14 {(self.top + self.bottom) / 2:.1f})">'
                   f'{escape(str(y_label))}</text>')
        self._ticks()

    def px(self, x):
        return self.left + (x - self.x0) / (self.x1 - self.x0) * (self.right - self.left)

    def py(self, y):
        return self.bottom - (y - self.y0) / (self.y1 - self.y0) * (self.bottom - self.top)

    def _ticks(self, n=5):
        for i in range(n + 1):
            xv = self.x0 + (self.x1 - self.x0) * i / n
            yv = self.y0 + (self.y1 - self.y0) * i / n
            xp, yp = self.px(xv), self.py(yv)
            self.canvas.add(f'<line x1="{xp:.1f}" y1="{self.bottom}" x2="{xp:.1f}" '
                            f'y2="{self.bottom + 4}" stroke="#999"/>')
            self.canvas.text(xp, self.bottom + 16, f"{xv:.3g}", size=10)
            self.canvas.add(f'<line x1="{self.left - 4}" y1="{yp:.1f}" x2="{self.left}" '
                            f'y2="{yp:.1f}" stroke="#999"/>')
            self.canvas.text(self.left - 8, yp + 3, f"{yv:.3g}", size=10, anchor="end")


def line_chart(series: dict[str, list[tuple[float, float]]], title: str,
               x_label: str, y_label: str, width: int = 640, height: int = 400) -> str:
    """Polyline chart; one color per labeled series, markers on every point."""
    if not series or all(not pts for pts in series.values()):
        raise ValueError("line_chart needs at least one point")
    canvas = _Canvas(width, height)
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts]
    axes = _Axes(canvas, xs, ys, title, x_label, y_label)
    for i, (label, pts) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        pts = sorted(pts)
        coords = " ".join(f"{axes.px(x):.1f},{axes.py(y):.1f}" for x, y in pts)
        if len(pts) > 1:
            canvas.add(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                       f'stroke-width="1.5"/>')
        for x, y in pts:
            canvas.add(f'<circle cx="{axes.px(x):.1f}" cy="{axes.py(y):.1f}" r="3" '
                       f'fill="{color}"/>')
        canvas.add(f'<rect x="{axes.right - 150}" y="{axes.top + 8 + 16 * i}" '
                   f'width="10" height="10" fill="{color}"/>')
        canvas.text(axes.right - 136, axes.top + 17 + 16 * i, label, size=11, anchor="start")
    return canvas.render()


def scatter_chart(points: list[tuple[float, float, int]], title: str,
                  paths: list[list[tuple[float, float]]] | None = None,
                  width: int = 640, height: int = 640) -> str:
    """Scatter of (x, y, color_index) points with optional trajectory paths
    drawn underneath (used for shared-prefix latent traces)."""
    if not points:
        raise ValueError("scatter_chart needs at least one point")
    canvas = _Canvas(width, height)
    xs = [p[0] for p in points] + [x for path in (paths or []) for x, _ in path]
    ys = [p[1] for p in points] + [y for path in (paths or []) for _, y in path]
    axes = _Axes(canvas, xs, ys, title, "x[0]", "x[1]")
    for path in paths or []:
        if len(path) < 2:
            continue
        coords = " ".join(f"{axes.px(x):.1f},{axes.py(y):.1f}" for x, y in path)
        canvas.add(f'<polyline points="{coords}" fill="none" stroke="#bbbbbb" '
                   f'stroke-width="1" stroke-dasharray="3,2"/>')
    for x, y, color_idx in points:
        color = PALETTE[color_idx % len(PALETTE)]
        canvas.add(f'<circle cx="{axes.px(x):.1f}" cy="{axes.py(y):.1f}" r="2.5" '
                   f'fill="{color}" fill-opacity="0.75"/>')
    return canvas.render()
