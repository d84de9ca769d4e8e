"""Minimal SVG scatter plots with error bars and fitted lines."""

import math
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 480, 360
MARGIN = 60
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def _ticks(lo, hi, log):
    if log:
        return [10.0**k for k in range(math.floor(lo), math.ceil(hi) + 1) if lo - 1e-9 <= k <= hi + 1e-9]
    step = 10 ** math.floor(math.log10((hi - lo) or 1.0))
    if (hi - lo) / step < 3:
        step /= 2
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step + 1e-9) + 1)]


def _fmt(v):
    return f"{v:.3g}"


class Figure:
    """Scatter plot with optional log axes.

    Each series is a list of ``(x, y, lo, hi)`` points where ``lo`` and
    ``hi`` are the ends of an error bar (``None`` for no bar). Lines are
    drawn between given endpoints.
    """

    def __init__(self, title, xlabel, ylabel, logx=False, logy=False):
        self.title = title
        self.xlabel = xlabel
        self.ylabel = ylabel
        self.logx = logx
        self.logy = logy
        self.series = []
        self.lines = []

    def scatter(self, label, points):
        self.series.append((label, list(points)))

    def line(self, label, x0, y0, x1, y1, dashed=False):
        self.lines.append((label, (x0, y0, x1, y1), dashed))

    def _tx(self, v, log):
        return math.log10(v) if log else v

    def _bounds(self):
        xs, ys = [], []
        for _, pts in self.series:
            for x, y, lo, hi in pts:
                xs.append(self._tx(x, self.logx))
                ys += [self._tx(v, self.logy) for v in (y, lo, hi) if v is not None]
        for _, (x0, y0, x1, y1), _ in self.lines:
            xs += [self._tx(x0, self.logx), self._tx(x1, self.logx)]
            ys += [self._tx(y0, self.logy), self._tx(y1, self.logy)]
        if not xs:
            return (0.0, 1.0), (0.0, 1.0)

        def pad(lo, hi):
            if hi - lo < 1e-12:
                return lo - 0.5, hi + 0.5
            d = 0.05 * (hi - lo)
            return lo - d, hi + d

        return pad(min(xs), max(xs)), pad(min(ys), max(ys))

    def render(self):
        (x0, x1), (y0, y1) = self._bounds()
        pw, ph = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN

        def px(v):
            return MARGIN + (self._tx(v, self.logx) - x0) / (x1 - x0) * pw

        def py(v):
            return HEIGHT - MARGIN - (self._tx(v, self.logy) - y0) / (y1 - y0) * ph

        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">',
            f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="13">{escape(self.title)}</text>',
            f'<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
        ]
        for t in _ticks(x0, x1, self.logx):
            x = px(t)
            out.append(f'<line x1="{x:.2f}" y1="{HEIGHT - MARGIN}" x2="{x:.2f}" y2="{HEIGHT - MARGIN + 4}" stroke="black"/>')
            out.append(f'<text x="{x:.2f}" y="{HEIGHT - MARGIN + 16}" text-anchor="middle">{_fmt(t)}</text>')
        for t in _ticks(y0, y1, self.logy):
            y = py(t)
            out.append(f'<line x1="{MARGIN - 4}" y1="{y:.2f}" x2="{MARGIN}" y2="{y:.2f}" stroke="black"/>')
            out.append(f'<text x="{MARGIN - 6}" y="{y + 4:.2f}" text-anchor="end">{_fmt(t)}</text>')
        out.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 15}" text-anchor="middle">{escape(self.xlabel)}</text>')
        out.append(f'<text x="15" y="{HEIGHT / 2}" text-anchor="middle" transform="rotate(-90 15 {HEIGHT / 2})">{escape(self.ylabel)}</text>')

        legend = []
        for i, (label, pts) in enumerate(self.series):
            c = COLORS[i % len(COLORS)]
            legend.append((label, c, False))
            for x, y, lo, hi in pts:
                if lo is not None and hi is not None:
                    out.append(f'<line x1="{px(x):.2f}" y1="{py(lo):.2f}" x2="{px(x):.2f}" y2="{py(hi):.2f}" stroke="{c}"/>')
                out.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="{c}"/>')
        for j, (label, (a, b, c_, d), dashed) in enumerate(self.lines):
            c = COLORS[j % len(COLORS)]
            dash = ' stroke-dasharray="5,3"' if dashed else ""
            out.append(f'<line x1="{px(a):.2f}" y1="{py(b):.2f}" x2="{px(c_):.2f}" y2="{py(d):.2f}" stroke="{c}"{dash}/>')
            if label:
                legend.append((label, c, True))
        for k, (label, c, is_line) in enumerate(legend):
            y = MARGIN + 12 + 14 * k
            mark = (f'<line x1="{MARGIN + 8}" y1="{y - 4}" x2="{MARGIN + 20}" y2="{y - 4}" stroke="{c}"/>' if is_line
                    else f'<circle cx="{MARGIN + 14}" cy="{y - 4}" r="3" fill="{c}"/>')
            out.append(mark)
            out.append(f'<text x="{MARGIN + 26}" y="{y}">{escape(str(label))}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path):
        with open(path, "w") as f:
            f.write(self.render())
