"""Deterministic static SVG charts for training curves, ROC curves and confusion matrices.

Every chart is 800x600. Coordinates are printed with two decimals, so the same
input always yields the same bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 800, 600
COLORS = {"train": "#1f77b4", "test": "#d62728", "roc": "#2ca02c"}


@dataclass(frozen=True)
class Frame:
    """Maps data coordinates into a pixel rectangle (y grows downwards)."""

    left: float
    top: float
    width: float
    height: float
    x_range: tuple[float, float]
    y_range: tuple[float, float]

    def map(self, x: float, y: float) -> tuple[float, float]:
        x0, x1 = self.x_range
        y0, y1 = self.y_range
        px = self.left + (x - x0) / ((x1 - x0) or 1.0) * self.width
        py = self.top + self.height - (y - y0) / ((y1 - y0) or 1.0) * self.height
        return round(px, 2), round(py, 2)


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _header(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.2f}" y="24.00" text-anchor="middle" font-family="sans-serif" font-size="16">{escape(title)}</text>',
    ]


def _axes(frame: Frame, xlabel: str, ylabel: str, ticks: int = 5) -> list[str]:
    out = [
        f'<rect x="{_fmt(frame.left)}" y="{_fmt(frame.top)}" width="{_fmt(frame.width)}" '
        f'height="{_fmt(frame.height)}" fill="none" stroke="black"/>'
    ]
    x0, x1 = frame.x_range
    y0, y1 = frame.y_range
    for i in range(ticks + 1):
        xv = x0 + (x1 - x0) * i / ticks
        yv = y0 + (y1 - y0) * i / ticks
        px, base = frame.map(xv, y0)
        lx, py = frame.map(x0, yv)
        out.append(f'<line x1="{_fmt(px)}" y1="{_fmt(base)}" x2="{_fmt(px)}" y2="{_fmt(base + 5)}" stroke="black"/>')
        out.append(
            f'<text x="{_fmt(px)}" y="{_fmt(base + 18)}" text-anchor="middle" font-family="sans-serif" '
            f'font-size="11">{xv:.3g}</text>'
        )
        out.append(f'<line x1="{_fmt(lx - 5)}" y1="{_fmt(py)}" x2="{_fmt(lx)}" y2="{_fmt(py)}" stroke="black"/>')
        out.append(
            f'<text x="{_fmt(lx - 8)}" y="{_fmt(py + 4)}" text-anchor="end" font-family="sans-serif" '
            f'font-size="11">{yv:.3g}</text>'
        )
    cx = frame.left + frame.width / 2
    cy = frame.top + frame.height / 2
    out.append(
        f'<text x="{_fmt(cx)}" y="{_fmt(frame.top + frame.height + 36)}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{escape(xlabel)}</text>'
    )
    out.append(
        f'<text x="{_fmt(frame.left - 44)}" y="{_fmt(cy)}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="12" transform="rotate(-90 {_fmt(frame.left - 44)} {_fmt(cy)})">{escape(ylabel)}</text>'
    )
    return out


def _polyline(frame: Frame, xs, ys, color: str, label: str) -> str:
    pts = " ".join(f"{_fmt(px)},{_fmt(py)}" for px, py in (frame.map(x, y) for x, y in zip(xs, ys)))
    return f'<polyline data-series="{escape(label)}" points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>'


def _legend(x: float, y: float, entries) -> list[str]:
    out = []
    for i, (label, color) in enumerate(entries):
        yy = y + 18 * i
        out.append(f'<line x1="{_fmt(x)}" y1="{_fmt(yy)}" x2="{_fmt(x + 20)}" y2="{_fmt(yy)}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{_fmt(x + 26)}" y="{_fmt(yy + 4)}" font-family="sans-serif" font-size="12">{escape(label)}</text>')
    return out


def _span(values) -> tuple[float, float]:
    lo, hi = min(values), max(values)
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def training_curves_svg(rows: list[dict]) -> str:
    """Two panels, accuracy and loss, each with a train and a test polyline."""
    epochs = [r["epoch"] for r in rows]
    xr = _span(epochs)
    panels = [
        ("Accuracy", "train_acc", "test_acc", Frame(80, 50, 300, 460, xr, (0.0, 1.0))),
        ("Loss", "train_loss", "test_loss", Frame(470, 50, 300, 460, xr, (0.0, max(1e-12, max(max(r["train_loss"], r["test_loss"]) for r in rows))))),
    ]
    out = _header("Training curves")
    for title, train_key, test_key, frame in panels:
        out.append(f'<g data-panel="{title.lower()}">')
        out.append(
            f'<text x="{_fmt(frame.left + frame.width / 2)}" y="{_fmt(frame.top - 8)}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="13">{title}</text>'
        )
        out += _axes(frame, "epoch", title.lower())
        out.append(_polyline(frame, epochs, [r[train_key] for r in rows], COLORS["train"], "train"))
        out.append(_polyline(frame, epochs, [r[test_key] for r in rows], COLORS["test"], "test"))
        out += _legend(frame.left + 10, frame.top + 15, [("train", COLORS["train"]), ("test", COLORS["test"])])
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


ROC_FRAME = Frame(120, 60, 560, 460, (0.0, 1.0), (0.0, 1.0))


def roc_svg(points: list[tuple[float, float]], auc: float | None = None) -> str:
    """ROC polyline in the unit square with a dashed chance diagonal."""
    frame = ROC_FRAME
    title = "ROC curve" if auc is None else f"ROC curve (AUC = {auc:.4f})"
    out = _header(title)
    out += _axes(frame, "false positive rate", "true positive rate")
    (ax, ay), (bx, by) = frame.map(0, 0), frame.map(1, 1)
    out.append(
        f'<line x1="{_fmt(ax)}" y1="{_fmt(ay)}" x2="{_fmt(bx)}" y2="{_fmt(by)}" stroke="gray" stroke-dasharray="6,4"/>'
    )
    out.append(_polyline(frame, [p[0] for p in points], [p[1] for p in points], COLORS["roc"], "roc"))
    out += _legend(frame.left + frame.width - 150, frame.top + frame.height - 40, [("model", COLORS["roc"]), ("chance", "gray")])
    out.append("</svg>")
    return "\n".join(out) + "\n"


def confusion_svg(counts, fractions, class_names=("Normal", "Abnormal")) -> str:
    """2x2 heatmap shaded by row-normalised fraction, annotated with counts."""
    out = _header("Confusion matrix")
    cell, left, top = 200, 220, 110
    for a in range(2):
        for p in range(2):
            frac = fractions[a][p]
            shade = int(round(255 - 200 * frac))
            x, y = left + p * cell, top + a * cell
            out.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="rgb({shade},{shade},255)" stroke="black"/>'
            )
            out.append(
                f'<text x="{x + cell / 2:.2f}" y="{y + cell / 2:.2f}" text-anchor="middle" font-family="sans-serif" '
                f'font-size="18">{counts[a][p]} ({frac:.2%})</text>'
            )
    for i, name in enumerate(class_names):
        out.append(
            f'<text x="{left + i * cell + cell / 2:.2f}" y="{top - 12}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="13">{escape(name)}</text>'
        )
        out.append(
            f'<text x="{left - 12}" y="{top + i * cell + cell / 2:.2f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="13">{escape(name)}</text>'
        )
    out.append(f'<text x="{left + cell:.2f}" y="{top - 40}" text-anchor="middle" font-family="sans-serif" font-size="13">predicted</text>')
    out.append(
        f'<text x="{left - 110}" y="{top + cell:.2f}" text-anchor="middle" font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 {left - 110} {top + cell:.2f})">actual</text>'
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"
