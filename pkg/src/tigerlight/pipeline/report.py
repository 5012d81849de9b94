"""Comparison tables, CSV and a dependency-free SVG bar chart."""

from dataclasses import dataclass
from xml.sax.saxutils import escape

METRIC_HEADER = "mAP[0.5:0.95]"


@dataclass(frozen=True)
class ComparisonReport:
    """Two evaluated runs plus optional reference rows from elsewhere.

    ``delta`` is ``rows[1] - rows[0]`` over the evaluated rows only.
    """

    rows: tuple
    delta: float
    reference_rows: tuple = ()

    @classmethod
    def from_runs(cls, label_a, map_a, label_b, map_b, reference_rows=()):
        return cls(((label_a, map_a), (label_b, map_b)), map_b - map_a, tuple(reference_rows))

    @property
    def all_rows(self):
        return tuple(self.reference_rows) + tuple(self.rows)


def format_delta(delta):
    return "0.000" if delta == 0 else f"{delta:+.3f}"


def comparison_table(report):
    rows = report.all_rows
    w = max([len("Model")] + [len(label) for label, _ in rows])
    mw = len(METRIC_HEADER)
    sep = f"+{'-' * (w + 2)}+{'-' * (mw + 2)}+"
    out = [sep, f"| {'Model'.ljust(w)} | {METRIC_HEADER.ljust(mw)} |", sep]
    for label, value in rows:
        out.append(f"| {label.ljust(w)} | {f'{value:.3f}'.ljust(mw)} |")
    out.append(sep)
    out.append(f"delta ({report.rows[1][0]} - {report.rows[0][0]}): {format_delta(report.delta)}")
    return "\n".join(out) + "\n"


def comparison_csv(report):
    lines = ["model,map_coco,source"]
    for label, value in report.reference_rows:
        lines.append(f"{_csv_field(label)},{float(value)!r},reference")
    for label, value in report.rows:
        lines.append(f"{_csv_field(label)},{float(value)!r},evaluated")
    lines.append(f"delta,{float(report.delta)!r},evaluated")
    return "\n".join(lines) + "\n"


def _csv_field(s):
    if any(ch in s for ch in ',"\n'):
        return '"' + s.replace('"', '""') + '"'
    return s


def bar_chart_svg(rows, title=METRIC_HEADER, highlight=()):
    """Vertical bars with value labels; values are expected in ``[0, 1]``."""
    n = max(len(rows), 1)
    bar_w, gap, left, top, plot_h = 56, 24, 48, 40, 240
    width = left + n * (bar_w + gap) + gap
    height = top + plot_h + 90
    base = top + plot_h
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{left}" y1="{base}" x2="{width - gap / 2:.1f}" y2="{base}" stroke="#333"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{base}" stroke="#333"/>',
    ]
    for tick in range(0, 11, 2):
        y = base - plot_h * tick / 10
        parts.append(f'<line x1="{left - 4}" y1="{y:.1f}" x2="{left}" y2="{y:.1f}" stroke="#333"/>')
        parts.append(f'<text x="{left - 6}" y="{y + 4:.1f}" text-anchor="end">{tick / 10:.1f}</text>')
    for i, (label, value) in enumerate(rows):
        v = min(max(float(value), 0.0), 1.0)
        h = plot_h * v
        x = left + gap + i * (bar_w + gap)
        fill = "#d9822b" if label in highlight else "#4a7bb7"
        parts.append(f'<rect x="{x}" y="{base - h:.2f}" width="{bar_w}" height="{h:.2f}" fill="{fill}"/>')
        parts.append(f'<text x="{x + bar_w / 2:.1f}" y="{base - h - 4:.2f}" text-anchor="middle">{float(value):.3f}</text>')
        cx, cy = x + bar_w / 2, base + 12
        parts.append(f'<text x="{cx:.1f}" y="{cy}" text-anchor="end" '
                     f'transform="rotate(-35 {cx:.1f} {cy})">{escape(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
