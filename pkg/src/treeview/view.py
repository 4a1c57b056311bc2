"""TreeView explanation grids.

A TreeView lays out one column per class and one row per node of the
surrogate's decision path.  As the path descends, class hypotheses whose
conditional probability falls below a threshold are rejected; the grid
shows where each hypothesis died, which factor was being tested, and which
input features that factor's predictor relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

from .meta import FactorPredictor, predict_meta_feature
from .surrogate import DecisionPath, DecisionTreeSurrogate, decision_path

ALIVE = "alive"
REJECTED_HERE = "rejected_here"
REJECTED_EARLIER = "rejected_earlier"

_STATUS_CHARS = {ALIVE: "·", REJECTED_HERE: "X", REJECTED_EARLIER: "x"}


@dataclass(frozen=True)
class RenderConfig:
    cell_size: int = 36
    top_features: int = 3
    rejection_threshold: float = 0.05
    palette: str = "blue"

    def __post_init__(self):
        if self.top_features < 1:
            raise ValueError("top_features must be >= 1")
        if not 0.0 <= self.rejection_threshold < 1.0:
            raise ValueError("rejection_threshold must lie in [0, 1)")
        if self.palette not in _PALETTES:
            raise ValueError(f"unknown palette {self.palette!r}")


@dataclass(frozen=True)
class RejectionEvent:
    class_id: int
    row: int  # path row at which the hypothesis died (>= 1)
    factor: int | None  # factor tested at that row; None when it is the leaf row


@dataclass
class TreeViewRow:
    row_index: int
    factor: int | None  # None on the leaf row
    value: int | None
    branch: str | None
    statuses: list[str]
    shares: list[float]
    top_features: list[str]


@dataclass
class TreeViewLayout:
    class_names: list[str]
    rows: list[TreeViewRow]
    rejections: list[RejectionEvent]
    predicted_class: int
    true_class: int | None = None
    correct: bool | None = None
    sample_id: str | None = None


@dataclass
class ExplainerBundle:
    """Everything trace_explanation needs, detached from the full pipeline."""

    predictors: list[FactorPredictor]
    tree: DecisionTreeSurrogate
    importances: list[np.ndarray]
    feature_names: list[str]
    class_names: list[str]

    def __post_init__(self):
        if len(self.predictors) != len(self.importances):
            raise ValueError("one importance vector per factor predictor required")
        if self.tree.num_factors != len(self.predictors):
            raise ValueError(
                f"surrogate expects {self.tree.num_factors} factors, "
                f"got {len(self.predictors)} predictors"
            )
        if self.tree.num_classes != len(self.class_names):
            raise ValueError("class name count does not match surrogate")


def compute_rejections(path: DecisionPath, threshold: float) -> list[RejectionEvent]:
    """First row (>= 1) where each class's histogram share drops below the
    threshold (or hits exactly zero).  The class holding the maximal leaf
    share is exempt, so an explanation can never reject its own prediction.
    """
    if not 0.0 <= threshold < 1.0:
        raise ValueError("threshold must lie in [0, 1)")
    shares = [step.histogram / step.histogram.sum() for step in path.steps]
    num_classes = len(shares[0])
    keep = path.predicted_class  # argmax of leaf histogram, ties to smaller id

    events = []
    for z in range(num_classes):
        if z == keep:
            continue
        for t in range(1, len(path.steps)):
            p = shares[t][z]
            if p == 0.0 or p < threshold:
                events.append(RejectionEvent(class_id=z, row=t, factor=path.steps[t].factor))
                break
    return events


def trace_explanation(input_row: np.ndarray, true_label: int | None,
                      bundle: ExplainerBundle, cfg: RenderConfig) -> TreeViewLayout:
    """Full explanation of one sample: meta-feature, path, rejections, layout."""
    meta = predict_meta_feature(bundle.predictors, input_row)
    path = decision_path(bundle.tree, meta)
    events = compute_rejections(path, cfg.rejection_threshold)
    rejected_at = {e.class_id: e.row for e in events}

    rows = []
    for t, step in enumerate(path.steps):
        shares = step.histogram / step.histogram.sum()
        statuses = []
        for z in range(len(bundle.class_names)):
            row = rejected_at.get(z)
            if row is None or t < row:
                statuses.append(ALIVE)
            elif t == row:
                statuses.append(REJECTED_HERE)
            else:
                statuses.append(REJECTED_EARLIER)
        rows.append(TreeViewRow(
            row_index=t,
            factor=step.factor,
            value=step.value,
            branch=step.branch,
            statuses=statuses,
            shares=[float(s) for s in shares],
            top_features=_top_features(bundle, step.factor, cfg.top_features),
        ))

    predicted = path.predicted_class
    return TreeViewLayout(
        class_names=list(bundle.class_names),
        rows=rows,
        rejections=events,
        predicted_class=predicted,
        true_class=None if true_label is None else int(true_label),
        correct=None if true_label is None else bool(predicted == int(true_label)),
        sample_id=None,
    )


def _top_features(bundle: ExplainerBundle, factor: int | None, r: int) -> list[str]:
    if factor is None:
        return []
    imp = np.asarray(bundle.importances[factor], dtype=float)
    if imp.sum() == 0.0:
        return []
    order = np.argsort(-imp, kind="stable")
    return [bundle.feature_names[i] for i in order[:r]]


_PALETTES = {
    "blue": (31, 119, 180),
    "green": (44, 160, 44),
    "gray": (96, 96, 96),
}

_REJECT_COLOR = "#d62728"


def _cell_fill(share: float, base: tuple[int, int, int]) -> str:
    # linear ramp from white at share 0 to the palette color at share 1
    r = round(255 + (base[0] - 255) * share)
    g = round(255 + (base[1] - 255) * share)
    b = round(255 + (base[2] - 255) * share)
    return f"rgb({r},{g},{b})"


def _row_label(row: TreeViewRow) -> str:
    return "leaf" if row.factor is None else f"factor {row.factor}"


def render_svg(layout: TreeViewLayout, cfg: RenderConfig) -> str:
    """Deterministic SVG 1.1 document for a TreeView layout."""
    base = _PALETTES[cfg.palette]
    n_cols = len(layout.class_names)
    n_rows = len(layout.rows)

    cell_w = max(cfg.cell_size, 7 * max(len(n) for n in layout.class_names) + 10)
    cell_h = cfg.cell_size
    label_texts = [_row_label(r) for r in layout.rows]
    feature_texts = [", ".join(r.top_features) for r in layout.rows]
    left = 14 + max(
        [7 * len(t) for t in label_texts] + [6 * len(t) for t in feature_texts] + [60]
    )
    header_h = 26
    footer_h = 26
    width = left + n_cols * cell_w + 12
    height = header_h + n_rows * cell_h + footer_h + 8

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]

    for j, name in enumerate(layout.class_names):
        cx = left + j * cell_w + cell_w / 2
        out.append(
            f'<text x="{cx:.1f}" y="{header_h - 8}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{escape(name)}</text>'
        )

    for i, row in enumerate(layout.rows):
        y = header_h + i * cell_h
        ty = y + cell_h / 2
        out.append(
            f'<text x="10" y="{ty - 1:.1f}" font-family="sans-serif" font-size="11" '
            f'font-weight="bold">{escape(_row_label(row))}</text>'
        )
        if row.top_features:
            parts = []
            for f_idx, fname in enumerate(row.top_features):
                color = _REJECT_COLOR if f_idx == 0 else "#555555"
                sep = "" if f_idx == 0 else ", "
                parts.append(f'{sep}<tspan fill="{color}">{escape(fname)}</tspan>')
            out.append(
                f'<text x="10" y="{ty + 11:.1f}" font-family="sans-serif" '
                f'font-size="9">{"".join(parts)}</text>'
            )
        for j in range(len(layout.class_names)):
            x = left + j * cell_w
            share = row.shares[j]
            status = row.statuses[j]
            fill = "#f2f2f2" if status == REJECTED_EARLIER else _cell_fill(share, base)
            if status == REJECTED_HERE:
                stroke, stroke_w = _REJECT_COLOR, "2.5"
            else:
                stroke, stroke_w = "#cccccc", "0.5"
            out.append(
                f'<rect x="{x}" y="{y}" width="{cell_w}" height="{cell_h}" '
                f'fill="{fill}" stroke="{stroke}" stroke-width="{stroke_w}" '
                f'class="cell {status}"><title>{escape(layout.class_names[j])}: '
                f'{share:.4f}</title></rect>'
            )
            if status == REJECTED_EARLIER:
                out.append(
                    f'<text x="{x + cell_w / 2:.1f}" y="{ty + 4:.1f}" text-anchor="middle" '
                    f'font-family="sans-serif" font-size="12" fill="#999999">×</text>'
                )

    footer_y = header_h + n_rows * cell_h + 17
    pred_name = layout.class_names[layout.predicted_class]
    pieces = []
    if layout.sample_id is not None:
        pieces.append(f"sample {layout.sample_id}")
    pieces.append(f"predicted: {pred_name}")
    if layout.true_class is not None:
        pieces.append(f"true: {layout.class_names[layout.true_class]}")
        pieces.append("✓ correct" if layout.correct else "✗ MISMATCH")
    color = "#333333" if layout.correct in (True, None) else _REJECT_COLOR
    out.append(
        f'<text x="10" y="{footer_y}" font-family="sans-serif" font-size="12" '
        f'fill="{color}">{escape(" · ".join(pieces))}</text>'
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_text(layout: TreeViewLayout) -> str:
    """Fixed-width grid: header of class names, one line per row, one footer."""
    labels = [_row_label(r) for r in layout.rows]
    gutter = max(len(t) for t in labels) + 2
    header = " " * gutter + "  ".join(layout.class_names)
    lines = [header]
    for row, label in zip(layout.rows, labels):
        cells = [
            _STATUS_CHARS[status].center(len(name))
            for status, name in zip(row.statuses, layout.class_names)
        ]
        lines.append(label.ljust(gutter) + "  ".join(cells))
    footer = f"predicted={layout.class_names[layout.predicted_class]}"
    if layout.true_class is not None:
        footer += (
            f" true={layout.class_names[layout.true_class]}"
            f" correct={'yes' if layout.correct else 'no'}"
        )
    lines.append(footer)
    return "\n".join(lines) + "\n"


def layout_to_json(layout: TreeViewLayout) -> dict:
    return {
        "class_names": layout.class_names,
        "sample_id": layout.sample_id,
        "predicted_class": layout.predicted_class,
        "true_class": layout.true_class,
        "correct": layout.correct,
        "rows": [
            {
                "row": r.row_index,
                "factor": r.factor,
                "value": r.value,
                "branch": r.branch,
                "statuses": r.statuses,
                "shares": r.shares,
                "top_features": r.top_features,
            }
            for r in layout.rows
        ],
        "rejections": [
            {"class_id": e.class_id, "row": e.row, "factor": e.factor}
            for e in layout.rejections
        ],
    }


def layout_from_json(obj: dict) -> TreeViewLayout:
    return TreeViewLayout(
        class_names=list(obj["class_names"]),
        rows=[
            TreeViewRow(
                row_index=int(r["row"]),
                factor=None if r["factor"] is None else int(r["factor"]),
                value=None if r["value"] is None else int(r["value"]),
                branch=r["branch"],
                statuses=list(r["statuses"]),
                shares=[float(s) for s in r["shares"]],
                top_features=list(r["top_features"]),
            )
            for r in obj["rows"]
        ],
        rejections=[
            RejectionEvent(
                class_id=int(e["class_id"]),
                row=int(e["row"]),
                factor=None if e["factor"] is None else int(e["factor"]),
            )
            for e in obj["rejections"]
        ],
        predicted_class=int(obj["predicted_class"]),
        true_class=None if obj["true_class"] is None else int(obj["true_class"]),
        correct=obj["correct"],
        sample_id=obj["sample_id"],
    )
