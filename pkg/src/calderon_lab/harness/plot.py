"""SVG plots driven by the CSV schema.

The output depends only on the CSV bytes: the SVG id salt is fixed and
the date metadata dropped.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .records import SchemaError, read_csv  # noqa: E402

__all__ = ["emit_plot", "PLOT_KINDS"]

# schema -> (x column, y columns, x log, y log)
PLOT_KINDS = {
    "value": ("h", ("rho",), True, False),
    "normal": ("h", ("sigma",), True, False),
    "calibrate": ("h", ("c0", "c1"), True, False),
    "besov-rate": ("point_index", ("slope",), False, False),
    "trace-check": ("lambda", ("max_ratio",), True, True),
    "hardy-check": ("function_index", ("ratio",), False, False),
}


def _num(s):
    return float(s)


def emit_plot(csv_path, kind: str | None = None, out=None) -> Path:
    """Render ``csv_path`` to SVG (next to it unless ``out`` is given).

    ``kind`` defaults to the schema recognised from the header; passing a
    kind that disagrees with the header is an error.
    """
    csv_path = Path(csv_path)
    schema, rows = read_csv(csv_path)
    if kind is not None and kind != schema:
        raise SchemaError(f"{csv_path} has the {schema!r} schema, not {kind!r}")
    if schema not in PLOT_KINDS:
        raise SchemaError(f"no plot for the {schema!r} schema; plottable: {', '.join(PLOT_KINDS)}")
    if not rows:
        raise SchemaError(f"{csv_path} has a header but no rows")
    xcol, ycols, xlog, ylog = PLOT_KINDS[schema]
    x = [_num(r[xcol]) for r in rows]

    with plt.rc_context({"svg.hashsalt": "calderon-lab", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(5.5, 4.0))
        for col in ycols:
            y = [_num(r[col]) for r in rows]
            finite = [(a, b) for a, b in zip(x, y) if math.isfinite(b)]
            ax.plot([a for a, _ in finite], [b for _, b in finite], "o-", label=col)
        if schema == "calibrate":
            for ref in (math.pi / 4, -math.pi / 4):
                ax.axhline(ref, color="0.5", ls="--", lw=0.8)
            ax.text(x[0], math.pi / 4, r"$\pm\pi/4$", va="bottom", ha="right", color="0.4")
        if xlog:
            ax.set_xscale("log")
        if ylog:
            ax.set_yscale("log")
        ax.set_xlabel(xcol)
        ax.set_ylabel(", ".join(ycols))
        ax.set_title(f"{schema}: {csv_path.stem}")
        if len(ycols) > 1:
            ax.legend()
        ax.grid(True, which="both", alpha=0.3)
        fig.tight_layout()
        out = Path(out) if out is not None else csv_path.with_suffix(".svg")
        fig.savefig(out, format="svg", metadata={"Date": None})
        plt.close(fig)
    return out
