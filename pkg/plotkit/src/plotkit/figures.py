"""Render experiment CSV tables into static figures.

Each figure kind validates the CSV header against the schema the
experiment CLI documents for that table, then draws the columns as-is.
Rendering is deterministic: the Agg backend is forced, SVG ids are
salted with a fixed string, and no timestamps are embedded, so identical
CSV input yields byte-identical image output.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "schedplot"

import matplotlib.pyplot as plt
import numpy as np

KINDS = ("rate-region", "stability-sweep", "truncation-sweep", "index-table",
         "queue-trace")

# fixed columns per kind; patterned per-user columns are checked separately
REQUIRED = {
    "rate-region": ["direction", "z_hat", "z_stderr", "slack"],
    "stability-sweep": ["scaling", "verdict", "stable_reps", "replications",
                        "slope_mean", "slope_stderr", "max_queue",
                        "z_mean", "z_stderr"],
    "truncation-sweep": ["tau", "f_tau", "g_tau", "v_tau", "v_ref", "gap",
                         "bound", "slack"],
    "index-table": ["user", "position", "state", "age", "belief",
                    "whittle_index"],
    "queue-trace": ["rep", "time", "total_queue", "lyapunov"],
}


class SchemaError(ValueError):
    """CSV input does not match the documented table schema."""


@dataclass
class FigureSpec:
    """What to draw: input table, figure kind, output image, decorations."""

    input: str
    kind: str
    output: str
    xlabel: str | None = None
    ylabel: str | None = None
    title: str | None = None
    # horizontal reference lines, e.g. {"budget M": 1.0, "b_s": 0.5}
    ref_lines: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}, "
                             f"expected one of {KINDS}")
        suffix = Path(self.output).suffix.lower()
        if suffix not in (".png", ".svg"):
            raise ValueError(f"output must end in .png or .svg, got {suffix!r}")


def load_table(path, kind: str) -> dict[str, list[str]]:
    """Read a CSV into columns and check the header for ``kind``."""
    try:
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    missing = [c for c in REQUIRED[kind] if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing} for kind {kind!r}")
    if not body:
        raise SchemaError(f"{path}: no data rows")
    if any(len(r) != len(header) for r in body):
        raise SchemaError(f"{path}: ragged rows")
    return {name: [r[i] for r in body] for i, name in enumerate(header)}


def _floats(col: list[str]) -> np.ndarray:
    try:
        return np.array([float(v) for v in col])
    except ValueError as exc:
        raise SchemaError(f"non-numeric value in column: {exc}") from exc


def _user_columns(cols: dict, prefix: str) -> list[str]:
    """Names like gamma_0, gamma_1, ... in user order; empty if none."""
    pat = re.compile(rf"^{re.escape(prefix)}_(\d+)$")
    found = [(int(m.group(1)), name) for name in cols
             if (m := pat.match(name))]
    return [name for _, name in sorted(found)]


def _decorate(ax, spec: FigureSpec, default_x: str, default_y: str):
    ax.set_xlabel(spec.xlabel or default_x)
    ax.set_ylabel(spec.ylabel or default_y)
    if spec.title:
        ax.set_title(spec.title)
    for label, y in spec.ref_lines.items():
        ax.axhline(float(y), color="0.4", linestyle=":", linewidth=1.0)
        ax.annotate(label, (0.02, float(y)), xycoords=("axes fraction", "data"),
                    fontsize=8, color="0.3", va="bottom")


def _plot_rate_region(ax, cols, spec):
    gam = [_floats(cols[c]) for c in _user_columns(cols, "gamma")]
    if not gam:
        raise SchemaError("rate-region table has no gamma_<i> columns")
    real = [_floats(cols[c]) for c in _user_columns(cols, "realized")]
    if len(gam) == 2:
        x, y = gam
        hull = np.argsort(np.arctan2(y, x))  # boundary sweep by direction angle
        ax.plot(x[hull], y[hull], "o-", label="estimated boundary")
        if len(real) == 2:
            ax.plot(real[0], real[1], "x", color="0.5", label="realized")
        ax.set_xlim(left=0.0)
        ax.set_ylim(bottom=0.0)
        ax.legend(loc="upper right", fontsize=8)
        _decorate(ax, spec, "user 0 rate", "user 1 rate")
    else:
        d = _floats(cols["direction"])
        for i, g in enumerate(gam):
            ax.plot(d, g, "o-", label=f"user {i}")
        ax.legend(fontsize=8)
        _decorate(ax, spec, "direction", "rate")


def _plot_stability_sweep(ax, cols, spec):
    x = _floats(cols["scaling"])
    slope = _floats(cols["slope_mean"])
    se = _floats(cols["slope_stderr"])
    verdicts = cols["verdict"]
    ax.errorbar(x, slope, yerr=1.96 * se, fmt="-", color="0.6", zorder=1)
    styles = {"stable": ("o", "tab:blue"), "unstable": ("s", "tab:red"),
              "inconclusive": ("d", "0.5")}
    for verdict, (marker, color) in styles.items():
        sel = [i for i, v in enumerate(verdicts) if v == verdict]
        if sel:
            ax.plot(x[sel], slope[sel], marker, color=color, label=verdict,
                    zorder=2)
    ax.axhline(0.0, color="0.3", linewidth=0.8)
    ax.legend(fontsize=8)
    _decorate(ax, spec, "arrival scaling", "queue growth slope")


def _plot_truncation_sweep(ax, cols, spec):
    tau = _floats(cols["tau"])
    for name, style in (("f_tau", "o-"), ("bound", "s--"), ("gap", "x-")):
        y = _floats(cols[name])
        ax.plot(tau, np.maximum(y, 1e-300), style, label=name)
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    _decorate(ax, spec, "truncation size tau", "value gap / bound")


def _plot_index_table(ax, cols, spec):
    users = cols["user"]
    pos = _floats(cols["position"])
    idx = _floats(cols["whittle_index"])
    oracle = _floats(cols["oracle_index"]) if "oracle_index" in cols else None
    for u in sorted(set(users), key=int):
        sel = [i for i, v in enumerate(users) if v == u]
        order = np.array(sel)[np.argsort(pos[sel])]
        ax.plot(pos[order], idx[order], "-", label=f"user {u}")
        if oracle is not None:
            ax.plot(pos[order], oracle[order], ".", color="0.3",
                    markersize=3, zorder=3)
    ax.legend(fontsize=8)
    _decorate(ax, spec, "belief position", "index value")


def _plot_queue_trace(ax, cols, spec):
    reps = cols["rep"]
    t = _floats(cols["time"])
    q = _floats(cols["total_queue"])
    for r in sorted(set(reps), key=int):
        sel = [i for i, v in enumerate(reps) if v == r]
        ax.plot(t[sel], q[sel], "-", linewidth=0.9, label=f"rep {r}")
    if len(set(reps)) <= 8:
        ax.legend(fontsize=8)
    _decorate(ax, spec, "slot", "total queue length")


_PLOTTERS = {
    "rate-region": _plot_rate_region,
    "stability-sweep": _plot_stability_sweep,
    "truncation-sweep": _plot_truncation_sweep,
    "index-table": _plot_index_table,
    "queue-trace": _plot_queue_trace,
}


def render(spec: FigureSpec) -> Path:
    """Draw the figure described by ``spec`` and write the image file.

    Pure function of the CSV content and the spec: no timestamps or other
    run-dependent state end up in the output.
    """
    cols = load_table(spec.input, spec.kind)
    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=120)
    try:
        _PLOTTERS[spec.kind](ax, cols, spec)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        out = Path(spec.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        # empty metadata suppresses the creation date (SVG) and leaves only
        # version-stable fields, keeping re-renders byte-identical
        fig.savefig(out, metadata={"Date": None} if out.suffix == ".svg" else {})
    finally:
        plt.close(fig)
    return out
