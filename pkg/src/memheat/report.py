"""Run artifacts: CSV traces, SVG line plots and the JSON summary."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import MemheatError

SVG_HASHSALT = "memheat"


@dataclass
class Table:
    """Named columns of equal length, written as one CSV."""

    columns: dict

    def __post_init__(self):
        lengths = {len(np.atleast_1d(v)) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError(f"table columns have different lengths: {sorted(lengths)}")


@dataclass
class Plot:
    """A line plot of table columns against a time column."""

    table: str
    x: str
    ys: list
    log: bool = True
    ylabel: str = ""
    overlays: list = field(default_factory=list)  # (label, x, y) fitted lines


@dataclass
class RunArtifacts:
    tables: dict = field(default_factory=dict)
    plots: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)  # name -> callable(path) writing a file


def _fmt(v):
    if isinstance(v, (str, bytes)):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def write_csv(path, table):
    cols = list(table.columns)
    data = [np.atleast_1d(table.columns[c]) for c in cols]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in zip(*data):
            w.writerow([_fmt(v) for v in row])


def jsonable(v):
    if isinstance(v, dict):
        return {str(k): jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return jsonable(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer, int)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    return v


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_plot(path, plot, table):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": SVG_HASHSALT, "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        x = np.asarray(table.columns[plot.x], dtype=float)
        for name in plot.ys:
            y = np.asarray(table.columns[name], dtype=float)
            if plot.log:
                y = np.where(y > 0, y, np.nan)
            ax.plot(x, y, lw=1.0, label=name)
        for label, xo, yo in plot.overlays:
            ax.plot(xo, yo, "--", lw=0.8, color="k", label=label)
        if plot.log:
            ax.set_yscale("log")
        ax.set_xlabel(plot.x)
        ax.set_ylabel(plot.ylabel)
        if len(plot.ys) + len(plot.overlays) <= 12:
            ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def emit_report(out_dir, artifacts, plots=True):
    """Write every table, plot and the summary of ``artifacts`` into ``out_dir``.

    Returns the list of written file names.  Raises :class:`MemheatError`
    when a plot refers to a table or column that was not produced.
    """
    for name, plot in artifacts.plots.items():
        table = artifacts.tables.get(plot.table)
        if table is None:
            raise MemheatError(f"plot {name!r} refers to missing table {plot.table!r}")
        missing = [c for c in [plot.x, *plot.ys] if c not in table.columns]
        if missing:
            raise MemheatError(f"plot {name!r} refers to missing columns {missing}")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name, table in sorted(artifacts.tables.items()):
        write_csv(os.path.join(out_dir, f"{name}.csv"), table)
        written.append(f"{name}.csv")
    if plots:
        for name, plot in sorted(artifacts.plots.items()):
            write_plot(os.path.join(out_dir, f"{name}.svg"), plot, artifacts.tables[plot.table])
            written.append(f"{name}.svg")
    for name, writer in sorted(artifacts.extra.items()):
        writer(os.path.join(out_dir, name))
        written.append(name)
    write_json(os.path.join(out_dir, "summary.json"), artifacts.summary)
    written.append("summary.json")
    return written
