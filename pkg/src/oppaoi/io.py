"""Deterministic CSV/JSON/SVG output."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o)!r}")


def _clean(o):
    # JSON has no NaN/inf; dict keys must be strings
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, (float, np.floating)) and not math.isfinite(float(o)):
        return None
    return o


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, default=_jsonable) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path, columns, rows, units=None, meta=None, title=None) -> None:
    """CSV with ``#`` comment lines (title, column units, metadata) then a header row."""
    with open(path, "w", newline="") as fh:
        if title:
            fh.write(f"# {title}\n")
        if units:
            fh.write("# units: " + ", ".join(f"{c} [{units[c]}]" for c in columns) + "\n")
        for k, v in (meta or {}).items():
            fh.write(f"# {k}: {json.dumps(_clean(v), sort_keys=True, default=_jsonable)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def _parse(s):
    if s in ("true", "false"):
        return s == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def read_table(path):
    """Inverse of ``write_table``: (meta, rows) with values typed back."""
    meta, lines = {}, []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                body = line[1:].strip()
                key, sep, val = body.partition(": ")
                if sep and key not in ("units",):
                    try:
                        meta[key] = json.loads(val)
                    except json.JSONDecodeError:
                        meta[key] = val
            else:
                lines.append(line)
    reader = csv.DictReader(lines)
    return meta, [{k: _parse(v) for k, v in row.items()} for row in reader]


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "oppaoi"
    plt.rcParams["svg.fonttype"] = "path"
    return plt


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})


def plot_fig3(csv_path, svg_path) -> None:
    """Minimum AoI versus transmit power, one curve per N, from the fig3 CSV."""
    _, rows = read_table(csv_path)
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for N in sorted({r["N"] for r in rows}):
        pts = sorted((r["p_T_watts"], r["delta_star_seconds"]) for r in rows if r["N"] == N)
        ax.plot([x for x, _ in pts], [1e3 * y for _, y in pts], marker="o", label=f"N = {N}")
    ax.set_xlabel("transmit power p_T [W]")
    ax.set_ylabel("minimum average AoI [ms]")
    ax.grid(True, alpha=0.3)
    ax.legend()
    _save(fig, svg_path)
    plt.close(fig)


def plot_fig4(curves_csv, optimum_csv, svg_path) -> None:
    """AoI(p, r*(p)) curves with the optimizer's (p*, AoI*) markers."""
    _, curves = read_table(curves_csv)
    _, opt = read_table(optimum_csv)
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for N in sorted({r["N"] for r in curves}):
        pts = sorted((r["p"], r["delta_seconds"]) for r in curves if r["N"] == N)
        line, = ax.plot([x for x, _ in pts], [1e3 * y for _, y in pts], label=f"N = {N}")
        for o in opt:
            if o["N"] == N:
                ax.plot([o["p_star"]], [1e3 * o["delta_star_seconds"]], marker="*",
                        markersize=12, color=line.get_color())
    ax.set_xlabel("contention probability p")
    ax.set_ylabel("average AoI with optimal r [ms]")
    ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend()
    _save(fig, svg_path)
    plt.close(fig)
