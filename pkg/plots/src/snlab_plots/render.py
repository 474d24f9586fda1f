"""Render the lab CLI's CSV outputs into publication-style figures.

The producing CLI writes plain CSV with a block of ``# key=value`` header
lines (the manifest hash plus every run parameter) above the column row.
Column names are the schema contract; this module reads them and nothing
else.  The only numerics performed here are the analytic overlay references
computed from those header parameters: the free-packet width curve and the
critical-length line for width figures, the predicted decoherence time and
threshold level for decay figures, the far-field value for the method
ladder, and the fitted power law for mass sweeps.

Inputs are parsed and validated before any drawing, and images are written
through a temporary file, so a failed render leaves nothing behind.  Vector
output (.pdf/.svg) is preferred; SVG ids are salted with a fixed string and
date metadata is stripped so identical inputs give identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")  # batch tool: never depends on a display
matplotlib.rcParams["svg.hashsalt"] = "snlab-plots"

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

__all__ = ["FigureSpec", "SchemaError", "Table", "read_table", "render", "main"]


class SchemaError(Exception):
    """Input CSV does not match the declared schema (columns are the contract)."""


#: columns each figure kind requires; extra columns are ignored
REQUIRED_COLUMNS = {
    "width_vs_time": ("t", "r_p"),
    "decay": ("t", "D", "stderr"),
    "phasevar_ladder": ("method", "dphi2"),
    "scaling_fit": ("m", "T_fit"),
}


@dataclass(frozen=True)
class FigureSpec:
    """What to draw: input CSV path(s), figure kind, output path, labels."""

    inputs: tuple[str, ...]
    kind: str
    out: str
    xlabel: str | None = None
    ylabel: str | None = None
    title: str | None = None

    def __post_init__(self):
        if self.kind not in REQUIRED_COLUMNS:
            raise SchemaError(
                f"unknown figure kind {self.kind!r}; expected one of "
                + ", ".join(sorted(REQUIRED_COLUMNS)))
        if not self.inputs:
            raise SchemaError("at least one input CSV is required")


@dataclass(frozen=True)
class Table:
    """One parsed CSV: header parameters plus named (string) columns."""

    path: str
    params: dict[str, str]
    cells: dict[str, list[str]]

    @property
    def label(self) -> str:
        return Path(self.path).stem

    def require(self, names) -> None:
        missing = [n for n in names if n not in self.cells]
        if missing:
            raise SchemaError(
                f"{self.path}: missing column(s) {', '.join(missing)}; "
                f"found: {', '.join(self.cells) or 'none'}")

    def floats(self, name: str) -> np.ndarray:
        try:
            return np.array([float(v) for v in self.cells[name]])
        except ValueError as exc:
            raise SchemaError(f"{self.path}: column {name!r} is not numeric ({exc})")

    def strings(self, name: str) -> list[str]:
        return self.cells[name]

    def param(self, key: str) -> float | None:
        """Header parameter as a float; None when absent or non-numeric.

        Overlays degrade gracefully: a CSV stripped of its headers still
        renders, it just loses the analytic reference lines.
        """
        try:
            return float(self.params[key])
        except (KeyError, ValueError):
            return None


def read_table(path: str | os.PathLike) -> Table:
    params: dict[str, str] = {}
    body: list[str] = []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                text = line[1:].strip()
                if "=" in text:
                    key, _, val = text.partition("=")
                    params[key.strip()] = val.strip()
            elif line.strip():
                body.append(line)
    rows = list(csv.reader(body))
    if not rows:
        raise SchemaError(f"{path}: empty CSV (no column row)")
    columns, data = rows[0], rows[1:]
    if not data:
        raise SchemaError(f"{path}: no data rows")
    for k, row in enumerate(data):
        if len(row) != len(columns):
            raise SchemaError(
                f"{path}: row {k + 2} has {len(row)} fields, expected {len(columns)}")
    cells = {name: [row[i] for row in data] for i, name in enumerate(columns)}
    return Table(path=str(path), params=params, cells=cells)


# -- one draw function per figure kind ----------------------------------------
# Each returns its default (xlabel, ylabel).  Data series are drawn for every
# input file; analytic overlays come from the first file's header parameters
# so legends stay free of duplicates (files plotted together share a run
# configuration in every intended use).


def _draw_width(ax, tables):
    for tb in tables:
        ax.plot(tb.floats("t"), tb.floats("r_p"), lw=1.5, label=tb.label)
    tb = tables[0]
    t = tb.floats("t")
    a, m, hbar, G = (tb.param(k) for k in ("a", "m", "hbar", "G"))
    if None not in (a, m, hbar) and t.size:
        tt = np.linspace(t.min(), t.max(), 256)
        ref = a * np.sqrt(1.0 + (hbar * tt / (m * a * a)) ** 2)
        ax.plot(tt, ref, "--", lw=1.0, color="0.3", label="free-packet width")
    if None not in (G, m, hbar) and G != 0:
        a_c = hbar**2 / (G * m**3)
        ax.axhline(a_c, ls=":", lw=1.0, color="0.5",
                   label=f"critical length = {a_c:.3g}")
    return "t (sim. units)", "packet width r_p (sim. units)"


def _draw_decay(ax, tables):
    for tb in tables:
        t, D, err = tb.floats("t"), tb.floats("D"), tb.floats("stderr")
        (line,) = ax.plot(t, D, lw=1.5, label=tb.label)
        band = np.isfinite(err)  # stderr is inf for single-trajectory runs
        if band.any():
            ax.fill_between(t[band], (D - err)[band], (D + err)[band],
                            alpha=0.25, color=line.get_color(), lw=0)
        pred = tb.param("predicted_T")
        if pred is None:
            lam, hbar, G, m, r1, r2 = (tb.param(k) for k in
                                       ("criterion_constant", "hbar", "G", "m",
                                        "r1", "r2"))
            if None not in (lam, hbar, G, m, r1, r2) and r1 != r2 and G * m != 0:
                pred = math.sqrt(lam) * hbar / (G * m * m) / abs(1 / r1 - 1 / r2)
        if pred is not None and math.isfinite(pred):
            ax.axvline(pred, ls="--", lw=1.0, color=line.get_color(),
                       label=f"predicted T = {pred:.3g}")
    lam = tables[0].param("criterion_constant")
    if lam is not None:
        ax.axhline(math.exp(-lam / 2.0), ls=":", lw=1.0, color="0.5",
                   label="decoherence threshold")
    ax.set_ylim(bottom=0.0)
    return "t (sim. units)", "ensemble coherence D(t)"


def _draw_ladder(ax, tables):
    for i, tb in enumerate(tables):
        methods, vals = tb.strings("method"), tb.floats("dphi2")
        x = np.arange(len(methods)) + 0.08 * i  # offset repeat files slightly
        ax.plot(x, vals, "o", ms=7, label=tb.label)
        if "error" in tb.cells:
            err = tb.floats("error")
            good = np.isfinite(err) & (err > 0)
            if good.any():
                ax.errorbar(x[good], vals[good], yerr=err[good], fmt="none",
                            ecolor="0.3", capsize=3, lw=1.0)
    tb = tables[0]
    methods = tb.strings("method")
    ax.set_xticks(range(len(methods)), methods)
    ax.set_xlim(-0.5, len(methods) - 0.5 + 0.08 * (len(tables) - 1))
    G, m, hbar, r1, r2, T = (tb.param(k) for k in ("G", "m", "hbar", "r1", "r2", "T"))
    if None not in (G, m, hbar, r1, r2, T):
        far = (G**2 * m**4 / hbar**2) * T**2 * (1 / r1 - 1 / r2) ** 2
        ax.axhline(far, ls="--", lw=1.0, color="0.5",
                   label=f"far-field value = {far:.4g}")
    return "method", "phase variance (rad^2)"


def _draw_scaling(ax, tables):
    for tb in tables:
        ax.loglog(tb.floats("m"), tb.floats("T_fit"), "o", ms=7, label=tb.label)
    tb = tables[0]
    m, T_fit = tb.floats("m"), tb.floats("T_fit")
    expo = tb.param("exponent")
    if m.size >= 2:
        mm = np.geomspace(m.min(), m.max(), 64)
        if expo is not None and math.isfinite(expo):
            ax.loglog(mm, T_fit[0] * (mm / m[0]) ** expo, "-", lw=1.0,
                      color="0.3", label=f"fit: T ~ m^{expo:.2f}")
        ax.loglog(mm, T_fit[0] * (mm / m[0]) ** -2.0, ":", lw=1.0,
                  color="0.5", label="slope -2 guide")
    return "mass m (sim. units)", "fitted decoherence time (sim. units)"


_DRAW = {
    "width_vs_time": _draw_width,
    "decay": _draw_decay,
    "phasevar_ladder": _draw_ladder,
    "scaling_fit": _draw_scaling,
}


def render(spec: FigureSpec) -> Path:
    """Draw the figure described by ``spec``; returns the written output path."""
    out = Path(spec.out)
    fmt = out.suffix.lstrip(".").lower()
    if not fmt:
        raise SchemaError(f"output path {out} needs an image extension")
    tables = [read_table(p) for p in spec.inputs]
    for tb in tables:
        tb.require(REQUIRED_COLUMNS[spec.kind])

    fig, ax = plt.subplots(figsize=(6.4, 4.2), constrained_layout=True)
    try:
        xlabel, ylabel = _DRAW[spec.kind](ax, tables)
        ax.set_xlabel(spec.xlabel or xlabel)
        ax.set_ylabel(spec.ylabel or ylabel)
        if spec.title:
            ax.set_title(spec.title)
        ax.legend(loc="best", fontsize=8)
        metadata = None
        if fmt == "pdf":
            metadata = {"CreationDate": None}  # identical inputs -> identical bytes
        elif fmt == "svg":
            metadata = {"Date": None}
        out.parent.mkdir(parents=True, exist_ok=True)
        tmp = out.with_name(out.name + ".part")
        try:
            fig.savefig(tmp, format=fmt, metadata=metadata)
            os.replace(tmp, out)
        finally:
            tmp.unlink(missing_ok=True)
    finally:
        plt.close(fig)
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="snlab-render",
        description="Render lab CSV outputs into figures (vector formats preferred).")
    parser.add_argument("--kind", required=True, choices=sorted(REQUIRED_COLUMNS))
    parser.add_argument("--in", dest="inputs", nargs="+", required=True,
                        metavar="CSV", help="input CSV file(s) written by the lab CLI")
    parser.add_argument("--out", required=True,
                        help="output image path (.pdf/.svg preferred)")
    parser.add_argument("--xlabel", help="override the x-axis label")
    parser.add_argument("--ylabel", help="override the y-axis label")
    parser.add_argument("--title", help="optional figure title")
    args = parser.parse_args(argv)
    try:
        out = render(FigureSpec(inputs=tuple(args.inputs), kind=args.kind,
                                out=args.out, xlabel=args.xlabel,
                                ylabel=args.ylabel, title=args.title))
    except (SchemaError, OSError) as exc:
        print(f"render error: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
