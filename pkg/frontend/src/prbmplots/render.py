"""Render scan CSVs into deterministic figures.

All statistics are computed upstream; this module only draws.  SVG output is
byte-stable: fixed fonts/DPI, a fixed hash salt for element ids, text kept as
text, and no date metadata.
"""

import csv
import json
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FIGURE_IDS = ("phase_diagram_loglog", "locallaw_heatmap", "diffusion_timeseries", "spacing_histogram")

REQUIRED_COLUMNS = {
    "phase_diagram_loglog": ("alpha", "W", "median_loc_len"),
    "locallaw_heatmap": ("eta", "E", "stat_id", "value"),
    "diffusion_timeseries": ("t", "spec_id", "residual"),
    "spacing_histogram": ("source", "mean_r"),
}

_RC = {
    "svg.hashsalt": "prbmplots",
    "svg.fonttype": "none",
    "font.family": "DejaVu Sans",
    "font.size": 10.0,
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


class MissingColumnError(ValueError):
    """A required CSV column is absent."""


class SpecError(ValueError):
    """Malformed figure spec."""


@dataclass(frozen=True)
class FigureSpec:
    figure_id: str
    csv_path: str
    output_path: str
    fit_path: str = ""

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        try:
            figure_id = doc["figure_id"]
            inputs = doc["inputs"]
            output = doc["output"]
        except KeyError as exc:
            raise SpecError(f"figure spec missing key {exc}") from exc
        if figure_id not in FIGURE_IDS:
            raise SpecError(f"unknown figure_id {figure_id!r} (choose from {FIGURE_IDS})")
        if not output.lower().endswith((".svg", ".png")):
            raise SpecError("output format must be SVG or PNG")
        return cls(figure_id, inputs["csv"], output, inputs.get("fit", ""))


def _read_rows(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        header = reader.fieldnames or []
    return header, rows


def _require(header, figure_id):
    for col in REQUIRED_COLUMNS[figure_id]:
        if col not in header:
            raise MissingColumnError(f"{figure_id}: missing required column {col!r}")


def _placeholder(fig, ax):
    ax.text(0.5, 0.5, "no data", ha="center", va="center", fontsize=16, alpha=0.6)
    ax.set_xticks([])
    ax.set_yticks([])


def _draw_phase_diagram(ax, rows, fit_doc):
    alphas = sorted({float(r["alpha"]) for r in rows})
    for alpha in alphas:
        sub = [r for r in rows if float(r["alpha"]) == alpha]
        ws = np.array([float(r["W"]) for r in sub])
        ls = np.array([float(r["median_loc_len"]) for r in sub])
        ax.plot(ws, ls, "o", ms=3, alpha=0.35)
        cells = sorted({w for w in ws})
        med = [np.median(ls[ws == w]) for w in cells]
        ax.plot(cells, med, "-", lw=1.5, label=f"alpha = {alpha:g}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("W (band width)")
    ax.set_ylabel("localization length (median over bulk)")
    if fit_doc:
        slope = fit_doc["slope"]
        ci = (fit_doc.get("ci_low"), fit_doc.get("ci_high"))
        ax.set_title(f"fitted slope {slope:.3f}  (95% CI [{ci[0]:.3f}, {ci[1]:.3f}])")
    ax.legend(loc="best", fontsize=8)


def _draw_locallaw_heatmap(ax, fig, rows):
    stat_ids = sorted({r["stat_id"] for r in rows})
    stat = "entrywise_max" if "entrywise_max" in stat_ids else stat_ids[0]
    sub = [r for r in rows if r["stat_id"] == stat]
    etas = sorted({float(r["eta"]) for r in sub})
    energies = sorted({float(r["E"]) for r in sub})
    grid = np.full((len(etas), len(energies)), np.nan)
    for r in sub:
        i = etas.index(float(r["eta"]))
        j = energies.index(float(r["E"]))
        v = float(r["value"])
        grid[i, j] = v if np.isnan(grid[i, j]) else max(grid[i, j], v)
    im = ax.imshow(grid, origin="lower", aspect="auto", cmap="viridis")
    ax.set_xticks(range(len(energies)), [f"{e:g}" for e in energies])
    ax.set_yticks(range(len(etas)), [f"{e:g}" for e in etas])
    ax.set_xlabel("E")
    ax.set_ylabel("eta")
    ax.set_title(f"local-law residual ({stat}, max over seeds)")
    ax.grid(False)
    fig.colorbar(im, ax=ax, label="normalized residual")


def _draw_diffusion_timeseries(ax, rows):
    specs = sorted({r["spec_id"] for r in rows if r["spec_id"] != "ward"})
    for spec in specs:
        sub = sorted((float(r["t"]), float(r["residual"])) for r in rows if r["spec_id"] == spec)
        ts = [t for t, _ in sub]
        vals = [v for _, v in sub]
        ax.plot(ts, vals, "o-", ms=3, lw=1.0, label=spec)
    ax.set_yscale("log")
    ax.set_xlabel("flow time t")
    ax.set_ylabel("normalized residual")
    ax.set_title("loop / T-variable residuals along the flow")
    ax.legend(loc="best", fontsize=7)


def _draw_spacing_histogram(ax, rows):
    prbm = np.array([float(r["mean_r"]) for r in rows if r["source"] == "prbm"])
    gue = np.array([float(r["mean_r"]) for r in rows if r["source"] == "gue"])
    lo = min(np.min(v) for v in (prbm, gue) if v.size)
    hi = max(np.max(v) for v in (prbm, gue) if v.size)
    bins = np.linspace(lo - 1e-4, hi + 1e-4, 24)
    if prbm.size:
        ax.hist(prbm, bins=bins, alpha=0.6, label="PRBM")
    if gue.size:
        ax.hist(gue, bins=bins, alpha=0.6, label="GUE oracle", histtype="step", lw=2.0)
    ax.set_xlabel("mean spacing ratio")
    ax.set_ylabel("samples")
    ax.set_title("bulk spacing-ratio statistic")
    ax.legend(loc="best", fontsize=8)


def build_figure(spec):
    """Build the matplotlib figure for a spec (exposed for axis-level tests)."""
    header, rows = _read_rows(spec.csv_path)
    _require(header, spec.figure_id)
    fit_doc = None
    if spec.fit_path:
        with open(spec.fit_path) as fh:
            fit_doc = json.load(fh)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        if not rows:
            _placeholder(fig, ax)
            return fig
        if spec.figure_id == "phase_diagram_loglog":
            _draw_phase_diagram(ax, rows, fit_doc)
        elif spec.figure_id == "locallaw_heatmap":
            _draw_locallaw_heatmap(ax, fig, rows)
        elif spec.figure_id == "diffusion_timeseries":
            _draw_diffusion_timeseries(ax, rows)
        elif spec.figure_id == "spacing_histogram":
            _draw_spacing_histogram(ax, rows)
        fig.tight_layout()
        return fig


def render(spec):
    """Render a FigureSpec to its output path; returns the path."""
    fig = build_figure(spec)
    with plt.rc_context(_RC):
        if spec.output_path.lower().endswith(".svg"):
            fig.savefig(spec.output_path, format="svg", metadata={"Date": None})
        else:
            fig.savefig(spec.output_path, format="png")
    plt.close(fig)
    return spec.output_path
