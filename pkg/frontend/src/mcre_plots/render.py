"""Render CSV artifacts into static figures.

Kinds:
  decay            -- curve CSV ``index,estimate,std_error`` on a log-scale
                      y axis; an optional second input with header
                      ``template,residual,params`` overlays the best fitted
                      rate template, parameters quoted in the legend.
  bound-comparison -- coupling campaign CSV ``n,replications,failures,
                      failure_rate,mean_bound,bound_se``: empirical failure
                      rate and analytic bound (with its standard-error band)
                      on one axis set.
  histogram        -- meeting-time CSV ``n,meeting_time`` (one row per
                      replication, -1 = never met): histogram of realized
                      coupling times, never-met count in the legend.

Figures are deterministic: fixed size, fixed fonts, no timestamps.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

KINDS = ("decay", "bound-comparison", "histogram")

EXPECTED_HEADERS = {
    "decay": ["index", "estimate", "std_error"],
    "fit": ["template", "residual", "params"],
    "bound-comparison": ["n", "replications", "failures", "failure_rate",
                         "mean_bound", "bound_se"],
    "histogram": ["n", "meeting_time"],
}

_RC = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 100,
    "font.family": "DejaVu Sans",
    "font.size": 10,
    "svg.hashsalt": "mcre-plots",
}


class SchemaError(ValueError):
    """Input CSV header does not match a documented schema."""


@dataclass
class PlotJob:
    kind: str
    inputs: List[Path]
    output: Path
    log_y: Optional[bool] = None  # default: log scale for decay kinds

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown plot kind {self.kind!r}; choose from {KINDS}")
        if not self.inputs:
            raise ValueError("at least one input CSV required")
        self.inputs = [Path(p) for p in self.inputs]
        self.output = Path(self.output)


def _read_rows(path: Path, schema: str):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = EXPECTED_HEADERS[schema]
        if header != expected:
            raise SchemaError(
                f"{path}: expected header {','.join(expected)!r}, got "
                f"{','.join(header) if header else '<empty>'!r}"
            )
        return list(reader)


def template_curve(name: str, params: dict, ns: np.ndarray) -> np.ndarray:
    """Evaluate a fitted rate template (log2 parameterization) on ``ns``.

    Mirrors the upstream fit output: estimates were regressed as
    log2(est) = log2_amplitude + slope * shape(n).
    """
    ns = np.asarray(ns, dtype=float)
    if name not in ("geometric", "bernstein", "stretched", "polynomial"):
        raise SchemaError(f"unknown template {name!r} in fit CSV")
    amp = params["log2_amplitude"]
    log2n = np.log2(ns)
    ln2 = np.log(2.0)
    if name == "geometric":
        return 2.0**amp * params["lam"] ** ns
    if name == "bernstein":
        shape = -ns / (log2n * np.log2(log2n))
        return 2.0 ** (amp + (params["c"] / ln2) * shape)
    if name == "stretched":
        shape = -(ns ** params["gamma"])
        return 2.0 ** (amp + (params["c"] / ln2) * shape)
    if name == "polynomial":
        return 2.0**amp * (log2n / ns) ** params["gamma"]
    raise SchemaError(f"unknown template {name!r} in fit CSV")


def _render_decay(job: PlotJob, ax):
    rows = _read_rows(job.inputs[0], "decay")
    ns = np.array([float(r[0]) for r in rows])
    est = np.array([float(r[1]) for r in rows])
    se = np.array([float(r[2]) for r in rows])
    ax.errorbar(ns, est, yerr=se, fmt="o-", ms=4, lw=1, capsize=2,
                color="#1f77b4", label="estimate")
    if len(job.inputs) > 1:
        fit_rows = _read_rows(job.inputs[1], "fit")
        if fit_rows:
            name, _, raw = fit_rows[0][0], fit_rows[0][1], fit_rows[0][2]
            params = json.loads(raw)
            grid = np.linspace(ns.min(), ns.max(), 200)
            grid = grid[grid >= 2.0]  # loglog shapes undefined below 2
            label = name + " fit: " + ", ".join(
                f"{k}={v:.4g}" for k, v in sorted(params.items())
            )
            ax.plot(grid, template_curve(name, params, grid), "--",
                    color="#d62728", lw=1.2, label=label)
    if job.log_y is not False:
        ax.set_yscale("log")
    ax.set_xlabel("index")
    ax.set_ylabel("estimate")
    ax.legend(loc="best", fontsize=8)


def _render_bounds(job: PlotJob, ax):
    rows = _read_rows(job.inputs[0], "bound-comparison")
    ns = np.array([float(r[0]) for r in rows])
    rate = np.array([float(r[3]) for r in rows])
    bound = np.array([float(r[4]) for r in rows])
    se = np.array([float(r[5]) for r in rows])
    ax.plot(ns, rate, "o-", ms=4, lw=1, color="#1f77b4", label="empirical failure rate")
    ax.plot(ns, bound, "s--", ms=4, lw=1, color="#d62728", label="analytic bound")
    ax.fill_between(ns, bound - se, bound + se, color="#d62728", alpha=0.2,
                    linewidth=0, label="bound ± SE")
    if job.log_y:
        ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("failure probability")
    ax.legend(loc="best", fontsize=8)


def _render_histogram(job: PlotJob, ax):
    rows = _read_rows(job.inputs[0], "histogram")
    times = np.array([int(r[1]) for r in rows])
    met = times[times >= 0]
    never = int(np.sum(times < 0))
    if met.size:
        bins = min(40, max(5, int(np.sqrt(met.size))))
        ax.hist(met, bins=bins, color="#1f77b4", edgecolor="white",
                label=f"met ({met.size}); never met: {never}")
    else:
        ax.text(0.5, 0.5, f"no meetings ({never} replications)",
                ha="center", va="center", transform=ax.transAxes)
    ax.set_xlabel("meeting time")
    ax.set_ylabel("replications")
    if met.size:
        ax.legend(loc="best", fontsize=8)


_RENDERERS = {
    "decay": _render_decay,
    "bound-comparison": _render_bounds,
    "histogram": _render_histogram,
}


def render(job: PlotJob) -> Path:
    """Render one job to its output image; returns the output path."""
    with matplotlib.rc_context(_RC):
        fig, ax = plt.subplots()
        try:
            _RENDERERS[job.kind](job, ax)
            fig.tight_layout()
            metadata = {"Date": None} if job.output.suffix == ".svg" else {}
            fig.savefig(job.output, metadata=metadata)
        finally:
            plt.close(fig)
    return job.output


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mcre-render", description="Render lab CSV artifacts as figures."
    )
    parser.add_argument("command", choices=["render"])
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--in", dest="inputs", action="append", required=True,
                        metavar="PATH", help="input CSV (repeatable)")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--linear-y", action="store_true",
                        help="linear y axis even for decay plots")
    args = parser.parse_args(argv)
    try:
        job = PlotJob(kind=args.kind, inputs=args.inputs, output=args.out,
                      log_y=False if args.linear_y else None)
        render(job)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
