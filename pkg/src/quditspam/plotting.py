"""Static bar charts and CSV tables for SPAM and Pauli-fidelity reports.

Figures use the Agg backend and are saved as SVG with a fixed hash salt and
no timestamp, so re-rendering the same data gives the same bytes.
"""

from __future__ import annotations

import csv
import io
from typing import Iterable, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .estimator import SpamEstimate  # noqa: E402

_STYLE = {
    "svg.hashsalt": "quditspam",
    "svg.fonttype": "none",
    "font.size": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}
SOLID = "#3b6ea8"
LIGHT = "#b9cde6"


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _bars(ax, x, lower, upper, stderr, point, width=0.6):
    """Solid bar for the interval, light bar for +-stderr, cross at the point."""
    lower, upper = np.asarray(lower), np.asarray(upper)
    stderr, point = np.asarray(stderr), np.asarray(point)
    ax.bar(x, 2 * stderr, bottom=point - stderr, width=width, color=LIGHT,
           label="±1 stderr", zorder=1)
    ax.bar(x, np.maximum(upper - lower, 0), bottom=lower, width=width * 0.55,
           color=SOLID, label="interval", zorder=2)
    ax.scatter(x, point, marker="x", color="black", s=18, zorder=3, label="estimate")


def plot_spam_intervals(est: SpamEstimate, path, truth: Sequence[float] | None = None,
                        title: str | None = None) -> None:
    with plt.rc_context(_STYLE):
        k = len(est.labels)
        fig, ax = plt.subplots(figsize=(max(4.0, 0.32 * k + 1.5), 3.0))
        x = np.arange(k)
        _bars(ax, x, est.lower, est.upper, est.stderr, est.eps_hat.values)
        if truth is not None:
            ax.scatter(x, truth, marker="o", facecolors="none", edgecolors="C3",
                       s=20, zorder=4, label="truth")
        ax.set_xticks(x, est.labels, rotation=90)
        ax.set_ylabel("error probability")
        ax.axhline(0.0, color="grey", lw=0.5)
        if title:
            ax.set_title(title)
        ax.legend(frameon=False, fontsize=7)
        fig.tight_layout()
        _save(fig, path)


def plot_eigenvalue_bounds(bounds, path, truth: Mapping[str, float] | None = None) -> None:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 3.0))
        x = np.arange(len(bounds))
        _bars(ax, x, [b.lower for b in bounds], [b.upper for b in bounds],
              [b.stderr for b in bounds], [b.estimate for b in bounds])
        if truth is not None:
            ax.scatter(x, [truth[b.label] for b in bounds], marker="o", facecolors="none",
                       edgecolors="C3", s=20, zorder=4, label="truth")
        names = [b.label + ("" if b.identifiable else "*") for b in bounds]
        ax.set_xticks(x, names, rotation=90)
        ax.set_ylabel("Pauli fidelity")
        ax.legend(frameon=False, fontsize=7)
        fig.tight_layout()
        _save(fig, path)


def plot_cer_comparison(results, path) -> None:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.0))
        x = np.arange(len(results))
        ax.errorbar(x - 0.1, [r.value for r in results], yerr=[r.stderr for r in results],
                    fmt="s", ms=3, color=SOLID, label="decay only")
        corr = [r for r in results if r.spam_corrected is not None]
        if corr:
            xc = [i + 0.1 for i, r in enumerate(results) if r.spam_corrected is not None]
            ax.errorbar(xc, [r.spam_corrected for r in corr],
                        yerr=[r.spam_corrected_stderr for r in corr],
                        fmt="o", ms=3, color="C1", label="SPAM corrected")
        ax.set_xticks(x, ["/".join(r.pair) for r in results], rotation=90)
        ax.set_ylabel("sqrt(λ_a λ_G(a))")
        ax.legend(frameon=False, fontsize=7)
        fig.tight_layout()
        _save(fig, path)


# --- delimited output -------------------------------------------------------

def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([f"{v:.12g}" if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def spam_csv(est: SpamEstimate, truth: Sequence[float] | None = None) -> str:
    header = ["label", "representative", "lower", "upper", "stderr"]
    if truth is not None:
        header.append("truth")
    rows = []
    for i, lab in enumerate(est.labels):
        row = [lab, float(est.eps_hat.values[i]), float(est.lower[i]), float(est.upper[i]),
               float(est.stderr[i])]
        if truth is not None:
            row.append(float(truth[i]))
        rows.append(row)
    return csv_text(header, rows)


def bounds_csv(bounds, truth: Mapping[str, float] | None = None) -> str:
    header = ["label", "image", "identifiable", "estimate", "lower", "upper", "stderr"]
    if truth is not None:
        header.append("truth")
    rows = []
    for b in bounds:
        row = [b.label, b.image, int(b.identifiable), b.estimate, b.lower, b.upper, b.stderr]
        if truth is not None:
            row.append(float(truth[b.label]))
        rows.append(row)
    return csv_text(header, rows)


def cer_csv(results) -> str:
    rows = [["/".join(r.pair), r.value, r.stderr,
             "" if r.spam_corrected is None else r.spam_corrected,
             "" if r.spam_corrected_stderr is None else r.spam_corrected_stderr]
            for r in results]
    return csv_text(["pair", "cer", "cer_stderr", "spam_corrected", "spam_corrected_stderr"], rows)
