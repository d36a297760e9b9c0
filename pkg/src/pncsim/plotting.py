"""Figure rendering for the report outputs (headless, file targets only)."""

from __future__ import annotations

import math
from typing import List

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

NCV_MARKERS = ("o", "s", "^", "D")


def save_ser_figure(report, path) -> None:
    """Semilog SER curves, with the joint-reception baseline when present."""
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    xs = [p.ebno_db for p in report.points]
    ys = [p.ser for p in report.points]
    ax.semilogy(xs, ys, marker="o", label=f"PNC ({report.csi} CSI)")
    if report.includes_baseline:
        bs = [p.baseline_ser for p in report.points]
        if any(not math.isnan(b) for b in bs):
            ax.semilogy(xs, bs, marker="x", linestyle="--", label="joint reception")
    ax.set_xlabel("$E_b/N_0$ (dB)")
    ax.set_ylabel("SER")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_constellation_figure(rows: List[dict], path, title: str = "") -> None:
    """Superimposed points, one marker shape per NCV class."""
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    for code in sorted({r["ncv"] for r in rows}):
        pts = [(r["re"], r["im"]) for r in rows if r["ncv"] == code]
        ax.scatter(
            [p[0] for p in pts], [p[1] for p in pts],
            marker=NCV_MARKERS[code % len(NCV_MARKERS)], s=60,
            label=f"NCV {code >> 1}{code & 1}",
        )
    for r in rows:
        ax.annotate(r["bits"], (r["re"], r["im"]), fontsize=6, alpha=0.6,
                    xytext=(3, 3), textcoords="offset points")
    ax.axhline(0, color="grey", lw=0.5)
    ax.axvline(0, color="grey", lw=0.5)
    ax.set_xlabel("I")
    ax.set_ylabel("Q")
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_channels_figure(rows: List[dict], path) -> None:
    """Per-pilot channel coefficients in the complex plane, per AP/UE."""
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 4.2))
    for ax, ap in zip(axes, (1, 2)):
        for ue, color in ((1, "tab:blue"), (2, "tab:orange")):
            pts = [(r["re"], r["im"]) for r in rows if r["ap"] == ap and r["ue"] == ue]
            ax.scatter([p[0] for p in pts], [p[1] for p in pts],
                       color=color, s=25, label=f"UE{ue}")
        ax.axhline(0, color="grey", lw=0.5)
        ax.axvline(0, color="grey", lw=0.5)
        ax.set_title(f"AP{ap}")
        ax.set_xlabel("Re")
        ax.set_ylabel("Im")
        ax.set_aspect("equal")
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
