"""Delimited outputs: SER sweeps, constellation dumps, channel dumps.

CSV is the machine-readable contract; the matching figure files are
rendered next to each CSV for quick inspection.
"""

from __future__ import annotations

import csv
import math
import os
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import ofdm_modem, pnc_core
from .channel_model import LinkChannel, NoiseSpec, apply_access_link
from .ofdm_modem import FrameSpec, PilotMap
from .pnc_core import MappingCatalog, ncv_codes, superimpose
from .sim_harness import PointStats, SerReport

SER_COLUMNS = [
    "ebno_db", "symbols", "errors", "ser", "ci_halfwidth",
    "baseline_ser", "fallback_rate", "stall_rate",
    "ser_ue1", "ser_ue2", "trials",
]


def _fmt(x) -> str:
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return repr(x)  # shortest exact round-trip representation
    return str(x)


def report_to_csv(report: SerReport, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# seed={report.seed} csi={report.csi} channel={report.channel}\n")
        writer = csv.writer(fh)
        writer.writerow(SER_COLUMNS)
        for p in report.points:
            writer.writerow(
                [
                    _fmt(p.ebno_db), p.symbols, p.errors, _fmt(p.ser),
                    _fmt(p.ci_halfwidth), _fmt(p.baseline_ser),
                    _fmt(p.fallback_rate), _fmt(p.stall_rate),
                    _fmt(p.ser_ue1), _fmt(p.ser_ue2), p.trials,
                ]
            )


def report_from_csv(path) -> SerReport:
    seed, csi, channel = 0, "", ""
    points: List[PointStats] = []
    with open(path, newline="") as fh:
        header = fh.readline().strip()
        if header.startswith("#"):
            for token in header[1:].split():
                key, _, value = token.partition("=")
                if key == "seed":
                    seed = int(value)
                elif key == "csi":
                    csi = value
                elif key == "channel":
                    channel = value
        reader = csv.DictReader(fh)
        for row in reader:
            points.append(
                PointStats(
                    ebno_db=float(row["ebno_db"]),
                    trials=int(row["trials"]),
                    symbols=int(row["symbols"]),
                    errors=int(row["errors"]),
                    ser=float(row["ser"]),
                    ci_halfwidth=float(row["ci_halfwidth"]),
                    baseline_ser=float(row["baseline_ser"]),
                    fallback_rate=float(row["fallback_rate"]),
                    stall_rate=float(row["stall_rate"]),
                    ser_ue1=float(row["ser_ue1"]),
                    ser_ue2=float(row["ser_ue2"]),
                )
            )
    has_baseline = any(not math.isnan(p.baseline_ser) for p in points)
    return SerReport(
        points=points, seed=seed, csi=csi, channel=channel,
        includes_baseline=has_baseline,
    )


def export_report(report: SerReport, path, figures: bool = True) -> Dict[str, str]:
    """Write the SER CSV and, by default, the matching figure file."""
    paths = {"csv": str(path)}
    report_to_csv(report, path)
    if figures:
        from . import plotting

        fig_path = os.path.splitext(str(path))[0] + ".png"
        plotting.save_ser_figure(report, fig_path)
        paths["figure"] = fig_path
    return paths


# --- constellation dump --------------------------------------------------------


def constellation_dump_rows(
    cat: MappingCatalog, i: int, j: int, ap: int, h: Optional[Tuple[complex, complex]] = None
) -> List[dict]:
    """Superimposed points with their NCV labels for one AP's mapping."""
    entry = cat.entry(i, j)
    m = entry.m1 if ap == 1 else entry.m2
    if h is None:
        v = cat.sfs.values[(i if ap == 1 else j) - 1]
        h = (1.0 + 0.0j, v)
    sc = superimpose(h, cat.constellation)
    codes = ncv_codes(m)
    rows = []
    for w in range(16):
        bits = pnc_core.word_bits(w)
        rows.append(
            {
                "word": w,
                "bits": "".join(str(b) for b in bits),
                "re": sc.points[w].real,
                "im": sc.points[w].imag,
                "ncv": int(codes[w]),
            }
        )
    return rows


def dump_constellation(
    cat: MappingCatalog,
    i: int,
    j: int,
    ap: int,
    path,
    h: Optional[Tuple[complex, complex]] = None,
    figures: bool = True,
) -> Dict[str, str]:
    rows = constellation_dump_rows(cat, i, j, ap, h)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["word", "bits", "re", "im", "ncv"])
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) if isinstance(v, float) else v for k, v in row.items()})
    paths = {"csv": str(path)}
    if figures:
        from . import plotting

        fig_path = os.path.splitext(str(path))[0] + ".png"
        plotting.save_constellation_figure(rows, fig_path, title=f"AP{ap}, mapping ({i},{j})")
        paths["figure"] = fig_path
    return paths


# --- channel-estimate dump ------------------------------------------------------


def channel_dump_rows(
    gains,
    ebno_db: Optional[float] = 30.0,
    delays=((0.0, 0.0), (0.0, 0.0)),
    seed: int = 0,
    spec: Optional[FrameSpec] = None,
    pilots: Optional[PilotMap] = None,
) -> List[dict]:
    """Pilot-subcarrier channel estimates for both UEs at both APs.

    Runs one synthetic frame through each AP's link pair and estimates
    the per-pilot coefficients, reproducing the content of the measured
    channel-coefficient scatter plots.
    """
    if spec is None:
        spec = FrameSpec()
    if pilots is None:
        pilots = PilotMap()
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, ofdm_modem.frame_capacity_bits(spec, pilots))
    bits2 = rng.integers(0, 2, ofdm_modem.frame_capacity_bits(spec, pilots))
    f1 = ofdm_modem.build_ue_frame(bits, 1, spec, pilots)
    f2 = ofdm_modem.build_ue_frame(bits2, 2, spec, pilots)

    sub1 = sorted(pilots.ue1_pilots)
    sub2 = sorted(pilots.ue2_pilots)
    rows = []
    for ap in (1, 2):
        g = gains[ap - 1]
        d = delays[ap - 1]
        links = (
            LinkChannel(h=complex(g[0]), delay=float(d[0])),
            LinkChannel(h=complex(g[1]), delay=float(d[1])),
        )
        noise = NoiseSpec(ebno_db) if ebno_db is not None else None
        y = apply_access_link(
            f1.samples, f2.samples, links[0], links[1], noise, rng,
            pad_before=32, pad_after=24, sample_rate=spec.sample_rate,
        )
        det = ofdm_modem.detect_frame(y, spec=spec)
        if det is None:
            raise RuntimeError("frame not detected while dumping channels")
        grid = ofdm_modem.demodulate_ofdm(y, det, spec)
        est = ofdm_modem.estimate_channels_and_sco(grid, pilots, spec)
        # ascending pilot subcarriers map 1:1 onto ascending signed bins
        for ue, hs, subs in ((1, est.h1_pilot, sub1), (2, est.h2_pilot, sub2)):
            for k, sub in enumerate(subs):
                rows.append(
                    {
                        "ap": ap,
                        "ue": ue,
                        "subcarrier": sub,
                        "re": float(hs[k].real),
                        "im": float(hs[k].imag),
                    }
                )
    return rows


def dump_channels(
    gains, path, ebno_db: Optional[float] = 30.0,
    delays=((0.0, 0.0), (0.0, 0.0)), seed: int = 0, figures: bool = True,
) -> Dict[str, str]:
    rows = channel_dump_rows(gains, ebno_db, delays, seed)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["ap", "ue", "subcarrier", "re", "im"])
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) if isinstance(v, float) else v for k, v in row.items()})
    paths = {"csv": str(path)}
    if figures:
        from . import plotting

        fig_path = os.path.splitext(str(path))[0] + ".png"
        plotting.save_channels_figure(rows, fig_path)
        paths["figure"] = fig_path
    return paths
