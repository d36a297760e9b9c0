"""Monte Carlo driver: end-to-end SER sweeps and the joint-reception baseline.

One trial is one radio round: draw per-link fading, build both UE
frames with random payloads, superimpose them with calibrated noise at
each AP, run the receive chain (frame detection, CFO correction,
channel estimation or genie CSI, fade-state decision), exchange the
protocol messages, and count joint-word errors against the transmitted
ground truth. The joint-reception baseline detects the 16-word
hypothesis from both APs' observations on the same draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import channel_model, ofdm_modem, pnc_core, protocol
from .channel_model import LinkChannel, NoiseSpec
from .ofdm_modem import FrameSpec, PilotMap
from .pnc_core import MappingCatalog, QamConstellation


class UsageError(ValueError):
    """Bad configuration input; the message names the offending key."""


class SimulationError(RuntimeError):
    """A sweep point produced unusable statistics."""


_CONFIG_DEFAULTS: Dict[str, object] = {
    "ebno_db": (0.0, 5.0, 10.0, 15.0, 20.0, 25.0),
    "trials": None,
    "target_error_events": 200,
    "min_trials": 20,
    "max_trials": 20000,
    "csi": "perfect",
    "channel": "rayleigh",
    "h_ap1": (1.0 + 0.0j, 0.6 + 0.3j),
    "h_ap2": (1.0 + 0.0j, -0.4 + 0.8j),
    "cfo_max_hz": 0.0,
    "delay_max": 0.0,
    "sco": False,
    "loss_prob": 0.0,
    "replication": 4,
    "timeout_s": 1.0,
    "seed": 0,
    "out": None,
    # waveform constants
    "sample_rate": 1e6,
    "fft_len": 64,
    "cp_len": 16,
    "used_subcarriers": 48,
    "data_symbols": 6,
}


@dataclass(frozen=True)
class SimConfig:
    ebno_db: tuple
    trials: Optional[int]
    target_error_events: int
    min_trials: int
    max_trials: int
    csi: str
    channel: str
    h_ap1: tuple
    h_ap2: tuple
    cfo_max_hz: float
    delay_max: float
    sco: bool
    loss_prob: float
    replication: int
    timeout_s: float
    seed: int
    out: Optional[str]
    sample_rate: float
    fft_len: int
    cp_len: int
    used_subcarriers: int
    data_symbols: int

    def frame_spec(self) -> FrameSpec:
        return FrameSpec(
            fft_len=self.fft_len,
            cp_len=self.cp_len,
            used_subcarriers=self.used_subcarriers,
            sample_rate=self.sample_rate,
            data_symbols_per_frame=self.data_symbols,
        )


def parse_ebno_spec(spec) -> tuple:
    """Sweep points from a list, a comma list, or a start:step:stop range."""
    if isinstance(spec, (list, tuple)):
        return tuple(float(x) for x in spec)
    text = str(spec).strip()
    try:
        if ":" in text:
            start_s, step_s, stop_s = text.split(":")
            start, step, stop = float(start_s), float(step_s), float(stop_s)
            if step <= 0:
                raise ValueError
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            return tuple(start + k * step for k in range(n))
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"malformed value for key 'ebno_db': {spec!r}") from None


def _parse_complex_pair(value, key: str) -> tuple:
    if isinstance(value, (list, tuple)) and len(value) == 2:
        try:
            return complex(value[0]), complex(value[1])
        except (TypeError, ValueError):
            raise UsageError(f"malformed value for key {key!r}: {value!r}") from None
    if isinstance(value, str):
        parts = value.split(";")
        if len(parts) == 2:
            try:
                return complex(parts[0]), complex(parts[1])
            except ValueError:
                raise UsageError(f"malformed value for key {key!r}: {value!r}") from None
    raise UsageError(f"malformed value for key {key!r}: {value!r}")


def parse_config(
    file: Optional[str] = None, overrides: Optional[Dict[str, object]] = None
) -> SimConfig:
    """Build a SimConfig with precedence: flags > file > defaults."""
    import json

    merged = dict(_CONFIG_DEFAULTS)
    explicit: set = set()

    def apply(source: Dict[str, object], origin: str) -> None:
        for key, value in source.items():
            if value is None:
                continue
            if key not in _CONFIG_DEFAULTS:
                raise UsageError(f"unknown configuration key {key!r} (from {origin})")
            merged[key] = value
            explicit.add(key)

    if file is not None:
        try:
            with open(file) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"malformed config file {file}: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError(f"config file {file} must hold a JSON object")
        apply(data, file)
    if overrides:
        apply(overrides, "flags")

    if "trials" in explicit and "target_error_events" in explicit:
        raise UsageError("keys 'trials' and 'target_error_events' conflict: set one")

    merged["ebno_db"] = parse_ebno_spec(merged["ebno_db"])
    if not merged["ebno_db"]:
        raise UsageError("key 'ebno_db': sweep must be nonempty")
    for key in ("h_ap1", "h_ap2"):
        merged[key] = _parse_complex_pair(merged[key], key)
    for key, typ in (
        ("target_error_events", int), ("min_trials", int), ("max_trials", int),
        ("replication", int), ("seed", int), ("fft_len", int), ("cp_len", int),
        ("used_subcarriers", int), ("data_symbols", int),
        ("cfo_max_hz", float), ("delay_max", float), ("loss_prob", float),
        ("timeout_s", float), ("sample_rate", float),
    ):
        try:
            merged[key] = typ(merged[key])
        except (TypeError, ValueError):
            raise UsageError(f"malformed value for key {key!r}: {merged[key]!r}") from None
    if merged["trials"] is not None:
        try:
            merged["trials"] = int(merged["trials"])
        except (TypeError, ValueError):
            raise UsageError(f"malformed value for key 'trials': {merged['trials']!r}") from None
        if merged["trials"] < 1:
            raise UsageError("key 'trials': must be >= 1")
    if merged["csi"] not in ("perfect", "estimated"):
        raise UsageError(f"malformed value for key 'csi': {merged['csi']!r}")
    if merged["channel"] not in ("rayleigh", "fixed"):
        raise UsageError(f"malformed value for key 'channel': {merged['channel']!r}")
    if not (0.0 <= merged["loss_prob"] < 1.0):
        raise UsageError("key 'loss_prob': must be in [0, 1)")
    merged["sco"] = bool(merged["sco"])
    return SimConfig(**merged)


# --- per-point statistics -----------------------------------------------------


@dataclass
class PointStats:
    ebno_db: float
    trials: int
    symbols: int
    errors: int
    ser: float
    ci_halfwidth: float
    baseline_ser: float
    fallback_rate: float
    stall_rate: float
    ser_ue1: float
    ser_ue2: float
    baseline_errors: int = 0


@dataclass
class SerReport:
    points: List[PointStats]
    seed: int
    csi: str
    channel: str
    includes_baseline: bool

    def point(self, ebno_db: float) -> PointStats:
        for p in self.points:
            if abs(p.ebno_db - ebno_db) < 1e-9:
                return p
        raise KeyError(f"no sweep point at {ebno_db} dB")


def wilson_halfwidth(errors: int, n: int, z: float = 1.96) -> float:
    """Half-width of the Wilson score interval for an error proportion."""
    if n == 0:
        return float("nan")
    p = errors / n
    denom = 1.0 + z * z / n
    return (z / denom) * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n))


# --- trial engine --------------------------------------------------------------


@dataclass
class _Constants:
    """Per-run precomputation shared by every trial."""

    spec: FrameSpec
    pilots: PilotMap
    constellation: QamConstellation
    catalog: MappingCatalog
    data_bins: np.ndarray       # signed
    ue1_pilot_bins: np.ndarray  # signed
    pn: np.ndarray
    s1_by_word: np.ndarray      # (16,) UE1 symbol per joint word
    s2_by_word: np.ndarray


def _make_constants(cfg: SimConfig, catalog: Optional[MappingCatalog]) -> _Constants:
    spec = cfg.frame_spec()
    pilots = PilotMap()
    constellation = QamConstellation.default_4qam()
    if catalog is None:
        catalog = pnc_core.offline_search(constellation)
    pts = constellation.point_array()
    words = np.arange(16)
    return _Constants(
        spec=spec,
        pilots=pilots,
        constellation=constellation,
        catalog=catalog,
        data_bins=ofdm_modem.data_signed_bins(spec, pilots),
        ue1_pilot_bins=pilots.pilot_signed_bins(1, spec.fft_len),
        pn=ofdm_modem.pn_sequence(spec),
        s1_by_word=pts[(words >> 2) & 3],
        s2_by_word=pts[words & 3],
    )


def _words_from_bits(bits1: np.ndarray, bits2: np.ndarray) -> np.ndarray:
    b1 = bits1.reshape(-1, 2)
    b2 = bits2.reshape(-1, 2)
    return (b1[:, 0] << 3) | (b1[:, 1] << 2) | (b2[:, 0] << 1) | b2[:, 1]


@dataclass
class _ApResult:
    obs: Optional[protocol.ApObservation]
    hyp: Optional[np.ndarray]       # (n_data_bins, 16) hypothesis points
    data_vals: Optional[np.ndarray]  # (symbols, n_data_bins) received values


def _true_response(h: complex, delta: float, bins: np.ndarray, fft_len: int) -> np.ndarray:
    return h * np.exp(2j * np.pi * bins * delta / fft_len)


def _process_ap(
    y: np.ndarray,
    consts: _Constants,
    cfg: SimConfig,
    links: Tuple[LinkChannel, LinkChannel],
    lead: int,
    ap_cfo: float,
) -> _ApResult:
    spec = consts.spec
    det = ofdm_modem.detect_frame(y, consts.pn, spec=spec)
    if det is None:
        return _ApResult(None, None, None)

    if cfg.csi == "perfect":
        y_corr = ofdm_modem.correct_cfo(y, ap_cfo, spec.sample_rate)
    else:
        cfo_hat = ofdm_modem.estimate_cfo(y, det, spec)
        y_corr = ofdm_modem.correct_cfo(y, cfo_hat, spec.sample_rate)

    try:
        grid = ofdm_modem.demodulate_ofdm(y_corr, det, spec)
    except ValueError:
        return _ApResult(None, None, None)

    dbins = consts.data_bins
    if cfg.csi == "perfect":
        d1 = det - lead - links[0].delay
        d2 = det - lead - links[1].delay
        h1_data = _true_response(links[0].h, d1, dbins, spec.fft_len)
        h2_data = _true_response(links[1].h, d2, dbins, spec.fft_len)
        pb = consts.ue1_pilot_bins
        ratio = np.mean(
            _true_response(links[1].h, d2, pb, spec.fft_len)
            / _true_response(links[0].h, d1, pb, spec.fft_len)
        )
    else:
        try:
            est = ofdm_modem.estimate_channels_and_sco(grid, consts.pilots, spec)
            ratios = ofdm_modem.ratio_from_estimate(est)
        except (ofdm_modem.EstimationError, ofdm_modem.DegenerateChannelError):
            return _ApResult(None, None, None)
        h1_data = est.h1[dbins % spec.fft_len]
        h2_data = est.h2[dbins % spec.fft_len]
        ratio = np.mean(ratios)

    sfs = pnc_core.nearest_sfs(ratio, consts.catalog.sfs)
    hyp = h1_data[:, None] * consts.s1_by_word[None, :] + h2_data[:, None] * consts.s2_by_word[None, :]
    data_vals = grid[:, dbins % spec.fft_len]
    dist = np.abs(data_vals[:, :, None] - hyp[None, :, :]) ** 2
    words = np.argmin(dist, axis=2).reshape(-1)
    return _ApResult(protocol.ApObservation(sfs, words), hyp, data_vals)


@dataclass
class _TrialOutcome:
    status: str
    errors: int
    ue1_errors: int
    ue2_errors: int
    baseline_errors: int
    fallback: bool


def _run_trial(
    cfg: SimConfig,
    consts: _Constants,
    ebno_db: float,
    point_idx: int,
    trial_idx: int,
    ap_states: Tuple[protocol.ApState, protocol.ApState],
    include_baseline: bool,
) -> _TrialOutcome:
    seed = [cfg.seed, point_idx, trial_idx]
    rng_payload = np.random.default_rng(seed + [0])
    rng_fading = np.random.default_rng(seed + [1])
    rng_noise = np.random.default_rng(seed + [2])
    rng_impair = np.random.default_rng(seed + [3])
    rng_protocol = np.random.default_rng(seed + [4])

    spec = consts.spec
    capacity = ofdm_modem.frame_capacity_bits(spec, consts.pilots)
    bits1 = rng_payload.integers(0, 2, capacity)
    bits2 = rng_payload.integers(0, 2, capacity)
    words_true = _words_from_bits(bits1, bits2)
    f1 = ofdm_modem.build_ue_frame(bits1, 1, spec, consts.pilots, consts.constellation)
    f2 = ofdm_modem.build_ue_frame(bits2, 2, spec, consts.pilots, consts.constellation)

    gains = np.empty((2, 2), dtype=np.complex128)
    for ap in range(2):
        for ue in range(2):
            if cfg.channel == "fixed":
                fixed = (cfg.h_ap1, cfg.h_ap2)[ap][ue]
                gains[ap, ue] = complex(fixed)
            else:
                gains[ap, ue] = channel_model.sample_fading(rng_fading, "rayleigh_block").h

    ap_cfos = np.zeros(2)
    if cfg.cfo_max_hz > 0:
        ap_cfos = rng_impair.uniform(-cfg.cfo_max_hz, cfg.cfo_max_hz, 2)
    delays = np.zeros((2, 2))
    if cfg.delay_max > 0:
        delays = rng_impair.uniform(-cfg.delay_max, cfg.delay_max, (2, 2))
    if cfg.sco:
        delays = delays + rng_impair.uniform(0.0, 0.5, (2, 1))
    lead = 24 + int(rng_impair.integers(0, 17))

    noise = NoiseSpec(ebno_db)
    results: List[_ApResult] = []
    for ap in range(2):
        links = (
            LinkChannel(h=gains[ap, 0], delay=float(delays[ap, 0]), cfo=float(ap_cfos[ap])),
            LinkChannel(h=gains[ap, 1], delay=float(delays[ap, 1]), cfo=float(ap_cfos[ap])),
        )
        y = channel_model.apply_access_link(
            f1.samples, f2.samples, links[0], links[1], noise, rng_noise,
            pad_before=lead, pad_after=24, sample_rate=spec.sample_rate,
        )
        results.append(_process_ap(y, consts, cfg, links, lead, float(ap_cfos[ap])))

    round_out = protocol.run_round(
        consts.catalog,
        results[0].obs,
        results[1].obs,
        loss_prob=cfg.loss_prob,
        replication=cfg.replication,
        rng=rng_protocol if cfg.loss_prob > 0 else None,
        timeout_s=cfg.timeout_s,
        ap1_state=ap_states[0],
        ap2_state=ap_states[1],
    )

    if round_out.decoded_words is None:
        return _TrialOutcome("stalled", 0, 0, 0, 0, False)

    decoded = round_out.decoded_words
    errors = int(np.sum(decoded != words_true))
    ue1_errors = int(np.sum((decoded >> 2) != (words_true >> 2)))
    ue2_errors = int(np.sum((decoded & 3) != (words_true & 3)))

    baseline_errors = 0
    if include_baseline:
        d = None
        for res in results:
            dist = np.abs(res.data_vals[:, :, None] - res.hyp[None, :, :]) ** 2
            d = dist if d is None else d + dist
        words_joint = np.argmin(d, axis=2).reshape(-1)
        baseline_errors = int(np.sum(words_joint != words_true))

    return _TrialOutcome(
        round_out.status, errors, ue1_errors, ue2_errors, baseline_errors,
        round_out.status == "fallback_used",
    )


def _run_point(
    cfg: SimConfig,
    consts: _Constants,
    ebno_db: float,
    point_idx: int,
    include_baseline: bool,
) -> PointStats:
    symbols_per_trial = cfg.data_symbols * len(consts.data_bins)
    ap_states = (protocol.ApState(ap_id=1), protocol.ApState(ap_id=2))
    trials = symbols = errors = b_errors = 0
    ue1_errors = ue2_errors = 0
    stalls = fallbacks = 0

    while True:
        out = _run_trial(
            cfg, consts, ebno_db, point_idx, trials, ap_states, include_baseline
        )
        trials += 1
        if out.status == "stalled":
            stalls += 1
        else:
            symbols += symbols_per_trial
            errors += out.errors
            ue1_errors += out.ue1_errors
            ue2_errors += out.ue2_errors
            b_errors += out.baseline_errors
            fallbacks += int(out.fallback)

        if cfg.trials is not None:
            if trials >= cfg.trials:
                break
        else:
            done = errors >= cfg.target_error_events and (
                not include_baseline or b_errors >= cfg.target_error_events
            )
            if (done and trials >= cfg.min_trials) or trials >= cfg.max_trials:
                break

    stall_rate = stalls / trials
    if stall_rate > 0.5:
        raise SimulationError(
            f"sweep point {ebno_db} dB: {stalls}/{trials} rounds stalled "
            f"(frame detection or backhaul failure dominates); "
            f"no usable SER at this point"
        )
    ser = errors / symbols if symbols else float("nan")
    return PointStats(
        ebno_db=ebno_db,
        trials=trials,
        symbols=symbols,
        errors=errors,
        ser=ser,
        ci_halfwidth=wilson_halfwidth(errors, symbols) if symbols else float("nan"),
        baseline_ser=(b_errors / symbols if symbols else float("nan"))
        if include_baseline
        else float("nan"),
        fallback_rate=fallbacks / trials,
        stall_rate=stall_rate,
        ser_ue1=ue1_errors / symbols if symbols else float("nan"),
        ser_ue2=ue2_errors / symbols if symbols else float("nan"),
        baseline_errors=b_errors,
    )


def _run(cfg: SimConfig, include_baseline: bool, catalog: Optional[MappingCatalog]) -> SerReport:
    consts = _make_constants(cfg, catalog)
    points = [
        _run_point(cfg, consts, ebno, k, include_baseline)
        for k, ebno in enumerate(cfg.ebno_db)
    ]
    return SerReport(
        points=points, seed=cfg.seed, csi=cfg.csi, channel=cfg.channel,
        includes_baseline=include_baseline,
    )


def run_ser_sweep(cfg: SimConfig, catalog: Optional[MappingCatalog] = None) -> SerReport:
    """SER of the PNC scheme across the configured Eb/N0 sweep."""
    return _run(cfg, include_baseline=False, catalog=catalog)


def run_comp_baseline(cfg: SimConfig, catalog: Optional[MappingCatalog] = None) -> SerReport:
    """PNC SER plus the joint-ML baseline on the same channel and noise draws."""
    return _run(cfg, include_baseline=True, catalog=catalog)


def ebno_at_ser(points: Sequence[PointStats], target: float, baseline: bool = False) -> float:
    """Eb/N0 where the (log-)SER curve crosses ``target``, by interpolation."""
    xs, ys = [], []
    for p in points:
        v = p.baseline_ser if baseline else p.ser
        if v > 0 and math.isfinite(v):
            xs.append(p.ebno_db)
            ys.append(math.log10(v))
    t = math.log10(target)
    for k in range(len(xs) - 1):
        y0, y1 = ys[k], ys[k + 1]
        if (y0 - t) * (y1 - t) <= 0 and y0 != y1:
            return xs[k] + (xs[k + 1] - xs[k]) * (y0 - t) / (y0 - y1)
    raise SimulationError(f"SER {target} not bracketed by the sweep")
