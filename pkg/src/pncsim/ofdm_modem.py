"""OFDM framing and recovery for the two-user uplink.

Frame layout (880 samples at 1 Msample/s):

    [PN 64] [coarse preamble 80] [fine preamble 80] [ref preamble 80]
    [6 data blocks of 96 = 16 head CP + 64 core + 16 tail CP]

Only UE1 transmits the PN and preambles; UE2 stays silent for the first
304 samples and sends its data blocks time-aligned with UE1's. Data
blocks carry a cyclic prefix at both ends so the FFT window tolerates
inter-user delays of either sign up to the CP length.

The three preambles are uniform 80-sample (16 CP + 64 core) symbols:
the coarse one is a 16-sample tile repeated five times (lag-16
autocorrelation, CFO range +-31.25 kHz), the fine and reference ones are
the same known full-band symbol, giving lag-64 cyclic-prefix products
and a lag-80 core-to-core refinement stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .pnc_core import QamConstellation, modulate_4qam


class EstimationError(ValueError):
    """Channel estimation had nothing to work with."""


class DegenerateChannelError(ValueError):
    """Channel ratio undefined: reference-user gain below threshold."""


@dataclass(frozen=True)
class FrameSpec:
    """Waveform constants; defaults mirror the prototype configuration."""

    fft_len: int = 64
    cp_len: int = 16
    used_subcarriers: int = 48
    sample_rate: float = 1e6
    data_symbols_per_frame: int = 6

    @property
    def subcarrier_spacing(self) -> float:
        return self.sample_rate / self.fft_len

    @property
    def sample_duration(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def pn_len(self) -> int:
        return 64

    @property
    def preamble_len(self) -> int:
        return self.cp_len + self.fft_len

    @property
    def n_preambles(self) -> int:
        return 3

    @property
    def data_block_len(self) -> int:
        # CP at both ends of the 64-sample core
        return self.cp_len + self.fft_len + self.cp_len

    @property
    def preamble_span(self) -> int:
        return self.pn_len + self.n_preambles * self.preamble_len

    @property
    def frame_len(self) -> int:
        return self.preamble_span + self.data_symbols_per_frame * self.data_block_len

    def data_block_start(self, symbol: int) -> int:
        return self.preamble_span + symbol * self.data_block_len


# 1-based subcarrier numbering: 1..8 and 58..64 are null, 33 is DC.
NULL_SUBCARRIERS = tuple(range(1, 9)) + tuple(range(58, 65))
DC_SUBCARRIER = 33


def subcarrier_to_bin(m: int, fft_len: int = 64) -> int:
    """FFT bin for a 1-based subcarrier number (DC carrier -> bin 0)."""
    return (m - DC_SUBCARRIER) % fft_len


def signed_bin(b: int, fft_len: int = 64) -> int:
    return ((b + fft_len // 2) % fft_len) - fft_len // 2


@dataclass(frozen=True)
class PilotMap:
    """Interleaved pilot subcarriers; each UE's pilots are nulled by the other."""

    ue1_pilots: tuple = (11, 17, 23, 29, 36, 42, 48, 54)
    ue2_pilots: tuple = (12, 18, 24, 30, 37, 43, 49, 55)

    def pilot_bins(self, ue_id: int, fft_len: int = 64) -> np.ndarray:
        subs = self.ue1_pilots if ue_id == 1 else self.ue2_pilots
        return np.array([subcarrier_to_bin(m, fft_len) for m in subs])

    def pilot_signed_bins(self, ue_id: int, fft_len: int = 64) -> np.ndarray:
        return np.array(sorted(signed_bin(b, fft_len) for b in self.pilot_bins(ue_id, fft_len)))


def used_signed_bins(spec: FrameSpec) -> np.ndarray:
    """Signed bin indices of the 48 used subcarriers, ascending."""
    subs = [
        m
        for m in range(1, spec.fft_len + 1)
        if m not in NULL_SUBCARRIERS and m != DC_SUBCARRIER
    ]
    return np.array(sorted(signed_bin(subcarrier_to_bin(m, spec.fft_len), spec.fft_len) for m in subs))


def data_signed_bins(spec: FrameSpec, pilots: PilotMap) -> np.ndarray:
    """Signed bins shared by both UEs for data, ascending (32 of them)."""
    taken = set(pilots.pilot_signed_bins(1, spec.fft_len)) | set(
        pilots.pilot_signed_bins(2, spec.fft_len)
    )
    return np.array([b for b in used_signed_bins(spec) if b not in taken])


PILOT_VALUE = 1.0 + 0.0j


def _lfsr_msequence(taps: Tuple[int, int] = (6, 5), degree: int = 6) -> np.ndarray:
    """Maximal-length binary sequence of period 2^degree - 1."""
    state = (1 << degree) - 1
    out = []
    for _ in range((1 << degree) - 1):
        out.append(state & 1)
        fb = ((state >> (taps[0] - 1)) ^ (state >> (taps[1] - 1))) & 1
        state = (state >> 1) | (fb << (degree - 1))
    return np.array(out)


def pn_sequence(spec: Optional[FrameSpec] = None) -> np.ndarray:
    """BPSK detection sequence: length-63 m-sequence padded to 64 samples."""
    if spec is None:
        spec = FrameSpec()
    chips = _lfsr_msequence()
    seq = 1.0 - 2.0 * chips.astype(np.float64)
    seq = np.concatenate([seq, seq[:1]])
    return seq.astype(np.complex128)


def _qpsk_from_rng(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.exp(1j * (np.pi / 4 + np.pi / 2 * rng.integers(0, 4, n)))


_COARSE_TILE_SEED = 0x0FD1
_PREAMBLE_SYMBOL_SEED = 0x0FD2


def coarse_preamble(spec: Optional[FrameSpec] = None) -> np.ndarray:
    """Five repeats of a 16-sample tile (the leading tile acts as CP)."""
    if spec is None:
        spec = FrameSpec()
    tile = _qpsk_from_rng(spec.cp_len, _COARSE_TILE_SEED)
    return np.tile(tile, spec.preamble_len // spec.cp_len)


def _known_preamble_core(spec: FrameSpec) -> np.ndarray:
    """Known full-band symbol used for the fine and reference preambles."""
    grid = np.zeros(spec.fft_len, dtype=np.complex128)
    bins = used_signed_bins(spec)
    grid[bins % spec.fft_len] = _qpsk_from_rng(len(bins), _PREAMBLE_SYMBOL_SEED)
    return np.fft.ifft(grid, norm="ortho")


def fine_preamble(spec: Optional[FrameSpec] = None) -> np.ndarray:
    if spec is None:
        spec = FrameSpec()
    core = _known_preamble_core(spec)
    return np.concatenate([core[-spec.cp_len:], core])


@dataclass
class UeFrame:
    """One UE's time-domain frame plus the transmitted subcarrier grid."""

    ue_id: int
    samples: np.ndarray
    grid: np.ndarray          # (symbols, fft_len) transmitted values
    payload_bits: np.ndarray  # padded to capacity
    spec: FrameSpec
    pilots: PilotMap


def frame_capacity_bits(spec: FrameSpec, pilots: PilotMap) -> int:
    return spec.data_symbols_per_frame * len(data_signed_bins(spec, pilots)) * 2


def build_ue_frame(
    payload_bits: Sequence[int],
    ue_id: int,
    spec: Optional[FrameSpec] = None,
    pilots: Optional[PilotMap] = None,
    constellation: Optional[QamConstellation] = None,
) -> UeFrame:
    """Assemble one UE's 880-sample frame.

    UE1 carries the PN sequence and the three preambles; UE2 is silent
    over that span. Data carriers hold 4-QAM payload, the UE's own pilot
    carriers hold the fixed pilot value, and everything else is zero.
    """
    if spec is None:
        spec = FrameSpec()
    if pilots is None:
        pilots = PilotMap()
    if constellation is None:
        constellation = QamConstellation.default_4qam()
    if ue_id not in (1, 2):
        raise ValueError(f"ue_id must be 1 or 2, got {ue_id}")

    capacity = frame_capacity_bits(spec, pilots)
    bits = np.asarray(payload_bits, dtype=np.int64)
    if bits.size > capacity:
        raise ValueError(f"payload of {bits.size} bits exceeds capacity {capacity}")
    padded = np.zeros(capacity, dtype=np.int64)
    padded[: bits.size] = bits

    dbins = data_signed_bins(spec, pilots)
    own_pilot_bins = pilots.pilot_signed_bins(ue_id, spec.fft_len)
    n_carriers = len(dbins)

    grid = np.zeros((spec.data_symbols_per_frame, spec.fft_len), dtype=np.complex128)
    blocks = []
    for s in range(spec.data_symbols_per_frame):
        sym_bits = padded[s * n_carriers * 2 : (s + 1) * n_carriers * 2]
        symbols = np.array(
            [
                modulate_4qam((sym_bits[2 * k], sym_bits[2 * k + 1]), constellation)
                for k in range(n_carriers)
            ]
        )
        grid[s, dbins % spec.fft_len] = symbols
        grid[s, own_pilot_bins % spec.fft_len] = PILOT_VALUE
        core = np.fft.ifft(grid[s], norm="ortho")
        blocks.append(
            np.concatenate([core[-spec.cp_len:], core, core[: spec.cp_len]])
        )

    if ue_id == 1:
        head = np.concatenate(
            [pn_sequence(spec), coarse_preamble(spec), fine_preamble(spec), fine_preamble(spec)]
        )
    else:
        head = np.zeros(spec.preamble_span, dtype=np.complex128)
    samples = np.concatenate([head] + blocks)
    assert samples.size == spec.frame_len
    return UeFrame(
        ue_id=ue_id, samples=samples, grid=grid, payload_bits=padded,
        spec=spec, pilots=pilots,
    )


# --- synchronisation ---------------------------------------------------------


def detect_frame(
    rx: np.ndarray,
    pn: Optional[np.ndarray] = None,
    threshold: float = 0.5,
    chunk_len: int = 16,
    spec: Optional[FrameSpec] = None,
) -> Optional[int]:
    """Frame start from chunked, noncoherently combined PN correlation.

    Correlating in 16-sample chunks and summing magnitudes keeps the
    metric usable under carrier offsets up to the design range, where a
    fully coherent 64-sample correlation would collapse. Returns None
    when no normalised peak reaches the threshold.
    """
    if spec is None:
        spec = FrameSpec()
    if pn is None:
        pn = pn_sequence(spec)
    rx = np.asarray(rx)
    n = len(pn)
    if len(rx) < spec.frame_len:
        raise ValueError("receive buffer shorter than one frame")
    n_pos = len(rx) - spec.frame_len + 1
    if n_pos <= 0:
        return None

    num = np.zeros(n_pos)
    for c0 in range(0, n, chunk_len):
        chunk = pn[c0 : c0 + chunk_len]
        corr = np.correlate(rx, chunk, mode="valid")
        num += np.abs(corr[c0 : c0 + n_pos])

    # Peak on the raw correlation sum: normalising first lets windows with
    # little energy (leading silence) spike. The normalised value at the
    # peak still decides acceptance.
    peak = int(np.argmax(num))
    power = np.concatenate([[0.0], np.cumsum(np.abs(rx) ** 2)])
    window_energy = float(power[peak + n] - power[peak])
    denom = np.linalg.norm(pn) * math.sqrt(max(window_energy, 1e-30))
    if num[peak] / denom < threshold:
        return None
    return peak


def estimate_cfo(
    rx: np.ndarray, frame_offset: int, spec: Optional[FrameSpec] = None
) -> float:
    """Carrier offset in Hz from the preamble autocorrelation cascade.

    Coarse stage: lag-16 products over the repeated tile (range
    +-31.25 kHz). Refinements: lag-64 cyclic-prefix products of the two
    known preambles, then lag-80 products between their identical cores;
    each stage is unwrapped onto the previous one, so the final estimate
    keeps the coarse range with the fine stage's variance.
    """
    if spec is None:
        spec = FrameSpec()
    ts = spec.sample_duration
    cp, nfft = spec.cp_len, spec.fft_len

    def _stage(lag: int, segments) -> float:
        acc = 0.0 + 0.0j
        for start, count in segments:
            a = rx[start : start + count]
            b = rx[start + lag : start + lag + count]
            acc += np.vdot(a, b)  # sum conj(a) * b
        return float(np.angle(acc)) / (2.0 * math.pi * lag * ts)

    coarse_start = frame_offset + spec.pn_len
    f = _stage(cp, [(coarse_start, spec.preamble_len - cp)])

    pre2 = frame_offset + spec.pn_len + spec.preamble_len
    pre3 = pre2 + spec.preamble_len
    for lag, segments in (
        (nfft, [(pre2, cp), (pre3, cp)]),
        (spec.preamble_len, [(pre2 + cp, nfft)]),
    ):
        raw = _stage(lag, segments)
        ambiguity = 1.0 / (lag * ts)
        f = raw + round((f - raw) / ambiguity) * ambiguity
    return f


def correct_cfo(rx: np.ndarray, cfo_hz: float, sample_rate: float = 1e6) -> np.ndarray:
    """Remove a carrier offset; phase is referenced to the buffer origin."""
    n = np.arange(len(rx))
    return rx * np.exp(-2j * np.pi * cfo_hz * n / sample_rate)


# --- demodulation and channel estimation -------------------------------------


def demodulate_ofdm(
    rx: np.ndarray, frame_offset: int, spec: Optional[FrameSpec] = None
) -> np.ndarray:
    """Per-symbol FFT grids of the data blocks, (symbols, fft_len)."""
    if spec is None:
        spec = FrameSpec()
    grid = np.empty((spec.data_symbols_per_frame, spec.fft_len), dtype=np.complex128)
    for s in range(spec.data_symbols_per_frame):
        start = frame_offset + spec.data_block_start(s) + spec.cp_len
        if start < 0 or start + spec.fft_len > len(rx):
            raise ValueError("FFT window outside the receive buffer")
        grid[s] = np.fft.fft(rx[start : start + spec.fft_len], norm="ortho")
    return grid


@dataclass
class ChannelEstimate:
    """Pilot-based channel estimates plus the residual-timing phase slope."""

    h1_pilot: np.ndarray      # per UE1 pilot bin, ascending signed order
    h2_pilot: np.ndarray
    pilot_bins1: np.ndarray   # signed bins
    pilot_bins2: np.ndarray
    phi1: float               # per-subcarrier phase increment, radians
    phi2: float
    h1: np.ndarray            # per fft bin, filled on used bins
    h2: np.ndarray

    @property
    def phi(self) -> float:
        return 0.5 * (self.phi1 + self.phi2)


def _pilot_slope(h: np.ndarray, bins: np.ndarray) -> float:
    """Phase increment per subcarrier from equally spaced pilot pairs."""
    gaps = np.diff(bins)
    step = int(np.min(gaps))
    acc = 0.0 + 0.0j
    for k, g in enumerate(gaps):
        if g == step:  # skip the wider gap straddling the DC carrier
            acc += h[k + 1] * np.conj(h[k])
    return float(np.angle(acc)) / step


def estimate_channels_and_sco(
    grid: np.ndarray,
    pilots: Optional[PilotMap] = None,
    spec: Optional[FrameSpec] = None,
    pilot_value: complex = PILOT_VALUE,
    symbol_index: int = 0,
) -> ChannelEstimate:
    """Least-squares pilot estimates and linear-phase extrapolation.

    A residual timing offset shows up as a phase ramp across subcarriers;
    its per-bin increment is estimated from same-spacing pilot pairs and
    used to extend each UE's pilot estimates onto the data carriers
    (nearest-pilot magnitude, linear phase).
    """
    if spec is None:
        spec = FrameSpec()
    if pilots is None:
        pilots = PilotMap()

    sym = grid[symbol_index]
    out = {}
    for ue in (1, 2):
        bins = pilots.pilot_signed_bins(ue, spec.fft_len)
        hp = sym[bins % spec.fft_len] / pilot_value
        if np.max(np.abs(hp)) < 1e-12:
            raise EstimationError(f"all UE{ue} pilots are zero")
        out[ue] = (bins, hp, _pilot_slope(hp, bins))

    dbins = data_signed_bins(spec, pilots)
    h_full = {}
    for ue in (1, 2):
        bins, hp, phi = out[ue]
        h = np.zeros(spec.fft_len, dtype=np.complex128)
        h[bins % spec.fft_len] = hp
        for b in dbins:
            near = int(np.argmin(np.abs(bins - b)))
            ref = hp[near]
            h[b % spec.fft_len] = np.abs(ref) * np.exp(
                1j * (np.angle(ref) + phi * (b - bins[near]))
            )
        h_full[ue] = h

    return ChannelEstimate(
        h1_pilot=out[1][1], h2_pilot=out[2][1],
        pilot_bins1=out[1][0], pilot_bins2=out[2][0],
        phi1=out[1][2], phi2=out[2][2],
        h1=h_full[1], h2=h_full[2],
    )


def equalize_and_ratio(
    h1: np.ndarray,
    h2: np.ndarray,
    slope2: float = 0.0,
    spacing: int = 1,
    min_mag: float = 1e-9,
) -> np.ndarray:
    """Per-pilot-pair channel ratios h2/h1 for the fade-state decision.

    ``h2`` is taken ``spacing`` bins above ``h1`` (interleaved pilots),
    so the second UE's estimate is de-rotated by its own phase slope
    before dividing; a slope common to both UEs then cancels exactly.
    """
    h1 = np.asarray(h1)
    h2 = np.asarray(h2)
    if np.any(np.abs(h1) < min_mag):
        raise DegenerateChannelError("reference-user gain below threshold")
    return h2 * np.exp(-1j * slope2 * spacing) / h1


def ratio_from_estimate(est: ChannelEstimate, min_mag: float = 1e-9) -> np.ndarray:
    """Pilot-pair ratios straight from a ChannelEstimate."""
    spacing = int(est.pilot_bins2[0] - est.pilot_bins1[0])
    return equalize_and_ratio(
        est.h1_pilot, est.h2_pilot, slope2=est.phi2, spacing=spacing, min_mag=min_mag
    )


def write_frame_csv(samples: np.ndarray, path) -> None:
    """Debug dump: one 're,im' line per sample."""
    with open(path, "w") as fh:
        for z in samples:
            fh.write(f"{z.real:.12g},{z.imag:.12g}\n")
