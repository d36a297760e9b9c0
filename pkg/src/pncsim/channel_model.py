"""Per-link fading and impairment model for the access links.

Each access link applies a flat complex gain, an optional carrier
frequency offset, an optional (possibly fractional) sample delay, and
calibrated AWGN. Eb/N0 is defined per UE at the AP input with unit
symbol energy and 2 bits per 4-QAM symbol, so Eb = 1/2 and the noise
variance per complex dimension is N0/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

CP_LEN = 16


@dataclass(frozen=True)
class LinkChannel:
    """Flat-fading coefficient plus synchronisation impairments."""

    h: complex
    delay: float = 0.0   # signed sub-sample units
    cfo: float = 0.0     # Hz

    def __post_init__(self):
        if not np.isfinite(self.h):
            raise ValueError("channel gain must be finite")
        if abs(self.delay) >= CP_LEN:
            raise ValueError(f"|delay| must stay below the CP length {CP_LEN}")


@dataclass(frozen=True)
class NoiseSpec:
    """AWGN level for a target information-bit SNR."""

    ebno_db: float
    bits_per_symbol: int = 2
    symbol_energy: float = 1.0

    @property
    def eb(self) -> float:
        return self.symbol_energy / self.bits_per_symbol

    @property
    def n0(self) -> float:
        return self.eb / (10.0 ** (self.ebno_db / 10.0))

    @property
    def sigma_per_dim(self) -> float:
        return math.sqrt(self.n0 / 2.0)

    @property
    def es_n0_db(self) -> float:
        return self.ebno_db + 10.0 * math.log10(self.bits_per_symbol)


def sample_fading(
    rng: np.random.Generator,
    model: str = "rayleigh_block",
    h_fixed: complex = 1.0 + 0.0j,
) -> LinkChannel:
    """Draw one link's flat gain for a packet.

    ``rayleigh_block`` draws a circularly symmetric complex Gaussian with
    unit mean-square magnitude, independently per call; ``fixed`` returns
    the configured gain.
    """
    if model == "fixed":
        return LinkChannel(h=complex(h_fixed))
    if model == "rayleigh_block":
        re, im = rng.standard_normal(2)
        return LinkChannel(h=complex(re, im) / math.sqrt(2.0))
    raise ValueError(f"unknown fading model {model!r}")


def bandlimited_shift(x: np.ndarray, delay: float) -> np.ndarray:
    """Ideal band-limited delay via an FFT phase ramp (circular).

    Callers must leave guard zeros around the signal of interest; the
    frame buffers produced by apply_access_link do.
    """
    if delay == 0.0:
        return np.asarray(x, dtype=np.complex128)
    n = len(x)
    spectrum = np.fft.fft(x)
    freqs = np.fft.fftfreq(n)
    return np.fft.ifft(spectrum * np.exp(-2j * np.pi * freqs * delay))


def _place_link(
    frame: np.ndarray,
    ch: LinkChannel,
    buf_len: int,
    pos: int,
    sample_rate: float,
) -> np.ndarray:
    buf = np.zeros(buf_len, dtype=np.complex128)
    d_int = int(math.floor(ch.delay))
    d_frac = ch.delay - d_int
    start = pos + d_int
    if start < 0 or start + len(frame) > buf_len:
        raise ValueError("delayed frame does not fit in the buffer")
    buf[start : start + len(frame)] = frame
    if d_frac != 0.0:
        buf = bandlimited_shift(buf, d_frac)
    if ch.cfo != 0.0:
        n = np.arange(buf_len)
        buf = buf * np.exp(2j * np.pi * ch.cfo * n / sample_rate)
    return ch.h * buf


def apply_access_link(
    f1: np.ndarray,
    f2: np.ndarray,
    ch1: LinkChannel,
    ch2: LinkChannel,
    noise: Optional[NoiseSpec],
    rng: Optional[np.random.Generator] = None,
    pad_before: int = 0,
    pad_after: int = 0,
    sample_rate: float = 1e6,
) -> np.ndarray:
    """Superimpose both UE frames through their links and add AWGN.

    Frames are nominally time-aligned at ``pad_before``; each link's
    delay shifts its own contribution. The inter-user delay must stay
    within the CP budget (enforced by LinkChannel).
    """
    f1 = np.asarray(f1, dtype=np.complex128)
    f2 = np.asarray(f2, dtype=np.complex128)
    if abs(ch1.delay - ch2.delay) >= CP_LEN:
        raise ValueError("inter-user delay exceeds the CP tolerance")
    buf_len = pad_before + max(len(f1), len(f2)) + pad_after + CP_LEN
    y = _place_link(f1, ch1, buf_len, pad_before, sample_rate)
    y += _place_link(f2, ch2, buf_len, pad_before, sample_rate)
    if noise is not None and noise.n0 > 0.0:
        if rng is None:
            raise ValueError("an rng is required when noise is enabled")
        z = rng.standard_normal((2, buf_len))
        y += noise.sigma_per_dim * (z[0] + 1j * z[1])
    return y


def measured_snr(clean: np.ndarray, noisy: np.ndarray) -> float:
    """10*log10(signal energy / residual energy); +inf for identical inputs."""
    clean = np.asarray(clean)
    noisy = np.asarray(noisy)
    if clean.shape != noisy.shape:
        raise ValueError("length mismatch")
    sig = float(np.sum(np.abs(clean) ** 2))
    if sig == 0.0:
        raise ValueError("zero reference signal: SNR undefined")
    err = float(np.sum(np.abs(noisy - clean) ** 2))
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(sig / err)
