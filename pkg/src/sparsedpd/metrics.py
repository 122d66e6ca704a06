"""Signal-quality measures: NMSE, ACPR, EVM, and the Welch PSD they sit on.

All three metrics are invariant to a global complex scale of the measured
signal: NMSE and EVM apply a least-squares complex gain before the ratio,
ACPR is a power ratio by construction.  dB outputs are floored at -200 to
stay finite and serializable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import signal as sig

from .pa import SignalBuffer, SignalSpec, matched_filter_symbols

DB_FLOOR = -200.0


def _samples(x) -> np.ndarray:
    return x.samples if isinstance(x, SignalBuffer) else np.asarray(x)


def _db(ratio: float) -> float:
    if ratio <= 10 ** (DB_FLOOR / 10):
        return DB_FLOOR
    return float(10 * np.log10(ratio))


@dataclass(frozen=True)
class PsdEstimate:
    freqs: np.ndarray  # Hz, ascending (fftshifted)
    density: np.ndarray  # power per Hz
    segment_len: int
    overlap: int
    window: str

    @property
    def bin_width(self) -> float:
        return float(self.freqs[1] - self.freqs[0])

    def band_power(self, f_lo: float, f_hi: float) -> float:
        m = (self.freqs >= f_lo) & (self.freqs < f_hi)
        return float(np.sum(self.density[m]) * self.bin_width)

    def export_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("frequency_hz,psd_db\n")
            db = 10 * np.log10(np.maximum(self.density, 1e-30))
            for f, d in zip(self.freqs, db):
                fh.write(f"{f:.6f},{d:.6f}\n")


def psd_welch(x, sample_rate: float | None = None, segment_len: int = 4096,
              overlap: int | None = None, window: str = "hann") -> PsdEstimate:
    """Averaged modified periodogram of a complex baseband signal."""
    xs = _samples(x)
    fs = sample_rate if sample_rate is not None else x.sample_rate
    if segment_len > len(xs):
        raise ValueError("segment_len exceeds signal length")
    if overlap is None:
        overlap = segment_len // 2
    f, p = sig.welch(xs, fs=fs, window=window, nperseg=segment_len,
                     noverlap=overlap, return_onesided=False,
                     detrend=False, scaling="density")
    order = np.argsort(f)
    return PsdEstimate(f[order], p[order], segment_len, overlap, window)


def nmse(y, ref, return_gain: bool = False):
    """10*log10(sum|g*y - ref|^2 / sum|ref|^2) with the least-squares complex g."""
    ys, rs = _samples(y), _samples(ref)
    if len(ys) != len(rs):
        raise ValueError("length mismatch")
    ref_power = np.sum(np.abs(rs) ** 2)
    if ref_power == 0:
        raise ValueError("reference has zero power")
    yp = np.sum(np.abs(ys) ** 2)
    gain = np.vdot(ys, rs) / yp if yp > 0 else 1.0 + 0j
    err = gain * ys - rs
    val = _db(np.sum(np.abs(err) ** 2) / ref_power)
    return (val, complex(gain)) if return_gain else val


def acpr(x, bandwidth: float, channel_offset: float | None = None,
         sample_rate: float | None = None, segment_len: int = 4096) -> Tuple[float, float]:
    """(lower, upper) adjacent-channel power in dB relative to the main channel.

    Main channel: [-bw/2, bw/2]; adjacent: the same width offset by
    ``channel_offset`` (defaults to one bandwidth) on each side.
    """
    fs = sample_rate if sample_rate is not None else x.sample_rate
    if channel_offset is None:
        channel_offset = bandwidth
    if channel_offset + bandwidth / 2 > fs / 2:
        raise ValueError("adjacent channel exceeds Nyquist range")
    est = psd_welch(x, sample_rate=fs, segment_len=segment_len)
    main = est.band_power(-bandwidth / 2, bandwidth / 2)
    lower = est.band_power(-channel_offset - bandwidth / 2, -channel_offset + bandwidth / 2)
    upper = est.band_power(channel_offset - bandwidth / 2, channel_offset + bandwidth / 2)
    return _db(lower / main), _db(upper / main)


def evm(y, ref_symbols: np.ndarray, spec: SignalSpec, return_gain: bool = False):
    """Symbol-domain rms error in dB after matched filtering and gain alignment.

    ``y`` must be time-aligned with the buffer produced by
    ``gen_baseband`` under the same ``spec``.
    """
    ys = _samples(y)
    rx = matched_filter_symbols(ys, spec)
    ref = np.asarray(ref_symbols)[: len(rx)]
    if len(rx) != len(ref) or len(ref) == 0:
        raise ValueError("symbol count mismatch between signal and reference")
    gain = np.vdot(rx, ref) / np.sum(np.abs(rx) ** 2)
    err = gain * rx - ref
    val = _db(np.sum(np.abs(err) ** 2) / np.sum(np.abs(ref) ** 2))
    return (val, complex(gain)) if return_gain else val


def export_constellation_csv(symbols: np.ndarray, path) -> None:
    with open(path, "w") as fh:
        fh.write("i,q\n")
        for s in np.asarray(symbols):
            fh.write(f"{s.real:.9f},{s.imag:.9f}\n")
