"""Synthetic 64-QAM baseband generation and a memory-polynomial power
amplifier stand-in, plus least-squares fitting of such a model from
measured I/Q pairs.

The transmit chain is root-raised-cosine shaped with a rational
samples-per-symbol ratio (defaults give 170 MSps over a 20 MHz channel),
implemented with a single polyphase ``upfirdn`` so symbol timing stays on
a known rational grid for EVM measurement.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Tuple

import numpy as np
from scipy.signal import upfirdn

PEAK_LIMIT = 1.0 - 2.0**-13  # Q1.13 headroom


@dataclass(frozen=True)
class SignalSpec:
    sample_rate: float = 170e6
    bandwidth: float = 20e6
    rolloff: float = 0.22
    n_symbols: int = 16384
    seed: int = 1
    span_symbols: int = 48  # RRC filter span, may be widened to keep delays integral

    def __post_init__(self):
        if self.sample_rate <= self.bandwidth:
            raise ValueError("sample_rate must exceed bandwidth")
        if not 0 < self.rolloff < 1:
            raise ValueError("rolloff must be in (0, 1)")

    @property
    def sps(self) -> Fraction:
        """Samples per symbol; symbol rate = bandwidth / (1 + rolloff)."""
        target = self.sample_rate * (1 + self.rolloff) / self.bandwidth
        return Fraction(target).limit_denominator(12)

    @property
    def symbol_rate(self) -> float:
        return self.sample_rate / float(self.sps)

    @property
    def span(self) -> int:
        """Filter span in symbols, rounded up so group delays land on samples."""
        d = 2 * self.sps.denominator
        return ((self.span_symbols + d - 1) // d) * d


@dataclass
class SignalBuffer:
    samples: np.ndarray
    sample_rate: float

    def __len__(self) -> int:
        return len(self.samples)


def rrc_taps(sps: int, span: int, rolloff: float) -> np.ndarray:
    """Unit-energy root-raised-cosine impulse response at integer ``sps``."""
    n = span * sps
    t = (np.arange(n + 1) - n / 2) / sps
    b = rolloff
    h = np.empty_like(t)
    for i, ti in enumerate(t):
        if abs(ti) < 1e-12:
            h[i] = 1.0 - b + 4 * b / np.pi
        elif b > 0 and abs(abs(4 * b * ti) - 1.0) < 1e-9:
            h[i] = (b / np.sqrt(2)) * ((1 + 2 / np.pi) * np.sin(np.pi / (4 * b))
                                       + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b)))
        else:
            num = np.sin(np.pi * ti * (1 - b)) + 4 * b * ti * np.cos(np.pi * ti * (1 + b))
            den = np.pi * ti * (1 - (4 * b * ti) ** 2)
            h[i] = num / den
    return h / np.sqrt(np.sum(h**2))


def qam64_symbols(count: int, rng: np.random.Generator) -> np.ndarray:
    """Random unit-average-power 64-QAM symbols on the uniform 8x8 grid."""
    levels = np.arange(-7, 8, 2)
    i = rng.choice(levels, size=count)
    q = rng.choice(levels, size=count)
    return (i + 1j * q) / np.sqrt(42.0)


def _shape(symbols: np.ndarray, spec: SignalSpec) -> Tuple[np.ndarray, int]:
    """RRC-shape symbols to the output rate; returns samples and the index
    of the first symbol instant (group delay) in output samples."""
    up = spec.sps.numerator
    down = spec.sps.denominator
    h = rrc_taps(up, spec.span, spec.rolloff)
    y = upfirdn(h, symbols, up=up, down=down)
    delay_up = (len(h) - 1) // 2  # always integral: span * up is even
    assert delay_up % down == 0
    return y, delay_up // down


def gen_baseband_with_symbols(spec: SignalSpec) -> Tuple[SignalBuffer, np.ndarray, int]:
    """Generate the shaped signal plus its symbols and first-symbol index.

    The buffer is normalized so the complex magnitude peaks at 1 - 2**-13:
    both I/Q components and the amplitude feature then stay representable
    in Q1.13 (component-wise peak scaling would let |x| reach sqrt(2) and
    saturate the amplitude datapath at every envelope peak).
    """
    rng = np.random.default_rng(spec.seed)
    symbols = qam64_symbols(spec.n_symbols, rng)
    samples, delay = _shape(symbols, spec)
    peak = np.abs(samples).max()
    scale = PEAK_LIMIT / peak
    return SignalBuffer(samples * scale, spec.sample_rate), symbols, delay


def gen_baseband(spec: SignalSpec) -> SignalBuffer:
    return gen_baseband_with_symbols(spec)[0]


def matched_filter_symbols(y: np.ndarray, spec: SignalSpec) -> np.ndarray:
    """Recover symbol-rate samples of ``y`` via the matched RRC filter.

    ``y`` must be time-aligned with the generated buffer.  The signal is
    polyphase-upsampled back to the shaping grid so every symbol instant
    is an integer index.
    """
    up = spec.sps.numerator
    down = spec.sps.denominator
    h = rrc_taps(up, spec.span, spec.rolloff)
    z = upfirdn(h, np.asarray(y), up=down, down=1) * down
    # generation delay (at the up-rate) plus matched-filter delay
    first = 2 * ((len(h) - 1) // 2)
    idx = first + np.arange(spec.n_symbols) * up
    idx = idx[idx < len(z)]
    return z[idx]


# ---------------------------------------------------------------------------
# memory-polynomial PA
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PaCoeffs:
    """Coefficients a[k][m] over odd orders k and memory taps m."""

    coeffs: np.ndarray  # shape (n_orders, memory_taps + 1), complex
    orders: Tuple[int, ...] = (1, 3, 5, 7)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.shape[0] != len(self.orders):
            raise ValueError("coefficient rows must match the order list")
        if c[0, 0] == 0:
            raise ValueError("linear gain a[1][0] must be nonzero")
        object.__setattr__(self, "coeffs", c)

    @property
    def memory(self) -> int:
        return self.coeffs.shape[1] - 1

    @property
    def linear_gain(self) -> complex:
        return complex(self.coeffs[0, 0])


def pa_forward(x: SignalBuffer | np.ndarray, pa: PaCoeffs) -> SignalBuffer | np.ndarray:
    """Memory-polynomial response y_t = sum_k sum_m a[k][m] x_{t-m} |x_{t-m}|^{k-1}."""
    buf = isinstance(x, SignalBuffer)
    xs = x.samples if buf else np.asarray(x, dtype=np.complex128)
    y = np.zeros_like(xs)
    absx = np.abs(xs)
    for ki, k in enumerate(pa.orders):
        term = xs * absx ** (k - 1)
        for m in range(pa.memory + 1):
            shifted = np.zeros_like(term)
            shifted[m:] = term[: len(term) - m] if m else term
            y += pa.coeffs[ki, m] * shifted
    return SignalBuffer(y, x.sample_rate) if buf else y


def default_pa() -> PaCoeffs:
    """Built-in mildly compressive PA with short memory.

    Calibrated so the generated 64-QAM test signal measures ACPR in
    [-35, -28] dBc and NMSE vs the linearly scaled input in [-25, -15] dB.
    """
    # Distortion concentrates in invertible, mostly memoryless nonlinearity
    # (strong AM/PM) with ~10% nonlinear memory taps; the linear response is
    # nearly flat so a short feedforward predistorter can linearize it.
    c = np.zeros((4, 4), dtype=np.complex128)
    c[0] = [1.0, 0.003 - 0.002j, -0.0015 + 0.001j, 0.0005 - 0.0005j]
    c[1] = [-0.13 - 0.4875j, 0.014 - 0.0094j, -0.0056 + 0.00375j, 0.0019 - 0.0014j]
    c[2] = [-0.01625 + 0.040625j, 0.0044 - 0.0034j, 0.0016 - 0.0009j, 0.0]
    c[3] = [0.006125 - 0.01625j, 0.0016 + 0.00125j, 0.0, 0.0]
    return PaCoeffs(c)


def fit_pa(x: SignalBuffer | np.ndarray, y: SignalBuffer | np.ndarray,
           orders: Tuple[int, ...] = (1, 3, 5, 7), memory: int = 3,
           cond_limit: float = 1e10) -> Tuple[PaCoeffs, float]:
    """Least-squares memory-polynomial fit; returns coefficients and residual NMSE (dB)."""
    xs = x.samples if isinstance(x, SignalBuffer) else np.asarray(x, dtype=np.complex128)
    ys = y.samples if isinstance(y, SignalBuffer) else np.asarray(y, dtype=np.complex128)
    if len(xs) != len(ys):
        raise ValueError("input and output lengths differ")
    n_coef = len(orders) * (memory + 1)
    if len(xs) < 10 * n_coef:
        raise ValueError("not enough samples for a stable fit")
    absx = np.abs(xs)
    cols = []
    for k in orders:
        term = xs * absx ** (k - 1)
        for m in range(memory + 1):
            shifted = np.zeros_like(term)
            shifted[m:] = term[: len(term) - m] if m else term
            cols.append(shifted)
    basis = np.stack(cols, axis=1)[memory:]
    target = ys[memory:]
    cond = np.linalg.cond(basis)
    if cond > cond_limit:
        raise np.linalg.LinAlgError(
            f"memory-polynomial basis is rank deficient (condition number {cond:.3e})")
    sol, *_ = np.linalg.lstsq(basis, target, rcond=None)
    resid = basis @ sol - target
    nmse = 10 * np.log10(max(np.sum(np.abs(resid) ** 2) / np.sum(np.abs(target) ** 2), 1e-20))
    coeffs = sol.reshape(len(orders), memory + 1)
    return PaCoeffs(coeffs, tuple(orders)), float(nmse)
