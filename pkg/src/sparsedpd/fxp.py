"""Two's-complement fixed-point arithmetic with explicit Q formats.

All raw payloads are plain Python integers, so intermediate products and
sums are exact at any width.  Saturation happens only where an operation
says it does; overflow never wraps silently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

ROUND_NEAREST_EVEN = "round-nearest-even"
TRUNCATE = "truncate"

_MODES = (ROUND_NEAREST_EVEN, TRUNCATE)


class MultiplierWidthError(ValueError):
    """Operand widths exceed the configured hardware multiplier model."""


@dataclass(frozen=True)
class FxpFormat:
    """Signed Qm.f format: ``int_bits`` integer bits (incl. sign), ``frac_bits`` fraction bits."""

    int_bits: int
    frac_bits: int

    def __post_init__(self):
        if self.int_bits < 1 or self.frac_bits < 0:
            raise ValueError(f"invalid format Q{self.int_bits}.{self.frac_bits}")
        if self.int_bits + self.frac_bits < 2:
            raise ValueError("total width must be at least 2 bits")

    @property
    def width(self) -> int:
        return self.int_bits + self.frac_bits

    @property
    def raw_min(self) -> int:
        return -(1 << (self.width - 1))

    @property
    def raw_max(self) -> int:
        return (1 << (self.width - 1)) - 1

    @property
    def min_value(self) -> float:
        return self.raw_min * 2.0 ** (-self.frac_bits)

    @property
    def max_value(self) -> float:
        return self.raw_max * 2.0 ** (-self.frac_bits)

    @property
    def ulp(self) -> float:
        return 2.0 ** (-self.frac_bits)

    def __str__(self) -> str:
        return f"Q{self.int_bits}.{self.frac_bits}"


# Datapath formats: 14-bit activations/weights, 15-bit accumulator
# check format, 29-bit denormalized output.
Q1_13 = FxpFormat(1, 13)
Q2_13 = FxpFormat(2, 13)
Q2_26 = FxpFormat(2, 26)
Q2_27 = FxpFormat(2, 27)


@dataclass(frozen=True)
class FxpValue:
    """One fixed-point sample: integer payload plus its format."""

    raw: int
    fmt: FxpFormat

    def __post_init__(self):
        if not (self.fmt.raw_min <= self.raw <= self.fmt.raw_max):
            raise ValueError(f"raw {self.raw} does not fit {self.fmt}")

    @property
    def value(self) -> float:
        return self.raw * 2.0 ** (-self.fmt.frac_bits)

    def __str__(self) -> str:
        return f"{self.value!r}[{self.fmt}]"


def _shift_right(raw: int, shift: int, mode: str) -> int:
    """Exact scaling of ``raw`` by 2**-shift under the given rounding mode.

    ``shift <= 0`` is an exact left shift.  Truncation is an arithmetic
    right shift (rounds toward -inf), matching hardware bit dropping.
    """
    if shift <= 0:
        return raw << (-shift)
    if mode == TRUNCATE:
        return raw >> shift
    if mode == ROUND_NEAREST_EVEN:
        q, r = divmod(raw, 1 << shift)
        half = 1 << (shift - 1)
        if r > half or (r == half and (q & 1)):
            q += 1
        return q
    raise ValueError(f"unknown rounding mode {mode!r}")


def saturate_raw(raw: int, fmt: FxpFormat) -> Tuple[int, bool]:
    """Clip a raw payload into ``fmt``'s range; second element flags clipping."""
    if raw > fmt.raw_max:
        return fmt.raw_max, True
    if raw < fmt.raw_min:
        return fmt.raw_min, True
    return raw, False


def quantize(x: float, fmt: FxpFormat, mode: str = ROUND_NEAREST_EVEN) -> Tuple[FxpValue, bool]:
    """Quantize a real number into ``fmt``, saturating at the range edges.

    Returns the value and a flag telling whether saturation occurred.
    """
    if mode not in _MODES:
        raise ValueError(f"unknown rounding mode {mode!r}")
    scaled = x * (1 << fmt.frac_bits)
    if mode == TRUNCATE:
        raw = math.floor(scaled)
    else:
        # round-half-even, matching Python's banker's rounding on floats
        raw = round(scaled)
    raw, saturated = saturate_raw(raw, fmt)
    return FxpValue(raw, fmt), saturated


def requantize(v: FxpValue, fmt: FxpFormat, mode: str = TRUNCATE) -> Tuple[FxpValue, bool]:
    """Re-express ``v`` in another format, rounding and saturating as needed."""
    raw = _shift_right(v.raw, v.fmt.frac_bits - fmt.frac_bits, mode)
    raw, saturated = saturate_raw(raw, fmt)
    return FxpValue(raw, fmt), saturated


def fxp_mul(
    a: FxpValue,
    b: FxpValue,
    out_fmt: FxpFormat,
    mode: str = TRUNCATE,
    mult_widths: Tuple[int, int] = (25, 18),
) -> FxpValue:
    """Multiply two fixed-point values through a width-checked multiplier.

    The product is exact, then rescaled into ``out_fmt`` with saturation.
    Operand widths must fit the multiplier model (default 25x18, one DSP
    slice); either operand may take either port.
    """
    wa, wb = a.fmt.width, b.fmt.width
    hi, lo = max(mult_widths), min(mult_widths)
    if not (max(wa, wb) <= hi and min(wa, wb) <= lo):
        raise MultiplierWidthError(
            f"{wa}x{wb}-bit multiply does not fit a {mult_widths[0]}x{mult_widths[1]} multiplier"
        )
    prod = a.raw * b.raw
    shift = a.fmt.frac_bits + b.fmt.frac_bits - out_fmt.frac_bits
    raw = _shift_right(prod, shift, mode)
    raw, _ = saturate_raw(raw, out_fmt)
    return FxpValue(raw, out_fmt)


def csa_accumulate(
    terms: Sequence[FxpValue] | Iterable[FxpValue],
    out_fmt: FxpFormat,
    mode: str = TRUNCATE,
) -> Tuple[FxpValue, bool]:
    """Sum many terms exactly, then saturate once into ``out_fmt``.

    Models a carry-save adder tree: intermediate carries never wrap, only
    the final result is range-checked.  The overflow flag reports whether
    the exact sum fell outside ``out_fmt``'s representable range.
    """
    terms = list(terms)
    if not terms:
        return FxpValue(0, out_fmt), False
    frac = max(t.fmt.frac_bits for t in terms)
    total = sum(t.raw << (frac - t.fmt.frac_bits) for t in terms)
    raw = _shift_right(total, frac - out_fmt.frac_bits, mode)
    raw, overflow = saturate_raw(raw, out_fmt)
    return FxpValue(raw, out_fmt), overflow


def clamp_to_unit(a: FxpValue, mode: str = TRUNCATE) -> FxpValue:
    """Saturate into [-1, 1 - 2**-13] and re-express as Q1.13."""
    raw = _shift_right(a.raw, a.fmt.frac_bits - Q1_13.frac_bits, mode)
    raw, _ = saturate_raw(raw, Q1_13)
    return FxpValue(raw, Q1_13)
