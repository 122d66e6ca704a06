"""Bit-exact model of the hardware inverse-square-root unit.

Pipeline: even-shift range reduction of the squared magnitude, a seed
lookup table holding the pair (1.5*x0, 0.5*x0**3), a folded first
Newton-Raphson step x1 = s1 - s3*u, then literal steps
x' = 0.5*x*(3 - u*x*x), all in integer arithmetic.

The reduced input u = z_norm * 2**-window_bits lies in [0.25, 1), so the
working estimate stays in (1, 2] and every multiply fits a 25x18 DSP.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Tuple

import numpy as np

from .fxp import FxpFormat, FxpValue, saturate_raw


@dataclass(frozen=True)
class InvSqrtConfig:
    """Geometry of the unit.

    window_bits: width of the reduced input fed to the seed/NR datapath
        (must be even so the even input shift maps to an integer output
        shift).
    lut_addr_bits: input MSBs addressing the seed table.
    seed_frac_bits: fraction bits of the stored seeds and of the working
        estimate.
    iter_count: Newton-Raphson iterations (the first is folded into the
        seed pair).
    input_bits: width of the unsigned squared magnitude (28 for 14-bit
        I/Q).
    input_frac_bits: fraction bits of the squared magnitude (26 for Q1.13
        inputs, i.e. z = I**2 + Q**2 in Q2.26).
    """

    window_bits: int = 14
    lut_addr_bits: int = 8
    seed_frac_bits: int = 16
    iter_count: int = 2
    input_bits: int = 28
    input_frac_bits: int = 26

    def __post_init__(self):
        if self.window_bits % 2 != 0:
            raise ValueError("window_bits must be even (shifts come in powers of four)")
        if self.lut_addr_bits > self.window_bits:
            raise ValueError("lut_addr_bits cannot exceed window_bits")
        if self.iter_count < 0:
            raise ValueError("iter_count must be non-negative")
        if self.input_frac_bits % 2 != 0:
            raise ValueError("input_frac_bits must be even")

    @property
    def max_input(self) -> int:
        return (1 << self.input_bits) - 1

    def shift_for(self, msb: int) -> int:
        """Even shift putting an input MSB at window position m-1 or m-2."""
        s = msb - (self.window_bits - 1)
        return s if s % 2 == 0 else s + 1

    @property
    def min_shift(self) -> int:
        return self.shift_for(0)

    @property
    def max_shift(self) -> int:
        return self.shift_for(self.input_bits - 1)

    def result_exp(self, s: int) -> int:
        """Power-of-two compensation: 1/sqrt(z) = x * 2**result_exp(s)."""
        return (self.input_frac_bits - self.window_bits) // 2 - s // 2

    @property
    def out_format(self) -> FxpFormat:
        """Lossless container for x * 2**e over all reachable exponents."""
        e_min = self.result_exp(self.max_shift)
        e_max = self.result_exp(self.min_shift)
        frac = self.seed_frac_bits - e_min
        # x <= 2, so value <= 2**(e_max + 1); one extra bit for the sign
        return FxpFormat(e_max + 2, frac)


@dataclass(frozen=True)
class SeedTable:
    """Seed ROM: per address the pair (1.5*x0, 0.5*x0**3) as raw integers."""

    cfg: InvSqrtConfig
    s1: tuple
    s3: tuple

    @classmethod
    def build(cls, cfg: InvSqrtConfig) -> "SeedTable":
        m, lbits, f = cfg.window_bits, cfg.lut_addr_bits, cfg.seed_frac_bits
        s1, s3 = [], []
        for addr in range(1 << lbits):
            # cell covers u in [addr, addr+1) * 2**-lbits; seed from midpoint
            u_mid = (addr + 0.5) * 2.0**-lbits
            x0 = 1.0 / math.sqrt(u_mid)
            s1.append(round(1.5 * x0 * (1 << f)))
            s3.append(round(0.5 * x0**3 * (1 << f)))
        return cls(cfg, tuple(s1), tuple(s3))

    def lookup(self, z_norm: int) -> Tuple[int, int]:
        addr = z_norm >> (self.cfg.window_bits - self.cfg.lut_addr_bits)
        return self.s1[addr], self.s3[addr]

    def export_hex(self, path) -> None:
        """Write one 'S1 S3' hex pair per line, as ROM init data."""
        with open(path, "w") as fh:
            digits1 = (max(self.s1).bit_length() + 3) // 4
            digits3 = (max(self.s3).bit_length() + 3) // 4
            for a, b in zip(self.s1, self.s3):
                fh.write(f"{a:0{digits1}x} {b:0{digits3}x}\n")


class InvSqrtUnit:
    """Stateless evaluator bundling a config with its seed table."""

    def __init__(self, cfg: InvSqrtConfig | None = None):
        self.cfg = cfg or InvSqrtConfig()
        self.table = SeedTable.build(self.cfg)
        self._s1_arr = np.asarray(self.table.s1, dtype=np.int64)
        self._s3_arr = np.asarray(self.table.s3, dtype=np.int64)

    # -- scalar bit-exact path -------------------------------------------

    def normalize_shift(self, z: int) -> Tuple[int, int]:
        """Reduce z by an even shift so its MSB lands in the window."""
        if z <= 0:
            raise ValueError("inverse sqrt input must be positive")
        cfg = self.cfg
        s = cfg.shift_for(z.bit_length() - 1)
        z_norm = z >> s if s > 0 else z << -s
        return z_norm, s

    def _estimate_raw(self, z_norm: int) -> int:
        """Working estimate of 1/sqrt(u), u = z_norm * 2**-m, at seed_frac_bits."""
        cfg = self.cfg
        m, f = cfg.window_bits, cfg.seed_frac_bits
        s1, s3 = self.table.lookup(z_norm)
        if cfg.iter_count == 0:
            return (2 * s1) // 3
        x = s1 - ((s3 * z_norm) >> m)
        for _ in range(cfg.iter_count - 1):
            t = (x * x) >> f
            w = (t * z_norm) >> m
            x = (x * ((3 << f) - w)) >> (f + 1)
        return x

    def nr_iterate(self, x: FxpValue, z_norm: FxpValue) -> FxpValue:
        """One literal refinement x' = 0.5*x*(3 - u*x*x) in datapath formats."""
        cfg = self.cfg
        f = cfg.seed_frac_bits
        if x.fmt.frac_bits != f or z_norm.fmt.frac_bits != cfg.window_bits:
            raise ValueError("operand formats must match the unit's working formats")
        t = (x.raw * x.raw) >> f
        w = (t * z_norm.raw) >> cfg.window_bits
        raw = (x.raw * ((3 << f) - w)) >> (f + 1)
        raw, _ = saturate_raw(raw, x.fmt)
        return FxpValue(raw, x.fmt)

    def inv_sqrt_parts(self, z: int) -> Tuple[int, int, int, int]:
        """Full decomposition (x_raw, result_exp, z_norm, shift) for the datapath."""
        z_norm, s = self.normalize_shift(z)
        x = self._estimate_raw(z_norm)
        return x, self.cfg.result_exp(s), z_norm, s

    def inv_sqrt(self, z: int) -> FxpValue:
        """1/sqrt(z * 2**-input_frac_bits) as a single fixed-point value."""
        cfg = self.cfg
        x, e, _, _ = self.inv_sqrt_parts(z)
        fmt = cfg.out_format
        e_min = cfg.result_exp(cfg.max_shift)
        return FxpValue(x << (e - e_min), fmt)

    # -- vectorized sweep path -------------------------------------------

    def inv_sqrt_batch(self, z: np.ndarray) -> np.ndarray:
        """Approximate values for an int64 array of inputs (same bits as scalar)."""
        cfg = self.cfg
        m, f, lbits = cfg.window_bits, cfg.seed_frac_bits, cfg.lut_addr_bits
        z = np.asarray(z, dtype=np.int64)
        # exact MSB position for z < 2**53
        p = np.frexp(z.astype(np.float64))[1].astype(np.int64) - 1
        s = p - (m - 1)
        s += s & 1
        zn = np.where(s > 0, z >> np.maximum(s, 0), z << np.maximum(-s, 0))
        addr = zn >> (m - lbits)
        s1 = self._s1_arr[addr]
        s3 = self._s3_arr[addr]
        if cfg.iter_count == 0:
            x = (2 * s1) // 3
        else:
            x = s1 - ((s3 * zn) >> m)
            for _ in range(cfg.iter_count - 1):
                t = (x * x) >> f
                w = (t * zn) >> m
                x = (x * ((3 << f) - w)) >> (f + 1)
        e = (cfg.input_frac_bits - m) // 2 - s // 2
        return x.astype(np.float64) * np.exp2((e - f).astype(np.float64))

    def certify_error(self, chunk: int = 1 << 22) -> Tuple[float, int]:
        """Exhaustive sweep of all admissible inputs against the real oracle.

        Returns the worst relative error and the input achieving it.
        """
        cfg = self.cfg
        z_max = cfg.max_input
        eps_max = -1.0
        worst = 0
        scale = 2.0 ** (-cfg.input_frac_bits)
        for start in range(1, z_max + 1, chunk):
            z = np.arange(start, min(start + chunk, z_max + 1), dtype=np.int64)
            approx = self.inv_sqrt_batch(z)
            true = 1.0 / np.sqrt(z.astype(np.float64) * scale)
            rel = np.abs(approx - true) / true
            i = int(np.argmax(rel))
            if rel[i] > eps_max:
                eps_max = float(rel[i])
                worst = int(z[i])
        return eps_max, worst

    # -- amplitude feature datapath --------------------------------------

    def amplitude_features(self, i_raw: int, q_raw: int) -> Tuple[int, int, int, int]:
        """Fixed-point (x_raw, result_exp, A_raw, A3_raw) from Q1.13 I/Q.

        A = z * invsqrt(z) and A**3 = z * A, both truncated into Q1.13 and
        clamped to [0, 1 - 2**-13].  Zero input yields all zeros.
        """
        cfg = self.cfg
        z = i_raw * i_raw + q_raw * q_raw
        if z == 0:
            return 0, 0, 0, 0
        x, e, zn, s = self.inv_sqrt_parts(z)
        f, zf = cfg.seed_frac_bits, cfg.input_frac_bits
        act_f = 13
        # A = z_norm * 2**(s - zf) * x * 2**(e - f), expressed in Q1.13
        a = (zn * x) >> (zf + f - act_f - s - e)
        a = min(a, (1 << act_f) - 1)
        # A**3 = z * A with z ~ z_norm * 2**s
        a3 = (zn * a) >> (zf - s)
        a3 = min(a3, (1 << act_f) - 1)
        return x, e, a, a3
