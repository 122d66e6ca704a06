"""Bit-exact fixed-point twin of the reference path.

Everything here is integer arithmetic on Python ints: Q1.13 activations and
weights, exact full-precision products accumulated once per neuron, a
single truncation of each sum into Q2.13, unit clamping back to Q1.13, and
a Q2.27 phase-denormalized output.  Truncation is an arithmetic right
shift (floor), matching dropped hardware bits.

A compiled twin of :class:`FixedPointDatapath.run` lives in
``sparsedpd._datapath``; ``sparsedpd.kernel`` picks whichever is available.
"""

from __future__ import annotations

from typing import List, Tuple

import numpy as np

from .invsqrt import InvSqrtUnit
from .model import ModelConfig, ModelParams

ACT_F = 13
ACT_MAX = (1 << ACT_F) - 1  # 8191
ACT_MIN = -(1 << ACT_F)  # -8192
ACC_MAX = (1 << (ACT_F + 1)) - 1  # Q2.13 upper raw
ACC_MIN = -(1 << (ACT_F + 1))
OUT_F = 27
OUT_MAX = (1 << 28) - 1  # Q2.27 upper raw
OUT_MIN = -(1 << 28)


def _sat(v: int, lo: int, hi: int) -> int:
    return hi if v > hi else lo if v < lo else v


class FixedPointDatapath:
    """Streaming integer implementation of the predistorter."""

    def __init__(self, params: ModelParams, cfg: ModelConfig):
        if cfg.act_format.frac_bits != ACT_F or cfg.out_format.frac_bits != OUT_F:
            raise ValueError("fixed-point path is built for Q1.13 activations / Q2.27 output")
        self.cfg = cfg
        self.invsqrt = InvSqrtUnit(cfg.invsqrt)
        q = params.quantized(cfg)
        # keep only unmasked weights per neuron: (column index, raw weight)
        self._fc_taps = _sparse_rows(q["w_fc"], params.mask_fc)
        self._out_taps = _sparse_rows(q["w_out"], params.mask_out)
        self._b_fc = [int(b) for b in q["b_fc"]]
        self._b_out = [int(b) for b in q["b_out"]]
        self.overflow_count = 0
        self.reset()

    def reset(self) -> None:
        n = self.cfg.memory_depth
        self._ki = [0] * n
        self._kq = [0] * n
        self._a = [0] * n
        self._a3 = [0] * n
        self.overflow_count = 0

    def step(self, i_raw: int, q_raw: int) -> Tuple[int, int]:
        """Process one Q1.13 sample pair, returning the Q2.27 output pair."""
        cfg = self.cfg
        n = cfg.memory_depth
        zf = cfg.invsqrt.input_frac_bits
        sf = cfg.invsqrt.seed_frac_bits

        # feature extraction
        z = i_raw * i_raw + q_raw * q_raw
        if z == 0:
            p_i, p_q, a, a3 = ACT_MAX, 0, 0, 0
        else:
            x, e, zn, s = self.invsqrt.inv_sqrt_parts(z)
            a = min((zn * x) >> (zf + sf - ACT_F - s - e), ACT_MAX)
            a3 = min((zn * a) >> (zf - s), ACT_MAX)
            p_i = _sat((i_raw * x) >> (sf - e), ACT_MIN, ACT_MAX)
            p_q = _sat((-q_raw * x) >> (sf - e), ACT_MIN, ACT_MAX)

        # phase normalization of the n delayed samples
        pn_i, pn_q = [], []
        for ki, kq in zip(self._ki, self._kq):
            pn_i.append(_sat((ki * p_i - kq * p_q) >> ACT_F, ACT_MIN, ACT_MAX))
            pn_q.append(_sat((ki * p_q + kq * p_i) >> ACT_F, ACT_MIN, ACT_MAX))

        x_fc = pn_i + pn_q + [a] + self._a + [a3] + self._a3

        y_fc = [self._neuron(x_fc, taps, b) for taps, b in zip(self._fc_taps, self._b_fc)]
        x_out = x_fc + [v if v > 0 else 0 for v in y_fc]
        i_out, q_out = (self._neuron(x_out, taps, b)
                        for taps, b in zip(self._out_taps, self._b_out))

        # phase denormalization by conj(P), kept at Q2.27
        i_y = _sat((i_out * p_i + q_out * p_q) << 1, OUT_MIN, OUT_MAX)
        q_y = _sat((q_out * p_i - i_out * p_q) << 1, OUT_MIN, OUT_MAX)

        # shift registers
        self._ki = [i_raw] + self._ki[:-1]
        self._kq = [q_raw] + self._kq[:-1]
        self._a = [a] + self._a[:-1]
        self._a3 = [a3] + self._a3[:-1]
        return i_y, q_y

    def _neuron(self, x: List[int], taps, bias_raw: int) -> int:
        # exact product accumulation (frac 26) with the bias aligned in,
        # one truncation into Q2.13 with overflow detection, unit clamp
        acc = bias_raw << ACT_F
        for col, w in taps:
            acc += w * x[col]
        acc >>= ACT_F
        if not (ACC_MIN <= acc <= ACC_MAX):
            self.overflow_count += 1
        return _sat(acc, ACT_MIN, ACT_MAX)

    def run(self, i_arr: np.ndarray, q_arr: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Process whole int arrays; resets nothing (continues the stream)."""
        out_i = np.empty(len(i_arr), dtype=np.int64)
        out_q = np.empty(len(i_arr), dtype=np.int64)
        for t, (i, q) in enumerate(zip(i_arr, q_arr)):
            out_i[t], out_q[t] = self.step(int(i), int(q))
        return out_i, out_q


def _sparse_rows(w_raw: np.ndarray, mask: np.ndarray):
    rows = []
    for r in range(w_raw.shape[0]):
        rows.append([(int(c), int(w_raw[r, c]))
                     for c in range(w_raw.shape[1]) if mask[r, c] and w_raw[r, c] != 0])
    return rows
