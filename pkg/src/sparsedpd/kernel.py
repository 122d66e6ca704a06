"""Backend selection for the fixed-point datapath.

At import time the compiled Cython kernel is preferred; the pure-Python
integer implementation is the drop-in fallback.  Both produce bit-identical
raw output streams.  Set ``SPARSEDPD_BACKEND=python`` (or ``cython``) to
force a choice.
"""

from __future__ import annotations

import os
from typing import Optional, Tuple

import numpy as np

from .datapath import FixedPointDatapath
from .model import ModelConfig, ModelParams

try:
    from . import _datapath as _ext
except ImportError:
    _ext = None


def available_backends() -> Tuple[str, ...]:
    return ("cython", "python") if _ext is not None else ("python",)


def default_backend() -> str:
    forced = os.environ.get("SPARSEDPD_BACKEND")
    if forced:
        if forced not in ("cython", "python"):
            raise ValueError(f"SPARSEDPD_BACKEND must be 'cython' or 'python', got {forced!r}")
        if forced == "cython" and _ext is None:
            raise RuntimeError("cython backend requested but the extension is not built")
        return forced
    return "cython" if _ext is not None else "python"


def _csr(taps) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    ptr = [0]
    cols, ws = [], []
    for row in taps:
        for c, w in row:
            cols.append(c)
            ws.append(w)
        ptr.append(len(cols))
    return (np.asarray(ptr, dtype=np.int64),
            np.asarray(cols, dtype=np.int64),
            np.asarray(ws, dtype=np.int64))


class FixedPointRunner:
    """Stateful stream runner over the selected backend."""

    def __init__(self, params: ModelParams, cfg: ModelConfig, backend: Optional[str] = None):
        self.backend = backend or default_backend()
        if self.backend not in available_backends():
            raise RuntimeError(f"backend {self.backend!r} not available")
        self.cfg = cfg
        self._py = FixedPointDatapath(params, cfg)
        if self.backend == "cython":
            iv = cfg.invsqrt
            self._fc = _csr(self._py._fc_taps)
            self._out = _csr(self._py._out_taps)
            self._b_fc = np.asarray(self._py._b_fc, dtype=np.int64)
            self._b_out = np.asarray(self._py._b_out, dtype=np.int64)
            self._s1 = np.asarray(self._py.invsqrt.table.s1, dtype=np.int64)
            self._s3 = np.asarray(self._py.invsqrt.table.s3, dtype=np.int64)
        self.reset()

    def reset(self) -> None:
        n = self.cfg.memory_depth
        self._py.reset()
        if self.backend == "cython":
            self._ki = np.zeros(n, dtype=np.int64)
            self._kq = np.zeros(n, dtype=np.int64)
            self._a = np.zeros(n, dtype=np.int64)
            self._a3 = np.zeros(n, dtype=np.int64)
        self.overflow_count = 0

    def run(self, i_arr: np.ndarray, q_arr: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Process raw Q1.13 integer arrays into raw Q2.27 output arrays."""
        i_arr = np.ascontiguousarray(i_arr, dtype=np.int64)
        q_arr = np.ascontiguousarray(q_arr, dtype=np.int64)
        if self.backend == "python":
            out = self._py.run(i_arr, q_arr)
            self.overflow_count = self._py.overflow_count
            return out
        iv = self.cfg.invsqrt
        out_i, out_q, ovf = _ext.run_stream(
            i_arr, q_arr,
            self._fc[0], self._fc[1], self._fc[2], self._b_fc,
            self._out[0], self._out[1], self._out[2], self._b_out,
            self._s1, self._s3,
            iv.window_bits, iv.lut_addr_bits, iv.seed_frac_bits,
            iv.iter_count, iv.input_frac_bits,
            self.cfg.memory_depth, self.cfg.hidden_size,
            self._ki, self._kq, self._a, self._a3,
        )
        self.overflow_count += ovf
        return out_i, out_q
