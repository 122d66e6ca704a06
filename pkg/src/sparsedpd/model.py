"""Phase-normalized time-delay network: configuration, parameters, and the
real-valued reference path.

The network consumes the current complex sample plus ``memory_depth``
delayed samples.  Per timestep the feature vector is

    [Re(K*P), Im(K*P), A(0..n), A^3(0..n)]        (width 4n + 2)

where K holds the n delayed complex inputs, P = conj(x)/|x| aligns them to
the current phase, and A is the amplitude.  Two fully connected layers with
input concatenation follow, and the output is rotated back by conj(P).

The bit-exact integer twin of this path lives in ``datapath``; both share
one ``ModelParams``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Tuple

import numpy as np

from .fxp import Q1_13, Q2_13, Q2_27, ROUND_NEAREST_EVEN, TRUNCATE, FxpFormat
from .invsqrt import InvSqrtConfig


@dataclass(frozen=True)
class ModelConfig:
    memory_depth: int = 2
    hidden_size: int = 12
    act_format: FxpFormat = Q1_13
    weight_format: FxpFormat = Q1_13
    accum_format: FxpFormat = Q2_13
    out_format: FxpFormat = Q2_27
    weight_round: str = ROUND_NEAREST_EVEN
    datapath_round: str = TRUNCATE
    invsqrt: InvSqrtConfig = field(default_factory=InvSqrtConfig)

    def __post_init__(self):
        if self.memory_depth < 1 or self.hidden_size < 1:
            raise ValueError("memory_depth and hidden_size must be >= 1")

    @property
    def fc_in_width(self) -> int:
        return 4 * self.memory_depth + 2

    @property
    def out_in_width(self) -> int:
        return self.fc_in_width + self.hidden_size

    @property
    def act_max(self) -> float:
        return self.act_format.max_value

    @property
    def act_scale(self) -> int:
        return 1 << self.act_format.frac_bits


@dataclass
class ModelParams:
    """Dense weights, biases and binary prune masks for both layers.

    ``w_fc``/``w_out`` are the real-valued master copies; masked entries
    are forced to zero.  Quantized integer shadows are derived on demand
    and never stored as the source of truth.
    """

    w_fc: np.ndarray
    b_fc: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray
    mask_fc: np.ndarray
    mask_out: np.ndarray

    @classmethod
    def init_random(cls, cfg: ModelConfig, rng: np.random.Generator) -> "ModelParams":
        """Small random init keeping pre-activation sums well inside [-1, 1)."""
        fc_in, out_in = cfg.fc_in_width, cfg.out_in_width
        h = cfg.hidden_size
        w_fc = rng.uniform(-1, 1, (h, fc_in)) / np.sqrt(fc_in)
        w_out = rng.uniform(-1, 1, (2, out_in)) / np.sqrt(out_in)
        return cls(
            w_fc=w_fc,
            b_fc=np.zeros(h),
            w_out=w_out,
            b_out=np.zeros(2),
            mask_fc=np.ones((h, fc_in), dtype=bool),
            mask_out=np.ones((2, out_in), dtype=bool),
        )

    @classmethod
    def init_identity(cls, cfg: ModelConfig, rng: np.random.Generator,
                      noise: float = 0.03) -> "ModelParams":
        """Near-passthrough init: the output layer taps the current
        amplitude, so y = A * conj(P) = x before training.

        Hidden units start as ReLU hinges staggered across the amplitude
        range (weight on the current amplitude, spread biases) with zeroed
        output taps: the initial map is an exact passthrough, yet the first
        gradient steps only have to learn a linear combination of an
        already-useful piecewise-linear basis instead of discovering hinge
        positions from scratch.
        """
        p = cls.init_random(cfg, rng)
        p.w_fc *= noise / 0.5
        p.w_out *= noise / 0.5
        a0 = 2 * cfg.memory_depth
        p.w_fc[:, a0] = cfg.act_max
        p.b_fc[:] = -np.linspace(0.05, 0.85, cfg.hidden_size)
        p.w_out[:, cfg.fc_in_width:] = 0.0
        p.w_out[0, a0] = cfg.act_max
        return p

    def copy(self) -> "ModelParams":
        return ModelParams(*(a.copy() for a in (self.w_fc, self.b_fc, self.w_out,
                                                self.b_out, self.mask_fc, self.mask_out)))

    def apply_masks(self) -> None:
        self.w_fc[~self.mask_fc] = 0.0
        self.w_out[~self.mask_out] = 0.0

    def masked_w_fc(self) -> np.ndarray:
        return np.where(self.mask_fc, self.w_fc, 0.0)

    def masked_w_out(self) -> np.ndarray:
        return np.where(self.mask_out, self.w_out, 0.0)

    @property
    def total_weights(self) -> int:
        return self.w_fc.size + self.w_out.size

    @property
    def unmasked_weights(self) -> int:
        return int(self.mask_fc.sum() + self.mask_out.sum())

    @property
    def sparsity(self) -> float:
        return 1.0 - self.unmasked_weights / self.total_weights

    def quantized(self, cfg: ModelConfig) -> dict:
        """Integer weight/bias shadows in the weight format (RNE, saturated)."""
        return {
            "w_fc": quantize_array(self.masked_w_fc(), cfg.weight_format, cfg.weight_round),
            "b_fc": quantize_array(self.b_fc, cfg.weight_format, cfg.weight_round),
            "w_out": quantize_array(self.masked_w_out(), cfg.weight_format, cfg.weight_round),
            "b_out": quantize_array(self.b_out, cfg.weight_format, cfg.weight_round),
        }


def quantize_array(x: np.ndarray, fmt: FxpFormat, mode: str) -> np.ndarray:
    """Vectorized quantize-and-saturate to raw integers."""
    scaled = np.asarray(x, dtype=np.float64) * (1 << fmt.frac_bits)
    if mode == TRUNCATE:
        raw = np.floor(scaled)
    elif mode == ROUND_NEAREST_EVEN:
        raw = np.rint(scaled)
    else:
        raise ValueError(f"unknown rounding mode {mode!r}")
    return np.clip(raw, fmt.raw_min, fmt.raw_max).astype(np.int64)


# ---------------------------------------------------------------------------
# reference (real-valued) path
# ---------------------------------------------------------------------------

def _clamp_unit(x: np.ndarray, cfg: ModelConfig) -> np.ndarray:
    return np.clip(x, -1.0, cfg.act_max)


def reference_features(x: np.ndarray, cfg: ModelConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Per-sample (P, A) for a complex input array; P = 1 where x = 0."""
    a = np.abs(x)
    p = np.ones_like(x)
    nz = a > 0
    p[nz] = np.conj(x[nz]) / a[nz]
    # P is a Q1.13 activation in hardware: components clip at the format edge
    p = np.clip(p.real, -1.0, cfg.act_max) + 1j * np.clip(p.imag, -1.0, cfg.act_max)
    a = np.clip(a, 0.0, cfg.act_max)
    return p, a


def build_fc_input(x: np.ndarray, p: np.ndarray, a: np.ndarray, cfg: ModelConfig) -> np.ndarray:
    """Assemble the (T, 4n+2) FC input with zero-filled history before t=0."""
    n = cfg.memory_depth
    t_len = len(x)
    # A^3 enters the datapath as z * A (z = squared magnitude, exact)
    a3 = _clamp_unit((x.real**2 + x.imag**2) * a, cfg)

    def delayed(sig, d):
        out = np.zeros(t_len, dtype=sig.dtype)
        if d == 0:
            return sig.copy()
        out[d:] = sig[:-d]
        return out

    pn = [delayed(x, d) * p for d in range(1, n + 1)]
    cols = (
        [_clamp_unit(k.real, cfg) for k in pn]
        + [_clamp_unit(k.imag, cfg) for k in pn]
        + [delayed(a, d) for d in range(0, n + 1)]
        + [delayed(a3, d) for d in range(0, n + 1)]
    )
    return np.stack(cols, axis=1)


def reference_forward(x: np.ndarray, params: ModelParams, cfg: ModelConfig) -> np.ndarray:
    """Run the whole reference path over a complex buffer.

    Mirrors the fixed-point structure (same masking and range clamps) but
    in float64 with a true square root.
    """
    x = np.asarray(x, dtype=np.complex128)
    p, a = reference_features(x, cfg)
    x_fc = build_fc_input(x, p, a, cfg)
    y_fc = _clamp_unit(x_fc @ params.masked_w_fc().T + params.b_fc, cfg)
    x_out = np.concatenate([x_fc, np.maximum(y_fc, 0.0)], axis=1)
    y_out = _clamp_unit(x_out @ params.masked_w_out().T + params.b_out, cfg)
    y = (y_out[:, 0] + 1j * y_out[:, 1]) * np.conj(p)
    lim_hi = cfg.out_format.max_value
    lim_lo = cfg.out_format.min_value
    return np.clip(y.real, lim_lo, lim_hi) + 1j * np.clip(y.imag, lim_lo, lim_hi)


class ReferenceStream:
    """Sample-at-a-time wrapper around the reference path (cold start at zero)."""

    def __init__(self, params: ModelParams, cfg: ModelConfig):
        self.params = params
        self.cfg = cfg
        self.reset()

    def reset(self) -> None:
        n = self.cfg.memory_depth
        self._x_hist = np.zeros(n, dtype=np.complex128)
        self._a_hist = np.zeros(n, dtype=np.float64)
        self._a3_hist = np.zeros(n, dtype=np.float64)

    def step(self, sample: complex) -> complex:
        cfg, params = self.cfg, self.params
        x = complex(sample)
        amp = abs(x)
        p = np.conj(x) / amp if amp > 0 else 1.0 + 0.0j
        p = complex(np.clip(p.real, -1.0, cfg.act_max), np.clip(p.imag, -1.0, cfg.act_max))
        a = min(amp, cfg.act_max)
        a3 = min(amp * amp * a, cfg.act_max)
        pn = self._x_hist * p
        x_fc = np.concatenate([
            np.clip(pn.real, -1.0, cfg.act_max),
            np.clip(pn.imag, -1.0, cfg.act_max),
            np.concatenate([[a], self._a_hist]),
            np.concatenate([[a3], self._a3_hist]),
        ])
        y_fc = _clamp_unit(params.masked_w_fc() @ x_fc + params.b_fc, cfg)
        x_out = np.concatenate([x_fc, np.maximum(y_fc, 0.0)])
        y_out = _clamp_unit(params.masked_w_out() @ x_out + params.b_out, cfg)
        y = (y_out[0] + 1j * y_out[1]) * np.conj(p)
        self._x_hist = np.concatenate([[x], self._x_hist[:-1]])
        self._a_hist = np.concatenate([[a], self._a_hist[:-1]])
        self._a3_hist = np.concatenate([[a3], self._a3_hist[:-1]])
        lim_hi, lim_lo = cfg.out_format.max_value, cfg.out_format.min_value
        return complex(np.clip(y.real, lim_lo, lim_hi), np.clip(y.imag, lim_lo, lim_hi))


# ---------------------------------------------------------------------------
# parameter / operation counting
# ---------------------------------------------------------------------------

OPS_CONVENTION = (
    "one real multiply = 1 op, one real add/subtract = 1 op; "
    "masked multiplies and their adder inputs are not counted; "
    "comparisons (ReLU, clamps) and pure shifts are free"
)


def count_params_ops(params: ModelParams, cfg: ModelConfig) -> dict:
    """Parameter and per-sample operation counts of the fixed-point path."""
    n = cfg.memory_depth
    nnz_fc = int(params.mask_fc.sum())
    nnz_out = int(params.mask_out.sum())
    biases = params.b_fc.size + params.b_out.size

    # feature extraction: I^2+Q^2 (2 mul, 1 add), folded seed step
    # (1 mul, 1 sub), each further NR iteration (3 mul, 1 sub),
    # A, A^3, P_I, P_Q (4 mul)
    iters = cfg.invsqrt.iter_count
    fex_mul = 2 + (1 + 3 * max(iters - 1, 0) if iters else 0) + 4
    fex_add = 1 + (1 if iters else 0) + max(iters - 1, 0)
    # phase normalization: n complex multiplies
    pn_mul, pn_add = 4 * n, 2 * n
    # FC layers: per unmasked weight one multiply and one adder input
    # (the bias replaces the "+1" slot of each neuron's tree)
    fc_mul, fc_add = nnz_fc, nnz_fc
    out_mul, out_add = nnz_out, nnz_out
    # phase denormalization: one complex multiply
    dn_mul, dn_add = 4, 2

    mults = fex_mul + pn_mul + fc_mul + out_mul + dn_mul
    adds = fex_add + pn_add + fc_add + out_add + dn_add
    return {
        "total_weights": params.total_weights,
        "unmasked_weights": params.unmasked_weights,
        "biases": biases,
        "param_count": params.unmasked_weights + biases,
        "sparsity": params.sparsity,
        "multiplies_per_sample": mults,
        "adds_per_sample": adds,
        "ops_per_sample": mults + adds,
        "convention": OPS_CONVENTION,
    }
