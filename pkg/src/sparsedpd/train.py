"""Quantization-aware training with iterative magnitude pruning.

The trainable twin of the reference path runs in float64 torch with
fake-quantization at exactly the points the integer datapath quantizes:
floor-to-grid for activations (matching hardware truncation),
round-nearest for weights.  Gradients pass through the quantizers with a
straight-through estimator masked to the representable range.

Learning is direct: the predistorter output drives a frozen differentiable
memory-polynomial PA (fit to the dataset), and the loss is the mean squared
error against the linearly amplified input.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch

from .model import ModelConfig, ModelParams
from .pa import PaCoeffs


@dataclass(frozen=True)
class TrainConfig:
    initial_lr: float = 1e-3
    min_lr: float = 1e-6
    lr_factor: float = 0.5
    patience: int = 6
    batch_size: int = 256
    frame_length: int = 500
    stride: int = 1
    warmup_epochs: int = 400
    epochs_per_prune: int = 200
    prune_rounds: int = 6
    prune_fraction: float = 0.20
    seed: int = 0
    improvement_rtol: float = 1e-4
    # Slight gain backoff on the linearization target: pre-inverting a
    # compressive PA at unity gain needs peak expansion above full scale,
    # which the unit-range activation format cannot represent.  The metrics
    # fit a least-squares gain, so the backoff does not bias NMSE/ACPR/EVM.
    target_backoff: float = 0.95

    def __post_init__(self):
        if not 0 < self.prune_fraction < 1:
            raise ValueError("prune_fraction must be in (0, 1)")
        if not 0 < self.target_backoff <= 1:
            raise ValueError("target_backoff must be in (0, 1]")
        for name in ("batch_size", "frame_length", "stride", "patience"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def ci(cls) -> "TrainConfig":
        """Tiny schedule keeping the full pipeline under a few minutes."""
        return cls(warmup_epochs=20, epochs_per_prune=2, prune_rounds=2,
                   stride=100, batch_size=64)

    @classmethod
    def acceptance(cls) -> "TrainConfig":
        """Desk-scale schedule: full pruning ladder, reduced epoch counts."""
        return cls(warmup_epochs=60, epochs_per_prune=25, prune_rounds=6,
                   stride=50)


# ---------------------------------------------------------------------------
# fake quantizers with straight-through gradients
# ---------------------------------------------------------------------------

class _FloorQuant(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, scale, lo, hi):
        ctx.save_for_backward((x >= lo) & (x <= hi))
        return torch.clamp(torch.floor(x * scale) / scale, lo, hi)

    @staticmethod
    def backward(ctx, g):
        (in_range,) = ctx.saved_tensors
        return g * in_range, None, None, None


class _RoundQuant(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, scale, lo, hi):
        ctx.save_for_backward((x >= lo) & (x <= hi))
        return torch.clamp(torch.round(x * scale) / scale, lo, hi)

    @staticmethod
    def backward(ctx, g):
        (in_range,) = ctx.saved_tensors
        return g * in_range, None, None, None


def floor_quant(x, frac_bits, lo, hi):
    return _FloorQuant.apply(x, float(1 << frac_bits), lo, hi)


def round_quant(x, frac_bits, lo, hi):
    return _RoundQuant.apply(x, float(1 << frac_bits), lo, hi)


# ---------------------------------------------------------------------------
# trainable model
# ---------------------------------------------------------------------------

class QatDpd(torch.nn.Module):
    """Trainable predistorter; ``quantize=False`` gives the pure reference path."""

    def __init__(self, cfg: ModelConfig, params: Optional[ModelParams] = None,
                 rng: Optional[np.random.Generator] = None):
        super().__init__()
        self.cfg = cfg
        if params is None:
            params = ModelParams.init_random(cfg, rng or np.random.default_rng(0))
        t = lambda a: torch.tensor(np.asarray(a, dtype=np.float64))
        self.w_fc = torch.nn.Parameter(t(params.w_fc))
        self.b_fc = torch.nn.Parameter(t(params.b_fc))
        self.w_out = torch.nn.Parameter(t(params.w_out))
        self.b_out = torch.nn.Parameter(t(params.b_out))
        self.register_buffer("mask_fc", t(params.mask_fc.astype(float)))
        self.register_buffer("mask_out", t(params.mask_out.astype(float)))
        self.quantize = True

    # -- parameter interchange -------------------------------------------

    def to_params(self) -> ModelParams:
        g = lambda v: v.detach().cpu().numpy().copy()
        p = ModelParams(g(self.w_fc), g(self.b_fc), g(self.w_out), g(self.b_out),
                        g(self.mask_fc) > 0.5, g(self.mask_out) > 0.5)
        p.apply_masks()
        return p

    def load_params(self, params: ModelParams) -> None:
        with torch.no_grad():
            for dst, src in ((self.w_fc, params.w_fc), (self.b_fc, params.b_fc),
                             (self.w_out, params.w_out), (self.b_out, params.b_out)):
                dst.copy_(torch.tensor(np.asarray(src, dtype=np.float64)))
            self.mask_fc.copy_(torch.tensor(params.mask_fc.astype(np.float64)))
            self.mask_out.copy_(torch.tensor(params.mask_out.astype(np.float64)))

    # -- quantization helpers --------------------------------------------

    def _act(self, x):
        cfg = self.cfg
        hi = cfg.act_max
        if not self.quantize:
            return torch.clamp(x, -1.0, hi)
        return floor_quant(x, cfg.act_format.frac_bits, -1.0, hi)

    def _weights(self):
        cfg = self.cfg
        wf = self.w_fc * self.mask_fc
        wo = self.w_out * self.mask_out
        if not self.quantize:
            return wf, self.b_fc, wo, self.b_out
        fb = cfg.weight_format.frac_bits
        lo, hi = cfg.weight_format.min_value, cfg.weight_format.max_value
        q = lambda w: round_quant(w, fb, lo, hi)
        return q(wf), q(self.b_fc), q(wo), q(self.b_out)

    def forward(self, xi: torch.Tensor, xq: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """Map (..., T) I/Q tensors through the predistorter.

        History before t=0 of each frame is zero (cold start).
        """
        cfg = self.cfg
        n = cfg.memory_depth
        hi = cfg.act_max

        z = xi * xi + xq * xq
        nz = z > 0
        amp = torch.sqrt(torch.clamp(z, min=1e-30))
        inv = torch.where(nz, 1.0 / amp, torch.zeros_like(amp))
        a = self._act(torch.where(nz, amp, torch.zeros_like(amp)))
        a3 = self._act(z * a)
        p_i = self._act(torch.where(nz, xi * inv, torch.ones_like(amp)))
        p_q = self._act(torch.where(nz, -xq * inv, torch.zeros_like(amp)))

        def delay(sig, d):
            if d == 0:
                return sig
            pad = torch.zeros_like(sig[..., :d])
            return torch.cat([pad, sig[..., :-d]], dim=-1)

        cols = []
        for d in range(1, n + 1):
            ki, kq = delay(xi, d), delay(xq, d)
            cols.append(self._act(ki * p_i - kq * p_q))
        for d in range(1, n + 1):
            ki, kq = delay(xi, d), delay(xq, d)
            cols.append(self._act(ki * p_q + kq * p_i))
        cols += [delay(a, d) for d in range(n + 1)]
        cols += [delay(a3, d) for d in range(n + 1)]
        x_fc = torch.stack(cols, dim=-1)

        wf, bf, wo, bo = self._weights()
        acc_lo, acc_hi = -2.0, 2.0 - cfg.accum_format.ulp
        y_fc = x_fc @ wf.T + bf
        if self.quantize:
            y_fc = floor_quant(y_fc, cfg.accum_format.frac_bits, acc_lo, acc_hi)
        y_fc = torch.clamp(y_fc, -1.0, hi)
        x_out = torch.cat([x_fc, torch.relu(y_fc)], dim=-1)
        y_out = x_out @ wo.T + bo
        if self.quantize:
            y_out = floor_quant(y_out, cfg.accum_format.frac_bits, acc_lo, acc_hi)
        y_out = torch.clamp(y_out, -1.0, hi)

        yi = y_out[..., 0] * p_i + y_out[..., 1] * p_q
        yq = y_out[..., 1] * p_i - y_out[..., 0] * p_q
        out_lo, out_hi = cfg.out_format.min_value, cfg.out_format.max_value
        if self.quantize:
            yi = floor_quant(yi, cfg.out_format.frac_bits, out_lo, out_hi)
            yq = floor_quant(yq, cfg.out_format.frac_bits, out_lo, out_hi)
        else:
            yi = torch.clamp(yi, out_lo, out_hi)
            yq = torch.clamp(yq, out_lo, out_hi)
        return yi, yq


class TorchPa(torch.nn.Module):
    """Frozen differentiable memory-polynomial PA."""

    def __init__(self, pa: PaCoeffs):
        super().__init__()
        self.orders = pa.orders
        self.memory = pa.memory
        self.register_buffer("cr", torch.tensor(pa.coeffs.real))
        self.register_buffer("ci", torch.tensor(pa.coeffs.imag))

    def forward(self, xi: torch.Tensor, xq: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        z = xi * xi + xq * xq
        absx = torch.sqrt(torch.clamp(z, min=1e-30))
        yi = torch.zeros_like(xi)
        yq = torch.zeros_like(xq)
        for kidx, k in enumerate(self.orders):
            env = absx ** (k - 1) if k > 1 else torch.ones_like(absx)
            ti, tq = xi * env, xq * env
            for m in range(self.memory + 1):
                if m:
                    pad = torch.zeros_like(ti[..., :m])
                    si = torch.cat([pad, ti[..., :-m]], dim=-1)
                    sq = torch.cat([pad, tq[..., :-m]], dim=-1)
                else:
                    si, sq = ti, tq
                cr, ci = self.cr[kidx, m], self.ci[kidx, m]
                yi = yi + cr * si - ci * sq
                yq = yq + cr * sq + ci * si
        return yi, yq


# ---------------------------------------------------------------------------
# pruning and scheduling
# ---------------------------------------------------------------------------

def prune_round(params: ModelParams, fraction: float) -> Tuple[np.ndarray, np.ndarray]:
    """Mask the smallest-magnitude ``floor(fraction * remaining)`` weights.

    Ranking is global across both weight matrices on the real-valued
    master weights; ties break in (layer, row, column) order; biases are
    never pruned; existing masks are preserved.
    """
    mags = np.concatenate([np.abs(params.w_fc).ravel(), np.abs(params.w_out).ravel()])
    alive = np.concatenate([params.mask_fc.ravel(), params.mask_out.ravel()])
    k = int(np.floor(fraction * alive.sum()))
    mask = alive.copy()
    if k > 0:
        order = np.argsort(np.where(alive, mags, np.inf), kind="stable")
        mask[order[:k]] = False
    n_fc = params.mask_fc.size
    return (mask[:n_fc].reshape(params.mask_fc.shape),
            mask[n_fc:].reshape(params.mask_out.shape))


class PlateauLr:
    """Reduce-on-plateau: halve after more than ``patience`` epochs without
    a relative improvement, never below ``min_lr``."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.reset()

    def reset(self) -> None:
        self.lr = self.cfg.initial_lr
        self.best: Optional[float] = None
        self.stale = 0

    def step(self, val_loss: float) -> float:
        c = self.cfg
        if self.best is None or val_loss < self.best * (1 - c.improvement_rtol):
            self.best = val_loss
            self.stale = 0
        else:
            self.stale += 1
            if self.stale > c.patience:
                self.lr = max(self.lr * c.lr_factor, c.min_lr)
                self.stale = 0
        return self.lr


# ---------------------------------------------------------------------------
# training pipeline
# ---------------------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    round: int
    lr: float
    train_loss: float
    val_nmse_db: float
    sparsity: float


def write_history_csv(history: List[EpochRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "round", "lr", "train_loss", "val_nmse_db", "sparsity"])
        for r in history:
            w.writerow([r.epoch, r.round, f"{r.lr:.10g}", f"{r.train_loss:.10g}",
                        f"{r.val_nmse_db:.6f}", f"{r.sparsity:.6f}"])


def split_60_20_20(n: int) -> Tuple[slice, slice, slice]:
    a, b = int(n * 0.6), int(n * 0.8)
    return slice(0, a), slice(a, b), slice(b, n)


def _frames(length: int, frame: int, stride: int) -> np.ndarray:
    if length < frame:
        raise ValueError("split too small for one frame")
    return np.arange(0, length - frame + 1, stride)


def _nmse_db(err_power: float, ref_power: float) -> float:
    return float(10 * np.log10(max(err_power / ref_power, 1e-20)))


class Trainer:
    """Runs the QAT + pruning schedule against a frozen PA model."""

    def __init__(self, x: np.ndarray, model_cfg: ModelConfig, train_cfg: TrainConfig,
                 pa: PaCoeffs):
        torch.set_num_threads(1)  # determinism contract beats parallel speed here
        torch.manual_seed(train_cfg.seed)
        self.mcfg = model_cfg
        self.tcfg = train_cfg
        self.pa = TorchPa(pa)
        g = pa.linear_gain * train_cfg.target_backoff
        self.gain = (float(g.real), float(g.imag))
        self.warmup = model_cfg.memory_depth + pa.memory

        tr, va, _ = split_60_20_20(len(x))
        self.xi_tr = torch.tensor(np.ascontiguousarray(x.real[tr]))
        self.xq_tr = torch.tensor(np.ascontiguousarray(x.imag[tr]))
        self.xi_va = torch.tensor(np.ascontiguousarray(x.real[va]))
        self.xq_va = torch.tensor(np.ascontiguousarray(x.imag[va]))
        init = ModelParams.init_identity(model_cfg, np.random.default_rng(train_cfg.seed))
        self.model = QatDpd(model_cfg, init)
        self.rng = np.random.default_rng(train_cfg.seed + 1)

    def _loss(self, xi, xq):
        yi, yq = self.model(xi, xq)
        pi, pq = self.pa(yi, yq)
        gr, gi = self.gain
        ti = gr * xi - gi * xq
        tq = gr * xq + gi * xi
        w = self.warmup
        ei = (pi - ti)[..., w:]
        eq = (pq - tq)[..., w:]
        return torch.mean(ei * ei + eq * eq)

    def validation_ratio(self) -> float:
        """Linear error-to-reference power ratio on the validation split."""
        with torch.no_grad():
            yi, yq = self.model(self.xi_va, self.xq_va)
            pi, pq = self.pa(yi, yq)
            gr, gi = self.gain
            ti = gr * self.xi_va - gi * self.xq_va
            tq = gr * self.xq_va + gi * self.xi_va
            w = self.warmup
            err = ((pi - ti) ** 2 + (pq - tq) ** 2)[w:].sum().item()
            ref = (ti**2 + tq**2)[w:].sum().item()
        return err / ref

    def _epoch(self, optimizer) -> float:
        t = self.tcfg
        starts = _frames(len(self.xi_tr), t.frame_length, t.stride)
        self.rng.shuffle(starts)
        total, count = 0.0, 0
        for b0 in range(0, len(starts), t.batch_size):
            batch = starts[b0:b0 + t.batch_size]
            idx = batch[:, None] + np.arange(t.frame_length)[None, :]
            xi = self.xi_tr[idx]
            xq = self.xq_tr[idx]
            loss = self._loss(xi, xq)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += loss.item() * len(batch)
            count += len(batch)
        return total / count

    def run(self) -> Tuple[ModelParams, List[EpochRecord], Dict[int, ModelParams]]:
        """Full schedule; returns final best params, history, and the
        best-on-validation snapshot per phase (phase 0 = warmup)."""
        t = self.tcfg
        history: List[EpochRecord] = []
        snapshots: Dict[int, ModelParams] = {}
        epoch = 0
        for phase in range(t.prune_rounds + 1):
            if phase > 0:
                p = self.model.to_params()
                mfc, mout = prune_round(p, t.prune_fraction)
                p.mask_fc, p.mask_out = mfc, mout
                p.apply_masks()
                self.model.load_params(p)
            sched = PlateauLr(t)
            optimizer = torch.optim.Adam(self.model.parameters(), lr=sched.lr)
            n_epochs = t.warmup_epochs if phase == 0 else t.epochs_per_prune
            best_val, best_params = np.inf, self.model.to_params()
            for _ in range(n_epochs):
                train_loss = self._epoch(optimizer)
                val = self.validation_ratio()
                lr = sched.step(val)
                for group in optimizer.param_groups:
                    group["lr"] = lr
                epoch += 1
                history.append(EpochRecord(epoch, phase, lr, train_loss,
                                           _nmse_db(val, 1.0),
                                           self.model.to_params().sparsity))
                if val < best_val:
                    best_val = val
                    best_params = self.model.to_params()
            snapshots[phase] = best_params
            self.model.load_params(best_params)
        return snapshots[t.prune_rounds], history, snapshots


def train_pipeline(x: np.ndarray, model_cfg: ModelConfig, train_cfg: TrainConfig,
                   pa: PaCoeffs):
    """Convenience wrapper: train on the 60% split of ``x`` against ``pa``."""
    return Trainer(x, model_cfg, train_cfg, pa).run()
