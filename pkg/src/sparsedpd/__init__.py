"""Desk-scale, bit-exact model of a sparse phase-normalized TDNN digital
predistorter: fixed-point datapath, quantization-aware training with
magnitude pruning, a synthetic power-amplifier loop, and RF signal-quality
metrics."""

__version__ = "0.1.0"
