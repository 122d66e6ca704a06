"""Bit-exact file formats: binary I/Q datasets, structured-text checkpoints,
and hex test vectors for hardware testbench parity.

All multi-byte integers are little-endian and every file is
self-describing; raw integer payloads round-trip losslessly.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from typing import Optional, Tuple

import numpy as np

from .fxp import FxpFormat, Q1_13, Q2_27
from .invsqrt import InvSqrtConfig
from .kernel import FixedPointRunner
from .model import ModelConfig, ModelParams, quantize_array

MAGIC = b"SDPD"
DATASET_VERSION = 1
CHECKPOINT_VERSION = 1
TESTVECTOR_VERSION = 1


class FileFormatError(ValueError):
    pass


class BadMagicError(FileFormatError):
    pass


class BadVersionError(FileFormatError):
    pass


class TruncatedFileError(FileFormatError):
    def __init__(self, offset: int):
        super().__init__(f"file truncated at byte offset {offset}")
        self.offset = offset


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

_FMT_BYTES = {2: np.dtype("<i2"), 4: np.dtype("<i4"), 8: np.dtype("<i8")}


def _bytes_for(fmt: FxpFormat) -> int:
    for nbytes in (2, 4, 8):
        if fmt.width <= 8 * nbytes:
            return nbytes
    raise ValueError("format too wide")


@dataclass
class Dataset:
    """Paired ideal-input / PA-output buffers as raw fixed-point integers."""

    input_i: np.ndarray
    input_q: np.ndarray
    output_i: np.ndarray
    output_q: np.ndarray
    in_fmt: FxpFormat = Q1_13
    out_fmt: FxpFormat = Q2_27
    sample_rate: float = 170e6
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(self.input_i), len(self.input_q), len(self.output_i), len(self.output_q)}
        if len(lengths) != 1:
            raise ValueError("all four buffers must have equal length")

    def __len__(self) -> int:
        return len(self.input_i)

    def input_complex(self) -> np.ndarray:
        s = 2.0 ** (-self.in_fmt.frac_bits)
        return self.input_i * s + 1j * self.input_q * s

    def output_complex(self) -> np.ndarray:
        s = 2.0 ** (-self.out_fmt.frac_bits)
        return self.output_i * s + 1j * self.output_q * s

    def splits(self) -> Tuple[slice, slice, slice]:
        """Contiguous 60/20/20 train/validation/test boundaries."""
        n = len(self)
        a, b = int(n * 0.6), int(n * 0.8)
        return slice(0, a), slice(a, b), slice(b, n)


def write_dataset(ds: Dataset, path) -> None:
    meta = json.dumps(ds.metadata).encode()
    in_b, out_b = _bytes_for(ds.in_fmt), _bytes_for(ds.out_fmt)
    header = MAGIC + struct.pack(
        "<HBBBBBBQd",
        DATASET_VERSION,
        ds.in_fmt.int_bits, ds.in_fmt.frac_bits, in_b,
        ds.out_fmt.int_bits, ds.out_fmt.frac_bits, out_b,
        len(ds), ds.sample_rate,
    ) + struct.pack("<I", len(meta)) + meta
    with open(path, "wb") as fh:
        fh.write(header)
        inp = np.empty(2 * len(ds), dtype=_FMT_BYTES[in_b])
        inp[0::2], inp[1::2] = ds.input_i, ds.input_q
        fh.write(inp.tobytes())
        out = np.empty(2 * len(ds), dtype=_FMT_BYTES[out_b])
        out[0::2], out[1::2] = ds.output_i, ds.output_q
        fh.write(out.tobytes())


def read_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise BadMagicError(f"bad magic {blob[:4]!r}")
    fixed = struct.calcsize("<HBBBBBBQd")
    if len(blob) < 4 + fixed + 4:
        raise TruncatedFileError(len(blob))
    version, ii, fi, bi, io_, fo, bo, count, rate = struct.unpack_from("<HBBBBBBQd", blob, 4)
    if version != DATASET_VERSION:
        raise BadVersionError(f"unsupported dataset version {version}")
    off = 4 + fixed
    (meta_len,) = struct.unpack_from("<I", blob, off)
    off += 4
    if len(blob) < off + meta_len:
        raise TruncatedFileError(len(blob))
    metadata = json.loads(blob[off:off + meta_len]) if meta_len else {}
    off += meta_len
    need = off + 2 * count * bi + 2 * count * bo
    if len(blob) < need:
        raise TruncatedFileError(len(blob))
    inp = np.frombuffer(blob, dtype=_FMT_BYTES[bi], count=2 * count, offset=off).astype(np.int64)
    off += 2 * count * bi
    out = np.frombuffer(blob, dtype=_FMT_BYTES[bo], count=2 * count, offset=off).astype(np.int64)
    return Dataset(inp[0::2], inp[1::2], out[0::2], out[1::2],
                   FxpFormat(ii, fi), FxpFormat(io_, fo), rate, metadata)


def import_csv(path, fmt: FxpFormat = Q1_13, mode: str = "round-nearest-even"):
    """Read one real 'I,Q' pair per line, quantizing into ``fmt``.

    Returns (i_raw, q_raw, saturated_count).
    """
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if data.shape[1] != 2:
        raise FileFormatError("expected two columns (I,Q)")
    scaled = data * (1 << fmt.frac_bits)
    sat = int(np.sum((scaled < fmt.raw_min) | (scaled > fmt.raw_max)))
    i_raw = quantize_array(data[:, 0], fmt, mode)
    q_raw = quantize_array(data[:, 1], fmt, mode)
    return i_raw, q_raw, sat


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def _fmt_to_list(fmt: FxpFormat):
    return [fmt.int_bits, fmt.frac_bits]


def model_config_dict(cfg: ModelConfig) -> dict:
    return {
        "memory_depth": cfg.memory_depth,
        "hidden_size": cfg.hidden_size,
        "act_format": _fmt_to_list(cfg.act_format),
        "weight_format": _fmt_to_list(cfg.weight_format),
        "accum_format": _fmt_to_list(cfg.accum_format),
        "out_format": _fmt_to_list(cfg.out_format),
        "weight_round": cfg.weight_round,
        "datapath_round": cfg.datapath_round,
        "invsqrt": asdict(cfg.invsqrt),
    }


def model_config_from_dict(d: dict) -> ModelConfig:
    f = lambda v: FxpFormat(*v)
    return ModelConfig(
        memory_depth=d["memory_depth"],
        hidden_size=d["hidden_size"],
        act_format=f(d["act_format"]),
        weight_format=f(d["weight_format"]),
        accum_format=f(d["accum_format"]),
        out_format=f(d["out_format"]),
        weight_round=d["weight_round"],
        datapath_round=d["datapath_round"],
        invsqrt=InvSqrtConfig(**d["invsqrt"]),
    )


def config_hash(cfg: ModelConfig) -> str:
    canon = json.dumps(model_config_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


class CheckpointError(FileFormatError):
    pass


def save_checkpoint(path, params: ModelParams, cfg: ModelConfig,
                    train_config: Optional[dict] = None,
                    metrics: Optional[dict] = None) -> None:
    q = params.quantized(cfg)
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "model_config": model_config_dict(cfg),
        "config_hash": config_hash(cfg),
        "master": {
            "w_fc": params.w_fc.tolist(),
            "b_fc": params.b_fc.tolist(),
            "w_out": params.w_out.tolist(),
            "b_out": params.b_out.tolist(),
        },
        "masks": {
            "mask_fc": params.mask_fc.astype(int).tolist(),
            "mask_out": params.mask_out.astype(int).tolist(),
        },
        "quantized": {k: v.tolist() for k, v in q.items()},
        "train_config": train_config,
        "metrics": metrics,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_checkpoint(path) -> Tuple[ModelParams, ModelConfig, dict]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise BadVersionError(f"unsupported checkpoint version {doc.get('format_version')}")
    cfg = model_config_from_dict(doc["model_config"])
    m = doc["master"]
    params = ModelParams(
        np.array(m["w_fc"]), np.array(m["b_fc"]),
        np.array(m["w_out"]), np.array(m["b_out"]),
        np.array(doc["masks"]["mask_fc"], dtype=bool),
        np.array(doc["masks"]["mask_out"], dtype=bool),
    )
    params.apply_masks()
    regen = params.quantized(cfg)
    for key, stored in doc["quantized"].items():
        if not np.array_equal(np.array(stored), regen[key]):
            raise CheckpointError(f"stored quantized {key} does not regenerate from master params")
    return params, cfg, doc


# ---------------------------------------------------------------------------
# hardware test vectors
# ---------------------------------------------------------------------------

def _hex_field(v: int, bits: int) -> str:
    digits = (bits + 3) // 4
    return format(v & ((1 << bits) - 1), f"0{digits}x")


def _unhex(s: str, bits: int) -> int:
    v = int(s, 16)
    if v & (1 << (bits - 1)):
        v -= 1 << bits
    return v


def export_test_vectors(i_raw, q_raw, params: ModelParams, cfg: ModelConfig, path,
                        backend: Optional[str] = None) -> None:
    """Run the fixed-point path over the stream and write one hex line per
    sample: I_in Q_in I_out Q_out (14/14/29/29-bit two's complement)."""
    runner = FixedPointRunner(params, cfg, backend)
    out_i, out_q = runner.run(np.asarray(i_raw), np.asarray(q_raw))
    in_bits = cfg.act_format.width
    out_bits = cfg.out_format.width
    with open(path, "w") as fh:
        fh.write(f"# sparsedpd test vectors v{TESTVECTOR_VERSION}\n")
        fh.write(f"# in_format {cfg.act_format} out_format {cfg.out_format}\n")
        fh.write(f"# config_hash {config_hash(cfg)}\n")
        for a, b, c, d in zip(i_raw, q_raw, out_i, out_q):
            fh.write(f"{_hex_field(int(a), in_bits)} {_hex_field(int(b), in_bits)} "
                     f"{_hex_field(int(c), out_bits)} {_hex_field(int(d), out_bits)}\n")


def read_test_vectors(path, in_bits: int = 14, out_bits: int = 29):
    """Parse a test-vector file into (header dict, i_in, q_in, i_out, q_out)."""
    header = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) >= 2 and parts[0] in ("config_hash", "in_format", "out_format"):
                    header[parts[0]] = " ".join(parts[1:])
                continue
            f = line.split()
            if len(f) != 4:
                raise FileFormatError(f"malformed vector line: {line!r}")
            rows.append((_unhex(f[0], in_bits), _unhex(f[1], in_bits),
                         _unhex(f[2], out_bits), _unhex(f[3], out_bits)))
    arr = np.array(rows, dtype=np.int64).reshape(-1, 4)
    return header, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]
