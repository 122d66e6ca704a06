"""Command-line entry points for dataset generation, training, evaluation,
inverse-sqrt certification, and test-vector export.

Every subcommand finishes by printing a single JSON summary on stdout, so
runs are scriptable.  Exit codes: 0 success, 1 usage/data error, 2 a
certification or verification check failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import io as sio
from .fxp import Q1_13, Q2_27
from .invsqrt import InvSqrtConfig, InvSqrtUnit, SeedTable
from .kernel import FixedPointRunner, available_backends, default_backend
from .metrics import acpr, evm, nmse, psd_welch
from .model import ModelConfig, count_params_ops, reference_forward
from .pa import SignalBuffer, SignalSpec, default_pa, fit_pa, gen_baseband_with_symbols, pa_forward


def _emit(summary: dict) -> None:
    json.dump(summary, sys.stdout, indent=1, default=float)
    sys.stdout.write("\n")


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------

def _load_pa_file(path):
    from .pa import PaCoeffs

    with open(path) as fh:
        doc = json.load(fh)
    coeffs = np.array(doc["coeffs_real"]) + 1j * np.array(doc["coeffs_imag"])
    return PaCoeffs(coeffs, tuple(doc.get("orders", (1, 3, 5, 7))))


def _cmd_gen(args) -> int:
    # generate enough symbols to cover the requested sample count, then trim
    spec = SignalSpec(sample_rate=args.fs, bandwidth=args.bw, seed=args.seed,
                      n_symbols=args.symbols)
    if args.samples is not None:
        up, down = spec.sps.numerator, spec.sps.denominator
        need = -(-args.samples * down // up) + spec.span + 8
        spec = dataclasses.replace(spec, n_symbols=max(need, spec.span + 8))
    buf, symbols, delay = gen_baseband_with_symbols(spec)
    x = buf.samples
    if args.samples is not None:
        if len(x) < args.samples:
            print(f"error: generated only {len(x)} samples", file=sys.stderr)
            return 1
        x = x[: args.samples]

    pa = _load_pa_file(args.pa) if args.pa else default_pa()
    i_raw = np.round(x.real * (1 << Q1_13.frac_bits)).astype(np.int64)
    q_raw = np.round(x.imag * (1 << Q1_13.frac_bits)).astype(np.int64)
    xq = (i_raw + 1j * q_raw) * Q1_13.ulp  # quantized stimulus actually stored
    y = pa_forward(xq, pa)
    o_scale = 1 << Q2_27.frac_bits
    o_i = np.clip(np.round(y.real * o_scale), Q2_27.raw_min, Q2_27.raw_max).astype(np.int64)
    o_q = np.clip(np.round(y.imag * o_scale), Q2_27.raw_min, Q2_27.raw_max).astype(np.int64)

    ds = sio.Dataset(i_raw, q_raw, o_i, o_q, Q1_13, Q2_27, spec.sample_rate, metadata={
        "bandwidth": spec.bandwidth,
        "rolloff": spec.rolloff,
        "seed": spec.seed,
        "n_symbols": spec.n_symbols,
        "span_symbols": spec.span_symbols,
        "filter_delay": delay,
        "pa": str(args.pa) if args.pa else "default",
        "split": [0.6, 0.2, 0.2],
    })
    sio.write_dataset(ds, args.out)
    _emit({"command": "gen", "out": str(args.out), "samples": len(ds),
           "sample_rate": spec.sample_rate, "bandwidth": spec.bandwidth,
           "symbols": len(symbols)})
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _load_xy(path):
    ds = sio.read_dataset(path)
    return ds, ds.input_complex(), ds.output_complex()


def _cmd_train(args) -> int:
    from .train import TrainConfig, Trainer, write_history_csv

    ds, x, y = _load_xy(args.data)
    presets = {"ci": TrainConfig.ci, "acceptance": TrainConfig.acceptance,
               "full": TrainConfig}
    tcfg = presets[args.config]()
    if args.seed is not None:
        tcfg = dataclasses.replace(tcfg, seed=args.seed)
    pa, fit_residual_db = fit_pa(x, y)
    mcfg = ModelConfig()
    params, history, snapshots = Trainer(x, mcfg, tcfg, pa).run()

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_history_csv(history, out_dir / "history.csv")
    for phase, snap in snapshots.items():
        sio.save_checkpoint(out_dir / f"checkpoint_round{phase}.json", snap, mcfg,
                            train_config=dataclasses.asdict(tcfg))
    report = count_params_ops(params, mcfg)
    sio.save_checkpoint(out_dir / "checkpoint.json", params, mcfg,
                        train_config=dataclasses.asdict(tcfg),
                        metrics={"val_nmse_db": history[-1].val_nmse_db,
                                 "pa_fit_residual_db": fit_residual_db,
                                 **{k: v for k, v in report.items() if k != "convention"}})
    with open(out_dir / "params_report.json", "w") as fh:
        json.dump(report, fh, indent=1)
        fh.write("\n")
    summary = {"command": "train", "out_dir": str(out_dir), "epochs": len(history),
               "final_val_nmse_db": history[-1].val_nmse_db,
               "sparsity": params.sparsity, "pa_fit_residual_db": fit_residual_db}
    with open(out_dir / "run_summary.json", "w") as fh:
        json.dump(summary, fh, indent=1, default=float)
        fh.write("\n")
    _emit(summary)
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _dpd_output(x, ds, params, cfg, path, backend):
    if path == "reference":
        return reference_forward(x, params, cfg)
    runner = FixedPointRunner(params, cfg, backend)
    oi, oq = runner.run(ds.input_i, ds.input_q)
    return (oi + 1j * oq) * cfg.out_format.ulp


def _cmd_eval(args) -> int:
    ds, x, y_meas = _load_xy(args.data)
    params, cfg, doc = sio.load_checkpoint(args.checkpoint)
    if doc["config_hash"] != sio.config_hash(cfg):
        print("error: checkpoint config hash does not match its configuration",
              file=sys.stderr)
        return 2

    pa, fit_residual_db = fit_pa(x, y_meas)
    g = pa.linear_gain
    target = g * x
    bw = ds.metadata.get("bandwidth", 20e6)
    fs = ds.sample_rate

    u = _dpd_output(x, ds, params, cfg, args.path, args.backend)
    lin = pa_forward(u, pa)
    base = pa_forward(x, pa)

    summary = {
        "command": "eval", "path": args.path,
        "samples": len(ds), "config_hash": doc["config_hash"],
        "pa_fit_residual_db": fit_residual_db,
        "nmse_db": nmse(lin, target),
        "nmse_db_no_dpd": nmse(base, target),
        "acpr_db": acpr(SignalBuffer(lin, fs), bw),
        "acpr_db_no_dpd": acpr(SignalBuffer(base, fs), bw),
        "sparsity": params.sparsity,
    }

    meta = ds.metadata
    if all(k in meta for k in ("bandwidth", "rolloff", "seed", "n_symbols")):
        spec = SignalSpec(sample_rate=fs, bandwidth=meta["bandwidth"],
                          rolloff=meta["rolloff"], seed=meta["seed"],
                          n_symbols=meta["n_symbols"],
                          span_symbols=meta.get("span_symbols", 48))
        _, symbols, _ = gen_baseband_with_symbols(spec)
        try:
            summary["evm_db"] = evm(lin / g, symbols, spec)
            summary["evm_db_no_dpd"] = evm(base / g, symbols, spec)
        except ValueError:
            pass  # stream too short for a symbol-domain measurement

    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        psd_welch(SignalBuffer(lin, fs)).export_csv(out_dir / "psd_dpd.csv")
        psd_welch(SignalBuffer(base, fs)).export_csv(out_dir / "psd_no_dpd.csv")
        with open(out_dir / "eval_summary.json", "w") as fh:
            json.dump(summary, fh, indent=1, default=float)
            fh.write("\n")
    _emit(summary)
    return 0


# ---------------------------------------------------------------------------
# certify-invsqrt / export-tv
# ---------------------------------------------------------------------------

def _cmd_certify(args) -> int:
    cfg = InvSqrtConfig(window_bits=args.window_bits, lut_addr_bits=args.lut_bits,
                        iter_count=args.iters, input_bits=args.input_bits,
                        input_frac_bits=args.input_frac_bits)
    unit = InvSqrtUnit(cfg)
    if args.lut_out:
        SeedTable.build(cfg).export_hex(args.lut_out)
    eps_max, worst_z = unit.certify_error()
    bound = 2.0 ** (-args.bound_bits)
    ok = eps_max <= bound
    _emit({"command": "certify-invsqrt", "window_bits": cfg.window_bits,
           "iterations": cfg.iter_count, "eps_max": eps_max, "worst_input": worst_z,
           "bound": bound, "pass": ok})
    return 0 if ok else 2


def _cmd_export_tv(args) -> int:
    ds = sio.read_dataset(args.data)
    params, cfg, _ = sio.load_checkpoint(args.checkpoint)
    count = min(args.count, len(ds)) if args.count else len(ds)
    sio.export_test_vectors(ds.input_i[:count], ds.input_q[:count], params, cfg,
                            args.out, backend=args.backend)
    _emit({"command": "export-tv", "out": str(args.out), "vectors": count,
           "config_hash": sio.config_hash(cfg)})
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparsedpd",
                                description="Sparse phase-normalized TDNN predistorter toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a 64-QAM dataset through the synthetic PA")
    g.add_argument("--bw", type=float, default=20e6, help="channel bandwidth in Hz")
    g.add_argument("--fs", type=float, default=170e6, help="sample rate in Hz")
    g.add_argument("--symbols", type=int, default=16384)
    g.add_argument("--samples", type=int, default=172035,
                   help="trim the stream to exactly this many samples")
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--pa", default=None,
                   help="JSON file of memory-polynomial coefficients "
                        "(coeffs_real, coeffs_imag, orders); default built-in PA")
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_gen)

    t = sub.add_parser("train", help="run quantization-aware training with pruning")
    t.add_argument("--data", required=True)
    t.add_argument("--config", choices=("ci", "acceptance", "full"), default="acceptance",
                   help="training schedule preset")
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--out-dir", required=True)
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint against a dataset")
    e.add_argument("--data", required=True)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--path", choices=("reference", "fixedpoint"), default="fixedpoint")
    e.add_argument("--backend", choices=available_backends(), default=None)
    e.add_argument("--out-dir", default=None)
    e.set_defaults(func=_cmd_eval)

    c = sub.add_parser("certify-invsqrt",
                       help="exhaustively sweep the inverse-sqrt unit's input range")
    c.add_argument("--window-bits", type=int, default=InvSqrtConfig().window_bits)
    c.add_argument("--lut-bits", type=int, default=InvSqrtConfig().lut_addr_bits)
    c.add_argument("--iters", type=int, default=InvSqrtConfig().iter_count)
    c.add_argument("--input-bits", type=int, default=InvSqrtConfig().input_bits)
    c.add_argument("--input-frac-bits", type=int,
                   default=InvSqrtConfig().input_frac_bits)
    c.add_argument("--bound-bits", type=int, default=12,
                   help="require max relative error <= 2^-bound_bits")
    c.add_argument("--lut-out", default=None, help="also write the seed table as hex")
    c.set_defaults(func=_cmd_certify)

    v = sub.add_parser("export-tv", help="export hardware test vectors (hex)")
    v.add_argument("--data", required=True)
    v.add_argument("--checkpoint", required=True)
    v.add_argument("--count", type=int, default=10000)
    v.add_argument("--backend", choices=available_backends(), default=None)
    v.add_argument("--out", required=True)
    v.set_defaults(func=_cmd_export_tv)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (sio.FileFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
