"""Command line front end.

Subcommands mirror the pipeline stages: encode a clip to a packet dump,
push packets through the simulated channel, decode a received dump,
sweep a whole rate x csnr grid, and compare report CSVs with BD deltas
and rate-distortion figures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import pipeline
from .config import load_config
from .errors import BcscastError
from .frames import SYNTH_PATTERNS, write_video
from .packets import SequenceMetadata, read_packet_dump, write_packet_dump
from .reconstruct import decode_sequence


def _parse_floats(text: str) -> list:
    return [float(x) for x in text.split(",") if x.strip()]


def _parse_ints(text: str) -> list:
    return [int(x) for x in text.split(",") if x.strip()]


def _add_source_flags(p):
    p.add_argument("--input", help="raw .y or .yuv clip; omit to synthesize")
    p.add_argument("--fmt", choices=["y", "yuv420"])
    p.add_argument("--pattern", choices=SYNTH_PATTERNS)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--synth-seed", dest="synth_seed", type=int)


def _add_encode_flags(p):
    p.add_argument("--block-size", dest="block_size", type=int)
    p.add_argument("--gop", dest="gop_length", type=int)
    p.add_argument("--m-min", dest="m_min", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--matrix-seed", dest="matrix_seed", type=int)
    p.add_argument("--dump-alloc", dest="dump_alloc", action="store_true", default=None)
    p.add_argument("--dump-importance", dest="dump_importance",
                   action="store_true", default=None)


def _add_channel_flags(p):
    p.add_argument("--csnr-db", dest="csnr_db",
                   help="channel SNR in dB; comma list for simulate, 'inf' for noiseless")
    p.add_argument("--total-power", dest="total_power", type=float)
    p.add_argument("--subchannels", type=int)
    p.add_argument("--loss-rate", dest="loss_rate", type=float)
    p.add_argument("--scale-mode", dest="scale_mode", choices=["power", "amplitude"])
    p.add_argument("--channel-seed", dest="channel_seed", type=int)
    p.add_argument("--noise-seed", dest="noise_seed", type=int)
    p.add_argument("--loss-seed", dest="loss_seed", type=int)
    p.add_argument("--dump-plan", dest="dump_plan", action="store_true", default=None)


def _add_recon_flags(p):
    p.add_argument("--solver", choices=["adaptive", "spl"])
    p.add_argument("--kmax", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--window", type=int)
    p.add_argument("--knn", type=int)
    p.add_argument("--wiener", type=int)
    p.add_argument("--init", choices=["spl", "backproject"])
    p.add_argument("--init-kmax", dest="init_kmax", type=int)
    p.add_argument("--p-frame-mode", dest="p_frame_mode",
                   choices=["lift", "residual"])
    p.add_argument("--trace", action="store_true", default=None)


def _parse_csnr(text):
    if text is None:
        return None
    vals = [None if x.strip().lower() in ("inf", "none") else float(x)
            for x in text.split(",") if x.strip()]
    return vals


def _config_from_args(args, skip=()):
    overrides = {}
    for key, value in vars(args).items():
        if key in ("command", "config", "rate", "csnr_db", "inputs", "func") or key in skip:
            continue
        if value is not None:
            overrides[key] = value
    cfg = load_config(args.config, overrides)
    if getattr(args, "rate", None) is not None:
        cfg.rates = _parse_ints(args.rate)
    csnr = _parse_csnr(getattr(args, "csnr_db", None))
    if csnr is not None:
        cfg.csnr_db = csnr
    return cfg


def _write_pgm(path, grid):
    arr = np.asarray(grid, dtype=np.float64)
    peak = arr.max()
    img = np.zeros(arr.shape, dtype=np.uint8) if peak <= 0 else \
        np.clip(np.rint(arr / peak * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())


def _dump_importance(out_dir, cfg, diag):
    import csv as _csv

    hb = cfg.height // cfg.block_size
    wb = cfg.width // cfg.block_size
    with open(os.path.join(out_dir, "importance.csv"), "w", newline="") as fh:
        out = _csv.writer(fh)
        out.writerow(["frame", "block", "texture", "saliency", "fused"])
        for i, imp in enumerate(diag["importances"]):
            for j in range(imp.fused.size):
                out.writerow([i, j, f"{imp.texture[j]:.6f}",
                              f"{imp.saliency[j]:.6f}", f"{imp.fused[j]:.6f}"])
    for i, imp in enumerate(diag["importances"]):
        for name, vec in (("q", imp.texture), ("s", imp.saliency), ("o", imp.fused)):
            _write_pgm(os.path.join(out_dir, f"{name}_{i:03d}.pgm"),
                       vec.reshape(hb, wb))


def cmd_encode(args):
    cfg = _config_from_args(args)
    seq = pipeline.load_source(cfg)
    rate = cfg.resolved_rates()[0]
    meta, batches, diag = pipeline.encode_sequence(seq, cfg, rate)
    os.makedirs(cfg.out, exist_ok=True)
    write_packet_dump(os.path.join(cfg.out, "packets.bin"), batches)
    meta.save(os.path.join(cfg.out, "meta.json"))
    if cfg.dump_alloc:
        pipeline.write_alloc_csv(os.path.join(cfg.out, "alloc.csv"), meta, diag)
    if cfg.dump_importance:
        _dump_importance(cfg.out, cfg, diag)
    print(f"[encode] {len(batches)} frames at rate {rate} -> {cfg.out}")
    return 0


def cmd_transmit(args):
    cfg = _config_from_args(args)
    meta = SequenceMetadata.load(os.path.join(args.inputs, "meta.json"))
    batches = read_packet_dump(os.path.join(args.inputs, "packets.bin"), meta)
    csnr_list = _parse_csnr(args.csnr_db)
    csnr = csnr_list[0] if csnr_list else cfg.csnr_db[0] if cfg.csnr_db else None
    received, plans, channels, scales = pipeline.transmit_sequence(batches, cfg, csnr)
    os.makedirs(cfg.out, exist_ok=True)
    write_packet_dump(os.path.join(cfg.out, "received.bin"), received)
    meta.transmission = {
        "csnr_db": csnr, "total_power": cfg.power_budget,
        "subchannels": cfg.subchannel_count, "loss_rate": cfg.loss_rate,
        "scale_mode": cfg.scale_mode, "channel_seed": cfg.channel_seed,
        "noise_seed": cfg.noise_seed, "loss_seed": cfg.loss_seed,
        "sample_scales": [float(s) for s in scales],
        "gains": [{str(int(p)): [float(g) for g in plan.power[plan.subchannels_for(i)]]
                   for i, p in enumerate(plan.packet_ids)} for plan in plans],
    }
    meta.save(os.path.join(cfg.out, "meta.json"))
    if cfg.dump_plan:
        pipeline.write_plan_csv(os.path.join(cfg.out, "plan.csv"), plans, channels)
    erased = sum(int(b.erased.sum()) for b in received)
    print(f"[transmit] csnr={csnr} dB, erased packets: {erased} -> {cfg.out}")
    return 0


def cmd_decode(args):
    cfg = _config_from_args(args)
    meta = SequenceMetadata.load(os.path.join(args.inputs, "meta.json"))
    name = "received.bin" if os.path.exists(os.path.join(args.inputs, "received.bin")) \
        else "packets.bin"
    batches = read_packet_dump(os.path.join(args.inputs, name), meta)
    recon, infos = decode_sequence(batches, meta, pipeline.recon_params(cfg))
    os.makedirs(cfg.out, exist_ok=True)
    write_video(os.path.join(cfg.out, "recon.yuv"), recon, fmt="yuv420")
    if cfg.trace:
        pipeline.write_trace_csv(os.path.join(cfg.out, "trace.csv"), infos)
    failed = sum(1 for x in infos if x.get("failed"))
    print(f"[decode] {len(recon)} frames ({failed} concealed) -> {cfg.out}")
    return 0


def cmd_simulate(args):
    cfg = _config_from_args(args)
    rows = pipeline.run_simulate(cfg)
    for row in rows:
        print(f"[simulate] rate={row['rate']} csnr={row['csnr_db']} "
              f"psnr={row['psnr_db']} ms_ssim={row['ms_ssim']}")
    print(f"[simulate] report -> {os.path.join(cfg.out, 'report.csv')}")
    return 0


def cmd_report(args):
    result = pipeline.run_report(args.inputs, args.out)
    for row in result["bd_rows"]:
        print(f"[report] csnr={row['csnr_db']} {row['method']} vs {row['baseline']}: "
              f"bd-psnr={row['bd_psnr_db']} dB, bd-msssim={row['bd_ms_ssim']}")
    print(f"[report] table -> {result['bd_table']}")
    for fig in result["figures"]:
        print(f"[report] figure -> {fig}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bcscast",
                                 description="soft video multicast over "
                                             "block compressed sensing")
    sub = ap.add_subparsers(dest="command", required=True)

    pe = sub.add_parser("encode", help="encode a clip into a packet dump")
    pe.add_argument("--config")
    pe.add_argument("--rate", help="gross sample budget (comma list uses the first)")
    pe.add_argument("--out")
    _add_source_flags(pe)
    _add_encode_flags(pe)
    pe.set_defaults(func=cmd_encode)

    pt = sub.add_parser("transmit", help="run a packet dump through the channel")
    pt.add_argument("inputs", help="directory holding packets.bin and meta.json")
    pt.add_argument("--config")
    pt.add_argument("--out")
    _add_channel_flags(pt)
    pt.set_defaults(func=cmd_transmit)

    pd = sub.add_parser("decode", help="reconstruct a clip from a packet dump")
    pd.add_argument("inputs", help="directory holding received.bin/packets.bin and meta.json")
    pd.add_argument("--config")
    pd.add_argument("--out")
    _add_recon_flags(pd)
    pd.set_defaults(func=cmd_decode)

    ps = sub.add_parser("simulate", help="sweep the rate x csnr grid end to end")
    ps.add_argument("--config")
    ps.add_argument("--rate", help="comma list of gross sample budgets")
    ps.add_argument("--jobs", type=int)
    ps.add_argument("--out")
    ps.add_argument("--label")
    _add_source_flags(ps)
    _add_encode_flags(ps)
    _add_channel_flags(ps)
    _add_recon_flags(ps)
    ps.set_defaults(func=cmd_simulate)

    pr = sub.add_parser("report", help="BD tables and RD figures from report CSVs")
    pr.add_argument("inputs", nargs="+", help="report.csv files to compare")
    pr.add_argument("--out", default="report_out")
    pr.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BcscastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
