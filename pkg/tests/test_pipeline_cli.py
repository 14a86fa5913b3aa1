import json
import os

import numpy as np
import pytest

from bcscast import pipeline
from bcscast.cli import main
from bcscast.config import ExperimentConfig, load_config
from bcscast.errors import ConfigError
from bcscast.frames import synthesize_video
from bcscast.metrics import sequence_psnr
from bcscast.packets import SequenceMetadata, read_packet_dump

_SMALL = ["--pattern", "textured-noise-pan", "--width", "32", "--height", "32",
          "--frames", "3", "--gop", "2", "--synth-seed", "4"]


def _rate_for(width=32, height=32, frames=3, rho=0.4):
    cfg = ExperimentConfig(width=width, height=height, frames=frames)
    data = int(round(rho * frames * cfg.block_count * cfg.block_size ** 2))
    return data + cfg.overhead()


# -- pipeline level -------------------------------------------------------------

def test_encode_sequence_respects_budget():
    cfg = ExperimentConfig(width=32, height=32, frames=3, gop_length=2,
                           synth_seed=4)
    seq = pipeline.load_source(cfg)
    rate = _rate_for()
    meta, batches, diag = pipeline.encode_sequence(seq, cfg, rate)
    spent = sum(sum(f["counts"]) for f in meta.frames)
    assert spent + meta.overhead == rate
    for f in meta.frames:
        assert min(f["counts"]) >= cfg.m_min
        assert max(f["counts"]) <= 64
    assert [f["kind"] for f in meta.frames] == ["I", "P", "I"]


def test_transmit_sequence_noiseless_round_trip():
    cfg = ExperimentConfig(width=32, height=32, frames=2, gop_length=2,
                           synth_seed=4)
    seq = pipeline.load_source(cfg)
    meta, batches, _ = pipeline.encode_sequence(seq, cfg, _rate_for(frames=2))
    received, plans, channels, scales = pipeline.transmit_sequence(batches, cfg, None)
    assert len(scales) == 2 and all(s > 0 for s in scales)
    for orig, got in zip(batches, received):
        for p in range(orig.packet_count):
            assert np.allclose(got.values[p], orig.values[p], atol=1e-9)


def test_transmit_sequence_unit_rms_presented_to_channel():
    cfg = ExperimentConfig(width=32, height=32, frames=1, synth_seed=4)
    seq = pipeline.load_source(cfg)
    meta, batches, _ = pipeline.encode_sequence(seq, cfg, _rate_for(frames=1))
    scale = pipeline.frame_sample_scale(batches[0])
    flat = np.concatenate([v for v in batches[0].values if v.size])
    assert np.sqrt(np.mean((flat / scale) ** 2)) == pytest.approx(1.0, abs=1e-12)


def test_run_cell_writes_outputs(tmp_path):
    cfg = ExperimentConfig(width=32, height=32, frames=2, gop_length=2,
                           synth_seed=4, kmax=5, init_kmax=3, dump_plan=True)
    out = tmp_path / "cell"
    row = pipeline.run_cell(cfg, _rate_for(frames=2), 25.0, out_dir=str(out))
    assert set(row) == set(pipeline.REPORT_FIELDS)
    assert row["failed_frames"] == 0
    assert 5.0 < row["psnr_db"] < 99.0
    for name in ("recon.yuv", "alloc.csv", "trace.csv", "plan.csv"):
        assert (out / name).exists(), name


def test_noiseless_cell_beats_noisy_cell():
    cfg = ExperimentConfig(width=32, height=32, frames=2, gop_length=2,
                           synth_seed=4, kmax=8, init_kmax=4)
    rate = _rate_for(frames=2, rho=0.5)
    clean = pipeline.run_cell(cfg, rate, None)
    noisy = pipeline.run_cell(cfg, rate, 10.0)
    assert clean["psnr_db"] > noisy["psnr_db"]


# -- CLI ------------------------------------------------------------------------

def test_cli_encode_decode_round_trip(tmp_path, capsys):
    enc = tmp_path / "enc"
    rate = str(_rate_for(rho=0.5))
    code = main(["encode", *_SMALL, "--rate", rate, "--out", str(enc),
                 "--dump-alloc", "--dump-importance"])
    assert code == 0
    assert (enc / "packets.bin").exists()
    assert (enc / "meta.json").exists()
    assert (enc / "alloc.csv").exists()
    assert (enc / "importance.csv").exists()
    assert "[encode]" in capsys.readouterr().out

    dec = tmp_path / "dec"
    code = main(["decode", str(enc), "--out", str(dec), "--kmax", "6",
                 "--init-kmax", "3", "--trace"])
    assert code == 0
    out = capsys.readouterr().out
    assert "[decode]" in out and "0 concealed" in out
    assert (dec / "trace.csv").exists()
    recon = dec / "recon.yuv"
    assert recon.exists()
    # yuv420: luma plus quarter-size chroma pair per frame
    assert recon.stat().st_size == 3 * (32 * 32 * 3 // 2)

    meta = SequenceMetadata.load(str(enc / "meta.json"))
    seq = synthesize_video(32, 32, 3, "textured-noise-pan", seed=4,
                           velocity=(1, 2), gop_length=2)
    from bcscast.frames import load_video

    got = load_video(str(recon), 32, 32, 3, fmt="yuv420")
    assert sequence_psnr(seq.frames, got.frames) > 20.0
    assert meta.total_rate == int(rate)


def test_cli_transmit_records_scales(tmp_path, capsys):
    enc = tmp_path / "enc"
    assert main(["encode", *_SMALL, "--rate", str(_rate_for()),
                 "--out", str(enc)]) == 0
    tx = tmp_path / "tx"
    code = main(["transmit", str(enc), "--out", str(tx), "--csnr-db", "25",
                 "--dump-plan"])
    assert code == 0
    assert "[transmit]" in capsys.readouterr().out
    assert (tx / "received.bin").exists()
    assert (tx / "plan.csv").exists()
    meta = SequenceMetadata.load(str(tx / "meta.json"))
    tr = meta.transmission
    assert tr["csnr_db"] == 25.0
    assert len(tr["sample_scales"]) == 3
    assert all(s > 0 for s in tr["sample_scales"])
    batches = read_packet_dump(str(tx / "received.bin"), meta)
    assert len(batches) == 3


def test_cli_transmit_noiseless_then_decode(tmp_path, capsys):
    enc = tmp_path / "enc"
    assert main(["encode", *_SMALL, "--rate", str(_rate_for(rho=0.5)),
                 "--out", str(enc)]) == 0
    tx = tmp_path / "tx"
    assert main(["transmit", str(enc), "--out", str(tx),
                 "--csnr-db", "inf"]) == 0
    dec = tmp_path / "dec"
    assert main(["decode", str(tx), "--out", str(dec), "--kmax", "6",
                 "--init-kmax", "3"]) == 0
    assert (dec / "recon.yuv").exists()
    capsys.readouterr()


def test_cli_simulate_and_report(tmp_path, capsys):
    out = tmp_path / "sweep"
    lo = _rate_for(width=32, height=32, frames=2, rho=0.25)
    rates = [str(lo), str(lo + 400), str(lo + 800), str(lo + 1200)]
    code = main(["simulate", "--pattern", "textured-noise-pan",
                 "--width", "32", "--height", "32", "--frames", "2",
                 "--gop", "2", "--synth-seed", "4",
                 "--rate", ",".join(rates), "--csnr-db", "25",
                 "--kmax", "4", "--init-kmax", "2",
                 "--label", "adaptive", "--out", str(out)])
    assert code == 0
    assert "[simulate]" in capsys.readouterr().out
    report = out / "report.csv"
    assert report.exists()
    rows = pipeline.read_report_csv(str(report))
    assert len(rows) == 4
    assert {r["label"] for r in rows} == {"adaptive"}

    out2 = tmp_path / "sweep2"
    code = main(["simulate", "--pattern", "textured-noise-pan",
                 "--width", "32", "--height", "32", "--frames", "2",
                 "--gop", "2", "--synth-seed", "4",
                 "--rate", ",".join(rates), "--csnr-db", "25",
                 "--kmax", "4", "--init-kmax", "2", "--solver", "spl",
                 "--label", "fixed", "--out", str(out2)])
    assert code == 0
    capsys.readouterr()

    rep = tmp_path / "rep"
    code = main(["report", str(report), str(out2 / "report.csv"),
                 "--out", str(rep)])
    assert code == 0
    text = capsys.readouterr().out
    assert "bd-psnr" in text
    assert (rep / "bd_table.csv").exists()
    for fig in ("rd_psnr.png", "rd_msssim.png"):
        path = rep / fig
        assert path.exists()
        assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    table = (rep / "bd_table.csv").read_text().splitlines()
    assert table[0] == "csnr_db,baseline,method,bd_psnr_db,bd_ms_ssim"
    assert len(table) == 3  # both directions of one pair


def test_cli_config_file_with_flag_override(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({
        "pattern": "textured-noise-pan", "width": 32, "height": 32,
        "frames": 2, "gop_length": 2, "synth_seed": 9, "kmax": 4,
    }))
    enc = tmp_path / "enc"
    code = main(["encode", "--config", str(cfg_path), "--frames", "3",
                 "--rate", str(_rate_for()), "--out", str(enc)])
    assert code == 0
    meta = SequenceMetadata.load(str(enc / "meta.json"))
    assert meta.frame_count == 3  # flag beats file


def test_cli_encode_deterministic(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    rate = str(_rate_for())
    assert main(["encode", *_SMALL, "--rate", rate, "--out", str(a)]) == 0
    assert main(["encode", *_SMALL, "--rate", rate, "--out", str(b)]) == 0
    assert (a / "packets.bin").read_bytes() == (b / "packets.bin").read_bytes()


def test_cli_error_exit_codes(tmp_path, capsys):
    # infeasible rate: below the metadata overhead
    code = main(["encode", *_SMALL, "--rate", "10", "--out",
                 str(tmp_path / "x")])
    assert code == 2
    assert "error:" in capsys.readouterr().err
    # missing input directory
    code = main(["decode", str(tmp_path / "nope"), "--out",
                 str(tmp_path / "y")])
    assert code == 2
    capsys.readouterr()


def test_load_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"block_sizes": 8}')
    with pytest.raises(ConfigError):
        load_config(str(path))
