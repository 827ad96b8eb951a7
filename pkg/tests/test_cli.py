import json

import numpy as np
import pytest
from PIL import Image

from ctxcodec.cli import main
from ctxcodec.codec import CodecModel
from ctxcodec.config import TrainingConfig
from ctxcodec.training import save_checkpoint

from .conftest import synthetic_frame


@pytest.fixture
def workspace(tmp_path, tiny_cfg):
    frames_dir = tmp_path / "frames"
    frames_dir.mkdir()
    for t in range(8):
        arr = (synthetic_frame(32, 32, t, seed=1).transpose(1, 2, 0) * 255).astype(np.uint8)
        Image.fromarray(arr).save(frames_dir / f"f{t:03d}.png")
    config = tmp_path / "seq.cfg"
    config.write_text(
        f"source = {frames_dir}\nformat = rgb8\nwidth = 32\nheight = 32\nframes = 8\n"
    )
    ckpt = tmp_path / "model.pt"
    model = CodecModel(tiny_cfg)
    save_checkpoint(ckpt, model, TrainingConfig(lambda_index=2), "final", 0, "mse")
    return tmp_path, config, ckpt


def test_encode_decode_round_trip(workspace, capsys):
    tmp, config, ckpt = workspace
    out = tmp / "seq.lstc"
    stats = tmp / "stats.json"
    code = main([
        "encode", "--config", str(config), "--checkpoint", str(ckpt),
        "--lambda-index", "2", "--frames", "4", "--out", str(out),
        "--stats-out", str(stats),
    ])
    assert code == 0
    printed = capsys.readouterr().out
    assert "bpp" in printed
    meta = json.loads(stats.read_text())
    assert len(meta["frames"]) == 4
    from ctxcodec.bitstream import bpp_of

    assert meta["bpp"] == pytest.approx(bpp_of(out.read_bytes()))

    decoded = tmp / "decoded"
    code = main([
        "decode", "--checkpoint", str(ckpt), str(out),
        "--out", str(decoded), "--expect-hashes", str(stats),
    ])
    assert code == 0
    assert "verification ok" in capsys.readouterr().out
    assert len(list(decoded.glob("*.png"))) == 4


def test_decode_detects_tampering(workspace, capsys):
    tmp, config, ckpt = workspace
    out = tmp / "seq.lstc"
    stats = tmp / "stats.json"
    assert main([
        "encode", "--config", str(config), "--checkpoint", str(ckpt),
        "--lambda-index", "2", "--frames", "3", "--out", str(out),
        "--stats-out", str(stats),
    ]) == 0
    capsys.readouterr()
    meta = json.loads(stats.read_text())
    meta["frames"][2]["hash"] = "0" * 64
    stats.write_text(json.dumps(meta))
    code = main([
        "decode", "--checkpoint", str(ckpt), str(out),
        "--out", str(tmp / "d2"), "--expect-hashes", str(stats),
    ])
    assert code == 4
    assert "frame 2" in capsys.readouterr().err


def test_truncated_bitstream_is_data_error(workspace, capsys):
    tmp, config, ckpt = workspace
    out = tmp / "seq.lstc"
    assert main([
        "encode", "--config", str(config), "--checkpoint", str(ckpt),
        "--lambda-index", "2", "--frames", "3", "--out", str(out),
    ]) == 0
    capsys.readouterr()
    out.write_bytes(out.read_bytes()[:-10])
    code = main(["decode", "--checkpoint", str(ckpt), str(out), "--out", str(tmp / "d3")])
    assert code == 3


def test_lambda_mismatch_warns_but_encodes(workspace, capsys):
    tmp, config, ckpt = workspace
    code = main([
        "encode", "--config", str(config), "--checkpoint", str(ckpt),
        "--lambda-index", "0", "--frames", "2", "--out", str(tmp / "w.lstc"),
    ])
    assert code == 0
    assert "warning" in capsys.readouterr().err


def test_missing_checkpoint_is_config_error(workspace, capsys):
    tmp, config, _ = workspace
    code = main([
        "encode", "--config", str(config), "--checkpoint", str(tmp / "none.pt"),
        "--lambda-index", "0", "--out", str(tmp / "x.lstc"),
    ])
    assert code == 2


def test_eval_writes_csv_and_report(workspace, capsys):
    tmp, config, ckpt = workspace
    outdir = tmp / "eval"
    code = main([
        "eval", "--config", str(config), "--checkpoint", str(ckpt),
        "--frames", "5", "--intra-period", "4", "--out", str(outdir),
    ])
    assert code == 0
    csv = (outdir / "rd.csv").read_text()
    assert csv.startswith("sequence,lambda,bpp,psnr_db,msssim,frames,intra_period")
    assert (outdir / "report.txt").read_text().startswith("coding protocol report")


def test_bdrate_command(tmp_path, capsys):
    rows = ["sequence,lambda,bpp,psnr_db,msssim,frames,intra_period"]
    rows += [f"s,{lam:g},{bpp},{q},,96,32" for lam, bpp, q in
             zip((85, 170, 380, 840), (0.05, 0.1, 0.2, 0.4), (30, 33, 36, 39))]
    anchor = tmp_path / "a.csv"
    anchor.write_text("\n".join(rows) + "\n")
    rows2 = [rows[0]] + [f"s,{lam:g},{bpp * 0.9},{q},,96,32" for lam, bpp, q in
                         zip((85, 170, 380, 840), (0.05, 0.1, 0.2, 0.4), (30, 33, 36, 39))]
    test = tmp_path / "t.csv"
    test.write_text("\n".join(rows2) + "\n")
    assert main(["bdrate", "--anchor", str(anchor), "--test", str(test)]) == 0
    out = capsys.readouterr().out
    assert "-10.0" in out


def test_heatmap_command(workspace, tmp_path):
    tmp, config, ckpt = workspace
    out = tmp / "heat.png"
    code = main([
        "heatmap", "--config", str(config), "--checkpoint", str(ckpt),
        "--frame-index", "2", "--out", str(out),
    ])
    assert code == 0
    img = Image.open(out)
    assert img.size == (32, 32)
    assert img.mode == "L"


def test_train_command_smoke(tmp_path, capsys):
    frames_dir = tmp_path / "frames"
    frames_dir.mkdir()
    for t in range(4):
        arr = (synthetic_frame(32, 32, t, seed=2).transpose(1, 2, 0) * 255).astype(np.uint8)
        Image.fromarray(arr).save(frames_dir / f"f{t:03d}.png")
    config = tmp_path / "train.cfg"
    config.write_text(
        f"source = {frames_dir}\nformat = rgb8\nwidth = 32\nheight = 32\nframes = 4\n"
        "lambda_index = 1\nclip_frames = 2\nseed = 11\n"
        "stages = motion:1:2:1e-3,full2:1:2:1e-3\n"
    )
    out = tmp_path / "trained.pt"
    # full-width model is heavy; this only checks the CLI plumbing end to end
    code = main(["train", "--config", str(config), "--out", str(out), "--variant", "Mb"])
    assert code == 0
    assert out.is_file()
    from ctxcodec.training import load_checkpoint

    model, meta = load_checkpoint(out)
    assert meta["lambda_index"] == 1
    assert meta["stage"] == "final"
