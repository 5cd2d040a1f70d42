import json
import os
import subprocess
import sys

import numpy as np
import pytest

from vcsnet.cli import main
from vcsnet.exceptions import ConfigError, FileFormatError
from vcsnet.io import (RunConfig, decode_vcub, encode_vcub, export_pgm_ppm, import_pgm_ppm, read_pnm, read_vcub,
                       to_bytes8, write_vcub)
from vcsnet.metrics import psnr


def test_vcub_roundtrip_bitwise(tmp_path, rng):
    recs = {"a": rng.standard_normal((3, 4, 2)).astype(np.float32),
            "b": rng.standard_normal(5),
            "ü": np.arange(7, dtype=np.uint8),
            "s": np.array(3.5)}
    write_vcub(tmp_path / "f.vcub", recs)
    back = read_vcub(tmp_path / "f.vcub")
    assert list(back) == list(recs)
    for k in recs:
        assert back[k].dtype == recs[k].dtype and back[k].shape == recs[k].shape
        assert back[k].tobytes() == recs[k].tobytes()


def test_vcub_layout_bytes():
    raw = encode_vcub({"m": np.array([[1, 2]], dtype=np.uint8)})
    assert raw == b"VCUB" + bytes([1, 1, 0, 1, 0]) + b"m" + bytes([2, 2]) + \
        (1).to_bytes(4, "little") + (2).to_bytes(4, "little") + bytes([1, 2])


def test_vcub_rejects_bad_files():
    good = encode_vcub({"x": np.zeros(3)})
    with pytest.raises(FileFormatError):
        decode_vcub(b"XXXX" + good[4:])
    with pytest.raises(FileFormatError):
        decode_vcub(good[:-1])
    with pytest.raises(FileFormatError):
        decode_vcub(good + b"\0")
    with pytest.raises(FileFormatError):
        encode_vcub({"x": np.zeros(3, dtype=np.int64)})


def test_run_config_roundtrip():
    cfg = RunConfig()
    cfg.train.epochs_per_phase = (1, 2, 3)
    cfg.model.channels = 8
    again = RunConfig.from_json(cfg.to_json())
    assert again == cfg
    assert RunConfig.from_json(again.to_json()).to_json() == cfg.to_json()


def test_run_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="train.epochz"):
        RunConfig.from_dict({"train": {"epochz": 3}})
    with pytest.raises(ConfigError, match="optimizer"):
        RunConfig.from_dict({"optimizer": {}})
    with pytest.raises(ConfigError):
        RunConfig.from_json("{not json")
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"gap_tv": {"iters": 0}})


def test_pgm_cases(tmp_path, rng):
    assert to_bytes8(np.array([0.5, 1.0, 0.0, 2.0, -1.0])).tolist() == [128, 255, 0, 255, 0]
    paths = export_pgm_ppm(np.ones((3, 5, 2)), tmp_path)
    assert [p.name for p in paths] == ["frame_000.pgm", "frame_001.pgm"]
    data = paths[0].read_bytes()
    assert data.startswith(b"P5\n5 3\n255\n") and set(data[len(b"P5\n5 3\n255\n"):]) == {255}
    cube = rng.random((6, 4, 3))
    back = import_pgm_ppm(export_pgm_ppm(cube, tmp_path / "g"))
    assert np.max(np.abs(back - cube)) <= 0.5 / 255 + 1e-12
    color = rng.random((4, 6, 2, 3))
    paths = export_pgm_ppm(color, tmp_path / "c")
    assert paths[0].suffix == ".ppm" and read_pnm(paths[0]).shape == (4, 6, 3)
    assert np.max(np.abs(import_pgm_ppm(paths) - color)) <= 0.5 / 255 + 1e-12


def run(argv, capsys):
    try:
        code = main(argv)
    except SystemExit as exc:
        code = exc.code
    out = capsys.readouterr()
    return code, out.out, out.err


def test_gen_masks_roundtrip_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a.vcub", tmp_path / "b.vcub"
    for p in (a, b):
        assert run(["gen-masks", "--w", "32", "--h", "32", "--t", "4", "--seed", "1", "--out", str(p)], capsys)[0] == 0
    assert read_vcub(a)["mask"].shape == (32, 32, 4)
    assert a.read_bytes() == b.read_bytes()


def test_usage_errors(tmp_path, capsys):
    code, _, err = run(["gen-masks", "--w", "0", "--h", "4", "--t", "2", "--out", str(tmp_path / "m")], capsys)
    assert code == 2 and err.startswith("error: usage:") and err.count("\n") == 1
    code, _, err = run(["frobnicate"], capsys)
    assert code == 2


def static_scene(w=32, h=32, t=4):
    return np.full((w, h, t), 0.35)


def test_pipeline_static_scene(tmp_path, capsys):
    write_vcub(tmp_path / "x.vcub", {"x": static_scene()})
    assert run(["gen-masks", "--w", "32", "--h", "32", "--t", "4", "--out", str(tmp_path / "m.vcub")], capsys)[0] == 0
    assert run(["simulate", "--video", str(tmp_path / "x.vcub"), "--mask", str(tmp_path / "m.vcub"),
                "--out", str(tmp_path / "y.vcub")], capsys)[0] == 0
    code, out, _ = run(["reconstruct", "--y", str(tmp_path / "y.vcub"), "--mask", str(tmp_path / "m.vcub"),
                        "--out", str(tmp_path / "r.vcub"), "--export-dir", str(tmp_path / "frames")], capsys)
    assert code == 0 and out.startswith("seconds: ")
    x = read_vcub(tmp_path / "r.vcub")["x"]
    assert psnr(x, static_scene()) >= 40.0
    assert len(list((tmp_path / "frames").glob("*.pgm"))) == 4
    code, _, _ = run(["reconstruct", "--y", str(tmp_path / "y.vcub"), "--mask", str(tmp_path / "m.vcub"),
                      "--out", str(tmp_path / "r1.vcub"), "--tiles", "1x1"], capsys)
    assert (tmp_path / "r1.vcub").read_bytes() == (tmp_path / "r.vcub").read_bytes()


def test_simulate_shape_mismatch(tmp_path, capsys):
    write_vcub(tmp_path / "x.vcub", {"x": np.zeros((8, 8, 2))})
    write_vcub(tmp_path / "m.vcub", {"mask": np.zeros((8, 6, 2))})
    code, _, err = run(["simulate", "--video", str(tmp_path / "x.vcub"), "--mask", str(tmp_path / "m.vcub"),
                        "--out", str(tmp_path / "y.vcub")], capsys)
    assert code == 3 and err.startswith("error: data:") and "[8, 8, 2]" in err and "[8, 6, 2]" in err


def test_unfold_requires_model(tmp_path, capsys):
    write_vcub(tmp_path / "y.vcub", {"y": np.zeros((8, 8))})
    write_vcub(tmp_path / "m.vcub", {"mask": np.ones((8, 8, 2))})
    code, _, err = run(["reconstruct", "--y", str(tmp_path / "y.vcub"), "--mask", str(tmp_path / "m.vcub"),
                        "--method", "unfold", "--out", str(tmp_path / "r.vcub")], capsys)
    assert code == 2 and "--model" in err


def test_missing_and_corrupt_files(tmp_path, capsys):
    code, _, err = run(["export", "--cube", str(tmp_path / "none.vcub"), "--dir", str(tmp_path)], capsys)
    assert code == 4 and err.startswith("error: file:")
    (tmp_path / "bad.vcub").write_bytes(b"junk")
    assert run(["export", "--cube", str(tmp_path / "bad.vcub"), "--dir", str(tmp_path)], capsys)[0] == 4


def test_bad_config_names_key(tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps({"train": {"lr": 1}}))
    code, _, err = run(["train", "--config", str(tmp_path / "c.json"), "--out-dir", str(tmp_path / "o")], capsys)
    assert code == 6 and "train.lr" in err


def tiny_config(path):
    cfg = {"model": {"channels": 4, "blocks": 1},
           "train": {"epochs_per_phase": [1, 1, 1], "samples": 4, "batch_size": 2, "frame_dims": [16, 16, 2],
                     "lr0": 0.001}}
    path.write_text(json.dumps(cfg))


def test_train_and_eval(tmp_path, capsys):
    tiny_config(tmp_path / "c.json")
    out = tmp_path / "run"
    assert run(["train", "--config", str(tmp_path / "c.json"), "--out-dir", str(out)], capsys)[0] == 0
    for name in ("config.json", "loss.csv", "phase1.vcub", "phase2.vcub", "phase3.vcub", "model.vcub", "mask.vcub"):
        assert (out / name).exists()
    assert run(["synth", "--count", "2", "--w", "16", "--h", "16", "--t", "2", "--out", str(tmp_path / "s.vcub")],
               capsys)[0] == 0
    code, table, _ = run(["eval", "--model", str(out / "model.vcub"), "--suite", str(tmp_path / "s.vcub"),
                          "--mask", str(out / "mask.vcub"), "--report", str(tmp_path / "r.csv"), "--n-new", "2"],
                         capsys)
    assert code == 0 and "new-mask-2" in table
    text = (tmp_path / "r.csv").read_text()
    assert "seen-mask,average" in text and "new-mask-1,average" in text
    code, _, _ = run(["reconstruct", "--y", str(tmp_path / "nothing.vcub"), "--mask", str(out / "mask.vcub"),
                      "--method", "unfold", "--model", str(out / "model.vcub"), "--out", str(tmp_path / "x")], capsys)
    assert code == 4


def _cli(args, env):
    return subprocess.run([sys.executable, "-m", "vcsnet.cli", *args], env=env, capture_output=True, text=True)


def test_cli_byte_reproducible_single_thread(tmp_path):
    env = dict(os.environ, VCS_THREADS="1")
    tiny_config(tmp_path / "c.json")
    outputs = []
    for k in range(2):
        d = tmp_path / f"r{k}"
        d.mkdir()
        steps = [["gen-masks", "--w", "16", "--h", "16", "--t", "2", "--seed", "3", "--out", str(d / "m.vcub")],
                 ["synth", "--count", "1", "--w", "16", "--h", "16", "--t", "2", "--out", str(d / "s.vcub")]]
        for s in steps:
            assert _cli(s, env).returncode == 0
        scene = read_vcub(d / "s.vcub")["scenes"][0]
        write_vcub(d / "x.vcub", {"x": scene})
        for s in (["simulate", "--video", str(d / "x.vcub"), "--mask", str(d / "m.vcub"), "--sigma", "0.01",
                   "--seed", "4", "--out", str(d / "y.vcub")],
                  ["reconstruct", "--y", str(d / "y.vcub"), "--mask", str(d / "m.vcub"), "--iters", "5",
                   "--out", str(d / "r.vcub")],
                  ["train", "--config", str(tmp_path / "c.json"), "--out-dir", str(d / "t")]):
            proc = _cli(s, env)
            assert proc.returncode == 0, proc.stderr
        outputs.append([(d / n).read_bytes() for n in ("m.vcub", "s.vcub", "y.vcub", "r.vcub", "t/model.vcub",
                                                       "t/loss.csv")])
    assert outputs[0] == outputs[1]
