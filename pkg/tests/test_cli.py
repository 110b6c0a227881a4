import hashlib
import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from helpers import write_pipeline_fixture
from quadseq import codec, shapes
from quadseq.cli import main
from quadseq.mesh import load_obj, save_obj


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    report = json.loads(out.out) if code == 0 and out.out.strip() else None
    return code, report, out.err


def only(report):
    (value,) = report["outputs"].values()
    return value


@pytest.fixture
def cube_obj(tmp_path):
    p = tmp_path / "cube.obj"
    save_obj(shapes.cube(), p)
    return p


def test_tokenize_cube(tmp_path, cube_obj, capsys):
    code, report, _ = run(capsys, "tokenize", cube_obj, "-o", tmp_path / "c.txt")
    assert code == 0
    assert len(codec.read_tokens(tmp_path / "c.txt")) == 72
    assert only(report)["n_tokens"] == 72
    assert report["inputs"][cube_obj.as_posix()] == hashlib.sha256(cube_obj.read_bytes()).hexdigest()
    code, _, _ = run(capsys, "tokenize", cube_obj, "-o", tmp_path / "d.bin", "--format", "bin", "--delimiters")
    assert code == 0
    toks = codec.read_tokens(tmp_path / "d.bin")
    assert len(toks) == 74 and toks[0] == codec.BOS and toks[-1] == codec.EOS


def test_tokenize_many_into_directory(tmp_path, cube_obj, capsys):
    other = tmp_path / "grid.obj"
    save_obj(shapes.grid(2, 2), other)
    out = tmp_path / "toks"
    out.mkdir()
    assert run(capsys, "--jobs", 2, "tokenize", cube_obj, other, "-o", out)[0] == 0
    assert sorted(p.name for p in out.iterdir()) == ["cube.txt", "grid.txt"]


def test_malformed_obj_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.obj"
    bad.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
    code, _, err = run(capsys, "tokenize", bad, "-o", tmp_path / "x.txt")
    assert code == 1 and "line 4" in err


def test_missing_input_and_usage_errors(tmp_path, capsys):
    assert run(capsys, "tokenize", tmp_path / "nope.obj", "-o", tmp_path / "x")[0] == 3
    assert run(capsys, "tokenize")[0] == 2
    assert run(capsys, "frobnicate")[0] == 2
    assert run(capsys, "--jobs", 0, "tokenize", tmp_path / "a.obj", "-o", "x")[0] == 2


def test_detokenize_round_trip(tmp_path, cube_obj, capsys):
    run(capsys, "tokenize", cube_obj, "-o", tmp_path / "c.txt")
    code, report, _ = run(capsys, "detokenize", tmp_path / "c.txt", "-o", tmp_path / "back.obj")
    assert code == 0
    back = load_obj(tmp_path / "back.obj")
    assert codec.canonicalize(back) == codec.canonicalize(codec.normalize(shapes.cube()))


def test_detokenize_truncated(tmp_path, cube_obj, capsys):
    run(capsys, "tokenize", cube_obj, "-o", tmp_path / "c.txt")
    toks = codec.read_tokens(tmp_path / "c.txt")
    codec.write_tokens(tmp_path / "t.txt", toks[:-5])
    code, report, _ = run(capsys, "detokenize", tmp_path / "t.txt", "-o", tmp_path / "p.obj", "--mode", "lenient")
    assert code == 0
    assert load_obj(tmp_path / "p.obj").n_faces == 5
    diag = only(report)
    assert diag["trailing_tokens_dropped"] == 7
    code, _, err = run(capsys, "detokenize", tmp_path / "t.txt", "-o", tmp_path / "q.obj")
    assert code == 1 and err


def test_quadify(tmp_path, capsys):
    src = tmp_path / "tri.obj"
    save_obj(shapes.grid(3, 3, triangulate=True), src)
    code, report, _ = run(capsys, "quadify", src, "-o", tmp_path / "q.obj", "--solver", "exact")
    assert code == 0
    q = load_obj(tmp_path / "q.obj")
    assert q.n_quads == 9 and q.n_triangles == 0


def test_filter_exit_codes(tmp_path, cube_obj, capsys):
    code, report, _ = run(capsys, "filter", cube_obj, "-o", tmp_path / "v.json")
    assert code == 1
    verdicts = json.loads((tmp_path / "v.json").read_text())
    assert next(iter(verdicts.values()))["failed_rules"] == ["face_count"]
    cfg = tmp_path / "f.json"
    cfg.write_text(json.dumps({"face_min": 1, "face_max": 100}))
    assert run(capsys, "filter", cube_obj, "--config", cfg)[0] == 0


def test_score(tmp_path, cube_obj, capsys):
    code, report, _ = run(capsys, "score", "--ref", cube_obj, "--gen", cube_obj, "--points", 2000, "--seed", 1)
    assert code == 0
    out = report["outputs"]
    assert {"cd", "hd", "qr", "c_frac", "r_frac", "l_avg", "ring_face_ratio", "rings", "lines"} <= set(out)
    assert out["qr"] == 1.0 and out["rings"] == 3 and out["c_frac"] == 0
    assert run(capsys, "score", "--ref", cube_obj, "--gen", cube_obj)[0] == 2


def test_pair_and_tdpo_eval(tmp_path, capsys):
    write_pipeline_fixture(tmp_path)
    code, report, _ = run(capsys, "pair", "--candidates", tmp_path / "cands", "--tau", 24,
                          "--pairs-per-condition", 2, "--seed", 3, "-o", tmp_path / "pairs")
    assert code == 0
    manifest = json.loads((tmp_path / "pairs" / "manifest.json").read_text())
    assert len(manifest) == 4
    assert all(row["scores"]["winner"]["l_avg"] > row["scores"]["loser"]["l_avg"] for row in manifest)
    code, _, _ = run(capsys, "toy", "logprobs", "--seed", 1, "--ref-seed", 1,
                     "--pairs", tmp_path / "pairs" / "manifest.json", "-o", tmp_path / "lp")
    assert code == 0
    code, report, _ = run(capsys, "tdpo-eval", "--pairs", tmp_path / "pairs" / "manifest.json",
                          "--logprobs", tmp_path / "lp", "--beta", 0.1, "-o", tmp_path / "t.json")
    assert code == 0
    result = json.loads((tmp_path / "t.json").read_text())
    assert result["loss"] == pytest.approx(np.log(2), abs=1e-12)
    assert [p["z"] for p in result["per_pair"]] == [0.0] * 4
    assert run(capsys, "tdpo-eval", "--pairs", tmp_path / "pairs" / "manifest.json",
               "--logprobs", tmp_path / "missing")[0] == 3


def test_toy_forward_and_generate(tmp_path, capsys):
    toks = tmp_path / "t.txt"
    codec.write_tokens(toks, np.arange(48))
    code, report, _ = run(capsys, "toy", "forward", "--seed", 0, "--tokens", toks)
    assert code == 0
    assert report["outputs"]["stages"] == {"stage0": [48, 16], "stage1": [12, 32], "stage2": [4, 64]}
    assert report["outputs"]["logits_shape"] == [48, 1027]
    outs = []
    for name in ("a", "b"):
        code, report, _ = run(capsys, "toy", "generate", "--seed", 0, "--max-tokens", 60, "-o", tmp_path / f"{name}.txt")
        assert code == 0
        outs.append((tmp_path / f"{name}.txt").read_bytes())
    assert outs[0] == outs[1]
    assert run(capsys, "toy", "generate", "--seed", 0, "--dims", "16,32")[0] == 2
    assert run(capsys, "toy", "forward")[0] == 2


def test_toy_weight_file(tmp_path, capsys):
    toks = tmp_path / "t.txt"
    codec.write_tokens(toks, np.arange(24))
    w = tmp_path / "w.qghw"
    _, r1, _ = run(capsys, "toy", "forward", "--seed", 5, "--tokens", toks, "--save-weights", w)
    _, r2, _ = run(capsys, "toy", "forward", "--seed", 0, "--tokens", toks, "--weights", w)
    assert r1["outputs"]["next_token_loss"] == r2["outputs"]["next_token_loss"]


def pipeline_outputs(root):
    out = root / "out"
    return {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}


def test_pipeline_end_to_end(tmp_path, capsys):
    write_pipeline_fixture(tmp_path)
    code, report, _ = run(capsys, "--root", tmp_path, "pipeline", "--config", "pipeline.toml")
    assert code == 0
    assert report["outputs"]["pair"]["pairs"] == 4
    assert "tdpo" in report["outputs"]
    first = pipeline_outputs(tmp_path)
    assert {"manifest.json", "summary.json", "tdpo.json", "pipeline.json"} <= set(first)
    shutil.rmtree(tmp_path / "out")
    assert run(capsys, "--root", tmp_path, "--jobs", 2, "pipeline", "--config", "pipeline.toml")[0] == 0
    assert pipeline_outputs(tmp_path) == first


def test_pipeline_everything_filtered(tmp_path, capsys):
    cfg = write_pipeline_fixture(tmp_path)
    cfg.write_text(cfg.read_text().replace("face_min = 1", "face_min = 500"))
    code, report, err = run(capsys, "--root", tmp_path, "pipeline", "--config", cfg)
    assert code == 0 and "warning" in err
    assert json.loads((tmp_path / "out" / "manifest.json").read_text()) == []
    assert report["warnings"]


def test_pipeline_missing_dir(tmp_path, capsys):
    cfg = write_pipeline_fixture(tmp_path)
    shutil.rmtree(tmp_path / "cands" / "b")
    code, _, err = run(capsys, "--root", tmp_path, "pipeline", "--config", cfg)
    assert code == 3 and "stage score" in err


def test_pipeline_bad_config(tmp_path, capsys):
    cfg = tmp_path / "p.json"
    cfg.write_text(json.dumps({"tau": 24}))
    code, _, err = run(capsys, "pipeline", "--config", cfg)
    assert code == 1 and "stage config" in err


def test_console_entry_point(tmp_path, cube_obj):
    out = subprocess.run([sys.executable, "-m", "quadseq.cli", "tokenize", str(cube_obj), "-o", str(tmp_path / "c.txt")],
                         capture_output=True, text=True)
    assert out.returncode == 0 and json.loads(out.stdout)["command"] == "tokenize"
    exe = shutil.which("quadseq")
    if exe:
        assert subprocess.run([exe, "--version"], capture_output=True).returncode == 0
