import json

import pytest

from freqmark.cli import run, sub_seed

TINY = ["--epochs", "2", "--batch-size", "16"]


def _run(capsys, *argv):
    code = run([str(a) for a in argv])
    out = capsys.readouterr().out.strip().splitlines()
    return code, json.loads(out[-1])


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run(["gen-data", "--n", "24", "--length", "32", "--out", str(d / "load.csv")]) == 0
    assert run(["gen-data", "--kind", "pv", "--n", "24", "--length", "32", "--out", str(d / "pv.csv")]) == 0
    assert run(["train", "--data", str(d / "load.csv"), "--out", str(d / "b.wmk"), "--watermark-text", "AB", *TINY]) == 0
    assert run(["embed", "--bundle", str(d / "b.wmk"), "--data", str(d / "load.csv"), "--out", str(d / "wm.csv")]) == 0
    return d


def test_sub_seed_is_stable_and_distinct():
    assert sub_seed(0, "train") == sub_seed(0, "train")
    assert sub_seed(0, "train") != sub_seed(0, "embed")
    assert sub_seed(0, "train") != sub_seed(1, "train")


def test_gen_data_kinds(tmp_path, capsys):
    for kind in ("load", "pv", "sine"):
        code, out = _run(capsys, "gen-data", "--kind", kind, "--n", "4", "--length", "32", "--out", tmp_path / f"{kind}.csv")
        assert code == 0 and out["status"] == "ok"
        assert len((tmp_path / f"{kind}.csv").read_text().splitlines()) == 4


def test_extract_verify_fp(work, capsys):
    code, out = _run(capsys, "extract", "--bundle", work / "b.wmk", "--data", work / "wm.csv", "--out", work / "bits.txt")
    assert code == 0
    assert len((work / "bits.txt").read_text().split()) == 24
    code, out = _run(capsys, "verify", "--bundle", work / "b.wmk", "--data", work / "wm.csv", "--report", work / "v.json")
    assert code == 0 and 0.0 <= out["detection_rate"] <= 1.0
    assert json.loads((work / "v.json").read_text())["m"] == 16
    code, out = _run(capsys, "eval-fp", "--bundle", work / "b.wmk", "--original", work / "load.csv", "--watermarked", work / "wm.csv")
    assert code == 0 and set(out) >= {"false_positive_rate", "true_positive_rate"}


def test_fine_tune(work, capsys):
    code, out = _run(capsys, "fine-tune", "--bundle", work / "b.wmk", "--data", work / "pv.csv", "--out", work / "ft.wmk", *TINY)
    assert code == 0 and (work / "ft.wmk").exists()


def test_evaluations(work, capsys):
    code, out = _run(
        capsys, "eval-invisibility", "--original", work / "load.csv", "--modified", work / "wm.csv",
        "--stats-csv", work / "stats.csv", "--projection-csv", work / "proj.csv",
    )
    assert code == 0 and {"rmse", "fid", "cs", "ss", "kl"} <= set(out)
    assert len((work / "proj.csv").read_text().splitlines()) == 49
    code, out = _run(capsys, "eval-robustness", "--bundle", work / "b.wmk", "--data", work / "wm.csv", "--noise-stds", "0.01", "--missing-ratios", "0.1")
    assert code == 0 and len(out["rows"]) == 3
    code, out = _run(capsys, "eval-capacity", "--data", work / "load.csv", "--lengths", "8,16", *TINY)
    assert code == 0 and [r["m"] for r in out["rows"]] == [8, 16]


def test_attack_and_demo(work, capsys):
    code, out = _run(capsys, "attack-ats", "--data", work / "wm.csv", "--surrogates", "1", "--surrogate-epochs", "1", "--classifier-epochs", "2")
    assert code == 0 and out["level"] == "weak"
    code, out = _run(capsys, "attack-ats", "--level", "strong", "--data", work / "wm.csv")
    assert code == 2 and out["error"] == "MissingResource"
    code, out = _run(capsys, "demo-freq-bias", "--epochs", "3", "--hidden", "8")
    assert code == 0 and {"delta_1", "delta_5", "delta_10"} <= set(out["rows"][0])
    code, out = _run(capsys, "gen-data", "--kind", "sine", "--n", "2", "--length", "16", "--out", work / "s.csv")
    assert code == 2 and out["error"] == "AliasError"


def test_baselines(work, capsys):
    for method in ("lsb", "dwt"):
        out_csv = work / f"{method}.csv"
        code, _ = _run(capsys, "baseline", "--method", method, "--action", "embed", "--data", work / "load.csv", "--out", out_csv, "--watermark-bits", "1011")
        assert code == 0
        code, out = _run(capsys, "baseline", "--method", method, "--action", "extract", "--data", out_csv, "--watermark-bits", "1011")
        assert code == 0 and out["success_rate"] == 1.0
    code, out = _run(capsys, "baseline", "--method", "lsb", "--action", "extract", "--data", work / "load.csv")
    assert code == 1 and out["status"] == "usage_error"


def test_exit_codes(work, tmp_path, capsys):
    code, out = _run(capsys, "frobnicate")
    assert code == 1 and out["status"] == "usage_error"
    code, out = _run(capsys)
    assert code == 1
    code, out = _run(capsys, "verify", "--bundle", tmp_path / "missing.wmk", "--data", tmp_path / "x.csv")
    assert code == 2 and out["status"] == "error"
    code, out = _run(capsys, "train", "--data", work / "load.csv", "--out", tmp_path / "b.wmk")
    assert code == 1  # watermark flag missing


def test_corrupt_bundle_exits_two(work, tmp_path, capsys):
    raw = bytearray((work / "b.wmk").read_bytes())
    raw[-40] ^= 0xFF
    (tmp_path / "bad.wmk").write_bytes(bytes(raw))
    code, out = _run(capsys, "verify", "--bundle", tmp_path / "bad.wmk", "--data", work / "wm.csv")
    assert code == 2


def test_config_file_and_env(tmp_path, capsys, monkeypatch):
    ini = tmp_path / "c.ini"
    ini.write_text("[global]\nseed = 5\n\n[gen-data]\nn = 3\nlength = 8\n")
    code, _ = _run(capsys, "--config", ini, "gen-data", "--out", tmp_path / "a.csv")
    assert code == 0 and len((tmp_path / "a.csv").read_text().splitlines()) == 3
    monkeypatch.setenv("WMARK_CONFIG", str(ini))
    code, _ = _run(capsys, "gen-data", "--out", tmp_path / "b.csv", "--n", "2")
    assert code == 0 and len((tmp_path / "b.csv").read_text().splitlines()) == 2
    monkeypatch.delenv("WMARK_CONFIG")
    code, _ = _run(capsys, "--seed", "5", "gen-data", "--n", "3", "--length", "8", "--out", tmp_path / "ref.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "ref.csv").read_bytes()
    monkeypatch.setenv("WMARK_CONFIG", str(ini))
    ini.write_text("[gen-data]\nbogus = 1\n")
    code, out = _run(capsys, "gen-data", "--out", tmp_path / "c.csv")
    assert code == 1


def test_rerun_is_byte_identical(tmp_path):
    for sub in ("a", "b"):
        d = tmp_path / sub
        d.mkdir()
        assert run(["--seed", "3", "gen-data", "--n", "16", "--length", "32", "--out", str(d / "x.csv")]) == 0
        assert run(["--seed", "3", "train", "--data", str(d / "x.csv"), "--out", str(d / "b.wmk"), "--watermark-random", "8", *TINY]) == 0
    assert (tmp_path / "a" / "x.csv").read_bytes() == (tmp_path / "b" / "x.csv").read_bytes()
    assert (tmp_path / "a" / "b.wmk").read_bytes() == (tmp_path / "b" / "b.wmk").read_bytes()
