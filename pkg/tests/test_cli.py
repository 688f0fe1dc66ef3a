from __future__ import annotations

import csv
import io
import json
import os
import stat

import pytest

from rpcfpu.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, main, mpe_table

VERDICT_KEYS = {"op", "k", "class", "status", "diff", "sign_match", "suppression_reason"}


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_check_mul_identity(capsys):
    code, out, _ = run(capsys, "check", "--op", "mul", "--a", "0x3F800000", "--b", "0x3F800000",
                       "--k", "7")
    d = json.loads(out)
    assert code == EXIT_OK
    assert set(d["verdict"]) == VERDICT_KEYS
    assert d["verdict"]["status"] == "NoError" and d["verdict"]["diff"] == 0
    assert d["trace"]["exponent_case"] == "CommonCase1" and d["trace"]["diff_predicted"] == 0


def test_check_sqrt_negative_is_suppressed(capsys):
    code, out, _ = run(capsys, "check", "--op", "sqrt", "--a", "0xBF800000", "--k", "7")
    d = json.loads(out)
    assert code == EXIT_OK
    assert d["verdict"]["status"] == "Suppressed" and d["verdict"]["diff"] is None
    assert d["verdict"]["suppression_reason"] == "Exception" and d["result"]["flags"] & 1
    assert d["trace"] is None


@pytest.mark.parametrize("a,b", [("0x3FAB1234", "0x40A9F000"), ("0xC2F60000", "0x3E99999A"),
                                 ("0x01000000", "0x3E800000")])
def test_check_div_in_bounds(capsys, a, b):
    code, out, _ = run(capsys, "check", "--op", "div", "--a", a, "--b", b, "--k", "7")
    v = json.loads(out)["verdict"]
    assert code == EXIT_OK and v["status"] == "NoError" and -1 <= v["diff"] <= 3


@pytest.mark.parametrize("argv", [
    ["check", "--op", "add", "--a", "zz", "--b", "0x1"],
    ["check", "--op", "add", "--a", "0x1"],
    ["check", "--op", "mod", "--a", "0x1", "--b", "0x1"],
    ["check", "--op", "add", "--a", "0x1", "--b", "0x1", "--k", "0"],
    ["check", "--op", "sqrt", "--a", "0x1", "--b", "0x1"],
    ["verify-bounds", "--op", "mul", "--k-list", "7,x"],
    ["verify-bounds", "--op", "mul", "--k-list", "30"],
    ["mpe", "--k-list", ""],
    ["campaign", "--op", "mul", "--format", "xml"],
    ["campaign"],
    ["sites", "--op", "mul", "--k", "99"],
    ["nonsense"],
    [],
])
def test_usage_errors_exit_2(capsys, argv, tmp_path):
    if argv[:1] == ["campaign"]:
        argv = argv + ["--out", str(tmp_path)]
    code, _, err = run(capsys, *argv)
    assert code == EXIT_USAGE and "error" in err


def test_verify_bounds_add(capsys, tmp_path):
    js = tmp_path / "vb.json"
    code, out, _ = run(capsys, "verify-bounds", "--op", "add", "--k-list", "1,7,16", "--n", "20000",
                       "--trace-n", "50", "--corner", "add", "--json-out", str(js))
    assert code == EXIT_OK and out.strip().endswith("violations=0")
    d = json.loads(js.read_text())
    for k in ("1", "7", "16"):
        for cls in ("SSADD", "DSADD"):
            hist = d["k"][k]["random"][cls]["diff_histogram"]
            assert set(map(int, hist)) <= {-1, 0, 1}
        assert d["k"][k]["corner"]["diff_histogram"] == {"1": d["k"][k]["corner"]["hits"]}


def test_verify_bounds_mul_corner_and_search(capsys):
    code, out, _ = run(capsys, "verify-bounds", "--op", "mul", "--k-list", "1,5", "--n", "0",
                       "--corner", "mul", "--search-diff4", "50000")
    assert code == EXIT_OK
    assert "corner=mul k=1 skipped" in out
    assert "pattern ab=01 cd=11 -> {'1':" in out and "pattern ab=10 cd=10 -> {'2':" in out
    assert "max_diff=3" in out or "max_diff=2" in out


def test_verify_bounds_is_reproducible(capsys, tmp_path):
    outs = []
    for name in ("a.json", "b.json"):
        run(capsys, "verify-bounds", "--op", "div", "--k-list", "4", "--n", "3000", "--trace-n", "20",
            "--seed", "3", "--json-out", str(tmp_path / name))
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]


def test_campaign_writes_reproducible_files(capsys, tmp_path):
    args = ["campaign", "--op", "mul,add", "--k-list", "4,16", "--sample", "20", "--vectors", "100"]
    code, out, _ = run(capsys, *args, "--out", str(tmp_path / "one"))
    assert code == EXIT_OK
    assert out.count("op=") == 4 and "umud_fraction" in out
    run(capsys, *args, "--out", str(tmp_path / "two"))
    names = sorted(os.listdir(tmp_path / "one"))
    assert names == sorted(os.listdir(tmp_path / "two")) and len(names) == 8
    for n in names:
        assert (tmp_path / "one" / n).read_bytes() == (tmp_path / "two" / n).read_bytes()
    d = json.loads((tmp_path / "one" / "campaign_mul_k4.json").read_text())
    assert d["experiments"] == 20 * 2 * 100 == sum(d["counts"].values())
    rows = list(csv.DictReader(io.StringIO((tmp_path / "one" / "campaign_add_k16.csv").read_text())))
    assert list(rows[0]) == ["site", "stuck_value", "masked", "umd", "umud", "umuc", "fp"]
    assert len(rows) == 40


def test_campaign_from_config_file(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"op": ["sqrt"], "k": [7], "sites": ["sqrt.result[0]"],
                               "vectors_per_fault": 100, "input_seed": 2}))
    code, out, _ = run(capsys, "campaign", "--config", str(cfg), "--out", str(tmp_path),
                       "--format", "json")
    assert code == EXIT_OK and "experiments=200" in out
    assert os.listdir(tmp_path) == ["cfg.json", "campaign_sqrt_k7.json"] or \
        sorted(os.listdir(tmp_path)) == ["campaign_sqrt_k7.json", "cfg.json"]
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "campaign", "--config", str(bad), "--out", str(tmp_path))[0] == EXIT_USAGE
    bad.write_text(json.dumps({"op": "mul", "k": 7, "sites": []}))
    assert run(capsys, "campaign", "--config", str(bad), "--out", str(tmp_path))[0] == EXIT_USAGE


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_campaign_unwritable_output(capsys, tmp_path):
    locked = tmp_path / "locked"
    locked.mkdir()
    locked.chmod(stat.S_IRUSR | stat.S_IXUSR)
    code, _, _ = run(capsys, "campaign", "--op", "mul", "--sample", "2", "--vectors", "10",
                     "--out", str(locked / "sub"))
    assert code == EXIT_USAGE


def test_campaign_output_path_is_a_file(capsys, tmp_path):
    f = tmp_path / "file"
    f.write_text("x")
    code, _, err = run(capsys, "campaign", "--op", "mul", "--sample", "2", "--vectors", "10",
                       "--out", str(f))
    assert code == EXIT_USAGE and "not writable" in err


def test_thread_env_is_validated(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("RPC_FPU_THREADS", "lots")
    code, _, _ = run(capsys, "campaign", "--op", "mul", "--sample", "2", "--vectors", "10",
                     "--out", str(tmp_path))
    assert code == EXIT_USAGE
    monkeypatch.setenv("RPC_FPU_THREADS", "2")
    code, _, _ = run(capsys, "campaign", "--op", "mul", "--sample", "4", "--vectors", "10",
                     "--out", str(tmp_path))
    assert code == EXIT_OK


def test_mpe(capsys):
    code, out, _ = run(capsys, "mpe", "--k-list", "1,7,16")
    lines = out.strip().splitlines()
    assert code == EXIT_OK
    assert lines[1].split("\t") == ["1", "50", "150"]
    assert lines[2].split("\t") == ["7", "0.78125", "2.34375"]
    code, out, _ = run(capsys, "mpe", "--k-list", "16", "--json")
    assert json.loads(out) == mpe_table([16])
    assert mpe_table([16])[0]["add_sub_percent"] == 100 / 2 ** 16


def test_sites(capsys):
    code, out, _ = run(capsys, "sites", "--op", "add", "--k", "7")
    lines = out.strip().splitlines()
    assert code == EXIT_OK and lines[0] == "net_name\twidth\top_kinds"
    assert any(line.startswith("adder.grs\t3\t") for line in lines)
    assert any(line.startswith("cmp.diff\t16\t") for line in lines)
    code, out, _ = run(capsys, "sites", "--op", "add", "--k", "7", "--count")
    assert int(out) == 227 + 136


def test_check_error_detected_exit_code(monkeypatch, capsys):
    import rpcfpu.cli as cli
    from rpcfpu.softfpu import fpu_op as real
    from rpcfpu.softfpu import FpuResult
    from rpcfpu.float_bits import PackedFloat32

    def corrupt(op, a, b, faults=()):
        r = real(op, a, b)
        return FpuResult(PackedFloat32(r.word ^ (1 << 22)), r.flags)

    monkeypatch.setattr(cli, "fpu_op", corrupt)
    code, out, _ = run(capsys, "check", "--op", "mul", "--a", "0x3FC00000", "--b", "0x3FC00000")
    assert code == EXIT_FAIL and json.loads(out)["verdict"]["status"] == "ErrorDetected"
