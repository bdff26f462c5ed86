import csv
import io
import json
import os
import subprocess
import sys

import pytest

from polylab.cli import (
    ConfigError,
    ExperimentConfig,
    config_from_dict,
    emit_csv,
    format_value,
    main,
    parse_config,
    render_csv,
    resolve_seed,
    run,
)


def _rows(path):
    lines = [ln for ln in open(path, newline="").read().split("\r\n") if ln and not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def test_defaults_filled():
    cfg = parse_config('{"command":"clt","T_list":[4,16,64],"beta_frac":0.25,"n_paths":20000}')
    assert (cfg.d, cfg.K, cfg.h, cfg.dt, cfg.chunk_size) == (3, 1.0, 0.25, 0.05, 256)
    assert cfg.horizons() == [4.0, 16.0, 64.0]
    assert cfg.notes == []


def test_constraint_names_field():
    with pytest.raises(ConfigError, match=r"h: constraint h <= K/2"):
        parse_config('{"command":"clt","h":0.9,"K":1}')
    with pytest.raises(ConfigError, match="dt"):
        parse_config('{"command":"clt","dt":-1}')


def test_rounding_note():
    cfg = parse_config('{"command":"clt","dt":0.03,"T_list":[4]}')
    assert cfg.horizons()[0] == pytest.approx(3.99)
    assert cfg.notes == ["T=4 rounded to 133*0.03 = 3.99"]


def test_unknown_key_and_syntax_errors():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config('{"command":"clt","betta":1}')
    with pytest.raises(ConfigError, match=r"line 2 column 15"):
        parse_config('{"command":"clt",\n "T_list": [4,}')
    with pytest.raises(ConfigError, match="command"):
        parse_config('{"command":"nope"}')
    with pytest.raises(ConfigError, match="only one"):
        parse_config('{"command":"clt","beta_frac":0.1,"beta_abs":0.1}')


def test_config_echo_round_trip():
    cfg = parse_config('{"command":"yn-decay","T_list":[1,2],"beta_abs":0.3,"n_paths":10,"n_index":[2]}')
    again = config_from_dict(json.loads(cfg.echo()))
    assert again == cfg
    assert again.echo() == cfg.echo()


def test_format_value():
    assert format_value(1.0) == "1"
    assert format_value(0.1) == "0.10000000000000001"
    assert float(format_value(2 / 3)) == 2 / 3
    assert format_value(3) == "3"
    assert format_value(float("nan")) == "nan"


def test_emit_csv(tmp_path):
    p = emit_csv([], ["a", "b"], tmp_path / "x.csv")
    assert p.read_bytes() == b"a,b\r\n"
    p = emit_csv([(1.0, "1-0"), (0.5, "x,y")], ["a", "b"], tmp_path / "y.csv", comments=["hello"])
    assert p.read_bytes() == b'# hello\r\na,b\r\n1,1-0\r\n0.5,"x,y"\r\n'
    with pytest.raises(ValueError):
        render_csv([(1,)], ["a", "b"])
    # no temp files left behind
    assert sorted(f.name for f in tmp_path.iterdir()) == ["x.csv", "y.csv"]


def test_seed_precedence():
    assert resolve_seed(1, None, {}) == 1
    assert resolve_seed(1, None, {"POLYLAB_NOISE_SEED": "7"}) == 7
    assert resolve_seed(1, 9, {"POLYLAB_NOISE_SEED": "7"}) == 9
    with pytest.raises(ConfigError):
        resolve_seed(1, None, {"POLYLAB_NOISE_SEED": "x"})


def test_kernel_table(tmp_path):
    out = tmp_path / "k.csv"
    rep = run(config_from_dict({"command": "kernel-table", "n_radii": 64, "output_path": str(out)}))
    text = out.read_text()
    assert text.startswith("# K=1 d=3 V0=")
    rows = _rows(out)
    assert len(rows) == 64 and float(rows[-1]["V"]) == 0.0
    assert rep.summary["n_radii"] == 64


def test_hermite_check(tmp_path):
    out = tmp_path / "h.csv"
    run(config_from_dict({"command": "hermite-check", "n_index": [2, 0, 1], "output_path": str(out)}))
    rows = _rows(out)
    got = {(r["i1"], r["i2"], r["i3"], r["j"]): int(r["coeff"]) for r in rows}
    assert got == {("2", "0", "1", "0"): 1, ("0", "0", "1", "1"): -1}


def test_clt_zero_beta_matches_gaussian(tmp_path):
    out = tmp_path / "clt.csv"
    cfg = config_from_dict({"command": "clt", "beta_frac": 0.0, "T_list": [1.0], "dt": 0.25,
                            "n_paths": 20000, "antithetic": True, "output_path": str(out)})
    run(cfg)
    rows = _rows(out)
    assert [r["n_index"] for r in rows] == ["1-0-0", "2-0-0", "3-0-0", "4-0-0"]
    for r in rows:
        assert abs(float(r["moment"]) - float(r["gaussian_target"])) <= 3 * float(r["std_err"])
    # odd moments cancel exactly over antithetic pairs
    assert float(rows[0]["moment"]) == 0.0 and float(rows[2]["moment"]) == 0.0


def test_byte_identical_reruns_and_threads(tmp_path):
    base = {"command": "phase", "T": 1.0, "beta_frac_list": [0.25, 5.0], "n_paths": 300, "n_noise_seeds": 3,
            "chunk_size": 64}
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    run(config_from_dict({**base, "output_path": str(a)}), threads=1)
    run(config_from_dict({**base, "output_path": str(b)}), threads=1)
    run(config_from_dict({**base, "output_path": str(c)}), threads=4)
    # the echoed output_path differs, so compare everything else
    strip = lambda p: [ln for ln in p.read_bytes().split(b"\r\n") if not ln.startswith(b"# config")]
    assert strip(a) == strip(b) == strip(c)
    rows = _rows(a)
    assert list(rows[0]) == ["beta", "T", "log_m_hat_over_T", "ess", "noise_seed"]
    assert len(rows) == 6


def test_csv_echo_reparses(tmp_path):
    out = tmp_path / "m.csv"
    cfg = config_from_dict({"command": "mgf", "beta_abs": 0.4, "T_list": [1.0], "n_paths": 50,
                            "lambdas": [[1.0], [0.0, 0.5]], "output_path": str(out)})
    run(cfg)
    echo = [ln for ln in out.read_text().splitlines() if ln.startswith("# config: ")][0]
    assert config_from_dict(json.loads(echo[len("# config: "):])) == cfg
    assert list(_rows(out)[0]) == ["T", "lambda_norm", "mgf", "std_err", "target"]


def test_yn_and_second_moment_and_collision(tmp_path):
    run(config_from_dict({"command": "yn-decay", "beta_frac": 0.25, "T_list": [1.0, 2.0], "n_paths": 40,
                          "output_path": str(tmp_path / "y.csv")}))
    assert list(_rows(tmp_path / "y.csv")[0]) == ["T", "scaled_Yn", "std_err"]
    rep = run(config_from_dict({"command": "second-moment", "T_list": [2.0], "n_pairs": 2000,
                                "output_path": str(tmp_path / "s.csv")}))
    assert float(_rows(tmp_path / "s.csv")[0]["estimate"]) >= 1
    rep = run(config_from_dict({"command": "collision", "T_list": [2.0, 8.0], "n_pairs": 4000,
                                "output_path": str(tmp_path / "c.csv")}))
    assert rep.summary["loglog_slope"] < 0


def test_bound_json(tmp_path):
    out = tmp_path / "b.json"
    rep = run(config_from_dict({"command": "bound", "output_path": str(out)}))
    data = json.loads(out.read_text())
    assert data["beta_lower_bound"] == pytest.approx(data["g"] ** -0.5)
    assert abs(data["g_rel_diff"]) < 0.03
    assert rep.summary["g"] == data["g"]


def test_main_exit_codes(tmp_path, capsys, monkeypatch):
    bad = tmp_path / "bad.json"
    bad.write_text('{"command":"clt","h":0.9}')
    assert main(["clt", "--config", str(bad)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError" and "h <= K/2" in err["message"]
    bad.write_text('{"command": ')
    assert main(["clt", "--config", str(bad)]) == 2
    assert "line 1" in json.loads(capsys.readouterr().err)["message"]

    good = tmp_path / "good.json"
    good.write_text(json.dumps({"command": "phase", "T": 0.5, "beta_abs_list": [0.5], "n_paths": 20,
                                "n_noise_seeds": 1, "noise_seed": 1}))
    out = tmp_path / "p.csv"
    monkeypatch.setenv("POLYLAB_NOISE_SEED", "5")
    assert main(["phase", "--config", str(good), "--out", str(out)]) == 0
    assert _rows(out)[0]["noise_seed"] == "5"
    assert main(["phase", "--config", str(good), "--out", str(out), "--noise-seed", "8"]) == 0
    assert _rows(out)[0]["noise_seed"] == "8"
    report = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert report["config"]["noise_seed"] == 8 and len(report["build_id"]) == 12


def test_locale_independent_subprocess(tmp_path):
    out = tmp_path / "k.csv"
    env = {**os.environ, "LC_ALL": "de_DE.UTF-8", "LANG": "de_DE.UTF-8"}
    cfg = tmp_path / "c.json"
    cfg.write_text('{"command":"kernel-table","n_radii":32}')
    r = subprocess.run([sys.executable, "-m", "polylab.cli", "kernel-table", "--config", str(cfg), "--out", str(out)],
                       env=env, capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert float(_rows(out)[1]["r"]) == pytest.approx(2 / 31)
