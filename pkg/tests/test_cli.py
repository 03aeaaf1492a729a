"""CLI behavior: exit codes, determinism, coverage, manifest hygiene."""

import hashlib
import json

import pytest

from twistlab import cli


def run(args):
    return cli.main(args)


def read(path):
    return path.read_text()


def test_config_error_bad_kmax(tmp_path):
    rc = run(["build", "--out", str(tmp_path), "--k0", "4", "--kmax", "5"])
    assert rc == cli.EXIT_CONFIG


def test_config_error_eps_list_not_increasing(tmp_path):
    rc = run(["sweep", "--out", str(tmp_path), "--map", "shear",
              "--eps-list", "0.05", "0.01"])
    assert rc == cli.EXIT_CONFIG


def test_config_error_missing_file(tmp_path):
    rc = run(["build", "--out", str(tmp_path), "--config",
              str(tmp_path / "nope.json")])
    assert rc == cli.EXIT_CONFIG


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"map": "counterexample", "k0": 4}))
    out = tmp_path / "out"
    rc = run(["sweep", "--config", str(cfg), "--out", str(out),
              "--map", "shear", "--eps-list", "0.02", "0.04",
              "--grid-step", "0.01"])
    assert rc == cli.EXIT_OK
    assert (out / "sweep_shear.csv").exists()


def test_build_writes_map_card_and_manifest(tmp_path):
    out = tmp_path / "b"
    rc = run(["build", "--out", str(out)])
    assert rc == cli.EXIT_OK
    card = read(out / "map_card.csv").strip().splitlines()
    assert card[0] == "k,epsilon_k,fixed_x,fixed_y"
    assert len(card) == 10  # k0 .. k0+8
    eps = [float(line.split(",")[1]) for line in card[1:]]
    assert all(a > b or a == b == 0.0 for a, b in zip(eps, eps[1:]))
    manifest = json.loads(read(out / "manifest.json"))
    assert all(c["passed"] for c in manifest["checks"])
    for entry in manifest["files"]:
        digest = hashlib.sha256((out / entry["path"]).read_bytes()).hexdigest()
        assert digest == entry["sha256"]


def test_build_determinism(tmp_path):
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert run(["build", "--out", str(out1)]) == cli.EXIT_OK
    assert run(["build", "--out", str(out2)]) == cli.EXIT_OK
    assert read(out1 / "map_card.csv") == read(out2 / "map_card.csv")


def test_sweep_csv_schema_and_determinism(tmp_path):
    args = ["sweep", "--map", "shear", "--eps-list", "0.01", "0.03",
            "--grid-step", "0.01"]
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    assert run(args + ["--out", str(out1)]) == cli.EXIT_OK
    assert run(args + ["--out", str(out2)]) == cli.EXIT_OK
    csv1 = read(out1 / "sweep_shear.csv")
    assert csv1 == read(out2 / "sweep_shear.csv")
    lines = csv1.strip().splitlines()
    assert lines[0] == ("epsilon,status,x,y,residual,index,"
                        "min_displacement,grid_step")
    # every epsilon covered by a record or a certificate
    assert len(lines) >= 3
    for line in lines[1:]:
        cells = line.split(",")
        assert cells[1] in ("fixed", "empty", "ambiguous")
        if cells[1] == "empty":
            assert float(cells[6]) > 0.0
    assert (out1 / "sweep_shear.svg").exists()
    svg = read(out1 / "sweep_shear.svg")
    assert svg.startswith("<svg") and 'width="800" height="600"' in svg


def test_sweep_counterexample_finds_fixed_points(tmp_path):
    out = tmp_path / "c"
    rc = run(["sweep", "--map", "counterexample", "--out", str(out)])
    assert rc == cli.EXIT_OK
    lines = read(out / "sweep_counterexample.csv").strip().splitlines()
    fixed = [l for l in lines[1:] if l.split(",")[1] == "fixed"]
    assert fixed  # the predicted translations carry fixed points


def test_plot_from_csv(tmp_path):
    out = tmp_path / "p"
    assert run(["sweep", "--map", "shear", "--eps-list", "0.01",
                "--grid-step", "0.01", "--out", str(out)]) == cli.EXIT_OK
    rc = run(["plot", str(out / "sweep_shear.csv"), "--out", str(out)])
    assert rc == cli.EXIT_OK
    assert (out / "sweep_shear.svg").exists()


def test_verify_command(tmp_path):
    out = tmp_path / "v"
    rc = run(["verify", "--out", str(out)])
    assert rc == cli.EXIT_OK
    report = json.loads(read(out / "verify_report.json"))
    assert all(entry["passed"] for entry in report)
    names = {entry["name"] for entry in report}
    assert "mutation.gradient_flip_detected" in names


def test_brouwer_translation_verified(tmp_path):
    out = tmp_path / "bt"
    rc = run(["brouwer", "--map", "translation", "--out", str(out)])
    assert rc == cli.EXIT_OK
    payload = json.loads(read(out / "brouwer_translation.json"))
    assert payload["verdict"] == "verified"
    assert payload["status"] == "terminated-remark21"
    assert all(v["ok"] for v in payload["verification"])


def test_brouwer_tangency_ambiguous_exit(tmp_path):
    out = tmp_path / "ta"
    rc = run(["brouwer", "--map", "tangency", "--out", str(out)])
    assert rc == cli.EXIT_AMBIGUOUS


def test_brouwer_hedgehog_periodicity_reported(tmp_path):
    out = tmp_path / "hh"
    rc = run(["brouwer", "--map", "periodic-hedgehog", "--out", str(out)])
    assert rc == cli.EXIT_CHECK  # infinite periodic line: honest failure
    payload = json.loads(read(out / "brouwer_periodic-hedgehog.json"))
    assert payload["verdict"] == "failed-honestly"
    assert payload["failure"]["kind"] == "step-limit"
    assert payload["periodicity"] is not None
    assert abs(payload["periodicity"]["N"]) == 1
    assert payload["periodicity"]["W0"] is not None


def test_brouwer_unknown_map(tmp_path):
    rc = run(["brouwer", "--map", "nope", "--out", str(tmp_path)])
    assert rc == cli.EXIT_CONFIG
