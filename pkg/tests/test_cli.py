import csv
import hashlib
import io
import json

import pytest
from click.testing import CliRunner

from zrpmeta import cli
from zrpmeta.cli import config_hash, csv_body, main, resolve_config, run_subcommand
from zrpmeta.errors import ArgumentError, NumericError


def rows(path):
    return list(csv.DictReader(io.StringIO(csv_body(path))))


def write_config(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_walk_emits_half_capacities(tmp_path):
    res = CliRunner().invoke(main, ["walk", "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    caps = {r["quantity"]: float(r["value"]) for r in rows(tmp_path / "walk.csv") if r["quantity"].startswith("cap_")}
    assert set(caps) == {"cap_0_1", "cap_0_2", "cap_1_2"}
    assert all(v == pytest.approx(0.5, abs=1e-14) for v in caps.values())


def test_measure_two_sites(tmp_path):
    cfg = write_config(tmp_path, {"walk": {"graph": "complete", "kappa": 2}, "N": [1000]})
    res = CliRunner().invoke(main, ["measure", "--config", cfg, "--out", str(tmp_path / "o")])
    assert res.exit_code == 0, res.output
    z = [r for r in rows(tmp_path / "o" / "measure.csv") if r["quantity"] == "Z"]
    assert float(z[0]["value"]) == pytest.approx(2.4565, abs=5e-5)


def test_header_and_json_embed_config(tmp_path):
    run_subcommand("measure", {"N": [100]}, tmp_path, seed=42)
    text = (tmp_path / "measure.csv").read_text()
    header = [line for line in text.splitlines() if line.startswith("#")]
    joined = "\n".join(header)
    for key in ("config_sha256", "seed: 42", "log base: natural", "zrpmeta:"):
        assert key in joined
    doc = json.loads((tmp_path / "measure.json").read_text())
    assert doc["config"]["seed"] == 42 and doc["config"]["N"] == [100]
    expected = hashlib.sha256(json.dumps(doc["config"], sort_keys=True, separators=(",", ":")).encode()).hexdigest()
    assert doc["config_sha256"] == expected == config_hash(doc["config"])
    assert doc["config_sha256"] in joined


def test_schema_error_is_path_precise(tmp_path):
    cfg = write_config(tmp_path, {"walk": {"rates": [[0, 1], ["a", 0]]}})
    res = CliRunner().invoke(main, ["walk", "--config", cfg, "--out", str(tmp_path)])
    assert res.exit_code == 2
    assert "$.walk.rates[1][0]" in res.output


def test_unknown_key_rejected():
    with pytest.raises(ArgumentError, match=r"\$"):
        resolve_config({"N": [10], "colour": "red"}, "measure")


def test_model_error_exit_two(tmp_path):
    cfg = write_config(tmp_path, {"walk": {"rates": [[0, 1, 0], [1, 0, 0], [0, 0, 0]]}})
    res = CliRunner().invoke(main, ["walk", "--config", cfg, "--out", str(tmp_path)])
    assert res.exit_code == 2


def test_invalid_json_exit_two(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    res = CliRunner().invoke(main, ["measure", "--config", str(p), "--out", str(tmp_path)])
    assert res.exit_code == 2
    assert "line 1" in res.output


def test_resource_cap_exit_three(tmp_path):
    cfg = write_config(tmp_path, {"N": [200]})
    res = CliRunner().invoke(main, ["capacity", "--config", cfg, "--cap-states", "1000", "--out", str(tmp_path)])
    assert res.exit_code == 3


def test_numeric_failure_exit_four(tmp_path, monkeypatch):
    def broken(*a, **k):
        raise NumericError("no convergence")

    monkeypatch.setattr(cli, "solve_poisson", broken)
    res = CliRunner().invoke(main, ["poisson", "--out", str(tmp_path)])
    assert res.exit_code == 4


def test_environment_overrides(tmp_path):
    cfg = write_config(tmp_path, {"N": [50]})
    env = {"ZRPMETA_CONFIG": cfg, "ZRPMETA_OUT": str(tmp_path / "env"), "ZRPMETA_SEED": "77"}
    res = CliRunner().invoke(main, ["measure"], env=env)
    assert res.exit_code == 0, res.output
    doc = json.loads((tmp_path / "env" / "measure.json").read_text())
    assert doc["config"]["seed"] == 77 and doc["config"]["N"] == [50]


@pytest.mark.parametrize(
    "command,cfg",
    [
        ("measure", {"N": [100, 400]}),
        ("poisson", {"N": [30]}),
        ("capacity", {"N": [20]}),
        ("gap", {"N": [50]}),
        ("simulate", {"walk": {"rates": [[0, 1, 0.5], [1, 0, 2], [0.5, 2, 0]]}, "N": [60], "replicas": 3, "t_max": 0.3}),
        ("compare", {"N": [60], "replicas": 2, "t_max": 0.3, "seed": 5}),
        ("superharmonic", {"walk": {"graph": "complete", "kappa": 2}, "N": [300], "m_max": 8}),
    ],
)
def test_reruns_are_byte_identical(tmp_path, command, cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    run_subcommand(command, cfg, a)
    run_subcommand(command, cfg, b)
    files = sorted(p.name for p in a.glob("*.csv"))
    assert files
    for name in files:
        assert csv_body(a / name) == csv_body(b / name)


def test_transition_table_columns(tmp_path):
    cfg = {"N": [60], "replicas": 2, "t_max": 0.5}
    run_subcommand("simulate", cfg, tmp_path)
    table = rows(tmp_path / "transitions.csv")
    assert table
    assert list(table[0]) == ["N", "replica", "t", "from_well", "to_well", "delta_fraction"]
    assert all(r["from_well"] != r["to_well"] for r in table)


def test_seed_changes_simulation(tmp_path):
    cfg = {"N": [60], "replicas": 2, "t_max": 0.5}
    run_subcommand("simulate", cfg, tmp_path / "a", seed=1)
    run_subcommand("simulate", cfg, tmp_path / "b", seed=2)
    assert csv_body(tmp_path / "a" / "transitions.csv") != csv_body(tmp_path / "b" / "transitions.csv")
