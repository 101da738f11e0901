import csv
import json

import pytest

from cgm import cli, harness
from cgm.errors import ResourceLimitError

SMALL = {
    "shape": {"n": 30, "replicates": 3, "s_grid": [0.5, 1.0], "tolerance": 0.5},
    "legendre": {"alpha_grid": [1.5, 2.0, 4.0]},
    "duality": {"points": 5},
    "stationary-lpp": {"ray_length": 30, "replicates": 3},
    "busemann": {"n_list": [5, 10], "replicates": 3, "xi_list": [[0.3, 0.7], [0.7, 0.3]]},
    "queue-fixpoint": {"customers": 300, "stations": 5, "early_station": 1, "late_station": 3,
                       "replicates": 3},
    "queue-geometric": {"customers": 2000, "replicates": 2},
    "percolation-cone": {"n": 20, "N": 20, "stabilization_N": 12, "replicates": 3},
    "ergodic": {"n_list": [5, 20], "replicates": 3},
}


def cfg(exp, **kw):
    return harness.parse_config({"experiment": exp, **SMALL[exp], **kw})


@pytest.mark.parametrize("exp", harness.EXPERIMENTS)
def test_every_experiment_runs_and_is_deterministic(exp):
    a = harness.run(cfg(exp, seed=4))
    b = harness.run(cfg(exp, seed=4))
    assert a.records == b.records and a.config_hash == b.config_hash
    assert json.dumps(a.to_dict()["summary"]) == json.dumps(b.to_dict()["summary"])
    cols = harness.COLUMNS[exp]
    for rec in a.records:
        assert set(rec) <= set(cols)


def test_worker_count_independence():
    c1 = cfg("ergodic", replicates=8, workers=1)
    c8 = cfg("ergodic", replicates=8, workers=8)
    assert c1.hash() == c8.hash()
    assert harness.run(c1).records == harness.run(c8).records


def test_replicate_streams_differ_and_are_ordered():
    recs = harness.run(cfg("shape", replicates=4)).records
    assert [r["replicate"] for r in recs] == [0, 0, 1, 1, 2, 2, 3, 3]
    assert len({r["value"] for r in recs}) == len(recs)


@pytest.mark.parametrize("raw,field", [
    ({"experiment": "nope"}, "experiment"),
    ({"experiment": "shape", "n": 0}, "n"),
    ({"experiment": "shape", "seed": -1}, "seed"),
    ({"experiment": "shape", "family": {"kind": "geometric", "mean": 0.5}}, "family"),
    ({"experiment": "shape", "bogus": 1}, "bogus"),
    ({"experiment": "queue-fixpoint", "alpha": 0.5}, "alpha"),
    ({"experiment": "legendre", "family": {"kind": "bernoulli_capped", "p1": 0.5}}, "family"),
    ({"experiment": "queue-fixpoint", "stations": 3, "late_station": 5}, "late_station"),
])
def test_validation_names_the_field(raw, field):
    with pytest.raises(harness.ConfigError, match=field):
        harness.parse_config(raw)


def test_resource_guard_before_allocation():
    with pytest.raises(ResourceLimitError):
        harness.run(cfg("shape", n=100_000, max_area=1e6, replicates=1))


def test_empty_replicates_give_header_only_csv(tmp_path):
    bundle = harness.run(cfg("busemann", replicates=0))
    paths = harness.emit(bundle, "csv", tmp_path)
    rows = list(csv.reader(paths[0].open()))
    assert rows == [harness.COLUMNS["busemann"] + ["config_hash"]]


def test_csv_columns_fixed_and_hash_embedded(tmp_path):
    bundle = harness.run(cfg("ergodic"))
    csv_path, json_path = harness.emit(bundle, "csv", tmp_path)
    rows = list(csv.DictReader(csv_path.open()))
    assert list(rows[0]) == harness.COLUMNS["ergodic"] + ["config_hash"]
    assert {r["config_hash"] for r in rows} == {bundle.config_hash}
    assert json.loads(json_path.read_text())["config_hash"] == bundle.config_hash


def test_json_round_trips_through_parser(tmp_path):
    c = cfg("duality", seed=9)
    bundle = harness.run(c)
    (path,) = harness.emit(bundle, "json", tmp_path)
    doc = json.loads(path.read_text())
    again = harness.parse_config(doc["config"])
    assert again.data == c.data and again.hash() == doc["config_hash"]
    assert {v["name"] for v in doc["verdicts"]} == {"round_trip", "duality"}


def test_emit_reports_path_on_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    bundle = harness.run(cfg("legendre"))
    with pytest.raises(OSError, match="file"):
        harness.emit(bundle, "json", blocker / "sub")


def test_cli_exit_codes(tmp_path, capsys):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"experiment": "legendre", "alpha_grid": [2.0, 3.0]}))
    assert cli.main(["legendre", "--config", str(conf), "--out", str(tmp_path)]) == 0
    assert "PASS involution" in capsys.readouterr().out
    assert cli.main(["shape", "--config", str(conf)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"experiment": "shape", "n": "big"}))
    assert cli.main(["shape", "--config", str(bad)]) == 2
    assert "n:" in capsys.readouterr().err
    with pytest.raises(SystemExit) as e:
        cli.main(["unknown-experiment"])
    assert e.value.code != 0
    # a failing verdict gives exit code 1
    strict = tmp_path / "strict.json"
    strict.write_text(json.dumps({"experiment": "shape", "n": 10, "replicates": 2,
                                  "tolerance": 1e-6}))
    assert cli.main(["shape", "--config", str(strict), "--out", str(tmp_path),
                     "--format", "csv"]) == 1


def test_cli_config_without_experiment_and_overrides(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"points": 3}))
    assert cli.main(["duality", "--config", str(conf), "--seed", "5", "--workers", "2",
                     "--out", str(tmp_path)]) == 0
    (out,) = tmp_path.glob("duality-*.json")
    doc = json.loads(out.read_text())
    assert doc["config"]["seed"] == 5 and len(doc["records"]) == 3


def test_cli_prints_schema(capsys):
    assert cli.main(["schema"]) == 0
    assert json.loads(capsys.readouterr().out)["title"] == "cgm experiment configuration"
