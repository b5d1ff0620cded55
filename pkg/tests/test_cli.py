import json
from importlib import resources
from pathlib import Path

import pytest

from tvbarc.cli import main

GENSPEC = str(resources.files("tvbarc").joinpath("data/example_genspec.json"))
STEP = str(resources.files("tvbarc").joinpath("data/example_step_genspec.json"))


@pytest.fixture
def in_tmp(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("TVBARC_OUT_DIR", raising=False)
    return tmp_path


def _manifest(d):
    return json.loads((Path(d) / "manifest.json").read_text())


def test_simulate_writes_counts_and_manifest(in_tmp):
    assert main(["simulate", GENSPEC, "--out", "sim"]) == 0
    assert sorted(p.name for p in Path("sim").iterdir()) == ["counts.csv", "genspec.json", "manifest.json"]
    lines = Path("sim/counts.csv").read_text().splitlines()
    assert len(lines) == 160 and lines[1].startswith("2020-01-01,")
    m = _manifest("sim")
    assert m["command"] == "simulate" and m["seed"] == 2020
    assert m["inputs"][0]["path"] == GENSPEC and len(m["inputs"][0]["sha256"]) == 64
    assert "wall_clock_seconds" in m and m["version"]


def test_fit_outputs(in_tmp):
    main(["simulate", GENSPEC, "--out", "sim"])
    rc = main(["fit", "sim/counts.csv", "--burnin", "50", "--samples", "60", "--grid-points", "20", "--out", "fit"])
    assert rc == 0
    names = {p.name for p in Path("fit").iterdir()}
    assert names == {"mu.csv", "mu.json", "ar_1.csv", "ar_1.json", "chain.csv", "chain_meta.json", "manifest.json"}
    mu = Path("fit/mu.csv").read_text().splitlines()
    assert mu[0] == "date,x,mean,lower,upper" and len(mu) == 21
    chain = Path("fit/chain.csv").read_text().splitlines()
    assert len(chain) == 61
    m = _manifest("fit")
    assert m["config"]["sampler_config"]["burn_in"] == 50 and m["seed"] == 0


def test_fit_p10_emits_ten_lag_files(in_tmp):
    main(["simulate", GENSPEC, "--out", "sim"])
    assert main(["fit", "sim/counts.csv", "--p", "10", "--burnin", "5", "--samples", "10", "--out", "fit"]) == 0
    assert sorted(p.name for p in Path("fit").glob("ar_*.csv")) == sorted(f"ar_{i}.csv" for i in range(1, 11))


def test_fit_multiple_chains(in_tmp):
    main(["simulate", GENSPEC, "--out", "sim"])
    args = ["fit", "sim/counts.csv", "--burnin", "10", "--samples", "20", "--chains", "2", "--workers", "1"]
    assert main(args + ["--out", "a"]) == 0
    assert main(args[:-2] + ["--workers", "2", "--out", "b"]) == 0
    for name in ("chain_1.csv", "chain_2.csv", "mu.csv"):
        assert Path("a", name).read_bytes() == Path("b", name).read_bytes()


def test_fit_defaults(in_tmp, monkeypatch):
    import tvbarc.cli as cli

    seen = {}

    def fake_run_chains(series, spec, config, n_chains, max_workers):
        seen.update(spec=spec, config=config)
        raise cli.NumericalFailure("stop here")

    monkeypatch.setattr(cli, "run_chains", fake_run_chains)
    main(["simulate", GENSPEC, "--out", "sim"])
    assert main(["fit", "sim/counts.csv", "--out", "fit"]) == 3
    assert seen["spec"].p == 1 and seen["spec"].k1 == 6 and seen["spec"].k2 == 6
    assert seen["config"].burn_in == 10_000 and seen["config"].retained == 20_000
    assert not Path("fit").exists()


def test_changepoint_on_step_fixture(in_tmp):
    main(["simulate", STEP, "--out", "step"])
    assert main(["changepoint", "step/counts.csv", "--out", "cp"]) == 0
    doc = json.loads(Path("cp/changepoint.json").read_text())
    assert doc["tau_hat"] == 101 and doc["date_at_tau"] == "2020-04-10"
    assert set(doc) == {"tau_hat", "date_at_tau", "base_mean", "shift", "sse_reduction"}


def test_acf_default_lags(in_tmp):
    main(["simulate", GENSPEC, "--out", "sim"])
    assert main(["acf", "sim/counts.csv", "--out", "acf"]) == 0
    lines = Path("acf/acf.csv").read_text().splitlines()
    assert lines[0] == "lag,rho" and len(lines) == 32 and lines[1] == "0,1.0"


def test_ingest_default_range(in_tmp):
    Path("r.csv").write_text(
        "id,timestamp,keyword\n1,2020-01-01T05:00:00Z,cyberbullying\n2,2020-06-07T23:00:00Z,Twitter victim\n"
        "2,2020-06-07T23:00:00Z,Twitter victim\n3,bad,online abuse\n"
    )
    assert main(["ingest", "r.csv", "--out", "ing"]) == 0
    for label in ("CY", "ON", "TW", "TOTAL"):
        assert len(Path("ing", f"{label}.csv").read_text().splitlines()) == 160
    m = _manifest("ing")
    assert m["summary"]["rejected"] == 1 and m["summary"]["duplicates"] == 1
    assert m["summary"]["totals"] == {"CY": 1, "ON": 0, "TW": 1, "TOTAL": 2}


def test_ingest_empty_file_warns(in_tmp):
    Path("r.csv").write_text("")
    assert main(["ingest", "r.csv", "--out", "ing"]) == 0
    assert any("empty" in w for w in _manifest("ing")["warnings"])
    assert Path("ing/TOTAL.csv").read_text().splitlines()[1] == "2020-01-01,0"


def test_bad_class_map_leaves_nothing(in_tmp):
    Path("r.csv").write_text("id,timestamp,keyword\n")
    Path("c.json").write_text("{not json")
    assert main(["ingest", "r.csv", "--classes", "c.json", "--out", "ing"]) == 2
    assert sorted(p.name for p in Path(".").iterdir()) == ["c.json", "r.csv"]


def test_exit_codes(in_tmp):
    with pytest.raises(SystemExit) as e:
        main(["fit"])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main(["fit", "x.csv", "--p", "-2"])
    assert e.value.code == 1
    assert main(["fit", "missing.csv", "--out", "f"]) == 2
    Path("short.csv").write_text("date,count\n2020-01-01,3\n")
    assert main(["fit", "short.csv", "--out", "f"]) == 2
    assert main(["fit", "short.csv", "--level", "1.5", "--out", "f"]) == 1
    Path("gap.csv").write_text("date,count\n2020-01-01,3\n2020-01-03,3\n")
    assert main(["acf", "gap.csv", "--out", "f"]) == 2
    assert not Path("f").exists()


def test_refuses_foreign_directory(in_tmp):
    Path("busy").mkdir()
    Path("busy/notes.txt").write_text("keep me")
    assert main(["simulate", GENSPEC, "--out", "busy"]) == 1
    assert Path("busy/notes.txt").read_text() == "keep me"


def test_rerun_replaces_previous_output(in_tmp):
    assert main(["simulate", GENSPEC, "--out", "sim"]) == 0
    assert main(["simulate", GENSPEC, "--seed", "3", "--out", "sim"]) == 0
    assert _manifest("sim")["seed"] == 3
    assert [p.name for p in Path(".").iterdir()] == ["sim"]


def test_env_var_output_dir(in_tmp, monkeypatch):
    monkeypatch.setenv("TVBARC_OUT_DIR", str(in_tmp / "outs"))
    assert main(["simulate", GENSPEC]) == 0
    assert (in_tmp / "outs" / "simulate" / "counts.csv").is_file()
