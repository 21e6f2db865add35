import json

import numpy as np
import pytest

from dacsim import cli, scenario
from dacsim.scenario import ConfigError, load_config, parse_config

GOLDENS = scenario.golden_scenarios()


def small_ct(**over):
    raw = {"schema_version": 1, "name": "tiny", "mode": "ct", "graph": {"builtin": "graph_b"},
           "signals": {"builtin": "formation", "n": 4, "drift": False},
           "algorithm": {"kind": "pi_dac", "alpha": 1.0}, "horizon": 2.0, "dt": 0.01}
    raw.update(over)
    return raw


def write(tmp_path, raw, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return str(p)


def test_golden_suite_present():
    assert len(GOLDENS) >= 15
    assert "basic_graph_b.json" in GOLDENS


@pytest.mark.parametrize("name", GOLDENS)
def test_golden_parses_and_round_trips(name):
    cfg = load_config(name)
    again = parse_config(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg
    assert load_config(name.removesuffix(".json")) == cfg


@pytest.mark.parametrize("name", GOLDENS)
def test_golden_tail_error_within_analytic_bound(name, tmp_path):
    res = scenario.run(load_config(name), tmp_path, check_bounds=True, write_trajectory=False)
    bc = res.metrics["bound_check"]
    if bc["applicable"]:
        assert bc["measured"] <= bc["bound"]
    assert scenario.checks_passed(res)


@pytest.mark.parametrize("raw, fragment", [
    (small_ct(colour="red"), "config: unknown field(s) ['colour']"),
    (small_ct(algorithm={"kind": "pi_dac", "alfa": 1.0}), "config.algorithm: unknown field(s) ['alfa']"),
    (small_ct(algorithm={"kind": "magic"}), "config.algorithm.kind"),
    (small_ct(algorithm={"kind": "pi_dac"}), "config.algorithm: missing required field(s) ['alpha']"),
    (small_ct(algorithm={"kind": "p"}), "does not run in mode 'ct'"),
    (small_ct(graph={"builtin": "graph_b", "size": 3}), "graph: unknown field(s) ['size']"),
    (small_ct(schema_version=2), "config.schema_version"),
    (small_ct(dt=0.0), "config.dt"),
    (small_ct(tail_fraction=1.5), "config.tail_fraction"),
    (small_ct(signals={"builtin": "formation", "n": 3}), "3 signals for 4 agents"),
    (small_ct(events=[{"kind": "depart", "time": 1.0, "agent": 9}]), "config.events[0].agent"),
])
def test_config_errors_name_the_path(raw, fragment):
    with pytest.raises(ConfigError) as exc:
        parse_config(raw)
    assert fragment in str(exc.value)


def test_json_syntax_error_reports_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "schema_version": 1,\n  "mode": ct\n}')
    with pytest.raises(ConfigError, match="line 3 column 11"):
        load_config(p)
    with pytest.raises(ConfigError, match="no such config"):
        load_config(tmp_path / "missing.json")


def test_run_is_deterministic_and_atomic(tmp_path):
    cfg = load_config("sampled_static.json")
    a = scenario.run(cfg, tmp_path / "a")
    b = scenario.run(cfg, tmp_path / "b")
    assert (tmp_path / "a" / "trajectory.csv").read_text() == (tmp_path / "b" / "trajectory.csv").read_text()
    assert a.metrics == b.metrics
    assert sorted(p.name for p in (tmp_path / "a").iterdir()) == ["config.json", "metrics.json", "trajectory.csv"]


def test_seed_changes_stochastic_inputs(tmp_path):
    raw = load_config("sampled_static.json").to_dict()
    other = dict(raw, seed=raw.get("seed", 0) + 1)
    ra = scenario.run(parse_config(raw), tmp_path / "a", write_trajectory=False)
    rb = scenario.run(parse_config(other), tmp_path / "b", write_trajectory=False)
    assert ra.metrics["time_avg_error"] != rb.metrics["time_avg_error"]


def test_compare_dynamic_beats_static(tmp_path):
    rep = scenario.compare(load_config("sampled_dynamic.json"), load_config("sampled_static.json"), tmp_path)
    assert all(m["winner"] == "a" for m in rep["metrics"].values())
    assert (tmp_path / "compare.json").exists()


def test_compare_identical_configs_tie(tmp_path):
    cfg = parse_config(small_ct())
    rep = scenario.compare(cfg, cfg, tmp_path)
    assert all(m["winner"] == "tie" for m in rep["metrics"].values())


def test_compare_rejects_unequal_horizons(tmp_path):
    with pytest.raises(ConfigError):
        scenario.compare(parse_config(small_ct()), parse_config(small_ct(horizon=3.0)), tmp_path)


def test_sweep(tmp_path):
    summary = scenario.sweep(parse_config(small_ct()), {"algorithm.alpha": [0.5, 2.0], "horizon": [1.0, 2.0]},
                             tmp_path)
    assert len(summary["points"]) == 4
    assert summary["points"][1]["values"] == {"algorithm.alpha": 0.5, "horizon": 2.0}
    assert (tmp_path / "point_003" / "metrics.json").exists()
    with pytest.raises(ConfigError):
        scenario.sweep(parse_config(small_ct()), {"algorithm.gamma": [1.0]}, tmp_path)


def test_verify_rates_suite(tmp_path):
    rep = scenario.verify_rates(tmp_path, n_graphs=10, seed=3)
    assert rep["passed"] and rep["max_abs_diff"] <= 1e-8
    assert rep["graphs"] == 11
    rows = (tmp_path / "rate_curves.csv").read_text().splitlines()
    assert rows[0] == "lambda_r,rho_P,rho_AccelP,rho_PI,rho_AccelPI"
    last = [float(v) for v in rows[-1].split(",")]
    assert last[0] == 1.0 and max(abs(v) for v in last[1:]) < 1e-12


def test_rate_table_ordering():
    lam_r = np.linspace(0.01, 1.0, 100)
    t = scenario.rate_table(lam_r)
    assert np.all(t[:, 1] <= t[:, 0] + 1e-12)
    assert np.all(t[:, 3] <= t[:, 2] + 1e-12)


# command line

def test_cli_run_ok(tmp_path, capsys):
    code = cli.main(["run", "--config", write(tmp_path, small_ct()), "--out-dir", str(tmp_path / "o"),
                     "--check-bounds"])
    assert code == cli.EXIT_OK
    assert json.loads(capsys.readouterr().out)["passed"] is True
    metrics = json.loads((tmp_path / "o" / "metrics.json").read_text())
    assert metrics["bound_check"]["applicable"]


def test_cli_run_bound_failure_exit_1(tmp_path):
    raw = small_ct(algorithm={"kind": "basic_dac"}, init={"p": [100.0, -100.0, 0.0, 0.0]}, tail_fraction=1.0)
    code = cli.main(["run", "--config", write(tmp_path, raw), "--out-dir", str(tmp_path / "o"),
                     "--check-bounds"])
    assert code == cli.EXIT_CHECK


def test_cli_config_error_exit_2(tmp_path):
    code = cli.main(["run", "--config", write(tmp_path, small_ct(bogus=1)), "--out-dir", str(tmp_path / "o")])
    assert code == cli.EXIT_ERROR
    assert not (tmp_path / "o").exists()
    assert cli.main(["run", "--config", str(tmp_path / "nope.json"), "--out-dir", str(tmp_path)]) == 2


def test_cli_seed_override(tmp_path):
    args = ["run", "--config", "sampled_static.json"]
    assert cli.main(args + ["--out-dir", str(tmp_path / "a"), "--seed", "5"]) == 0
    assert json.loads((tmp_path / "a" / "config.json").read_text())["seed"] == 5


def test_cli_design_gains(tmp_path, capsys):
    code = cli.main(["design-gains", "--variant", "P", "--lambda2", "2", "--lambdaN", "4",
                     "--out-dir", str(tmp_path)])
    assert code == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["rho"] == pytest.approx(1 / 3)
    assert json.loads((tmp_path / "gains.json").read_text()) == rep
    assert cli.main(["design-gains", "--lambda2", "2"]) == cli.EXIT_ERROR
    assert cli.main(["design-gains", "--lambda2", "0", "--lambdaN", "4"]) == cli.EXIT_ERROR


def test_cli_design_prefilter(capsys):
    assert cli.main(["design-prefilter", "--m", "3", "--theta-c", "0.3"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["passband_deviation"] <= 1e-2 + 1e-12
    assert rep["response_samples"]["0"] == pytest.approx(1.0)


def test_cli_verify_rates_and_compare(tmp_path, capsys):
    assert cli.main(["verify-rates", "--out-dir", str(tmp_path / "v"), "--n-graphs", "3"]) == 0
    cfg = write(tmp_path, small_ct())
    assert cli.main(["compare", "--config", cfg, "--config", cfg, "--out-dir", str(tmp_path / "c")]) == 0
    assert cli.main(["compare", "--config", cfg, "--out-dir", str(tmp_path / "c")]) == cli.EXIT_ERROR


def test_cli_sweep(tmp_path, capsys):
    cfg = write(tmp_path, small_ct())
    assert cli.main(["sweep", "--config", cfg, "--param", "algorithm.alpha=0.5,1", "--out-dir", str(tmp_path)]) == 0
    assert json.loads(capsys.readouterr().out.splitlines()[-1]) == {"points": 2, "bound_failures": 0}
    assert cli.main(["sweep", "--config", cfg, "--param", "nothing", "--out-dir", str(tmp_path)]) == 2
