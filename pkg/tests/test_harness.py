import dataclasses
import filecmp

import numpy as np
import pytest

from cuer.cli import main
from cuer.errors import ConfigError, LogParseError
from cuer.harness.analysis import NO_EVICTIONS, analyze_replay, write_report
from cuer.harness.compare import aulc, bands_overlap, check_grid, compare, load_curves, render_svg, Curve
from cuer.harness.config import ExperimentConfig, format_config, parse_config, parse_grid
from cuer.harness.runner import CSV_COLUMNS, read_metrics, run_experiment
from cuer.harness.seeding import STREAMS, stream, stream_seed
from cuer.harness.simulate import simulate_replay
from cuer.replaylog import LOG_HEADER, RECORD_DTYPE, SAMPLE, read_log
from cuer.td3 import Td3Config

TINY = """
[experiment]
env = pointmass
sampler = cuer
capacity = 500
batch_size = 16
total_steps = 300
learning_starts = 100
eval_interval = 100
eval_episodes = 1
seeds = 0, 1
[agent]
hidden = 8, 8
"""


def tiny(**kw):
    return dataclasses.replace(parse_config(TINY), **kw)


# -- seeding -------------------------------------------------------------

def test_streams_are_distinct_and_stable():
    seeds = [stream_seed(0, name) for name in STREAMS]
    assert len(set(seeds)) == len(STREAMS)
    assert stream_seed(0, "env") == stream_seed(0, "env")
    assert stream_seed(0, "env") != stream_seed(1, "env")
    assert stream_seed(0, "eval", 0) != stream_seed(0, "eval", 1)
    assert stream(3, "init").random() == stream(3, "init").random()


# -- config --------------------------------------------------------------

def test_config_round_trip():
    cfg = tiny(label="x", replay_log=True)
    assert parse_config(format_config(cfg)) == cfg


def test_config_defaults_and_bare_keys():
    cfg = parse_config("# comment first\nenv = pendulum\n[sampler]\neps_min = 0.5\n")
    assert cfg.env == "pendulum"
    assert cfg.sampler_params.eps_min == 0.5
    assert cfg.capacity == ExperimentConfig().capacity


@pytest.mark.parametrize("text,path", [
    ("[experiment]\nenv = cartpole\n", "experiment.env"),
    ("[experiment]\nbatch_size = ten\n", "experiment.batch_size"),
    ("[experiment]\nfoo = 1\n", "experiment.foo"),
    ("[sampler]\nalpha = 2\n", "sampler.alpha"),
    ("[agent]\ngamma = 1.5\n", "agent"),
    ("[bogus]\nx = 1\n", "bogus"),
    ("[experiment]\ncapacity = 8\nbatch_size = 16\n", "experiment.capacity"),
])
def test_config_errors_carry_a_path(text, path):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.path == path


def test_grid_expansion():
    cells = parse_grid(TINY + "[grid]\nsamplers = cuer, uniform\ncapacities = 200, 400\n")
    assert [c.name for c in cells] == ["cuer@200", "cuer@400", "uniform@200", "uniform@400"]
    assert cells[1].capacity == 400 and cells[2].sampler == "uniform"
    with pytest.raises(ConfigError) as err:
        parse_grid(TINY + "[grid]\nsamplers = cuer, nope\n")
    assert "nope" in err.value.path


# -- runner --------------------------------------------------------------

def test_zero_steps_writes_header_only(tmp_path):
    path = run_experiment(tiny(total_steps=0), 0, out_dir=tmp_path)
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    assert lines == [",".join(CSV_COLUMNS)]


def test_run_writes_rows_at_eval_points(tmp_path):
    path = run_experiment(tiny(total_steps=250), 0, out_dir=tmp_path)
    m = read_metrics(path)
    assert m["env_step"].tolist() == [100, 200, 250]
    assert np.all(np.isfinite(m["eval_return"]))
    assert m["buffer_size"].tolist() == [100, 200, 250]
    text = path.read_text()
    assert text.startswith("# seed = 0\n")
    assert "# sampler = cuer" in text


@pytest.mark.parametrize("sampler", ["cuer", "per", "cer+cuer"])
def test_same_seed_gives_identical_csv(tmp_path, sampler):
    cfg = tiny(sampler=sampler)
    a = run_experiment(cfg, 1, out_dir=tmp_path / "a")
    b = run_experiment(cfg, 1, out_dir=tmp_path / "b")
    assert a.read_bytes() == b.read_bytes()
    c = run_experiment(cfg, 2, out_dir=tmp_path / "c")
    assert a.read_bytes() != c.read_bytes()


def test_replay_log_from_training(tmp_path):
    path = run_experiment(tiny(replay_log=True, capacity=100, total_steps=200), 0, out_dir=tmp_path)
    header, rec = read_log(path.with_suffix(".log"))
    assert header.capacity == 100 and header.batch_size == 16
    n_samples = int((rec["kind"] == SAMPLE).sum())
    assert n_samples == 16 * (200 - 100 + 1)
    report = analyze_replay(path.with_suffix(".log"))
    assert report.n_evicted == 100


def test_checkpoint_flags(tmp_path):
    ck = tmp_path / "agent.ckpt"
    run_experiment(tiny(), 0, out_dir=tmp_path, checkpoint_out=str(ck))
    assert ck.exists()
    run_experiment(tiny(total_steps=0), 0, out_dir=tmp_path / "again", checkpoint_in=str(ck))


# -- analysis ------------------------------------------------------------

def test_analysis_without_evictions(tmp_path):
    log = tmp_path / "small.log"
    simulate_replay("cuer", steps=50, capacity=1000, batch_size=8, seed=0, warmup=10, log_path=log)
    report = analyze_replay(log)
    assert NO_EVICTIONS in report.flags
    assert report.n_evicted == 0
    assert report.n_draws == 50 * 8


def test_cuer_lifetime_mean_near_batch_size(tmp_path):
    log = tmp_path / "cuer.log"
    # the buffer must hold well over psi / N ~ 1000 steps of history, or
    # transitions get evicted before their last priority units are drawn
    simulate_replay("cuer", steps=12_000, capacity=4000, batch_size=32, seed=0, warmup=1000, log_path=log)
    report = analyze_replay(log)
    assert report.n_evicted == 9000
    assert abs(report.lifetime_mean / 32 - 1) < 0.05
    for tid, count, residency, p_first, predicted, observed in report.probes:
        assert count > 0 and residency == 4000
        assert predicted > 0 and observed > 0


def test_report_files_are_reproducible(tmp_path):
    log = tmp_path / "u.log"
    simulate_replay("uniform", steps=3000, capacity=500, batch_size=8, seed=1, warmup=100, log_path=log)
    a = write_report(analyze_replay(log), tmp_path / "ra")
    b = write_report(analyze_replay(log), tmp_path / "rb")
    assert [p.name for p in a] == ["fairness_summary.csv", "lifetime_histogram.csv",
                                   "age_curve.csv", "interval_probes.csv"]
    for x, y in zip(a, b):
        assert filecmp.cmp(x, y, shallow=False)


def test_corrupt_logs_report_offsets(tmp_path):
    log = tmp_path / "x.log"
    simulate_replay("uniform", steps=20, capacity=50, batch_size=4, seed=0, warmup=5, log_path=log)
    data = bytearray(log.read_bytes())
    rec = RECORD_DTYPE.itemsize
    head = LOG_HEADER.size

    (tmp_path / "trunc.log").write_bytes(bytes(data[:-7]))
    with pytest.raises(LogParseError) as err:
        read_log(tmp_path / "trunc.log")
    assert err.value.offset == head + (len(data) - head) // rec * rec - rec

    bad = bytearray(data)
    bad[head + 3 * rec] = 9
    (tmp_path / "kind.log").write_bytes(bytes(bad))
    with pytest.raises(LogParseError) as err:
        read_log(tmp_path / "kind.log")
    assert err.value.offset == head + 3 * rec

    bad = bytearray(data)
    bad[:8] = b"NOTALOG!"
    (tmp_path / "magic.log").write_bytes(bytes(bad))
    with pytest.raises(LogParseError) as err:
        read_log(tmp_path / "magic.log")
    assert err.value.offset == 0


# -- compare -------------------------------------------------------------

def test_aulc_is_trapezoid():
    assert aulc(np.array([0, 10, 20]), np.array([0.0, 1.0, 1.0])) == 15.0
    assert aulc(np.array([5]), np.array([3.0])) == 0.0


def test_bands_overlap():
    steps = np.array([1, 2])
    a = Curve("a", steps, np.array([0.0, 0.0]), np.array([1.0, 1.0]), {})
    b = Curve("b", steps, np.array([1.5, 5.0]), np.array([1.0, 1.0]), {})
    assert bands_overlap(a, b) == 0.5


def test_grid_rejects_mismatched_budgets():
    a = tiny(label="a")
    b = tiny(label="b", total_steps=400)
    with pytest.raises(ConfigError) as err:
        check_grid([a, b])
    assert "total_steps" in err.value.path
    with pytest.raises(ConfigError):
        check_grid([a, tiny(label="a")])


def test_compare_end_to_end(tmp_path):
    cells = [tiny(sampler="cuer", label="cuer", seeds=(0, 1)), tiny(sampler="uniform", label="uniform", seeds=(0, 1))]
    curves, files = compare(cells, tmp_path)
    assert [c.label for c in curves] == ["cuer", "uniform"]
    assert set(curves[0].per_seed) == {0, 1}
    agg = files["aggregate"].read_text().splitlines()
    assert agg[0] == "label,env_step,mean_return,std_return,n_seeds"
    assert len(agg) == 1 + 2 * 3
    svg = files["svg"].read_text()
    assert svg.startswith("<svg") and svg.count("<polyline") == 2
    again = load_curves(files["runs"])
    assert np.array_equal(again[0].mean, curves[0].mean)
    with pytest.raises(ConfigError):
        compare(cells[:1], tmp_path)


def test_render_svg_escapes_labels():
    c = Curve("a<b", np.array([0, 1]), np.array([0.0, 1.0]), np.zeros(2), {})
    assert "a&lt;b" in render_svg([c])


# -- CLI -----------------------------------------------------------------

def test_cli_describe_env(capsys):
    assert main(["describe-env", "pendulum"]) == 0
    assert "act_dim = 1" in capsys.readouterr().out
    assert main(["describe-env", "cartpole"]) == 1


def test_cli_train_and_analyze(tmp_path, capsys):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(TINY.replace("capacity = 500", "capacity = 100"))
    assert main(["train", str(cfg), "--seed", "0", "--out", str(tmp_path), "--replay-log"]) == 0
    csv = tmp_path / "cuer_seed0.csv"
    assert csv.exists()
    assert main(["analyze", str(csv.with_suffix(".log")), "--out", str(tmp_path / "rep")]) == 0
    assert (tmp_path / "rep" / "fairness_summary.csv").exists()
    assert "lifetime replay count" in capsys.readouterr().out


def test_cli_simulate(tmp_path, capsys):
    log = tmp_path / "sim.log"
    assert main(["simulate", "--steps", "500", "--capacity", "100", "--batch-size", "8",
                 "--warmup", "50", "--log", str(log)]) == 0
    assert "lifetime mean" in capsys.readouterr().out
    assert log.exists()


def test_cli_exit_codes(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[experiment]\nenv = cartpole\n")
    assert main(["train", str(bad)]) == 2
    junk = tmp_path / "junk.log"
    junk.write_bytes(b"garbage")
    assert main(["analyze", str(junk)]) == 1
    assert main(["train", str(tmp_path / "missing.cfg")]) == 1


def test_cli_numeric_failure_exit_code(tmp_path, monkeypatch):
    from cuer.errors import NumericError
    from cuer.td3 import Td3Agent

    def boom(self, *a, **k):
        raise NumericError("forced")

    monkeypatch.setattr(Td3Agent, "train_step", boom)
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(TINY)
    assert main(["train", str(cfg), "--seed", "0", "--out", str(tmp_path)]) == 3
    rows = read_metrics(tmp_path / "cuer_seed0.csv")
    assert rows["env_step"].tolist() == [100] or rows["env_step"].size <= 1


def test_agent_config_carries_batch_size():
    cfg = tiny()
    assert cfg.agent_config().batch_size == 16
    assert isinstance(cfg.agent, Td3Config)
