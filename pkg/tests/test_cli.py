import hashlib
import json

import pytest

from switchkac import cli
from switchkac.config import Table, build_field, build_levy, build_model, load_config
from switchkac.errors import ConfigurationError
from switchkac.experiments import RunContext, emit_plot_data

L2 = """\
experiment = "l2-gap"
seed = 9
sigma = [1.0, 2.0]
q = [1.0, 1.0]
epsilons = [0.1, 0.01]
times = [0.5, 1.0]
n_paths = 20000
"""

MODEL = """
[model]
regimes = 2
drift = { family = "constant", values = [0.0, 0.0] }
diffusion = { family = "constant", values = [0.5, 2.0] }
generator = { family = "constant", matrix = [[-0.2, 0.2], [0.2, -0.2]] }
jump = { family = "scaled", scale = [0.5, 1.0] }
levy = { family = "stable_like", beta = 0.5, inner = 0.05, outer = 1.0 }
"""


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_list_names_every_experiment(capsys):
    assert cli.main(["list"]) == 0
    names = capsys.readouterr().out.split()
    assert "l2-gap" in names and "feynman-kac-smoke" in names and len(names) == 9


def test_passing_run_writes_report_and_csv(tmp_path):
    cfg = write(tmp_path, L2)
    out = tmp_path / "out"
    assert cli.main(["run", cfg, "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["passed"] is True and rep["experiment"] == "l2-gap"
    assert rep["provenance"]["config_sha256"] == hashlib.sha256(open(cfg, "rb").read()).hexdigest()
    assert rep["provenance"]["seed"] == 9
    assert all({"name", "value", "target", "tolerance", "passed", "runtime"} <= set(c) for c in rep["checks"])
    header = (out / "l2_gap.csv").read_text().splitlines()[0]
    assert header == "epsilon,t,mc_gap,mc_se,formula_gap"


def test_outputs_are_reproducible(tmp_path):
    cfg = write(tmp_path, L2)
    for d in ("a", "b", "c"):
        extra = ["--seed-override", "1"] if d == "c" else []
        cli.main(["run", cfg, "--out", str(tmp_path / d)] + extra)
    a, b, c = ((tmp_path / d / "l2_gap.csv").read_bytes() for d in "abc")
    assert a == b and a != c
    assert json.loads((tmp_path / "c" / "report.json").read_text())["provenance"]["seed"] == 1


def test_failed_check_exits_one(tmp_path):
    text = ('experiment = "averaging"\nseed = 1\nreplicates = 1\nn_samples = 300\n'
            'min_decreasing = 2\n' + MODEL)
    out = tmp_path / "out"
    assert cli.main(["run", write(tmp_path, text), "--out", str(out)]) == 1
    rep = json.loads((out / "report.json").read_text())
    assert rep["passed"] is False
    assert (out / "weak_convergence.csv").exists()


@pytest.mark.parametrize("text", [
    L2 + "bogus = 1\n",
    L2.replace('"l2-gap"', '"nonexistent"'),
    L2.replace("seed = 9\n", ""),
    'experiment = "averaging"\nseed = 1\n' + MODEL.replace("regimes = 2", "regimes = 2\ncolour = 1"),
    'experiment = "averaging"\nseed = 1\n' + MODEL.replace('"stable_like", beta', '"stable_like", betta'),
    'experiment = "averaging"\nseed = 1\n' + MODEL.replace('family = "scaled"', 'family = "wild"'),
    "experiment = [unclosed",
])
def test_configuration_errors_exit_two(tmp_path, text, capsys):
    assert cli.main(["run", write(tmp_path, text), "--out", str(tmp_path / "o")]) == 2
    assert "error" in capsys.readouterr().err


def test_usage_errors_exit_two(tmp_path):
    with pytest.raises(SystemExit) as info:
        cli.main(["run"])
    assert info.value.code == 2
    assert cli.main(["run", str(tmp_path / "missing.toml")]) == 2
    assert cli.main(["run", write(tmp_path, L2), "--threads", "0"]) == 2


def test_empty_table_is_rejected(tmp_path):
    with pytest.raises(ConfigurationError, match="no samples"):
        emit_plot_data(RunContext(str(tmp_path), 0), "x.csv", ["a"], [])


def test_table_tracks_consumed_keys():
    t = Table({"a": 1, "b": 2})
    assert t.get("a") == 1
    with pytest.raises(ConfigurationError, match="unknown key config.b"):
        t.finish()
    with pytest.raises(ConfigurationError, match="missing key"):
        t.require("c")


def test_builders(tmp_path):
    cfg, _ = load_config(write(tmp_path, 'experiment = "averaging"\nseed = 1\n' + MODEL))
    spec = build_model(cfg.sub("model"))
    assert spec.m == 2 and spec.q_bound == pytest.approx(0.2) and spec.has_jumps
    f = build_field([{"family": "gaussian", "scale": 2.0}, "lorentzian"], 2)
    assert f.value([[2.0], [2.0]], [0, 1]) == pytest.approx([0.6065307, 0.2])
    with pytest.raises(ConfigurationError):
        build_field(["cos"], 2, "f")
    with pytest.raises(ConfigurationError):
        build_levy({"family": "compound_poisson", "rate": 1.0, "shape": 2})
    assert build_levy({"family": "stable_like", "beta": 1.0, "outer": "inf"}).infinite_activity
