import numpy as np
import numpy.testing as npt
import pytest

from plmc.cli import (
    ConfigError,
    DEFAULTS,
    build_potential,
    main,
    metric_evaluators,
    parse_config_file,
    parse_overrides,
    resolve_config,
)
from plmc.metrics import MetricsSeries, SampleSet, w2_marginal
from plmc.data import load_samples
from plmc.potentials import LogisticPosterior, QuadraticPotential, RosenbrockPotential


def write_config(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


ROSEN_FAST = """
potential = rosenbrock
gt.n = 4000
steps = 40
chains = 64
metrics = w2_avg,mean_error
"""


class TestParseConfigFile:
    def test_values_comments_blanks(self, tmp_path):
        path = write_config(tmp_path, "\n".join([
            "# a comment",
            "potential = quadratic",
            "",
            "h=0.01   ",
            "  steps =  250",
        ]))
        assert parse_config_file(path) == {
            "potential": "quadratic", "h": "0.01", "steps": "250",
        }

    def test_missing_equals_names_line(self, tmp_path):
        path = write_config(tmp_path, "potential = rosenbrock\nsteps 100\n")
        with pytest.raises(ConfigError, match=":2:"):
            parse_config_file(path)

    def test_unknown_key_names_line(self, tmp_path):
        path = write_config(tmp_path, "stepsize = 0.1\n")
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_file(path)


class TestParseOverrides:
    def test_pairs(self):
        got = parse_overrides(["--h", "0.01", "--precond", "constant"])
        assert got == {"h": "0.01", "precond": "constant"}

    def test_empty(self):
        assert parse_overrides([]) == {}

    def test_dangling_flag(self):
        with pytest.raises(ConfigError):
            parse_overrides(["--h"])

    def test_bare_token(self):
        with pytest.raises(ConfigError):
            parse_overrides(["h", "0.01"])

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            parse_overrides(["--stepsize", "0.1"])


class TestResolveConfig:
    def test_defaults_only(self):
        cfg = resolve_config()
        assert cfg == DEFAULTS
        assert cfg is not DEFAULTS

    def test_precedence(self, tmp_path):
        path = write_config(tmp_path, "h = 0.5\nsteps = 9\n")
        cfg = resolve_config(path, {"h": "0.25"})
        assert cfg["h"] == "0.25"       # override beats file
        assert cfg["steps"] == "9"      # file beats default
        assert cfg["chains"] == DEFAULTS["chains"]


class TestBuildPotential:
    def test_rosenbrock_params(self):
        cfg = resolve_config(overrides={"rosenbrock.a": "2.0",
                                        "rosenbrock.b": "50"})
        pot = build_potential(cfg)
        assert isinstance(pot, RosenbrockPotential)
        assert pot.params.a == 2.0
        assert pot.params.b == 50.0

    def test_quadratic(self):
        cfg = resolve_config(overrides={
            "potential": "quadratic",
            "quadratic.precision": "4,0,0,1",
            "quadratic.mean": "1,-1",
        })
        pot = build_potential(cfg)
        assert isinstance(pot, QuadraticPotential)
        npt.assert_array_equal(pot.hessian(np.zeros(2)).array,
                               [[4.0, 0.0], [0.0, 1.0]])

    def test_synthetic_logistic(self):
        cfg = resolve_config(overrides={"potential": "logistic",
                                        "logistic.n": "20",
                                        "logistic.d": "3"})
        pot = build_potential(cfg)
        assert isinstance(pot, LogisticPosterior)
        assert pot.dim == 3

    def test_precision_entry_count(self):
        cfg = resolve_config(overrides={"potential": "quadratic",
                                        "quadratic.precision": "1,0,0"})
        with pytest.raises(ConfigError, match="dim\\*dim"):
            build_potential(cfg)

    def test_mean_entry_count(self):
        cfg = resolve_config(overrides={"potential": "quadratic",
                                        "quadratic.mean": "1"})
        with pytest.raises(ConfigError, match="dim entries"):
            build_potential(cfg)

    def test_bad_choice(self):
        cfg = resolve_config(overrides={"potential": "banana"})
        with pytest.raises(ConfigError, match="must be one of"):
            build_potential(cfg)

    def test_bad_number(self):
        cfg = resolve_config(overrides={"rosenbrock.b": "many"})
        with pytest.raises(ConfigError, match="must be a number"):
            build_potential(cfg)


class TestMetricEvaluators:
    def setup_method(self):
        self.gt = SampleSet(np.array([[0.0, 0.0], [2.0, 4.0]]))

    def test_w2_avg_and_coordinate(self):
        pairs = metric_evaluators(["w2_avg", "w2_1"], self.gt)
        assert [name for name, _ in pairs] == ["w2_avg", "w2_1"]
        probe = SampleSet(np.array([[0.0, 1.0], [2.0, 5.0]]))
        assert pairs[1][1](probe) == w2_marginal(probe, self.gt, 1)

    def test_mean_error_uses_reference_mean(self):
        (_, fn), = metric_evaluators(["mean_error"], self.gt)
        probe = SampleSet(np.array([[1.0, 2.0]]))   # exactly the gt mean
        assert fn(probe) == 0.0

    def test_cosine_metric(self):
        (_, fn), = metric_evaluators(["cos_1_0"], self.gt)
        assert fn(self.gt) == 0.0

    def test_unknown_metric(self):
        with pytest.raises(ConfigError, match="unknown metric"):
            metric_evaluators(["w2_median"], self.gt)

    def test_coordinate_out_of_range(self):
        with pytest.raises(ConfigError, match="out of range"):
            metric_evaluators(["w2_2"], self.gt)

    def test_empty_list(self):
        with pytest.raises(ConfigError, match="empty"):
            metric_evaluators(["", "  "], self.gt)


class TestSampleCommand:
    def test_end_to_end(self, tmp_path, capsys):
        cfg = write_config(tmp_path, ROSEN_FAST)
        out = tmp_path / "out"
        assert main(["sample", "--config", cfg, "--out", str(out)]) == 0
        assert (out / "metrics.csv").exists()
        assert (out / "samples.csv").exists()
        series = MetricsSeries.from_csv(out / "metrics.csv")
        names = {row[2] for row in series.rows}
        assert names == {"w2_avg", "mean_error"}
        steps = sorted({row[0] for row in series.rows})
        assert steps[0] == 0 and steps[-1] == 40
        samples = load_samples(out / "samples.csv")
        assert samples.dim == 2
        assert len(samples) == 64
        assert "sample:" in capsys.readouterr().out

    def test_resolved_config_echoes_auto_fields(self, tmp_path):
        cfg = write_config(tmp_path, ROSEN_FAST + "precond = constant\n")
        out = tmp_path / "out"
        assert main(["sample", "--config", cfg, "--out", str(out)]) == 0
        text = (out / "resolved_config.txt").read_text()
        fields = dict(line.split(" = ", 1)
                      for line in text.splitlines())
        assert fields["ground_truth"] == "ancestral"
        assert fields["precond.c"] != "auto"
        npt.assert_allclose(float(fields["precond.c"]), 1.0 / 11655.0)
        assert list(fields) == sorted(fields)
        assert "workers" not in fields

    def test_logistic_auto_ground_truth(self, tmp_path):
        cfg = write_config(tmp_path, """
potential = logistic
logistic.n = 40
logistic.d = 3
gt.iters = 150
gt.chains = 64
steps = 20
chains = 32
""")
        out = tmp_path / "out"
        assert main(["sample", "--config", cfg, "--out", str(out)]) == 0
        fields = dict(line.split(" = ", 1) for line in
                      (out / "resolved_config.txt").read_text().splitlines())
        assert fields["ground_truth"] == "mala"
        assert fields["gt.h"] != "auto"
        assert float(fields["gt.h"]) > 0
        assert fields["precond.clamp"] == "off"

    def test_zero_steps_records_initial_state(self, tmp_path):
        cfg = write_config(tmp_path, ROSEN_FAST)
        out = tmp_path / "out"
        assert main(["sample", "--config", cfg, "--out", str(out),
                     "--steps", "0"]) == 0
        series = MetricsSeries.from_csv(out / "metrics.csv")
        assert {row[0] for row in series.rows} == {0}

    def test_divergent_run_exits_one(self, tmp_path, capsys):
        cfg = write_config(tmp_path, ROSEN_FAST + """
precond = constant
precond.c = 1.0
init = dirac
init.point = 1e200,0
""")
        out = tmp_path / "out"
        assert main(["sample", "--config", cfg, "--out", str(out)]) == 1
        assert "aborted" in capsys.readouterr().err
        assert (out / "resolved_config.txt").exists()
        assert not (out / "samples.csv").exists()


class TestDeterminism:
    def run_sample(self, tmp_path, tag, seed="3", workers=None):
        cfg = write_config(tmp_path, ROSEN_FAST, name=f"{tag}.cfg")
        out = tmp_path / tag
        args = ["sample", "--config", cfg, "--out", str(out), "--seed", seed]
        if workers is not None:
            args += ["--workers", str(workers)]
        assert main(args) == 0
        return ((out / "metrics.csv").read_bytes(),
                (out / "samples.csv").read_bytes())

    def test_rerun_is_byte_identical(self, tmp_path):
        assert self.run_sample(tmp_path, "a") == self.run_sample(tmp_path, "b")

    def test_worker_count_is_immaterial(self, tmp_path):
        one = self.run_sample(tmp_path, "w1", workers=1)
        four = self.run_sample(tmp_path, "w4", workers=4)
        assert one == four

    def test_seed_changes_output(self, tmp_path):
        a = self.run_sample(tmp_path, "s3", seed="3")
        b = self.run_sample(tmp_path, "s4", seed="4")
        assert a != b


class TestSweepCommand:
    def test_grid_and_csv(self, tmp_path, capsys):
        cfg = write_config(tmp_path, ROSEN_FAST + """
sweep.h = 0.002,0.006
sweep.preconds = constant,curvature
""")
        out = tmp_path / "out"
        assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0] == "preconditioner,h,final_metric"
        assert len(lines) == 5
        cells = [line.split(",") for line in lines[1:]]
        assert [c[0] for c in cells] == ["constant", "constant",
                                         "curvature", "curvature"]
        assert all(float(c[2]) >= 0 for c in cells)
        assert "4/4 cells completed" in capsys.readouterr().out

    def test_failed_cells_left_empty(self, tmp_path, capsys):
        cfg = write_config(tmp_path, ROSEN_FAST + """
sweep.h = 0.006
sweep.preconds = constant
precond.c = 1.0
init = dirac
init.point = 1e200,0
""")
        out = tmp_path / "out"
        assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[1].endswith(",")
        assert "0/1 cells completed" in capsys.readouterr().out


class TestReferenceCommand:
    def test_quadratic_reference(self, tmp_path):
        cfg = write_config(tmp_path, """
potential = quadratic
quadratic.precision = 4,0,0,1
gt.iters = 400
gt.chains = 256
""")
        out = tmp_path / "out"
        assert main(["reference", "--config", cfg, "--out", str(out)]) == 0
        mean = np.loadtxt(out / "mean.csv", delimiter=",", skiprows=1)
        npt.assert_allclose(mean, [0.0, 0.0], atol=0.15)
        fisher = np.loadtxt(out / "fisher_inv.csv", delimiter=",", skiprows=1)
        npt.assert_allclose(fisher, [[0.25, 0.0], [0.0, 1.0]], atol=1e-10)
        cov = np.loadtxt(out / "cov.csv", delimiter=",", skiprows=1)
        npt.assert_allclose(cov, [[0.25, 0.0], [0.0, 1.0]], atol=0.12)
        assert len(load_samples(out / "samples.csv")) == 256


class TestAcfCommand:
    def test_lag_table(self, tmp_path):
        cfg = write_config(tmp_path, """
potential = rosenbrock
gt.n = 2000
acf.preconds = constant
acf.steps = 30
acf.max_lag = 5
acf.chains = 32
""")
        out = tmp_path / "out"
        assert main(["acf", "--config", cfg, "--out", str(out)]) == 0
        lines = (out / "acf.csv").read_text().splitlines()
        assert lines[0] == "preconditioner,lag,coordinate,correlation"
        assert len(lines) == 1 + 2 * 6
        lag0 = [line for line in lines[1:] if line.split(",")[1] == "0"]
        assert all(float(line.split(",")[3]) == 1.0 for line in lag0)


class TestExitCodes:
    def test_missing_config_file(self, tmp_path, capsys):
        code = main(["sample", "--config", str(tmp_path / "nope.cfg")])
        assert code == 2
        assert "plmc sample:" in capsys.readouterr().err

    def test_unknown_override(self, capsys):
        assert main(["sample", "--stepsize", "0.1"]) == 2
        assert "unknown config key" in capsys.readouterr().err

    def test_bad_value(self, tmp_path, capsys):
        cfg = write_config(tmp_path, ROSEN_FAST)
        code = main(["sample", "--config", cfg, "--out",
                     str(tmp_path / "out"), "--steps", "tomorrow"])
        assert code == 2
        assert "must be an integer" in capsys.readouterr().err

    def test_short_flags_are_not_abbreviated(self, tmp_path, capsys):
        # "--h" must reach the override parser as the config key h, not be
        # swallowed as an abbreviation of --help
        cfg = write_config(tmp_path, ROSEN_FAST)
        out = tmp_path / "out"
        assert main(["sample", "--config", cfg, "--out", str(out),
                     "--h", "0.004"]) == 0
        fields = dict(line.split(" = ", 1) for line in
                      (out / "resolved_config.txt").read_text().splitlines())
        assert fields["h"] == "0.004"
