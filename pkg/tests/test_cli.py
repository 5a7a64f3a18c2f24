from pathlib import Path

import numpy as np
import pytest

from ssur.cli import main
from ssur.config import ConfigError, RunConfig, parse_config, parse_config_text
from ssur.io import read_key_values

RUN_FLAGS = ["--niter", "600", "--burnin", "200", "--thin", "10", "--nchains", "2", "--seed", "11",
             "--standardize"]
SUMMARY_FILES = ("gamma_mean.csv", "beta_mpm.csv", "edge_prob.csv", "trace.csv", "acceptance.txt",
                 "metrics.txt", "config.txt")


def simulate(out, *extra):
    assert main(["simulate", "--preset", "desk", "--seed", "3", "--out", str(out), *extra]) == 0
    return out


def run_flags(sim_dir, out):
    d = Path(sim_dir)
    return ["run", "--y", str(d / "Y.csv"), "--x", str(d / "X.csv"), "--mrf-edges", str(d / "mrf_edges.txt"),
            "--y-val", str(d / "validation" / "Y.csv"), "--x-val", str(d / "validation" / "X.csv"),
            "--truth", str(d), "--out", str(out), *RUN_FLAGS]


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    return simulate(tmp_path_factory.mktemp("sim") / "data")


@pytest.fixture(scope="module")
def run_dir(sim_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "fit"
    assert main(run_flags(sim_dir, out)) == 0
    return out


class TestSimulate:
    def test_files(self, sim_dir):
        for name in ("Y.csv", "X.csv", "gamma_true.csv", "beta_true.csv", "graph_true.txt", "manifest.txt"):
            assert (sim_dir / name).is_file(), name
        assert {p.name for p in (sim_dir / "validation").iterdir()} == {"Y.csv", "X.csv"}

    def test_algorithm_two_writes_groups(self, tmp_path):
        out = simulate(tmp_path / "a2", "--algorithm", "2")
        assert (out / "Z.csv").is_file() and (out / "b0_true.csv").is_file()
        assert not (out / "alpha_true.csv").exists()

    def test_manifest(self, sim_dir):
        man = read_key_values(sim_dir / "manifest.txt")
        assert man["command"] == "simulate" and man["seed"] == "3"
        assert "wall_time_seconds" in man and "version_numpy" in man


class TestRunEvaluate:
    def test_outputs(self, run_dir):
        for name in SUMMARY_FILES + ("loglik.npy", "manifest.txt"):
            assert (run_dir / name).is_file(), name
        man = read_key_values(run_dir / "manifest.txt")
        assert man["seed"] == "11"
        assert man["config_hash"] == parse_config(run_dir / "config.txt").config_hash()

    def test_evaluate_reproduces_metrics(self, run_dir, capsys):
        before = (run_dir / "metrics.txt").read_text()
        capsys.readouterr()
        assert main(["evaluate", "--out", str(run_dir)]) == 0
        assert capsys.readouterr().out == before
        assert (run_dir / "metrics.txt").read_text() == before
        metrics = read_key_values(run_dir / "metrics.txt")
        assert {"mse", "mspe", "elpd_loo", "accuracy", "graph_accuracy", "coef_error"} <= set(metrics)

    def test_config_echo_resolves_defaults(self, run_dir):
        cfg = parse_config(run_dir / "config.txt")
        assert cfg.nu == 12.0 and cfg.seed == 11 and cfg.standardize

    def test_byte_identical(self, sim_dir, run_dir, tmp_path):
        again = tmp_path / "again"
        assert main(run_flags(sim_dir, again)) == 0
        for name in SUMMARY_FILES[:-1] + ("loglik.npy",):
            assert (again / name).read_bytes() == (run_dir / name).read_bytes(), name
        # the config echo differs only in the output path
        a = (again / "config.txt").read_text().replace(str(again), "OUT")
        b = (run_dir / "config.txt").read_text().replace(str(run_dir), "OUT")
        assert a == b

    def test_flags_override_file(self, sim_dir, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("niter = 50  # short\nburnin = 10\nthin = 5\nnchains = 1\nseed = 1\n")
        out = tmp_path / "o"
        d = sim_dir
        rc = main(["run", "--config", str(cfg_file), "--y", str(d / "Y.csv"), "--x", str(d / "X.csv"),
                   "--out", str(out), "--niter", "40", "--prior", "hotspot"])
        assert rc == 0
        cfg = parse_config(out / "config.txt")
        assert cfg.niter == 40 and cfg.burnin == 10 and cfg.prior == "hotspot"


class TestElicit:
    def test_application_values(self, capsys):
        rc = main(["elicit", "--r-sparsity", "0.2", "--mean-beta", "0.5", "--var-beta", "0.04",
                   "--m", "20", "--p", "300", "--re-sd", "2", "--T", "4"])
        assert rc == 0
        vals = dict(line.split(" = ") for line in capsys.readouterr().out.splitlines())
        assert float(vals["a_w"]) == 300 and float(vals["b_w"]) == 300 and float(vals["a_w0"]) == 60

    def test_e_bound(self, tmp_path, capsys):
        edges = tmp_path / "g.txt"
        edges.write_text("1 1 1 2 1\n")
        assert main(["elicit", "--c1", "0.5", "--c2", "0.2", "--m", "2", "--p", "1", "--mrf-edges", str(edges)]) == 0
        assert "e_upper_bound" in capsys.readouterr().out


class TestErrors:
    def one_line_error(self, capsys, argv, code):
        capsys.readouterr()
        assert main(argv) == code
        err = capsys.readouterr().err
        assert err.count("\n") == 1 and err.startswith("error: ")
        return err

    def test_usage_error(self, capsys):
        err = self.one_line_error(capsys, ["elicit", "--m", "3"], 2)
        assert "CliError" in err

    def test_missing_file(self, capsys, tmp_path):
        err = self.one_line_error(capsys, ["run", "--y", str(tmp_path / "no.csv"), "--x", str(tmp_path / "no.csv"),
                                           "--out", str(tmp_path / "o"), "--seed", "1"], 1)
        assert "no.csv" in err

    def test_config_error_names_key(self, capsys, tmp_path):
        err = self.one_line_error(capsys, ["run", "--y", "a", "--x", "b", "--out", str(tmp_path),
                                           "--niter", "10", "--burnin", "10"], 2)
        assert "burnin=10" in err and "niter=10" in err

    def test_bad_data(self, capsys, tmp_path):
        (tmp_path / "Y.csv").write_text("y1\n1\nabc\n")
        (tmp_path / "X.csv").write_text("x1\n1\n2\n")
        err = self.one_line_error(capsys, ["run", "--y", str(tmp_path / "Y.csv"), "--x", str(tmp_path / "X.csv"),
                                           "--out", str(tmp_path / "o"), "--seed", "1"], 1)
        assert "DataError" in err and "row" in err

    def test_evaluate_without_run(self, capsys, tmp_path):
        self.one_line_error(capsys, ["evaluate", "--out", str(tmp_path)], 2)


class TestConfig:
    def test_unknown_key(self, tmp_path):
        f = tmp_path / "c.txt"
        f.write_text("nitre = 5\n")
        with pytest.raises(ConfigError, match="nitre"):
            parse_config(f)

    def test_type_error_names_key(self):
        with pytest.raises(ConfigError, match="thin"):
            parse_config(None, {"thin": "2.5"})

    @pytest.mark.parametrize("key,value", [("thin", "0"), ("nchains", "0"), ("a_w", "-1"),
                                           ("prior", "horseshoe"), ("covariance", "full")])
    def test_constraints_name_key(self, key, value):
        with pytest.raises(ConfigError, match=key):
            parse_config(None, {key: value})

    def test_small_tau_shape_accepted(self):
        assert parse_config(None, {"a_tau": "1e-6"}).a_tau == 1e-6

    def test_defaults(self):
        cfg = parse_config(None, {})
        assert (cfg.a_tau, cfg.b_tau, cfg.a_eta, cfg.b_eta, cfg.nu) == (0.1, 10.0, 0.1, 1.0, None)

    def test_round_trip(self):
        cfg = parse_config(None, {"fixed": "w,tau", "seed": "5", "d": "-1.5"})
        again = parse_config(None, parse_config_text(cfg.to_text()))
        assert again == cfg

    def test_hash_tracks_every_field(self):
        base = RunConfig(seed=1)
        h = base.config_hash()
        assert RunConfig(seed=1).config_hash() == h
        changed = {"niter": 7, "d": -1.0, "y": "other.csv", "standardize": True, "fixed": ("w",),
                   "nu": 9.0, "seed": 2}
        for k, v in changed.items():
            assert base.replace(**{k: v}).config_hash() != h, k
