import csv
import json
import math

import numpy as np
import pytest

from trps_lab.cli import main
from trps_lab.errors import InvalidInputError
from trps_lab.harness import (
    DEFAULTS, ExperimentConfig, RunRecord, UsageError, emit_plotdata, parse_config_text,
    run_scenario, validate,
)

SMALL_RELAX = {
    "theta.nu": 128, "relax.dynamical_times": 4.0, "relax.record_every": 25,
    "relax.bins": 10, "relax.min_bin_count": 2,
}


def cfg_of(**values):
    values.setdefault("seed", 3)
    return ExperimentConfig({k.replace("__", "."): v for k, v in values.items()})


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


class TestConfig:
    def test_parse(self):
        vals = parse_config_text("""
            # comment
            scenario = relax
            seed = 4   # trailing
            relax.field = 0, 1, 0
            theta.g = auto
            qdynamics.sigma = 1e-3
        """)
        assert vals == {"scenario": "relax", "seed": 4, "relax.field": (0, 1, 0),
                        "theta.g": "auto", "qdynamics.sigma": 1e-3}

    @pytest.mark.parametrize("text, match", [
        ("bogus.key = 1", "unknown key"),
        ("seed = 1\nseed = 2", "duplicate"),
        ("seed 1", "key = value"),
    ])
    def test_parse_errors(self, text, match):
        with pytest.raises(InvalidInputError, match=match):
            parse_config_text(text)

    def test_hash_stable(self):
        a = ExperimentConfig.from_text("seed = 1\nqdynamics.sigma = 0.1")
        b = ExperimentConfig.from_text("qdynamics.sigma = 0.10\n\nseed = 1")
        assert a.config_hash() == b.config_hash()
        assert a.replace(**{"output.dir": "elsewhere"}).config_hash() == a.config_hash()
        assert a.replace(seed=2).config_hash() != a.config_hash()
        assert len(a.config_hash()) == 64

    def test_defaults_complete(self):
        cfg = cfg_of()
        assert set(cfg.values) == set(DEFAULTS)


class TestValidate:
    def test_valid_default(self):
        assert validate(cfg_of()) == []

    def test_nu_zero(self):
        assert any("theta.nu" in p for p in validate(cfg_of(theta__nu=0)))

    def test_negative_sigma(self):
        assert any("qdynamics.sigma" in p for p in validate(cfg_of(qdynamics__sigma=-0.1)))

    def test_missing_seed_and_bad_scenario(self):
        problems = validate(ExperimentConfig({"scenario": "nope"}))
        assert any("seed" in p for p in problems) and any("scenario" in p for p in problems)

    def test_lists_all(self):
        problems = validate(cfg_of(theta__nu=0, qdynamics__sigma=-1, theta__dt=-1))
        assert len(problems) >= 3

    def test_sub_config_invariants(self):
        assert any("direction" in p for p in validate(cfg_of(coherence__direction=(1, 1, 0))))

    def test_run_refuses_invalid(self, tmp_path):
        with pytest.raises(UsageError):
            run_scenario(cfg_of(theta__nu=0), tmp_path)


class TestDecohere:
    def test_zero_sigma_constant(self, tmp_path):
        rec = run_scenario(cfg_of(qdynamics__sigma=0.0, qdynamics__trajectories=200), tmp_path)
        assert rec.passed
        header, data = read_csv(tmp_path / "decay.csv")
        assert header == ["t", "abs_rho01", "analytic"]
        np.testing.assert_allclose(data[:, 1], 0.5, atol=1e-14)
        np.testing.assert_allclose(data[:, 2], 0.5, atol=1e-15)

    def test_plotdata_within_mc_tolerance(self, tmp_path):
        rec = run_scenario(cfg_of(qdynamics__trajectories=2000), tmp_path)
        paths = emit_plotdata(rec, tmp_path / "plot")
        assert [p.name for p in paths] == ["decay_curve.csv"]
        _, data = read_csv(paths[0])
        tol = rec.metrics["decohere"]["mc_tolerance"]
        assert tol == pytest.approx(3 / math.sqrt(2000))
        assert np.all(np.abs(data[:, 1] - data[:, 2]) <= tol * 0.5)

    def test_density_dump(self, tmp_path):
        run_scenario(cfg_of(qdynamics__trajectories=50), tmp_path)
        header, data = read_csv(tmp_path / "density.csv")
        assert header == ["m", "n", "re", "im"] and data.shape == (4, 4)

    def test_deterministic(self, tmp_path):
        cfg = cfg_of(qdynamics__trajectories=500)
        a = run_scenario(cfg, tmp_path / "a").to_json(timestamps=False)
        b = run_scenario(cfg, tmp_path / "b").to_json(timestamps=False)
        assert a == b
        assert (tmp_path / "a/decay.csv").read_bytes() == (tmp_path / "b/decay.csv").read_bytes()


class TestRelax:
    def test_bound_pair_drift(self, tmp_path):
        cfg = cfg_of(scenario="relax", theta__nu=2, theta__p_half=0.3, theta__dt=0.001,
                     relax__dynamical_times=20.0, relax__record_every=500)
        rec = run_scenario(cfg, tmp_path)
        assert rec.metrics["relax"]["energy_drift"] < 1e-6
        assert rec.verdicts["relax.energy_conserved"]
        # leapfrog error oscillates through each pericentre but does not accumulate
        assert rec.metrics["relax"]["max_energy_drift"] < 1e-3

    def test_small_run_and_histogram(self, tmp_path):
        rec = run_scenario(cfg_of(scenario="relax", **{k.replace(".", "__"): v
                                                       for k, v in SMALL_RELAX.items()}), tmp_path)
        assert rec.passed, rec.verdicts
        for name in ("snapshot_initial.csv", "snapshot_final.csv", "histogram.csv"):
            assert (tmp_path / name).exists()
        paths = {p.name: p for p in emit_plotdata(rec, tmp_path / "plot")}
        assert {"histogram_fit.csv", "magnetization.csv", "energy.csv"} <= set(paths)
        header, data = read_csv(paths["histogram_fit.csv"])
        counts = data[:, header.index("count")]
        assert counts.sum() == rec.metrics["relax"]["n_bound"]
        assert counts.sum() == pytest.approx(128, rel=0.01)

    def test_violation_exit_code(self, tmp_path):
        rec = run_scenario(cfg_of(scenario="relax", relax__energy_tol=1e-15,
                                  **{k.replace(".", "__"): v for k, v in SMALL_RELAX.items()}),
                           tmp_path)
        assert not rec.verdicts["relax.energy_conserved"]
        assert rec.exit_code == 2
        assert (tmp_path / "record.json").exists()


class TestTrps:
    def test_runs(self, tmp_path):
        rec = run_scenario(cfg_of(scenario="trps", trps__grid_n=10, trps__samples=5000,
                                  trps__mc_samples=5000), tmp_path)
        assert rec.passed, rec.verdicts
        assert rec.metrics["trps"]["sigma"] > 0
        header, _ = read_csv(emit_plotdata(rec, tmp_path / "plot")[0])
        assert header[0] == "component"


class TestRecord:
    def test_round_trip(self, tmp_path):
        rec = RunRecord("decohere", "ab" * 32, 1, metrics={"x": {"inf": math.inf, "z": 1 + 2j}})
        rec.finish()
        rec.write(tmp_path / "r.json")
        back = RunRecord.read(tmp_path / "r.json")
        assert back.metrics["x"]["inf"] == "inf"
        assert back.config_hash == rec.config_hash
        json.loads((tmp_path / "r.json").read_text())

    def test_empty_run_plotdata(self, tmp_path):
        with pytest.warns(UserWarning, match="no series"):
            assert emit_plotdata(RunRecord("decohere", "0" * 64, 0), tmp_path / "p") == []
        assert not (tmp_path / "p").exists()

    def test_partial_series_warns(self, tmp_path):
        rec = RunRecord("decohere", "0" * 64, 0, series={"decay": {"t": [0.0, 1.0]}})
        with pytest.warns(UserWarning, match="missing"):
            (path,) = emit_plotdata(rec, tmp_path)
        _, data = read_csv(path)
        assert np.isnan(data[:, 1]).all()


class TestCli:
    def write(self, tmp_path, text):
        path = tmp_path / "run.cfg"
        path.write_text(text)
        return str(path)

    def test_success(self, tmp_path, capsys):
        path = self.write(tmp_path, "seed = 1\nqdynamics.trajectories = 100\n")
        assert main(["decohere", "--config", path, "--out", str(tmp_path / "o")]) == 0
        assert "PASS decohere.mc_agrees" in capsys.readouterr().out
        assert (tmp_path / "o/plotdata/decay_curve.csv").exists()

    def test_seed_override(self, tmp_path):
        path = self.write(tmp_path, "qdynamics.trajectories = 50\n")
        assert main(["decohere", "--config", path, "--seed", "5", "--out", str(tmp_path / "o"),
                     "--no-plotdata"]) == 0
        assert json.loads((tmp_path / "o/record.json").read_text())["seed"] == 5
        assert not (tmp_path / "o/plotdata").exists()

    def test_usage_errors(self, tmp_path, capsys):
        good = self.write(tmp_path, "seed = 1\n")
        with pytest.raises(SystemExit) as exc:
            main(["nonsense", "--config", good])
        assert exc.value.code == 1
        with pytest.raises(SystemExit) as exc:
            main(["decohere"])
        assert exc.value.code == 1
        assert main(["decohere", "--config", self.write(tmp_path, "what = 1\n")]) == 1
        assert main(["decohere", "--config", str(tmp_path / "missing.cfg")]) == 1
        assert main(["decohere", "--config", self.write(tmp_path, "seed = 1\ntheta.nu = 0\n")]) == 1

    def test_validate(self, tmp_path, capsys):
        assert main(["validate", "--config", self.write(tmp_path, "seed = 1\n")]) == 0
        assert capsys.readouterr().out.strip() == "ok"
        bad = self.write(tmp_path, "seed = 1\nqdynamics.sigma = -1\ntheta.nu = 0\n")
        assert main(["validate", "--config", bad]) == 1
        out = capsys.readouterr().out
        assert "qdynamics.sigma" in out and "theta.nu" in out

    def test_violation_exit(self, tmp_path):
        body = "".join(f"{k} = {v}\n" for k, v in SMALL_RELAX.items())
        path = self.write(tmp_path, "seed = 3\nrelax.energy_tol = 1e-15\n" + body)
        assert main(["relax", "--config", path, "--out", str(tmp_path / "o")]) == 2
        assert (tmp_path / "o/record.json").exists()
