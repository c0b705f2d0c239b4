import json

import numpy as np
import pytest

from rkde import cli, harness
from rkde.errors import ConfigError, NumericalError
from rkde.harness import (
    ExperimentConfig,
    MetricsRecord,
    integrated_squared_error,
    load_metrics,
    read_grid_csv,
    read_json,
    run_attention_experiment,
    run_density_experiment,
    run_equivalence_check,
    sample_contaminated,
    write_grid_csv,
)

SMALL_GRID = [[-5.0, 10.0, 41], [-5.0, 10.0, 41]]


def density_cfg(**kw):
    base = dict(n_inliers=60, n_outliers=6, grid=SMALL_GRID)
    base.update(kw)
    return ExperimentConfig(**base)


class TestConfig:
    def test_defaults_valid(self):
        cfg = ExperimentConfig()
        assert cfg.loss_config().kind == "huber" and cfg.loss_config().a is None

    @pytest.mark.parametrize(
        "kw",
        [
            {"experiment": "nope"},
            {"seed": -1},
            {"seed": 1.5},
            {"n_inliers": 0},
            {"sigma_sq": -1.0},
            {"sigma_sq": "scott"},
            {"loss": {"kind": "tukey"}},
            {"loss": {"kind": "huber", "a": 0.0}},
            {"loss": {"kind": "huber", "b": 1.0}},
            {"grid": [[0.0, 1.0, 1]]},
            {"contaminate": "queries"},
            {"tol": 0.0},
        ],
    )
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            ExperimentConfig(**kw)

    def test_unknown_field(self):
        with pytest.raises(ConfigError, match="unknown"):
            ExperimentConfig.from_dict({"seed": 1, "nonsense": 2})

    def test_load_bad_json(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            ExperimentConfig.load(path)

    def test_dict_round_trip(self):
        cfg = density_cfg(seed=5, sigma_sq=0.5)
        assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg

    def test_bad_inlier_mean(self):
        with pytest.raises(ConfigError):
            density_cfg(inlier_params={"mean": [0.0, 0.0, 0.0], "cov": 1.0}).inlier_mean()


class TestSampling:
    def test_no_outliers(self):
        xs, is_out = sample_contaminated(density_cfg(n_outliers=0))
        assert xs.n == 60 and not is_out.any()

    def test_layout_and_determinism(self):
        cfg = density_cfg(seed=3)
        a, out_a = sample_contaminated(cfg)
        b, _ = sample_contaminated(cfg)
        np.testing.assert_array_equal(a.data, b.data)
        assert out_a.sum() == 6 and out_a[-6:].all()
        assert np.all(a.data[out_a] > 0)

    def test_seeds_differ(self):
        assert not np.array_equal(sample_contaminated(density_cfg(seed=1))[0].data, sample_contaminated(density_cfg(seed=2))[0].data)


class TestDensityExperiment:
    def test_clean_data_with_large_threshold_matches_kde(self):
        cfg = density_cfg(n_outliers=0, loss={"kind": "huber", "a": 10.0})
        m = run_density_experiment(cfg, output=False)
        assert m.ise_kde == m.ise_rkde
        assert m.mean_weight_outliers is None

    def test_least_squares_matches_kde(self):
        m = run_density_experiment(density_cfg(loss={"kind": "least_squares"}), output=False)
        assert m.ise_rkde == pytest.approx(m.ise_kde, rel=1e-12)

    def test_outliers_downweighted(self):
        m = run_density_experiment(density_cfg(n_inliers=200, n_outliers=20), output=False)
        assert m.mean_weight_outliers < m.mean_weight_inliers
        assert m.ise_rkde < m.ise_kde
        assert m.kirwls_converged

    def test_requires_2d(self):
        with pytest.raises(ConfigError):
            run_density_experiment(density_cfg(dim=3), output=False)

    def test_outputs_written(self, tmp_path):
        m = run_density_experiment(density_cfg(), output=tmp_path)
        record = read_json(tmp_path / "metrics.json")
        assert set(record) == {"config", "metrics", "prng"}
        assert "wall_time_ms" not in record["metrics"]
        assert load_metrics(tmp_path / "metrics.json") == m
        grid = read_grid_csv(tmp_path / "grid.csv")
        assert len(grid["x"]) == 41 * 41
        assert np.all(grid["density_true"] > 0)


def test_ise_of_reference_is_zero():
    ref = np.random.default_rng(0).random((5, 5))
    assert integrated_squared_error(ref, ref, 0.1) == 0.0
    assert integrated_squared_error(ref + 1.0, ref, 0.1) == pytest.approx(2.5)


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    cols = {name: rng.normal(size=7) * 10.0 ** rng.integers(-200, 200, 7) for name in harness.GRID_HEADER}
    write_grid_csv(tmp_path / "g.csv", cols)
    back = read_grid_csv(tmp_path / "g.csv")
    for name in harness.GRID_HEADER:
        np.testing.assert_allclose(back[name], cols[name], rtol=1e-15)


def test_metrics_json_round_trip():
    m = MetricsRecord(0.1, 0.05, 0.0051, 0.001, 17, True, 0.3, 0.42)
    assert MetricsRecord.from_dict(json.loads(json.dumps(m.to_dict()))) == m


class TestAttentionExperiment:
    def test_no_contamination(self):
        r = run_attention_experiment(ExperimentConfig(contamination_fraction=0.0, dim=8), output=False)
        assert r.deviation_softmax == r.deviation_kde == r.deviation_rkde == 0.0
        assert r.contaminated_rows == []

    def test_softmax_and_kde_agree_on_unit_keys(self):
        r = run_attention_experiment(ExperimentConfig(dim=16, seed=2), output=False)
        assert r.deviation_kde == pytest.approx(r.deviation_softmax, rel=1e-6)
        assert len(r.contaminated_rows) == 3

    @pytest.mark.parametrize("where", ["keys", "both"])
    def test_key_contamination_runs(self, where):
        r = run_attention_experiment(ExperimentConfig(dim=4, contaminate=where), output=False)
        assert all(np.isfinite([r.deviation_softmax, r.deviation_kde, r.deviation_rkde]))


class TestEquivalence:
    def test_passes_on_unit_keys(self):
        r = run_equivalence_check(ExperimentConfig(dim=4, seq_len=8), output=False)
        assert r.passed and r.max_relative_error < 1e-6

    def test_single_position_is_exact(self):
        r = run_equivalence_check(ExperimentConfig(dim=1, seq_len=1), output=False)
        assert r.max_relative_error == 0.0

    def test_fails_without_key_normalization(self):
        r = run_equivalence_check(ExperimentConfig(dim=16, seq_len=16, normalize_keys=False), output=False)
        assert not r.passed


def write_config(path, **kw):
    path.write_text(json.dumps(kw))
    return str(path)


class TestCli:
    @pytest.mark.parametrize("text,expected", [("0..3", range(0, 4)), ("7", range(7, 8)), (" 2 .. 2 ", range(2, 3))])
    def test_seed_range(self, text, expected):
        assert cli.parse_seed_range(text) == expected

    @pytest.mark.parametrize("text", ["3..1", "a..b", "-1..2", ""])
    def test_bad_seed_range(self, text):
        with pytest.raises(ConfigError):
            cli.parse_seed_range(text)

    def test_density_run_is_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", n_inliers=50, n_outliers=5, grid=SMALL_GRID)
        outputs = []
        for _ in range(2):
            assert cli.main(["density", "--config", cfg, "--output", str(tmp_path / "out"), "--quiet"]) == 0
            outputs.append([(tmp_path / "out" / f).read_bytes() for f in ("metrics.json", "grid.csv")])
        assert outputs[0] == outputs[1]

    def test_attention_and_equiv(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", dim=4, seq_len=8)
        assert cli.main(["attention", "--config", cfg, "--output", str(tmp_path / "a"), "--quiet"]) == 0
        assert (tmp_path / "a" / "metrics.json").exists()
        assert cli.main(["equiv", "--config", cfg, "--output", str(tmp_path / "e"), "--quiet"]) == 0
        assert read_json(tmp_path / "e" / "report.json")["report"]["passed"] is True

    def test_failed_equivalence_exit_code(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", dim=16, seq_len=16, normalize_keys=False)
        assert cli.main(["equiv", "--config", cfg, "--output", str(tmp_path / "e"), "--quiet"]) == 3

    def test_config_error_exit_code(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.json", bogus=1)
        assert cli.main(["density", "--config", cfg]) == 1
        assert "config error" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert cli.main(["density", "--config", str(tmp_path / "absent.json")]) == 1

    def test_numerical_error_exit_code(self, tmp_path, monkeypatch):
        def boom(cfg, output=None):
            raise NumericalError("denominator underflow")

        monkeypatch.setitem(harness.RUNNERS, "density_contamination", boom)
        cfg = write_config(tmp_path / "c.json")
        assert cli.main(["density", "--config", cfg, "--quiet"]) == 2

    def test_sweep_layout(self, tmp_path):
        cfg = write_config(tmp_path / "c.json", experiment="attention_contamination", dim=4, seq_len=10)
        out = tmp_path / "sweep"
        assert cli.main(["sweep", "--config", cfg, "--seeds", "3..5", "--output", str(out), "--quiet"]) == 0
        for seed in (3, 4, 5):
            assert (out / f"seed_{seed:04d}" / "metrics.json").exists()
        summary = read_json(out / "sweep.json")
        assert summary["experiment"] == "attention_contamination"
        assert [r["seed"] for r in summary["runs"]] == [3, 4, 5]

    def test_progress_on_stderr(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.json", dim=4, seq_len=8)
        cli.main(["attention", "--config", cfg, "--output", str(tmp_path / "a")])
        captured = capsys.readouterr()
        assert captured.out == "" and "deviation_softmax" in captured.err
