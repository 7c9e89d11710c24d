import json

import numpy as np
import pytest

from conelab import lab


def ball_dict(n, r=1.0):
    return {"kind": "ball", "center": [0.0] * n, "radius": r}


class TestConfigParsing:
    def test_defaults(self):
        cfg = lab.parse_config({"n": 3, "k": 2, "q": 2.0})
        assert cfg.mode == "strict" and not cfg.q_rule_violation

    def test_missing_field(self):
        with pytest.raises(ValueError, match="'q'"):
            lab.parse_config({"n": 3, "k": 2})

    def test_strict_gate_high_k(self):
        # k > n/2 demands q = k
        with pytest.raises(ValueError, match="exponent rule"):
            lab.parse_config({"n": 3, "k": 2, "q": 3.0})

    def test_strict_gate_low_k(self):
        # k <= n/2 demands q > n/2
        with pytest.raises(ValueError, match="exponent rule"):
            lab.parse_config({"n": 4, "k": 2, "q": 2.0})

    def test_exploratory_flags(self):
        cfg = lab.parse_config({"n": 4, "k": 2, "q": 2.0,
                                "mode": "exploratory"})
        assert cfg.q_rule_violation
        assert cfg.to_dict()["q_rule_violation"] is True

    def test_unknown_operator(self):
        with pytest.raises(ValueError, match="operator.type"):
            lab.parse_config({"n": 3, "k": 2, "q": 2.0,
                              "operator": {"type": "mystery"}})

    def test_unknown_f(self):
        with pytest.raises(ValueError, match="f.type"):
            lab.parse_config({"n": 3, "k": 2, "q": 2.0,
                              "f": {"type": "mystery"}})

    def test_bad_mode(self):
        with pytest.raises(ValueError, match="mode"):
            lab.parse_config({"n": 3, "k": 2, "q": 2.0, "mode": "yolo"})

    def test_scalar_h_promoted(self):
        cfg = lab.parse_config({"n": 3, "k": 2, "q": 2.0, "h": 0.125})
        assert cfg.h_ladder == (0.125,)


class TestSlopeFitting:
    def test_exact_power_law(self):
        xs = 2.0 ** -np.arange(3, 11)
        ys = 3.1 * xs ** 1.7
        slope, hw = lab.fit_loglog(xs, ys)
        assert np.isclose(slope, 1.7, atol=1e-12) and hw < 1e-12

    def test_uses_last_points(self):
        xs = 2.0 ** -np.arange(0, 10)
        ys = xs ** 2.0
        ys[0] *= 100.0  # contaminate the coarsest point only
        slope, hw = lab.fit_loglog(xs, ys, npts=5)
        assert np.isclose(slope, 2.0, atol=1e-12)

    def test_two_points(self):
        slope, hw = lab.fit_loglog([1.0, 2.0], [1.0, 4.0])
        assert np.isclose(slope, 2.0) and hw == 0.0

    def test_aitken_geometric(self):
        seq = [1 - 0.5 ** j for j in range(1, 8)]
        assert np.isclose(lab.aitken_limit(seq), 1.0, atol=1e-12)


class TestSharpness:
    def test_slopes_match_exponent_formula(self):
        rep = lab.run_one("sharpness", {
            "name": "s", "n": 3, "k": 2, "q": 2.0,
            "q_list": [1.5, 2.0], "mode": "exploratory",
            "eps_ladder": [2.0 ** -j for j in range(3, 9)]})
        assert rep.passed
        got = {s.label: s.slope for s in rep.slopes}
        assert np.isclose(got["norm_decay_q=1.5"], 0.5, atol=1e-10)
        assert np.isclose(got["norm_decay_q=2"], 0.0, atol=1e-10)

    def test_requires_high_k(self):
        with pytest.raises(ValueError, match="k > n/2"):
            lab.run_one("sharpness", {"name": "s", "n": 4, "k": 2,
                                      "q": 3.0, "mode": "exploratory"})


class TestLogFamily:
    def test_flat_norm_and_divergence(self):
        rep = lab.run_one("log_family", {
            "name": "l", "n": 4, "k": 2, "q": 2.0, "mode": "exploratory",
            "eps_ladder": [2.0 ** -j for j in range(3, 9)]})
        assert rep.passed
        norms = [r.data["norm"] for r in rep.runs]
        assert np.ptp(norms) < 1e-9 * norms[0]
        infs = [r.data["inf"] for r in rep.runs]
        assert infs[-1] < infs[0]  # diverges downward

    def test_wrong_q_rejected(self):
        with pytest.raises(ValueError, match="n/2"):
            lab.run_one("log_family", {"name": "l", "n": 4, "k": 2,
                                       "q": 3.0, "mode": "exploratory"})


class TestMaxPrinciple:
    def test_zero_f_zero_margin(self):
        rep = lab.run_one("max_principle", {
            "name": "m", "n": 3, "k": 2, "q": 2.0, "h": [0.125],
            "domain": ball_dict(3), "f": {"type": "zero"}})
        assert rep.passed
        assert rep.runs[0].data["lhs"] <= 0.0

    def test_low_k_rejected(self):
        with pytest.raises(ValueError, match="k > n/2"):
            lab.run_one("max_principle", {"name": "m", "n": 4, "k": 2,
                                          "q": 3.0, "mode": "exploratory",
                                          "h": [0.125]})


class TestOscillation:
    def test_quadratic_decay(self):
        rep = lab.run_one("oscillation", {
            "name": "o", "n": 2, "k": 2, "q": 2.0, "h": [1 / 64],
            "domain": ball_dict(2),
            "f": {"type": "constant", "params": {"value": 4.0}}})
        assert rep.passed
        assert abs(rep.slopes[0].slope - 2.0) < 0.05

    def test_constant_solution_trivial(self):
        rep = lab.run_one("oscillation", {
            "name": "o", "n": 2, "k": 2, "q": 2.0, "h": [0.125],
            "domain": ball_dict(2), "f": {"type": "zero"}})
        assert rep.passed
        assert all(r.data["osc"] <= 1e-12 for r in rep.runs)


class TestRunSuite:
    def test_empty_battery(self, tmp_path):
        reports, code = lab.run_suite({"experiments": []},
                                      out_dir=str(tmp_path))
        assert reports == [] and code == 0

    def test_failing_verdict_sets_exit_code(self, tmp_path):
        # an absurd tolerance on a passing experiment cannot fail, so use
        # a sharpness config whose ladder is too short to fit the slope at
        # the wrong q
        battery = {"experiments": [
            {"exp": "sharpness", "name": "bad", "n": 3, "k": 2, "q": 1.2,
             "mode": "exploratory",
             "eps_ladder": [0.4, 0.2, 0.1, 0.05, 0.025],
             "q_list": [1.2]}]}
        reports, code = lab.run_suite(battery, out_dir=str(tmp_path))
        # report retained on disk regardless of verdict
        assert (tmp_path / "bad" / "report.json").exists()
        assert code == (0 if reports[0].passed else 1)

    def test_reports_and_plots_written(self, tmp_path):
        battery = {"experiments": [
            {"exp": "log_family", "name": "lg", "n": 4, "k": 2, "q": 2.0,
             "mode": "exploratory",
             "eps_ladder": [0.125, 0.0625, 0.03125]}]}
        reports, code = lab.run_suite(battery, out_dir=str(tmp_path))
        assert code == 0
        d = json.loads((tmp_path / "lg" / "report.json").read_text())
        assert set(d) == {"name", "config", "runs", "slopes", "verdicts"}
        plot = (tmp_path / "lg" / "norm_vs_eps.csv").read_text()
        assert plot.startswith("#")

    def test_malformed_battery(self):
        with pytest.raises(ValueError, match="experiments"):
            lab.run_suite({"jobs": []})
        with pytest.raises(ValueError, match="exp"):
            lab.run_suite({"experiments": [{"name": "x"}]})

    def test_unknown_experiment(self):
        with pytest.raises(ValueError, match="unknown experiment"):
            lab.run_one("nope", {"n": 3, "k": 2, "q": 2.0})

    def test_deterministic_csv_output(self, tmp_path):
        battery = {"experiments": [
            {"exp": "sharpness", "name": "d", "n": 3, "k": 2, "q": 2.0,
             "seed": 42, "mode": "exploratory",
             "eps_ladder": [0.125, 0.0625, 0.03125], "q_list": [2.0]}]}
        lab.run_suite(battery, out_dir=str(tmp_path / "a"))
        lab.run_suite(battery, out_dir=str(tmp_path / "b"))
        fa = (tmp_path / "a" / "d" / "norm_vs_eps_q2.csv").read_bytes()
        fb = (tmp_path / "b" / "d" / "norm_vs_eps_q2.csv").read_bytes()
        assert fa == fb


class TestWorkerCount:
    def test_env_override(self, monkeypatch):
        monkeypatch.setenv("CONELAB_WORKERS", "7")
        assert lab.worker_count() == 7

    def test_env_invalid(self, monkeypatch):
        monkeypatch.setenv("CONELAB_WORKERS", "0")
        with pytest.raises(ValueError):
            lab.worker_count()

    def test_default_positive(self, monkeypatch):
        monkeypatch.delenv("CONELAB_WORKERS", raising=False)
        assert lab.worker_count() >= 1
