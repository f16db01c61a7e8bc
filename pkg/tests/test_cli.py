import json

import numpy as np
import pytest

from linsat.cli import main
from linsat.instances import feasible_example, infeasible_example


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "feas.json").write_text(json.dumps(feasible_example().to_dict()))
    (tmp_path / "inf.json").write_text(json.dumps(infeasible_example().to_dict()))
    (tmp_path / "y.csv").write_text("1,0.1,0.1,1\n")
    (tmp_path / "S.csv").write_text("1,2\n3,4\n")
    (tmp_path / "marg.json").write_text('{"U": [[1, 1]], "V": [[1, 1]]}')
    return tmp_path


def load(path):
    return json.loads(path.read_text())


class TestProject:
    def test_feasible_example(self, workdir):
        code = main(["project", "--constraints", "feas.json", "--y", "y.csv", "--tau", "0.01",
                     "--max-iters", "2000000", "--out", "a"])
        assert code == 0
        x = np.loadtxt(workdir / "a" / "x.csv", delimiter=",")
        np.testing.assert_allclose(x, [1, 0, 0, 1], atol=1e-6)
        assert load(workdir / "a" / "report.json")["converged"] is True

    def test_infeasible_exit_2(self, workdir):
        assert main(["project", "--constraints", "inf.json", "--y", "y.csv", "--out", "b"]) == 2
        assert load(workdir / "b" / "report.json")["converged"] is False

    def test_malformed_json(self, workdir, capsys):
        (workdir / "bad.json").write_text('{"l": 2, "packing": [\n')
        assert main(["project", "--constraints", "bad.json", "--y", "y.csv"]) == 1
        assert "line 2" in capsys.readouterr().err

    def test_invalid_system(self, workdir, capsys):
        (workdir / "cov.json").write_text(
            json.dumps({"l": 2, "covering": [{"c": [1, 1], "d": 3}]}))
        assert main(["project", "--constraints", "cov.json", "--y", "y.csv"]) == 1
        assert "covering" in capsys.readouterr().err

    def test_missing_file(self, workdir):
        assert main(["project", "--constraints", "nope.json", "--y", "y.csv"]) == 1

    def test_deterministic_artifacts(self, workdir):
        for out in ("r1", "r2"):
            main(["project", "--constraints", "feas.json", "--y", "y.csv", "--out", out])
        for name in ("x.csv", "report.json"):
            assert (workdir / "r1" / name).read_bytes() == (workdir / "r2" / name).read_bytes()
        m1, m2 = load(workdir / "r1" / "manifest.json"), load(workdir / "r2" / "manifest.json")
        assert m1["inputs"] == m2["inputs"] and m1["config"] == m2["config"]


class TestOtherCommands:
    def test_sinkhorn(self, workdir):
        assert main(["sinkhorn", "--scores", "S.csv", "--marginals", "marg.json", "--out", "s"]) == 0
        G = np.loadtxt(workdir / "s" / "gamma.csv", delimiter=",")
        np.testing.assert_allclose(G.sum(0), 1.0, atol=1e-12)

    def test_sinkhorn_shape_mismatch(self, workdir, capsys):
        (workdir / "m3.json").write_text('{"U": [[1, 1, 1]], "V": [[1.5, 1.5]]}')
        assert main(["sinkhorn", "--scores", "S.csv", "--marginals", "m3.json"]) == 1
        assert "U must be" in capsys.readouterr().err

    def test_grad_check(self, workdir):
        assert main(["grad-check", "--out", "g"]) == 0
        report = load(workdir / "g" / "grad_check.json")
        assert report["max_rel_error"] <= 1e-4 and report["ok"]

    def test_theory(self, workdir):
        assert main(["theory", "--k", "1", "--out", "t"]) == 0
        audit = load(workdir / "t" / "audit.json")
        assert audit["potential_bound_ok"] and audit["budget_ok"]
        lines = (workdir / "t" / "trajectory.csv").read_text().splitlines()
        assert lines[0] == "step,eta,phase,l1,kl,D" and len(lines) == audit["steps"] + 1

    def test_match(self, workdir):
        assert main(["match", "--sigma", "0", "--out", "m"]) == 0
        sol = load(workdir / "m" / "solution.json")
        assert sol["f1"] == 1.0 and sol["n_pairs"] == 8

    def test_portfolio(self, workdir):
        assert main(["portfolio", "--iters", "50", "--out", "p"]) == 0
        sol = load(workdir / "p" / "solution.json")
        assert sum(sol["x"]) == pytest.approx(1.0, abs=1e-6)

    def test_portfolio_needs_preferred(self, workdir):
        rows = [f"d{t},{1 + 0.1 * t + 0.05 * (t % 2)},{2 - 0.03 * t}" for t in range(9)]
        (workdir / "prices.csv").write_text("date,A,B\n" + "\n".join(rows) + "\n")
        assert main(["portfolio", "--prices", "prices.csv"]) == 1
        assert main(["portfolio", "--prices", "prices.csv", "--preferred", "0",
                     "--iters", "5", "--out", "pp"]) == 0

    def test_portfolio_short_history(self, workdir, capsys):
        (workdir / "short.csv").write_text("date,A\nd1,1\nd2,1.1\nd3,1.2\n")
        assert main(["portfolio", "--prices", "short.csv", "--preferred", "0"]) == 1
        assert "T >= 7" in capsys.readouterr().err

    def test_tsp_instance_file(self, workdir):
        inst = {"coords": [[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]], "s": 0, "e": 3}
        (workdir / "tsp.json").write_text(json.dumps(inst))
        assert main(["tsp", "--instance", "tsp.json", "--iters", "30", "--out", "ts"]) == 0
        sol = load(workdir / "ts" / "solution.json")
        assert sol["feasible"] and sol["tour"][0] == 0 and sol["tour"][-1] == 3
        assert sol["length"] >= sol["optimum"] - 1e-12

    def test_tsp_bad_instance(self, workdir):
        (workdir / "tsp.json").write_text('{"coords": [[0, 0], [1, 1]], "s": 0, "e": 0}')
        assert main(["tsp", "--instance", "tsp.json"]) == 1

    def test_round_study(self, workdir):
        assert main(["round-study", "--count", "2", "--n", "5", "--taus", "0.1", "0.01",
                     "--out", "rs"]) == 0
        assert load(workdir / "rs" / "rounding.json")["total"] == 2

    def test_unknown_command(self):
        with pytest.raises(SystemExit):
            main(["frobnicate"])
