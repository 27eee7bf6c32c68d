import csv
import json

import pytest

from cannings_asg import cli, duality


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def rows_of(text):
    return list(csv.DictReader(text.splitlines()))


def test_fixation_exact(capsys):
    code, out, _ = run(capsys, "fixation", "--mode", "exact", "--n", 2, "--s", 0.5,
                       "--weights", "wf")
    row = rows_of(out)[0]
    assert code == 0 and float(row["estimate"]) == pytest.approx(0.8, abs=1e-12)
    assert list(row)[:13] == ["N", "s", "b", "weights", "rho2", "method", "estimate", "stderr",
                              "ci_lo", "ci_hi", "haldane_ref", "ratio", "seed"]
    assert "wall_time" not in row


def test_fixation_closed_form(capsys):
    code, out, _ = run(capsys, "fixation", "--mode", "closed-form", "--n", 10_000, "--s", 0.01,
                       "--gamma", 1)
    assert code == 0
    assert float(rows_of(out)[0]["estimate"]) == pytest.approx(0.0196078431, abs=1e-10)


def test_fixation_dual_haldane_ratio(capsys):
    code, out, _ = run(capsys, "fixation", "--mode", "dual", "--n", 20_000, "--s-exponent", 0.7,
                       "--weights", "wf")
    assert code == 0 and 0.9 <= float(rows_of(out)[0]["ratio"]) <= 1.1


def test_timing_column_is_opt_in(capsys):
    _, out, _ = run(capsys, "fixation", "--mode", "exact", "--n", 3, "--s", 0.2, "--timing")
    assert float(rows_of(out)[0]["wall_time"]) >= 0


@pytest.mark.parametrize("argv", [
    ["fixation", "--n", 10, "--s", 0.1, "--s-exponent", 0.5],
    ["fixation", "--n", 10],
    ["fixation", "--mode", "exact", "--n", 500, "--s", 0.1],
    ["fixation", "--mode", "exact", "--n", 5, "--s", 0.1, "--weights",
     "dirichlet-type:uniform:1:2"],
    ["fixation", "--n", 10, "--s", 0.1, "--weights", "nonsense"],
    ["fixation", "--mode", "bogus", "--n", 10, "--s", 0.1],
    ["sweep", "--grid-n", "", "--grid-b", "0.6"],
    ["equilibrium", "--n", 10, "--s", 0.0],
])
def test_usage_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2 and err


def test_duality_exact(capsys):
    code, out, _ = run(capsys, "duality", "--kind", "exact", "--n", 2, "--s", 0.5, "--k", 1,
                       "--sample", 2, "--g", 1)
    row = rows_of(out)[0]
    assert code == 0 and float(row["gap"]) < 1e-14
    assert float(row["lhs"]) == pytest.approx(1 / 9)


def test_duality_pathwise(capsys):
    code, out, _ = run(capsys, "duality", "--kind", "pathwise", "--n", 50, "--s", 0.1, "--g", 10,
                       "--replicates", 1000)
    assert code == 0 and rows_of(out)[0]["failures"] == "0"


def test_pathwise_failure_exit_code(capsys, monkeypatch, tmp_path):
    monkeypatch.setattr(duality, "pathwise_duality_assert", lambda *a: False)
    dump = tmp_path / "bad.json"
    code, out, _ = run(capsys, "duality", "--kind", "pathwise", "--n", 5, "--s", 0.1, "--g", 2,
                       "--replicates", 5, "--dump", dump)
    assert code == 3 and rows_of(out)[0]["failures"] == "5"
    assert json.loads(dump.read_text())["n_pop"] == 5


def test_duality_sampling_zero_generations(capsys):
    code, out, _ = run(capsys, "duality", "--kind", "sampling", "--n", 10, "--s", 0.1, "--k", 5,
                       "--sample", 2, "--g", 0, "--replicates", 100)
    assert code == 0 and float(rows_of(out)[0]["gap"]) == 0.0


def test_duality_moment_json(capsys):
    code, out, _ = run(capsys, "duality", "--kind", "moment", "--n", 10, "--s", 0.2, "--k", 5,
                       "--sample", 2, "--g", 3, "--replicates", 20_000, "--format", "json")
    row = json.loads(out)[0]
    assert code == 0 and abs(row["z"]) < 4 and {"lhs", "rhs", "combined_se"} <= set(row)


def test_equilibrium_masp(capsys, tmp_path):
    out_file = tmp_path / "m.csv"
    code, _, _ = run(capsys, "equilibrium", "--target", "masp", "--n", 100, "--s", 0.05,
                     "--gamma", 1, "--jumps", 100_000, "--output", out_file)
    row = rows_of(out_file.read_text())[0]
    assert code == 0 and float(row["tv_vs_binomial_conditioned"]) < 0.02
    hist = rows_of((tmp_path / "m.hist.csv").read_text())
    assert list(hist[0]) == ["value", "count"]
    assert sum(int(r["count"]) for r in hist) == 100_001


@pytest.mark.slow
def test_equilibrium_casp(capsys, tmp_path):
    hist = tmp_path / "h.csv"
    code, out, _ = run(capsys, "equilibrium", "--target", "casp", "--n", 10_000,
                       "--s-exponent", 0.6, "--samples", 10_000, "--chains", 4,
                       "--thinning", 1005, "--histogram", hist)
    row = rows_of(out)[0]
    assert code == 0 and float(row["ks_vs_normal"]) < 0.05
    assert float(row["mu_N"]) == pytest.approx(78.99, abs=0.01)
    code, out, _ = run(capsys, "equilibrium", "--n", 2, "--s", 1e-4, "--samples", 100)
    assert 1 <= float(rows_of(out)[0]["mean"]) <= 2


def test_transitions(capsys):
    code, out, _ = run(capsys, "transitions", "--n", 100, "--k", 1, "--s", 0, "--replicates", 1000)
    rows = {r["quantity"]: r for r in rows_of(out)}
    assert code == 0 and float(rows["p_down"]["empirical"]) == 0
    code, out, _ = run(capsys, "transitions", "--n", 100_000, "--k", 100, "--s", 1e-3,
                       "--replicates", 1_000_000)
    rows = {r["quantity"]: r for r in rows_of(out)}
    assert all(r["pass"] == "true" for r in rows.values())
    assert abs(float(rows["p_up"]["empirical"]) - 0.1) <= float(rows["p_up"]["budget"])


def test_conditions(capsys):
    _, out, _ = run(capsys, "conditions", "--weights", "wf", "--grid", "100,1000")
    assert [float(r["m2_scaled"]) for r in rows_of(out)] == [1.0, 1.0]
    _, out, _ = run(capsys, "conditions", "--weights", "dirichlet:1", "--grid", "10,100,10000")
    m2 = [float(r["m2_scaled"]) for r in rows_of(out)]
    assert m2 == sorted(m2) and m2[-1] == pytest.approx(2, abs=1e-3)
    _, out, _ = run(capsys, "conditions", "--weights", "dirichlet-type:gamma:2:1", "--grid",
                    "10000")
    assert float(rows_of(out)[0]["m2_scaled"]) == pytest.approx(1.5, abs=1e-3)


def test_sweep_and_resume(capsys, tmp_path, monkeypatch):
    out_file = tmp_path / "sweep.csv"
    code, _, _ = run(capsys, "sweep", "--grid-n", "1000,10000,20000", "--grid-b", "0.6,0.7",
                     "--weights", "wf", "--output", out_file)
    rows = rows_of(out_file.read_text())
    assert code == 0 and len(rows) == 6
    for r in rows:
        if r["N"] == "20000":
            assert 0.9 <= float(r["ratio"]) <= 1.1
    before = out_file.read_bytes()

    def boom(*a, **k):
        raise AssertionError("recomputed a finished grid point")

    monkeypatch.setattr(cli, "fixation_rows", boom)
    code, _, _ = run(capsys, "sweep", "--grid-n", "1000,10000,20000", "--grid-b", "0.6,0.7",
                     "--weights", "wf", "--output", out_file)
    assert code == 0 and out_file.read_bytes() == before


def test_sweep_partial_failure_is_recorded(capsys, tmp_path):
    out_file = tmp_path / "sweep.csv"
    code, _, _ = run(capsys, "sweep", "--grid-n", "1000", "--grid-b", "0.6,-1",
                     "--samples", 200, "--output", out_file)
    rows = rows_of(out_file.read_text())
    assert code == 0 and rows[0]["error"] == "" and rows[1]["error"]


def test_config_file_and_override(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nn = 3\ns = 0.2\nmode = exact\n")
    _, out, _ = run(capsys, "fixation", "--config", cfg)
    assert rows_of(out)[0]["N"] == "3"
    _, out, _ = run(capsys, "fixation", "--config", cfg, "--n", 4)
    assert rows_of(out)[0]["N"] == "4"
    cfg.write_text("bogus_key = 1\n")
    assert run(capsys, "fixation", "--config", cfg)[0] == 2


def test_strict_escalates_diagnostics(capsys):
    argv = ["fixation", "--mode", "dual", "--n", 1000, "--s-exponent", 0.6, "--samples", 50,
            "--burn-in", 0, "--thinning", 1]
    assert run(capsys, *argv)[0] == 0
    assert run(capsys, *argv, "--strict")[0] == 4


@pytest.mark.parametrize("mode", ["forward", "dual"])
def test_outputs_identical_across_threads(capsys, tmp_path, mode, monkeypatch):
    files = []
    for threads in (1, 3):
        monkeypatch.setenv("CANNINGS_ASG_THREADS", str(threads))
        f = tmp_path / f"{mode}_{threads}.csv"
        run(capsys, "fixation", "--mode", mode, "--n", 300, "--s", 0.05, "--replicates", 20_000,
            "--samples", 3000, "--chains", 3, "--seed", 17, "--output", f)
        files.append(f.read_bytes())
    assert files[0] == files[1]
