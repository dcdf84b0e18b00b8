import json

import jsonschema
import pytest

from newton_admm import cli
from newton_admm.bench import METRICS_SCHEMA, read_metrics

TINY = ["--synth-n", "600", "--synth-p", "4", "--synth-classes", "3", "--n-workers", "2"]


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.mark.parametrize("F_k,F_star,expected", [("1.0", "1.0", 0.0), ("1.05", "1.0", 0.05),
                                                 ("2", "1", 1.0)])
def test_theta_command(capsys, F_k, F_star, expected):
    code, out, _ = run(capsys, "theta", F_k, F_star)
    assert code == 0 and float(out) == pytest.approx(expected, abs=1e-15)


def test_theta_command_bad_reference(capsys):
    code, _, err = run(capsys, "theta", "1", "0")
    assert code == cli.EXIT_CONFIG and "error" in err


def test_schema_command(capsys):
    code, out, _ = run(capsys, "schema")
    assert code == 0 and json.loads(out) == METRICS_SCHEMA


def test_reference_then_train(tmp_path, capsys):
    ref = tmp_path / "ref.npz"
    code, out, _ = run(capsys, "reference", "--out", str(ref), *TINY)
    assert code == 0 and json.loads(out)["grad_norm"] < 1e-10
    metrics = tmp_path / "m.jsonl"
    code, out, _ = run(capsys, "train", *TINY, "--reference", str(ref), "--output", str(metrics),
                       "--max-outer-iters", "5", "--penalty-policy", "spectral")
    assert code == 0
    summary = json.loads(out)
    assert summary["iterations"] == 5 and summary["reference_objective"] is not None
    rows = read_metrics(metrics)
    for row in rows:
        jsonschema.validate(row, METRICS_SCHEMA)
    assert rows[-1] == summary


def test_train_missing_data_file(tmp_path, capsys):
    out = tmp_path / "m.jsonl"
    code, _, err = run(capsys, "train", "--format", "libsvm", "--data", str(tmp_path / "none.svm"),
                       "--output", str(out))
    assert code == cli.EXIT_CONFIG and "not found" in err
    assert not out.exists()


def test_reference_not_converged_is_solver_error(tmp_path, capsys):
    code, _, err = run(capsys, "reference", "--out", str(tmp_path / "r.npz"), "--max-iters", "1", *TINY)
    assert code == cli.EXIT_SOLVER and "newton_max_iters" in err


def test_train_bad_value(capsys):
    code, _, err = run(capsys, "train", "--lam", "-1")
    assert code == cli.EXIT_CONFIG


def test_unknown_solver_rejected_by_argparse(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["train", "--solver", "adam"])
    assert exc.value.code == 2


def test_boolean_flags(capsys):
    args = cli.build_parser().parse_args(["train", "--normalize", "--no-standard-norms"])
    cfg = cli._config_from(args)
    assert cfg.normalize and not cfg.standard_norms


def test_sweep_command(tmp_path, capsys):
    out = tmp_path / "scaling.jsonl"
    code, _, _ = run(capsys, "sweep", "--workers", "1,2", "--mode", "weak", *TINY[:-2],
                     "--max-outer-iters", "3", "--output", str(out))
    assert code == 0
    rows = read_metrics(out)
    assert [r["n_workers"] for r in rows] == [1, 2]
    assert all(r["mode"] == "weak" for r in rows)


def test_sweep_bad_worker_list(capsys):
    code, _, err = run(capsys, "sweep", "--workers", "1,x")
    assert code == cli.EXIT_CONFIG


@pytest.mark.parametrize("value", ["zero", "0"])
def test_threads_env_validation(monkeypatch, capsys, value):
    monkeypatch.setenv("NEWTON_ADMM_THREADS", value)
    code, _, err = run(capsys, "theta", "1", "1")
    assert code == cli.EXIT_CONFIG and "NEWTON_ADMM_THREADS" in err


def test_threads_env_applied(monkeypatch, capsys):
    monkeypatch.setenv("NEWTON_ADMM_THREADS", "1")
    code, out, _ = run(capsys, "theta", "2", "1")
    assert code == 0 and float(out) == 1.0
