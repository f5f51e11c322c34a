import math

import numpy as np
import pytest

from mesoml.cli import main
from mesoml.dataset import POST_DIAGNOSIS, find_attribute, write_table
from mesoml.errors import StageError
from mesoml.experiment import (
    ExperimentConfig, emit_report, load_config, markdown_report, parse_assignments, read_report_csv,
    run_experiment,
)
from mesoml.learners import ROSTER, make_config, make_learner
from mesoml.synth import generate_synthetic

FAST = ("zero_rule", "sgd", "adaboost")
FAST_SET = ("sgd.epochs=5",)


@pytest.fixture(scope="module")
def synth_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "synth.csv"
    write_table(generate_synthetic(n=150, seed=3), path)
    return path


def fast_config(data, **kw):
    cfg = ExperimentConfig(data=str(data), models=FAST, k=5, **kw)
    return parse_assignments(FAST_SET, cfg)


# ---------------------------------------------------------------- config


def test_config_normalizes_phase():
    assert ExperimentConfig(phase="2").phase == "phase2"
    assert ExperimentConfig(phase="Phase1").phase == "phase1"
    with pytest.raises(ValueError):
        ExperimentConfig(phase="3")


@pytest.mark.parametrize("kw", [{"models": ()}, {"models": ("sgd", "sgd")}, {"models": ("svm",)},
                                {"k": 1}, {"alpha": 1.5}, {"workers": 0}])
def test_config_rejects(kw):
    with pytest.raises(ValueError):
        ExperimentConfig(**kw)


def test_config_hash_stable_and_sensitive():
    a = ExperimentConfig(seed=3)
    assert a.config_hash() == ExperimentConfig(seed=3).config_hash()
    assert a.config_hash() != ExperimentConfig(seed=4).config_hash()
    assert len(a.config_hash()) == 64


def test_parse_assignments():
    cfg = parse_assignments(["phase=2", "models=sgd,klr", "klr.lam=1e-4", "boruta.max_iter=7", "per-fold-selection=yes"])
    assert cfg.phase == "phase2" and cfg.models == ("sgd", "klr")
    assert cfg.model_overrides("klr") == {"lam": "1e-4"}
    assert cfg.boruta_max_iter == 7 and cfg.per_fold_selection
    for bad in (["phase"], ["nonsense=1"], ["svm.c=1"]):
        with pytest.raises(ValueError):
            parse_assignments(bad)


def test_load_config_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\nk = 5\nseed=9  # trailing\nmlp.hidden=4,3\n")
    cfg = load_config(p)
    assert cfg.k == 5 and cfg.seed == 9
    assert make_config("mlp", cfg.model_overrides("mlp")).hidden == (4, 3)


def test_make_learner_registry(blobs):
    for name in ROSTER:
        overrides = {"epochs": "3"} if name in ("sgd", "mlp", "vp") else None
        model = make_learner(name, overrides, seed=0)(blobs)
        P = model.predict_distribution(blobs.X[:5])
        assert P.shape == (5, 2) and np.allclose(P.sum(axis=1), 1.0)
    with pytest.raises(ValueError):
        make_config("sgd", {"momentum": "1"})


# ---------------------------------------------------------------- run


@pytest.fixture(scope="module")
def phase1(synth_csv):
    return run_experiment(fast_config(synth_csv, seed=5))


def test_ttest_matrix_antisymmetric(phase1):
    for a in FAST:
        assert phase1.ttests[(a, a)].t == 0.0 and phase1.ttests[(a, a)].p_value == 1.0
        for b in FAST:
            ab, ba = phase1.ttests[(a, b)], phase1.ttests[(b, a)]
            assert ab.p_value == ba.p_value
            assert ab.t == -ba.t or (math.isnan(ab.t) and math.isnan(ba.t))


def test_zero_rule_accuracy_is_majority_share(phase1):
    assert phase1.report("zero_rule").accuracy == pytest.approx(1 - round(150 * 96 / 324) / 150)


def test_report_csv_round_trip(phase1, tmp_path):
    emit_report(phase1, tmp_path)
    values = read_report_csv(tmp_path / "report.csv")
    for rep in phase1.reports:
        for m, v in rep.metrics().items():
            assert values[(rep.model, m)] == v or (math.isnan(v) and math.isnan(values[(rep.model, m)]))
    assert (tmp_path / "boruta.csv").read_text().startswith("name,decision")
    prov = (tmp_path / "provenance.txt").read_text()
    assert f"config_hash={phase1.config.config_hash()}" in prov


def test_markdown_lists_every_model(phase1):
    md = markdown_report(phase1)
    for m in FAST:
        assert m in md
    assert "Classification accuracy (%)" in md


def test_run_is_deterministic(synth_csv, tmp_path):
    cfg = fast_config(synth_csv, seed=11)
    for k in range(2):
        emit_report(run_experiment(cfg), tmp_path / f"r{k}")
    for name in ("report.csv", "ttest.csv", "report.md"):
        assert (tmp_path / "r0" / name).read_bytes() == (tmp_path / "r1" / name).read_bytes()


def test_phase2_excludes_post_diagnosis(synth_csv):
    cfg = fast_config(synth_csv, phase="phase2", boruta_trees=20, boruta_max_iter=10)
    rep = run_experiment(cfg)
    for name in POST_DIAGNOSIS:
        assert find_attribute(rep.features, name) is None
    assert rep.boruta is not None
    assert set(rep.features) <= set(rep.boruta.names)


def test_missing_data_is_a_load_stage_error(tmp_path):
    with pytest.raises(StageError) as info:
        run_experiment(ExperimentConfig(data=str(tmp_path / "nope.csv")))
    assert info.value.stage == "load"


# ---------------------------------------------------------------- CLI


def test_cli_run_writes_reports(synth_csv, tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["run", "--data", str(synth_csv), "--models", "zero_rule,adaboost", "--k", "5",
                 "--out", str(out)])
    assert code == 0
    assert (out / "report.md").exists() and (out / "ttest.csv").exists()
    assert "zero_rule" in capsys.readouterr().out


def test_cli_missing_file_exit_code(tmp_path, capsys):
    assert main(["run", "--data", str(tmp_path / "missing.csv")]) == 1
    assert "[load]" in capsys.readouterr().err


def test_cli_bad_model_exit_code(synth_csv, capsys):
    assert main(["run", "--data", str(synth_csv), "--models", "svm"]) == 2
    assert "[config]" in capsys.readouterr().err


def test_cli_rejects_bad_phase():
    with pytest.raises(SystemExit) as info:
        main(["run", "--phase", "3"])
    assert info.value.code == 2


def test_cli_synth_and_profile(tmp_path, capsys):
    path = tmp_path / "s.csv"
    assert main(["synth", "--n", "60", "--seed", "2", "--out", str(path)]) == 0
    assert main(["profile", "--data", str(path)]) == 0
    assert "age" in capsys.readouterr().out


def test_cli_boruta(synth_csv, tmp_path, capsys):
    out = tmp_path / "b.csv"
    assert main(["boruta", "--data", str(synth_csv), "--max-iter", "3", "--trees", "10", "--out", str(out)]) == 0
    assert "iterations: " in capsys.readouterr().out
    assert out.read_text().startswith("name,decision")
