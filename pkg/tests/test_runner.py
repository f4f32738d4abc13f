import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from latentprox import experiments as EXP
from latentprox.cli import main as cli_main
from latentprox.errors import ConfigError
from latentprox.runner import (RunConfig, load_config, render_grid,
                               rerun_from_manifest, resolve_config,
                               run_design, run_experiment)


def minimal_config(out):
    return {
        "experiment": "mini",
        "seed": 7,
        "chains": 2,
        "out": str(out),
        "schedule": {"T": 4, "abar_end": 0.02, "gamma_max": 0.05,
                     "gamma_min": 0.01, "M": 1},
        "score": {"kind": "linear_gaussian", "mean": [0.0, 0.0],
                  "cov": [[1.0, 0.0], [0.0, 1.0]]},
        "decoder": {"kind": "linear", "latent_dim": 2, "ambient_dim": 3,
                    "init": {"seed": 1}},
        "constraint": {"kind": "halfspace", "normal": [1.0, 0.0, 0.0],
                       "offset": 0.5, "prox_weight": 1e4},
        "sampler": {"mode": "proximal_latent", "lr": 0.5},
    }


def test_minimal_config_resolves_defaults(tmp_path):
    cfg = RunConfig.from_dict(minimal_config(tmp_path / "run"))
    # every default the loader resolves appears in the config
    assert cfg["sampler"]["inner_cap"] == 500
    assert cfg["sampler"]["final_projection"] is True
    assert cfg["schedule"]["abar_start"] == 1.0
    assert cfg["reports"]["contraction"] is False
    assert cfg["workers"] == 1


def test_unknown_key_suggestion():
    raw = minimal_config("x")
    raw["schedule"]["gama"] = 0.1
    del raw["schedule"]["gamma_max"]
    with pytest.raises(ConfigError, match="gama"):
        resolve_config(raw)
    try:
        resolve_config(raw)
    except ConfigError as exc:
        assert "gamma" in str(exc)


def test_missing_seed_rejected():
    raw = minimal_config("x")
    del raw["seed"]
    with pytest.raises(ConfigError, match="seed"):
        resolve_config(raw)


def test_load_config_yaml_and_parse_errors(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(minimal_config(tmp_path / "run")))
    cfg = load_config(path)
    assert cfg["seed"] == 7
    bad = tmp_path / "bad.yaml"
    bad.write_text("seed: 1\n  oops: [unclosed\n")
    with pytest.raises(ConfigError, match="line"):
        load_config(bad)


def test_run_experiment_writes_artifacts(tmp_path):
    out = tmp_path / "run"
    manifest = run_experiment(RunConfig.from_dict(minimal_config(out)))
    assert (out / "manifest.json").exists()
    assert (out / "metrics.csv").exists()
    assert (out / "score.json").exists()
    assert (out / "decoder.json").exists()
    samples = sorted((out / "samples").iterdir())
    assert len(samples) == 2
    header = (out / "metrics.csv").read_text().splitlines()[0]
    assert header == "chain,t,i,phase,gamma,score_norm,violation,dist"
    assert manifest["measured"]["lipschitz"] is not None
    # no files outside the declared output directory
    assert set(p.name for p in tmp_path.iterdir()) == {"run"}


def test_manifest_echoes_resolved_defaults(tmp_path):
    out = tmp_path / "run"
    manifest = run_experiment(RunConfig.from_dict(minimal_config(out)))
    stored = json.loads((out / "manifest.json").read_text())
    assert stored["resolved_config"]["sampler"]["inner_cap"] == 500
    assert stored["resolved_config"]["schedule"]["abar_start"] == 1.0
    assert stored["chain_seeds"] == [[7, 0], [7, 1]]


def test_replay_reproduces_metrics_bit_exactly(tmp_path):
    out = tmp_path / "run"
    run_experiment(RunConfig.from_dict(minimal_config(out)))
    replay_out = tmp_path / "replay"
    rerun_from_manifest(out / "manifest.json", replay_out)
    assert (out / "metrics.csv").read_bytes() == \
        (replay_out / "metrics.csv").read_bytes()
    for name in sorted(p.name for p in (out / "samples").iterdir()):
        assert (out / "samples" / name).read_bytes() == \
            (replay_out / "samples" / name).read_bytes()


def test_porosity_run_counts_and_manifest(tmp_path):
    cfg = EXP.porosity_config(fraction=0.3, seed=0, chains=3,
                              out=str(tmp_path / "poro"), grid=(8, 8),
                              latent_dim=16)
    manifest = run_experiment(RunConfig.from_dict(cfg))
    assert manifest["checks"]["porosity_exact"] is True
    assert manifest["ok"] is True
    pgms = [p for p in (tmp_path / "poro" / "samples").iterdir()
            if p.suffix == ".pgm"]
    assert len(pgms) == 3


def test_design_run_and_replay(tmp_path):
    cfg = EXP.design_loop_config(seed=0, out=str(tmp_path / "design"))
    manifest = run_design(RunConfig.from_dict(cfg))
    assert manifest["checks"]["design_mse_ratio"] is True
    replay = rerun_from_manifest(tmp_path / "design" / "manifest.json",
                                 tmp_path / "design2")
    assert (tmp_path / "design" / "metrics.csv").read_bytes() == \
        (tmp_path / "design2" / "metrics.csv").read_bytes()


def test_render_grid_bytes(tmp_path):
    path = tmp_path / "g.pgm"
    render_grid(-np.ones((2, 3)), path)
    data = path.read_bytes()
    assert data.startswith(b"P5\n3 2\n255\n")
    assert data[-6:] == bytes([0] * 6)
    render_grid(np.ones((2, 3)), path)
    assert path.read_bytes()[-6:] == bytes([255] * 6)
    render_grid(np.zeros((1, 1)), path)
    assert path.read_bytes()[-1] == 128  # round half up


# ---------------------------------------------------------------------------
# CLI


def write_yaml(path, data):
    Path(path).write_text(yaml.safe_dump(data))
    return path


def test_cli_sample_and_diagnose(tmp_path, capsys):
    cfg = minimal_config(tmp_path / "run")
    cfg["reports"] = {"contraction": True}
    path = write_yaml(tmp_path / "cfg.yaml", cfg)
    rc = cli_main(["sample", "--config", str(path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "manifest" in out
    rc = cli_main(["diagnose", "--run", str(tmp_path / "run")])
    assert rc == 0


def test_cli_overrides(tmp_path):
    cfg = minimal_config(tmp_path / "runA")
    path = write_yaml(tmp_path / "cfg.yaml", cfg)
    rc = cli_main(["sample", "--config", str(path), "--seed", "9",
                   "--out", str(tmp_path / "runB"), "--chains", "1"])
    assert rc == 0
    stored = json.loads((tmp_path / "runB" / "manifest.json").read_text())
    assert stored["resolved_config"]["seed"] == 9
    assert stored["resolved_config"]["chains"] == 1


def test_cli_config_error_exit_code(tmp_path):
    cfg = minimal_config(tmp_path / "run")
    cfg["smapler"] = cfg.pop("sampler")
    path = write_yaml(tmp_path / "cfg.yaml", cfg)
    assert cli_main(["sample", "--config", str(path)]) == 3


def test_cli_check_failure_exit_code(tmp_path):
    cfg = minimal_config(tmp_path / "run")
    # contraction check demanded but reports disabled -> fraction 0 -> fail
    cfg["checks"] = {"contraction_fraction": 0.99}
    path = write_yaml(tmp_path / "cfg.yaml", cfg)
    assert cli_main(["sample", "--config", str(path)]) == 2


def test_cli_project_roundtrip(tmp_path):
    from latentprox.serialize import load_vector, save_vector
    cfg = {"seed": 0, "out": str(tmp_path / "o"),
           "constraint": {"kind": "l2_ball", "radius": 1.0}}
    path = write_yaml(tmp_path / "cfg.yaml", cfg)
    vec = tmp_path / "x.txt"
    save_vector(np.array([3.0, 4.0]), vec)
    rc = cli_main(["project", "--config", str(path), "--input", str(vec),
                   "--out", str(tmp_path / "y.txt")])
    assert rc == 0
    assert np.allclose(load_vector(tmp_path / "y.txt"), [0.6, 0.8])


def test_cli_design(tmp_path):
    cfg = EXP.design_loop_config(seed=0, out=str(tmp_path / "d"))
    path = write_yaml(tmp_path / "cfg.yaml", cfg)
    assert cli_main(["design", "--config", str(path)]) == 0


def test_cli_train_score(tmp_path):
    cfg = {"seed": 0, "out": str(tmp_path / "o"),
           "schedule": {"T": 4, "abar_end": 0.02, "gamma_max": 0.05,
                        "gamma_min": 0.01},
           "score": {"kind": "linear_gaussian", "mean": [0.0, 0.0],
                     "cov": [[1.0, 0.0], [0.0, 1.0]]}}
    path = write_yaml(tmp_path / "cfg.yaml", cfg)
    out = tmp_path / "mlp.json"
    rc = cli_main(["train-score", "--config", str(path), "--out", str(out),
                   "--samples", "128", "--epochs", "3", "--hidden", "8",
                   "--batch", "32"])
    assert rc == 0
    from latentprox.serialize import load_score_field
    f = load_score_field(out)
    assert f.kind == "mlp" and f.dim == 2


def test_workers_do_not_change_metrics_bytes(tmp_path):
    raw = minimal_config(tmp_path / "w1")
    run_experiment(RunConfig.from_dict(raw))
    raw4 = dict(minimal_config(tmp_path / "w4"), workers=4, chains=2)
    run_experiment(RunConfig.from_dict(raw4))
    assert (tmp_path / "w1" / "metrics.csv").read_bytes() == \
        (tmp_path / "w4" / "metrics.csv").read_bytes()


def test_porosity_error_report_and_count_in_manifest(tmp_path):
    cfg = EXP.porosity_config(fraction=0.3, seed=1, chains=2,
                              out=str(tmp_path / "p"), grid=(8, 8),
                              latent_dim=16)
    manifest = run_experiment(RunConfig.from_dict(cfg))
    assert manifest["measured"]["porosity_count"] == 19  # 0.3*64 half-up
    rep = manifest["reports"]["porosity_error"]
    assert rep["max_fraction"] == 0.0
    assert rep["samples_above_0.10"] == 0
    assert any("porosity error" in line for line in manifest["summary"])


def test_alm_stream_written(tmp_path):
    cfg = EXP.centroid_config(seed=0, chains=2, out=str(tmp_path / "c"))
    manifest = run_experiment(RunConfig.from_dict(cfg))
    alm_csv = tmp_path / "c" / "alm.csv"
    if alm_csv.exists():  # written whenever any correction invoked the solver
        lines = alm_csv.read_text().splitlines()
        assert lines[0].startswith("chain,t,i,outer_iterations")
        assert len(lines) > 1
