import json
import os

import numpy as np
import pytest
import yaml

from flowpde.cli import main as cli_main
from flowpde.errors import ConfigurationError, StageError
from flowpde.experiment import (dump_config, load_config, resolve_config, run_experiment, sub_seed,
                                unit_variance_amplitude)
from flowpde.grids import Grid, GrfConfig, grf_sample


MICRO = {
    "family": "poisson",
    "grid": {"n0": 16, "n1": 16},
    "dataset": {"count": 6},
    "model": {"width": 6, "layers": 1, "modes": 4, "time_emb_dim": 4},
    "train": {"iterations": 12, "batch_size": 3},
    "ensemble": 2,
    "samplers": {"proflow": {"steps": 5, "eta0": 1e-4}},
}


def _write_cfg(tmp_path, extra=None, name="exp.yaml"):
    raw = dict(MICRO)
    raw["output_dir"] = str(tmp_path / "run")
    if extra:
        raw.update(extra)
    path = tmp_path / name
    with open(path, "w") as fh:
        yaml.safe_dump(raw, fh)
    return path


def test_config_round_trip_is_identity(tmp_path):
    cfg = load_config(_write_cfg(tmp_path))
    again = resolve_config(yaml.safe_load(dump_config(cfg)))
    assert cfg == again


def test_unknown_keys_are_rejected(tmp_path):
    with pytest.raises(ConfigurationError, match="dataset.countt"):
        resolve_config({"dataset": {"countt": 3}})
    with pytest.raises(ConfigurationError, match="samplers.proflow.etaO"):
        resolve_config({"samplers": {"proflow": {"etaO": 1.0}}})


def test_type_violations_carry_dotted_path():
    with pytest.raises(ConfigurationError, match="train.iterations"):
        resolve_config({"train": {"iterations": "many"}})


def test_empty_stage_list_only_echoes_config(tmp_path):
    cfg = load_config(_write_cfg(tmp_path, extra={"stages": []}))
    results = run_experiment(cfg)
    assert results == {}
    outdir = cfg["output_dir"]
    assert os.listdir(outdir) == ["resolved_config.yaml"]
    echoed = yaml.safe_load(open(os.path.join(outdir, "resolved_config.yaml")))
    assert echoed == cfg


def test_missing_upstream_artifact_is_stage_error(tmp_path):
    cfg = load_config(_write_cfg(tmp_path))
    with pytest.raises(StageError, match="train: missing upstream artifact"):
        run_experiment(cfg, stages=["train"])


def test_sub_seed_split_is_stable():
    a = sub_seed(7, "train")
    assert a == sub_seed(7, "train")
    assert a != sub_seed(7, "sample")
    assert a != sub_seed(8, "train")
    assert sub_seed(7, "sample", 3) != sub_seed(7, "sample", 4)


def test_unit_variance_amplitude_yields_unit_std():
    g = Grid("spatial2d", 16, 16)
    amp = unit_variance_amplitude(g, 0.05, 2.0)
    draws = np.stack([grf_sample(g, GrfConfig(0.05, 2.0, amp), seed=s).values
                      for s in range(400)])
    assert abs(draws.std() - 1.0) < 0.05


def test_full_pipeline_produces_report_and_is_idempotent(tmp_path):
    cfg = load_config(_write_cfg(tmp_path))
    res1 = run_experiment(cfg)
    assert not any(v.get("skipped") for v in res1.values())
    outdir = cfg["output_dir"]
    report = json.load(open(os.path.join(outdir, "report.json")))
    for key in ("RE", "MMSE", "SMSE", "PDE_err", "obs_misfit", "config_hash", "seeds"):
        assert key in report
    assert report["E"] == 2
    assert len(report["seeds"]) == 2
    first_bytes = open(os.path.join(outdir, "report.json"), "rb").read()

    res2 = run_experiment(cfg)
    assert all(v.get("skipped") for v in res2.values())
    assert open(os.path.join(outdir, "report.json"), "rb").read() == first_bytes


def test_every_output_is_reachable_from_manifest(tmp_path):
    cfg = load_config(_write_cfg(tmp_path))
    run_experiment(cfg)
    outdir = cfg["output_dir"]
    manifest = set(json.load(open(os.path.join(outdir, "report.json")))["manifest"])
    on_disk = set()
    for root, _dirs, files in os.walk(outdir):
        for f in files:
            rel = os.path.relpath(os.path.join(root, f), outdir)
            if not f.startswith(".stamp_") and f != "report.json":
                on_disk.add(rel)
    assert on_disk <= manifest | {"resolved_config.yaml"}
    assert "summary.csv" in manifest


def test_forward_report_contains_expected_artifacts(tmp_path):
    cfg = load_config(_write_cfg(tmp_path, extra={"ensemble": 4}))
    run_experiment(cfg)
    outdir = cfg["output_dir"]
    samples = sorted(os.listdir(os.path.join(outdir, "samples")))
    assert samples == [f"sample_{i:03d}.bin" for i in range(4)]
    for ch in (0, 1):
        for tag in ("truth", "mean", "std", "sample"):
            assert os.path.exists(os.path.join(outdir, f"heatmap_{tag}_c{ch}.csv"))


def test_seed_override_changes_sampling(tmp_path):
    cfg = load_config(_write_cfg(tmp_path))
    run_experiment(cfg, stages=["generate-data", "train"])
    run_experiment(cfg, stages=["sample"])
    outdir = cfg["output_dir"]
    a = open(os.path.join(outdir, "samples", "sample_000.bin"), "rb").read()
    run_experiment(cfg, stages=["sample"], seed_override=999)
    b = open(os.path.join(outdir, "samples", "sample_000.bin"), "rb").read()
    assert a != b


def test_cli_exit_codes(tmp_path, capsys):
    cfg_path = _write_cfg(tmp_path)
    assert cli_main(["generate-data", "--config", str(cfg_path)]) == 0
    # stage error: sampling before training
    assert cli_main(["sample", "--config", str(cfg_path)]) == 1
    err = capsys.readouterr().err
    assert "sample:" in err and "missing upstream" in err
    bad = tmp_path / "bad.yaml"
    bad.write_text("nonsense_key: 1\n")
    assert cli_main(["train", "--config", str(bad)]) == 2
    assert cli_main(["evaluate", "--config", str(tmp_path / "absent.yaml")]) == 2


def test_cli_full_stage_sequence(tmp_path):
    cfg_path = _write_cfg(tmp_path)
    for stage in ("generate-data", "train", "sample", "evaluate", "report"):
        assert cli_main([stage, "--config", str(cfg_path)]) == 0
    cfg = load_config(cfg_path)
    assert os.path.exists(os.path.join(cfg["output_dir"], "summary.csv"))
