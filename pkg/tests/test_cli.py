import copy
import json
import os

import pytest
import yaml

from dualhash import cli
from dualhash.exceptions import ConfigError


def tiny_cfg(**over):
    cfg = copy.deepcopy(cli.DEFAULT_CONFIG)
    cfg["dataset"].update(per_class_train=12, per_class_query=4, classes=3)
    cfg["optimizer"].update(T=8, batch=8)
    cfg["logging"].update(sigma_probe=8)
    for k, v in over.items():
        if isinstance(v, dict):
            cfg[k].update(v)
        else:
            cfg[k] = v
    return cfg


def write_cfg(tmp_path, cfg, name="cfg.yaml"):
    path = tmp_path / name
    with open(path, "w") as f:
        yaml.safe_dump(cfg, f)
    return str(path)


def test_load_config_defaults_and_file_merge(tmp_path):
    path = write_cfg(tmp_path, {"variant": "sgdm", "optimizer": {"T": 3}})
    cfg = cli.load_config(path, env={})
    assert cfg["variant"] == "sgdm"
    assert cfg["optimizer"]["T"] == 3
    assert cfg["problem"]["gamma"] == 3.0  # default preserved


def test_load_config_rejects_unknown_section(tmp_path):
    path = write_cfg(tmp_path, {"nonsense": 1})
    with pytest.raises(ConfigError):
        cli.load_config(path, env={})


def test_load_config_validates_fields(tmp_path):
    path = write_cfg(tmp_path, {"problem": {"lambda": -1.0}})
    with pytest.raises(ConfigError):
        cli.load_config(path, env={})
    path = write_cfg(tmp_path, {"variant": "adamw"})
    with pytest.raises(ConfigError):
        cli.load_config(path, env={})


def test_env_overrides():
    env = {"DUALHASH_PROBLEM__GAMMA": "5.5", "DUALHASH_SEED": "9"}
    cfg = cli.load_config(None, env=env)
    assert cfg["problem"]["gamma"] == 5.5
    assert cfg["seed"] == 9
    with pytest.raises(ConfigError):
        cli.load_config(None, env={"DUALHASH_PROBLEM__NOPE": "1"})


def test_config_roundtrip_fixed_point(tmp_path):
    cfg = tiny_cfg()
    path = write_cfg(tmp_path, cfg)
    loaded = cli.load_config(path, env={})
    echo = tmp_path / "echo.yaml"
    with open(echo, "w") as f:
        yaml.safe_dump(loaded, f, sort_keys=True)
    again = cli.load_config(str(echo), env={})
    assert again == loaded


def test_cmd_run_minimal_single_iteration(tmp_path):
    cfg = tiny_cfg(optimizer={"T": 1}, out_dir=str(tmp_path / "run1"))
    path = write_cfg(tmp_path, cfg)
    runlog = cli.cmd_run(path, env={})
    out = tmp_path / "run1"
    lines = (out / "diagnostics.csv").read_text().strip().splitlines()
    assert len(lines) == 2  # header + one row
    report = json.loads((out / "report.json").read_text())
    for key in (
        "map",
        "ap_at_topk",
        "ap_at_r2",
        "pr_curve",
        "quant_error",
        "separability",
        "intra_hist",
        "inter_hist",
    ):
        assert key in report
    assert runlog["rows"] == 1
    assert (out / "config_echo.yaml").exists()
    assert (out / "pr_curve.csv").exists()


def test_cmd_run_byte_identical_reruns(tmp_path):
    cfg = tiny_cfg(optimizer={"T": 10}, out_dir=str(tmp_path / "a"))
    path = write_cfg(tmp_path, cfg)
    cli.cmd_run(path, env={})
    cli.cmd_run(path, out=str(tmp_path / "b"), env={})
    a = (tmp_path / "a" / "diagnostics.csv").read_bytes()
    b = (tmp_path / "b" / "diagnostics.csv").read_bytes()
    assert a == b


def test_cmd_run_seed_changes_results(tmp_path):
    cfg = tiny_cfg(out_dir=str(tmp_path / "a"))
    path = write_cfg(tmp_path, cfg)
    cli.cmd_run(path, env={})
    cli.cmd_run(path, seed=5, out=str(tmp_path / "b"), env={})
    a = (tmp_path / "a" / "diagnostics.csv").read_bytes()
    b = (tmp_path / "b" / "diagnostics.csv").read_bytes()
    assert a != b


@pytest.mark.parametrize("variant", ["dualhash-storm", "sgdm", "spgd-wcr", "dhn"])
def test_cmd_run_all_variants(tmp_path, variant):
    cfg = tiny_cfg(variant=variant, out_dir=str(tmp_path / variant))
    path = write_cfg(tmp_path, cfg, name=f"{variant}.yaml")
    runlog = cli.cmd_run(path, env={})
    assert runlog["rows"] == 8
    assert os.path.exists(tmp_path / variant / "report.json")


def test_cmd_compare_table(tmp_path):
    cfg_a = tiny_cfg(out_dir=str(tmp_path / "a"))
    cfg_b = tiny_cfg(variant="sgdm", out_dir=str(tmp_path / "b"))
    pa = write_cfg(tmp_path, cfg_a, "a.yaml")
    pb = write_cfg(tmp_path, cfg_b, "b.yaml")
    out = tmp_path / "table.csv"
    table = cli.cmd_compare([pa, pb], [0, 1], str(out), env={})
    lines = table.strip().splitlines()
    assert lines[0].startswith("config,variant,seeds")
    assert len(lines) == 3
    assert out.exists()


def test_cmd_compare_single_seed_zero_std(tmp_path):
    cfg_a = tiny_cfg()
    cfg_b = tiny_cfg(variant="dhn")
    pa = write_cfg(tmp_path, cfg_a, "a.yaml")
    pb = write_cfg(tmp_path, cfg_b, "b.yaml")
    table = cli.cmd_compare([pa, pb], [0], None, env={})
    for line in table.strip().splitlines()[1:]:
        cells = line.split(",")
        assert float(cells[4]) == 0.0  # map_std


def test_cmd_compare_identical_configs_identical_rows(tmp_path):
    cfg = tiny_cfg()
    pa = write_cfg(tmp_path, cfg, "a.yaml")
    pb = write_cfg(tmp_path, cfg, "b.yaml")
    table = cli.cmd_compare([pa, pb], [0, 1], None, env={})
    rows = [line.split(",")[2:] for line in table.strip().splitlines()[1:]]
    assert rows[0] == rows[1]


def test_cmd_verify_passes_fresh():
    summary = cli.cmd_verify()
    assert summary["all_passed"], summary
    assert set(summary["suites"]) == {
        "prox_oracle",
        "gradients",
        "kkt",
        "lyapunov_positivity",
    }


def test_cmd_verify_rejects_nonpositive_lambda(tmp_path):
    path = write_cfg(tmp_path, {"problem": {"lambda": -0.05}})
    summary = cli.cmd_verify(path)
    assert not summary["all_passed"]
    assert not summary["suites"]["lyapunov_positivity"]["passed"]


def test_cmd_verify_detects_tampered_prox(monkeypatch):
    import dualhash.cli as climod

    orig = climod.prox_conj

    def tampered(reg, y, tau):
        return orig(reg, y, tau) + 1e-3

    monkeypatch.setattr(climod, "prox_conj", tampered)
    summary = climod.cmd_verify()
    assert not summary["suites"]["prox_oracle"]["passed"]


def test_shipped_canonical_configs_consistent():
    root = os.path.join(os.path.dirname(__file__), "..", "configs")
    for variant in cli.VARIANTS:
        path = os.path.join(root, f"canonical-{variant}.yaml")
        cfg = cli.load_config(path, env={})
        expect = cli.canonical_config(variant)
        expect["out_dir"] = cfg["out_dir"]
        assert cfg == expect


def test_main_exit_codes(tmp_path):
    cfg = tiny_cfg(optimizer={"T": 2}, out_dir=str(tmp_path / "m"))
    path = write_cfg(tmp_path, cfg)
    assert cli.main(["run", "--config", path]) == 0
    bad = write_cfg(tmp_path, {"problem": {"gamma": -3}}, "bad.yaml")
    assert cli.main(["run", "--config", bad]) == 2
    assert cli.main(["verify"]) == 0


@pytest.mark.filterwarnings("ignore:overflow")
@pytest.mark.filterwarnings("ignore:invalid value")
def test_main_divergent_run_exit_code(tmp_path):
    # step size large enough to overflow the parameters to non-finite values
    cfg = tiny_cfg(optimizer={"T": 30, "eta": 1e308, "batch": "full"})
    cfg["out_dir"] = str(tmp_path / "boom")
    path = write_cfg(tmp_path, cfg)
    assert cli.main(["run", "--config", path]) == 3
