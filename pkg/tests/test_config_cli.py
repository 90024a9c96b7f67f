"""Strict config loading, digests, and the command line front end.

CLI checks run main() in-process and inspect exit codes, stdout, and the
files written to throwaway directories.
"""
import copy
import json

import numpy as np
import pytest

from biobotsim import cli, neurosignal as ns, vision
from biobotsim.config import (
    ConfigError,
    RunConfig,
    agent_params_from_config,
    arena_from_config,
    config_digest,
    config_from_dict,
    config_to_dict,
    load_config,
    uwb_from_config,
)
from biobotsim.locomotion import AUTO_PRESET
from biobotsim.vision import Mask, write_pgm


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    monkeypatch.delenv(cli.ENV_SEED, raising=False)
    monkeypatch.delenv(cli.ENV_OUTPUT_DIR, raising=False)


def _write_cfg(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def _quick_swarm_cfg(duration=20.0, n_agents=2, **extra):
    data = {"schema_version": 1,
            "swarm": {"duration_s": duration, "n_agents": n_agents}}
    data.update(extra)
    return data


# ---------- config schema ----------

def test_default_config_round_trips():
    cfg = RunConfig()
    again = config_from_dict(json.loads(json.dumps(config_to_dict(cfg))))
    assert again == cfg


def test_digest_is_stable_and_ignores_output_dir():
    import dataclasses
    cfg = RunConfig()
    assert config_digest(cfg) == config_digest(RunConfig())
    moved = dataclasses.replace(cfg, output_dir="elsewhere/deeper")
    assert config_digest(moved) == config_digest(cfg)
    reseeded = dataclasses.replace(cfg, seed=cfg.seed + 1)
    assert config_digest(reseeded) != config_digest(cfg)


def test_schema_version_is_required_and_checked():
    with pytest.raises(ConfigError, match="schema_version"):
        config_from_dict({})
    with pytest.raises(ConfigError, match="schema_version"):
        config_from_dict({"schema_version": 2})


def test_unknown_keys_are_reported_with_their_path():
    with pytest.raises(ConfigError, match="bananas"):
        config_from_dict({"schema_version": 1, "bananas": 1})
    with pytest.raises(ConfigError, match=r"swarm\.arena\.widht_m"):
        config_from_dict({"schema_version": 1,
                          "swarm": {"arena": {"widht_m": 2.0}}})


def test_every_config_node_rejects_unknown_keys():
    """Insert a bogus key into each object of the default tree in turn."""
    base = config_to_dict(RunConfig())
    paths = [()]

    def collect(node, path):
        for k, v in node.items():
            if isinstance(v, dict):
                paths.append(path + (k,))
                collect(v, path + (k,))

    collect(base, ())
    assert len(paths) >= 10
    for path in paths:
        data = copy.deepcopy(base)
        node = data
        for k in path:
            node = node[k]
        node["zz_bogus"] = 1
        with pytest.raises(ConfigError, match="zz_bogus"):
            config_from_dict(data)


def test_type_errors_name_the_field():
    with pytest.raises(ConfigError, match="seed"):
        config_from_dict({"schema_version": 1, "seed": 1.5})
    with pytest.raises(ConfigError, match="seed"):
        config_from_dict({"schema_version": 1, "seed": True})
    with pytest.raises(ConfigError, match=r"rig\.lowered_distance_d_m"):
        config_from_dict({"schema_version": 1,
                          "rig": {"lowered_distance_d_m": "close"}})
    with pytest.raises(ConfigError, match="expected a number"):
        config_from_dict({"schema_version": 1,
                          "rig": {"lowered_distance_d_m": True}})


def test_tuple_fields_check_their_length():
    with pytest.raises(ConfigError, match="3 entries"):
        config_from_dict({"schema_version": 1,
                          "assembly": {"workspace_box_m": [0.1, 0.1]}})


def test_domain_validation_through_config():
    with pytest.raises(ConfigError, match="preset"):
        config_from_dict({"schema_version": 1,
                          "locomotion": {"preset": "teleop"}})
    with pytest.raises(ConfigError, match="n_agents"):
        config_from_dict({"schema_version": 1, "swarm": {"n_agents": 0}})
    with pytest.raises(ConfigError, match="coverage_from"):
        config_from_dict({"schema_version": 1,
                          "swarm": {"coverage_from": "wishful"}})
    with pytest.raises(ConfigError, match="unknown step"):
        config_from_dict({"schema_version": 1,
                          "assembly": {"step_durations_s": {"warmup": 1.0}}})
    with pytest.raises(ConfigError):
        config_from_dict({"schema_version": 1,
                          "rig": {"rod_a_initial_clearance_m": -1.0}})


def test_load_config_reports_json_errors(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text('{"schema_version": 1,,}')
    with pytest.raises(ConfigError, match="line 1"):
        load_config(p)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")


def test_locomotion_overrides_flow_into_params():
    cfg = config_from_dict({
        "schema_version": 1,
        "locomotion": {"preset": "auto", "turn_angle_sd_deg": 0.0,
                       "heading_diffusion_deg2_s": 120.0}})
    p = agent_params_from_config(cfg.locomotion)
    assert p.turn_angle_sd == 0.0
    assert p.heading_diffusion == 120.0
    assert p.walk_speed_mean == AUTO_PRESET.walk_speed_mean


def test_arena_and_uwb_adapters():
    cfg = config_from_dict({
        "schema_version": 1,
        "swarm": {"arena": {"obstacles_m": [[0.5, 0.5, 0.8, 0.8]]},
                  "uwb": {"range_noise_sd_m": 0.0}}})
    arena = arena_from_config(cfg.swarm.arena)
    assert len(arena.obstacles) == 1
    assert arena.obstacles[0].x_max == 0.8
    assert uwb_from_config(cfg.swarm.uwb).range_noise_sd == 0.0
    default_arena = arena_from_config(RunConfig().swarm.arena)
    assert len(default_arena.obstacles) == 5


# ---------- assemble ----------

def test_assemble_prints_pitch_and_total(tmp_path, capsys):
    rc = cli.main(["assemble", "--output-dir", str(tmp_path / "out")])
    out = capsys.readouterr().out
    assert rc == 0
    assert "implant pitch: 162.7 deg" in out
    assert "68.0 s" in out

    doc = json.loads((tmp_path / "out" / "assembly.json").read_text())
    assert doc["total_s"] == 68.0
    assert doc["pitch_deg"] == pytest.approx(162.65, abs=1e-12)
    assert doc["pose_xyz_m"][2] == pytest.approx(0.0019)

    log = (tmp_path / "out" / "event_log.csv").read_text().splitlines()
    assert log[0] == "step_name,t_start_s,t_end_s"
    assert len(log) == 8
    assert log[1] == "fix,0.0,8.0"
    assert log[-1].startswith("retract,")


def test_assemble_batch_total(tmp_path, capsys):
    rc = cli.main(["assemble", "--batch", "4",
                   "--output-dir", str(tmp_path / "out")])
    out = capsys.readouterr().out
    assert rc == 0
    assert "468.0 s" in out
    doc = json.loads((tmp_path / "out" / "assembly.json").read_text())
    assert doc["batch_n"] == 4
    assert doc["batch_total_s"] == 468.0


def test_assemble_zero_lowering_fails_at_runtime(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, {"schema_version": 1,
                                "rig": {"lowered_distance_d_m": 0.0}})
    rc = cli.main(["assemble", "--config", str(cfg),
                   "--output-dir", str(tmp_path / "out")])
    err = capsys.readouterr().err
    assert rc == 4
    assert "exposure" in err


# ---------- spikes ----------

def test_spikes_zero_trace_detects_nothing(tmp_path, capsys):
    trace = ns.Trace(25000.0, np.zeros(30000))
    ns.write_trace_csv(trace, tmp_path / "flat.csv")
    rc = cli.main(["spikes", "--input", str(tmp_path / "flat.csv"),
                   "--output-dir", str(tmp_path / "out")])
    assert rc == 0
    assert "n_spikes: 0" in capsys.readouterr().out
    doc = json.loads((tmp_path / "out" / "spikes.json").read_text())
    assert doc["n_spikes"] == 0
    assert doc["threshold_v"] == 0.0


def test_spikes_planted_fixture_binary_input(tmp_path, capsys):
    ns.write_trace_binary(ns.planted_spike_trace(3), tmp_path / "planted.btrc")
    cfg = _write_cfg(tmp_path, {"schema_version": 1,
                                "neurosignal": {"blank_edge_times_s": []}})
    rc = cli.main(["spikes", "--config", str(cfg),
                   "--input", str(tmp_path / "planted.btrc"),
                   "--output-dir", str(tmp_path / "out")])
    assert rc == 0
    assert "n_spikes: 7" in capsys.readouterr().out
    doc = json.loads((tmp_path / "out" / "spikes.json").read_text())
    assert doc["params"]["blank_edge_times_s"] == []


def test_spikes_synth_mode_writes_report(tmp_path):
    rc = cli.main(["spikes", "--synth", "3.0",
                   "--output-dir", str(tmp_path / "out")])
    assert rc == 0
    doc = json.loads((tmp_path / "out" / "spikes.json").read_text())
    # 40 Hz nominal rate over 1.05 usable seconds, less pipeline losses
    assert 25 <= doc["n_spikes"] <= 50


def test_spikes_sweep_writes_table(tmp_path, capsys):
    rc = cli.main(["spikes", "--sweep", "1.0", "2.0", "0.5",
                   "--sweep-seeds", "3",
                   "--output-dir", str(tmp_path / "out")])
    assert rc == 0
    assert "3 voltages x 3 seeds" in capsys.readouterr().out
    lines = (tmp_path / "out" / "spike_sweep.csv").read_text().splitlines()
    assert lines[0] == "voltage_v,mean_spikes,sd_spikes"
    assert len(lines) == 4
    volts = [float(l.split(",")[0]) for l in lines[1:]]
    assert volts == [1.0, 1.5, 2.0]
    means = [float(l.split(",")[1]) for l in lines[1:]]
    assert means[0] < means[-1]


def test_spikes_missing_input_file(tmp_path, capsys):
    rc = cli.main(["spikes", "--input", str(tmp_path / "nope.csv"),
                   "--output-dir", str(tmp_path / "out")])
    assert rc == 3
    assert "input error" in capsys.readouterr().err


def test_spikes_without_a_mode(tmp_path, capsys):
    rc = cli.main(["spikes", "--output-dir", str(tmp_path / "out")])
    assert rc == 3
    assert "--input, --synth, or --sweep" in capsys.readouterr().err


def test_spikes_bad_sweep_range(tmp_path, capsys):
    rc = cli.main(["spikes", "--sweep", "2.0", "1.0", "0.5",
                   "--output-dir", str(tmp_path / "out")])
    assert rc == 4
    assert "runtime error" in capsys.readouterr().err


# ---------- coverage ----------

def test_coverage_single_run_outputs(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, _quick_swarm_cfg())
    rc = cli.main(["coverage", "--config", str(cfg),
                   "--output-dir", str(tmp_path / "out")])
    out = capsys.readouterr().out
    assert rc == 0
    assert "union coverage:" in out
    assert "coverage rate:" in out

    doc = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert doc["n_agents"] == 2
    assert len(doc["per_agent"]) == 2
    assert 0.0 < doc["final_union_coverage_pct"] <= 100.0
    cov = (tmp_path / "out" / "coverage.csv").read_text().splitlines()
    assert cov[0] == "t_s,agent0,agent1,union"
    assert len(cov) == 202   # header + 201 log rows at 10 Hz over 20 s
    traj = (tmp_path / "out" / "trajectory.csv").read_text().splitlines()
    assert traj[0] == "t_s,agent_id,x_true_m,y_true_m,x_est_m,y_est_m,command"
    assert len(traj) == 1 + 201 * 2


def test_coverage_agents_flag_overrides_config(tmp_path):
    cfg = _write_cfg(tmp_path, _quick_swarm_cfg(n_agents=4))
    rc = cli.main(["coverage", "--config", str(cfg),
                   "--agents", "1", "--output-dir", str(tmp_path / "one")])
    assert rc == 0
    rc = cli.main(["coverage", "--config", str(cfg),
                   "--output-dir", str(tmp_path / "four")])
    assert rc == 0
    single = json.loads((tmp_path / "one" / "summary.json").read_text())
    quad = json.loads((tmp_path / "four" / "summary.json").read_text())
    assert single["n_agents"] == 1
    assert quad["n_agents"] == 4
    assert single["final_union_coverage_pct"] < quad["final_union_coverage_pct"]


def test_coverage_batch_mode(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, _quick_swarm_cfg(duration=10.0))
    rc = cli.main(["coverage", "--config", str(cfg), "--seeds", "3",
                   "--output-dir", str(tmp_path / "out")])
    out = capsys.readouterr().out
    assert rc == 0
    assert "mean union coverage over 3 seeds" in out
    doc = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert doc["n_seeds"] == 3
    assert len(doc["per_seed"]) == 3
    assert len(set(doc["run_seeds"])) == 3
    cov = (tmp_path / "out" / "coverage.csv").read_text().splitlines()
    assert cov[0] == "t_s,union_mean_pct,union_sd_pct"


def test_coverage_rejects_zero_agents(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, _quick_swarm_cfg(duration=10.0))
    rc = cli.main(["coverage", "--config", str(cfg), "--agents", "0",
                   "--output-dir", str(tmp_path / "out")])
    assert rc == 4
    assert "at least one agent" in capsys.readouterr().err


# ---------- metrics ----------

def _rect_mask(shift=0):
    px = np.zeros((12, 12), dtype=bool)
    px[2:6, 3 + shift:7 + shift] = True
    return Mask(px)


def test_metrics_identical_dirs_score_perfectly(tmp_path, capsys):
    for d in ("pred", "truth"):
        (tmp_path / d).mkdir()
    for k in range(5):
        for d in ("pred", "truth"):
            write_pgm(_rect_mask(), tmp_path / d / f"m{k:03d}.pgm")
    rc = cli.main(["metrics", "--pred", str(tmp_path / "pred"),
                   "--truth", str(tmp_path / "truth"),
                   "--output-dir", str(tmp_path / "out")])
    out = capsys.readouterr().out
    assert rc == 0
    assert "mIoU: 1.0000" in out
    assert "mDSC: 1.0000" in out
    lines = (tmp_path / "out" / "metrics.csv").read_text().splitlines()
    assert lines[0] == "id,iou,dsc,pr_err_sq"
    assert len(lines) == 7    # 5 pairs + mean row
    assert lines[-1].startswith("mean,1.0,1.0,0.0")


def test_metrics_one_pixel_offset_gives_unit_mse(tmp_path, capsys):
    for d in ("pred", "truth"):
        (tmp_path / d).mkdir()
    for k in range(20):
        write_pgm(_rect_mask(1), tmp_path / "pred" / f"m{k:03d}.pgm")
        write_pgm(_rect_mask(0), tmp_path / "truth" / f"m{k:03d}.pgm")
    rc = cli.main(["metrics", "--pred", str(tmp_path / "pred"),
                   "--truth", str(tmp_path / "truth"),
                   "--output-dir", str(tmp_path / "out")])
    assert rc == 0
    assert "MSE(p_R): 1.000 px^2" in capsys.readouterr().out
    lines = (tmp_path / "out" / "metrics.csv").read_text().splitlines()
    assert lines[-1] == "mean," + lines[-1].split(",", 1)[1]
    assert float(lines[-1].split(",")[3]) == 1.0


def test_metrics_empty_truth_dir(tmp_path, capsys):
    (tmp_path / "pred").mkdir()
    (tmp_path / "truth").mkdir()
    rc = cli.main(["metrics", "--pred", str(tmp_path / "pred"),
                   "--truth", str(tmp_path / "truth"),
                   "--output-dir", str(tmp_path / "out")])
    assert rc == 3
    assert "no .pgm files" in capsys.readouterr().err


def test_metrics_name_mismatch_lists_files(tmp_path, capsys):
    (tmp_path / "pred").mkdir()
    (tmp_path / "truth").mkdir()
    write_pgm(_rect_mask(), tmp_path / "truth" / "a.pgm")
    write_pgm(_rect_mask(), tmp_path / "pred" / "b.pgm")
    rc = cli.main(["metrics", "--pred", str(tmp_path / "pred"),
                   "--truth", str(tmp_path / "truth"),
                   "--output-dir", str(tmp_path / "out")])
    err = capsys.readouterr().err
    assert rc == 3
    assert "a.pgm" in err and "b.pgm" in err


# ---------- fixation ----------

def test_fixation_table(capsys):
    rc = cli.main(["fixation"])
    out = capsys.readouterr().out.splitlines()
    assert rc == 0
    assert out[0] == "d_mm\th_mm\texposed\tsafety_margin"
    assert len(out) == 10
    assert out[1] == "0.000\t0.000\tno\tno"
    assert out[8] == "3.500\t1.900\tyes\tyes"
    assert out[9] == "4.000\t1.900\tyes\tyes"


def test_fixation_rejects_single_point(capsys):
    rc = cli.main(["fixation", "--points", "1"])
    assert rc == 4
    assert "at least 2" in capsys.readouterr().err


# ---------- seeds, env, determinism ----------

def test_env_seed_overrides_config_and_flag_wins(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.ENV_SEED, "7")
    rc = cli.main(["assemble", "--output-dir", str(tmp_path / "a")])
    assert rc == 0
    assert json.loads((tmp_path / "a" / "assembly.json").read_text())["seed"] == 7

    rc = cli.main(["assemble", "--seed", "9",
                   "--output-dir", str(tmp_path / "b")])
    assert rc == 0
    assert json.loads((tmp_path / "b" / "assembly.json").read_text())["seed"] == 9


def test_env_output_dir_and_flag_priority(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.ENV_OUTPUT_DIR, str(tmp_path / "env_out"))
    assert cli.main(["assemble"]) == 0
    assert (tmp_path / "env_out" / "assembly.json").exists()

    assert cli.main(["assemble", "--output-dir", str(tmp_path / "flag_out")]) == 0
    assert (tmp_path / "flag_out" / "assembly.json").exists()


def test_bad_env_seed_is_a_config_error(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(cli.ENV_SEED, "lots")
    rc = cli.main(["assemble", "--output-dir", str(tmp_path / "out")])
    assert rc == 2
    assert "config error" in capsys.readouterr().err


def test_shared_flags_work_in_both_positions(tmp_path):
    assert cli.main(["--seed", "5", "assemble",
                     "--output-dir", str(tmp_path / "a")]) == 0
    assert cli.main(["assemble", "--seed", "5",
                     "--output-dir", str(tmp_path / "b")]) == 0
    a = json.loads((tmp_path / "a" / "assembly.json").read_text())
    b = json.loads((tmp_path / "b" / "assembly.json").read_text())
    assert a == b


def test_unknown_config_file_key_exits_2(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, {"schema_version": 1, "swram": {}})
    rc = cli.main(["assemble", "--config", str(cfg),
                   "--output-dir", str(tmp_path / "out")])
    assert rc == 2
    assert "swram" in capsys.readouterr().err


def test_reruns_are_byte_identical(tmp_path):
    cfg = _write_cfg(tmp_path, _quick_swarm_cfg(duration=10.0))
    for d in ("r1", "r2"):
        assert cli.main(["coverage", "--config", str(cfg),
                         "--output-dir", str(tmp_path / d)]) == 0
        assert cli.main(["spikes", "--synth", "2.0", "--config", str(cfg),
                         "--output-dir", str(tmp_path / d)]) == 0
    for name in ("summary.json", "coverage.csv", "trajectory.csv", "spikes.json"):
        b1 = (tmp_path / "r1" / name).read_bytes()
        b2 = (tmp_path / "r2" / name).read_bytes()
        assert b1 == b2, name


def test_no_temp_files_left_behind(tmp_path):
    assert cli.main(["assemble", "--output-dir", str(tmp_path / "out")]) == 0
    assert list((tmp_path / "out").glob("*.tmp")) == []
    assert sorted(p.name for p in (tmp_path / "out").iterdir()) == [
        "assembly.json", "event_log.csv"]
