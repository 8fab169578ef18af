"""File formats and the command-line front end."""

import shutil
import struct
import subprocess

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from asaf.cli import main
from asaf.envs import chain_spec, soft_value_iteration
from asaf.errors import ConfigError, FormatError
from asaf.exact import expected_return
from asaf.formats import (
    CSV_HEADER,
    DEFAULTS,
    format_real,
    load_checkpoint,
    parse_run_config,
    read_demos,
    runlog_csv,
    save_checkpoint,
    write_demos,
)
from asaf.nn import Mlp
from asaf.policies import CategoricalPolicy, GaussianPolicy
from asaf.train import RunLog, RunRecord
from asaf.verify import collect_expert_demos


# ---------------------------------------------------------------- real formatting

def test_format_real_examples():
    assert format_real(1.0) == "1.0"
    assert format_real(-0.0) == "-0.0"
    assert format_real(0.1) == "0.10000000000000001"
    assert format_real(2.5e-10) == "2.5000000000000002e-10"


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_format_real_round_trips_bit_exact(x):
    back = float(format_real(x))
    assert back == x
    assert np.signbit(back) == np.signbit(x)


# ---------------------------------------------------------------- demo files

def test_demo_round_trip_discrete(tmp_path):
    demos = collect_expert_demos(chain_spec(), n=6, alpha=1.0, seed=3)
    path = tmp_path / "demos.jsonl"
    write_demos(path, demos)
    back = read_demos(path)
    assert (back.env_id, back.action_kind, back.obs_dim) == ("chain", "discrete", 4)
    assert back.mean_return == demos.mean_return
    assert len(back) == 6
    for a, b in zip(demos.trajectories, back.trajectories):
        np.testing.assert_array_equal(a.obs, b.obs)
        np.testing.assert_array_equal(a.acts, b.acts)


def test_demo_round_trip_continuous(tmp_path):
    rng = np.random.default_rng(0)
    from asaf.envs import Trajectory
    from asaf.train import DemoSet

    trajs = [Trajectory(obs=rng.normal(size=(4, 1)), acts=rng.normal(size=(4, 1))) for _ in range(3)]
    trajs[0].obs[0, 0] = -0.0  # signed zero must survive
    demos = DemoSet(trajs, env_id="pointmass", action_kind="continuous", obs_dim=1,
                    mean_return=-0.125)
    path = tmp_path / "demos.jsonl"
    write_demos(path, demos)
    back = read_demos(path)
    assert back.action_kind == "continuous"
    for a, b in zip(demos.trajectories, back.trajectories):
        np.testing.assert_array_equal(a.obs, b.obs)
        assert np.signbit(b.obs[0, 0]) == np.signbit(a.obs[0, 0])
        np.testing.assert_array_equal(a.acts, b.acts)


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


GOOD_HEADER = ('{"format_version": 1, "env": "chain", "action_kind": "discrete", '
               '"obs_dim": 2, "n_trajectories": 1, "mean_return": 0.0}')
GOOD_BODY = '{"obs": [[1.0,0.0]], "acts": [0], "len": 1}'


def test_demo_file_errors(tmp_path):
    path = tmp_path / "bad.jsonl"

    path.write_text("", encoding="utf-8")
    with pytest.raises(FormatError, match="empty"):
        read_demos(path)

    write_lines(path, ['{"format_version": 1}', GOOD_BODY])
    with pytest.raises(FormatError, match="header keys"):
        read_demos(path)

    write_lines(path, [GOOD_HEADER.replace('"format_version": 1', '"format_version": 2'), GOOD_BODY])
    with pytest.raises(FormatError, match="format_version"):
        read_demos(path)

    write_lines(path, [GOOD_HEADER, GOOD_BODY, GOOD_BODY])
    with pytest.raises(FormatError, match="promises 1"):
        read_demos(path)

    write_lines(path, [GOOD_HEADER, '{"obs": [[1.0,0.0]], "acts": [0], "len": 1'])
    with pytest.raises(FormatError, match="line 2"):
        read_demos(path)

    write_lines(path, [GOOD_HEADER, '{"obs": [[1.0,0.0,3.0]], "acts": [0], "len": 1}'])
    with pytest.raises(FormatError, match="obs_dim"):
        read_demos(path)

    write_lines(path, [GOOD_HEADER, '{"obs": [[1.0,0.0]], "acts": [0, 1], "len": 1}'])
    with pytest.raises(FormatError, match="len field"):
        read_demos(path)

    write_lines(path, [GOOD_HEADER, '{"obs": [[1.0,0.0]], "acts": [[0]], "len": 1}'])
    with pytest.raises(FormatError, match="flat list"):
        read_demos(path)


# ---------------------------------------------------------------- run configs

FULL_CONFIG = """
# chain imitation run
env = chain
algorithm = asaf_w
demos_path = demos.jsonl
w = 2
stride = 1
lr_d = 0.0005
batch = 16
n_g = 4
epochs = 3
clip = 0.5
clip_mode = value
steps = 12
eval_k = 8
eval_interval = 6
seed = 9
out_dir = out/run1
"""


def test_parse_full_config():
    setup = parse_run_config(FULL_CONFIG, source="run.cfg")
    cfg = setup.config
    assert setup.env_id == "chain"
    assert setup.demos_path == "demos.jsonl"
    assert setup.out_dir == "out/run1"
    assert (cfg.algorithm, cfg.w, cfg.stride) == ("asaf_w", 2, 1)
    assert (cfg.lr_d, cfg.batch, cfg.n_g, cfg.epochs) == (0.0005, 16, 4, 3)
    assert (cfg.clip, cfg.clip_mode, cfg.steps) == (0.5, "value", 12)
    assert (cfg.eval_k, cfg.eval_interval, cfg.seed) == (8, 6, 9)
    cfg.validated()


def test_parse_config_applies_defaults():
    setup = parse_run_config("env = chain\nalgorithm = asaf\ndemos_path = d.jsonl\n")
    cfg = setup.config
    assert cfg.lr_d == DEFAULTS["lr_d"]
    assert cfg.batch == DEFAULTS["batch"]
    assert cfg.epochs == DEFAULTS["epochs"]
    assert cfg.steps == DEFAULTS["steps"]
    assert setup.out_dir == "run"
    assert cfg.w is None and cfg.stride is None


def test_parse_config_errors_carry_line_numbers():
    with pytest.raises(ConfigError, match="line 2.*unknown key"):
        parse_run_config("env = chain\nlearning_rate = 3\n", source="x.cfg")
    with pytest.raises(ConfigError, match="line 3.*duplicate"):
        parse_run_config("env = chain\nalgorithm = asaf\nalgorithm = bc\n")
    with pytest.raises(ConfigError, match="line 1.*integer"):
        parse_run_config("steps = twelve\n")
    with pytest.raises(ConfigError, match="line 1.*real"):
        parse_run_config("lr_d = fast\n")
    with pytest.raises(ConfigError, match="line 2.*key = value"):
        parse_run_config("env = chain\njust some words\n")
    with pytest.raises(ConfigError, match="required key 'algorithm'"):
        parse_run_config("env = chain\ndemos_path = d.jsonl\n")


def test_parse_config_ignores_comments_and_blanks():
    text = "\n# full line comment\nenv = chain  # trailing comment\nalgorithm = bc\ndemos_path = d\n\n"
    setup = parse_run_config(text)
    assert setup.env_id == "chain"
    assert setup.config.algorithm == "bc"


# ---------------------------------------------------------------- checkpoints

def test_checkpoint_round_trip_categorical(tmp_path):
    rng = np.random.default_rng(1)
    policy = CategoricalPolicy(Mlp.init((4, 16, 2), rng))
    path = tmp_path / "p.ckpt"
    save_checkpoint(path, policy)
    back = load_checkpoint(path)
    assert isinstance(back, CategoricalPolicy)
    assert back.net.sizes == (4, 16, 2)
    np.testing.assert_array_equal(back.net.params, policy.net.params)
    obs = rng.normal(size=(3, 4))
    np.testing.assert_array_equal(back.log_probs(obs), policy.log_probs(obs))


def test_checkpoint_round_trip_gaussian(tmp_path):
    rng = np.random.default_rng(2)
    policy = GaussianPolicy(Mlp.init((1, 8, 2), rng))
    path = tmp_path / "p.ckpt"
    save_checkpoint(path, policy)
    back = load_checkpoint(path)
    assert isinstance(back, GaussianPolicy)
    np.testing.assert_array_equal(back.net.params, policy.net.params)


def test_checkpoint_corruption_detected(tmp_path):
    rng = np.random.default_rng(3)
    path = tmp_path / "p.ckpt"
    save_checkpoint(path, CategoricalPolicy(Mlp.init((2, 4, 2), rng)))
    blob = path.read_bytes()

    (tmp_path / "a.ckpt").write_bytes(b"XXXX" + blob[4:])
    with pytest.raises(FormatError, match="magic"):
        load_checkpoint(tmp_path / "a.ckpt")

    (tmp_path / "b.ckpt").write_bytes(blob[:10])
    with pytest.raises(FormatError, match="truncated"):
        load_checkpoint(tmp_path / "b.ckpt")

    (tmp_path / "c.ckpt").write_bytes(blob + b"\x00" * 8)
    with pytest.raises(FormatError, match="bytes"):
        load_checkpoint(tmp_path / "c.ckpt")

    (tmp_path / "d.ckpt").write_bytes(blob[:8] + struct.pack("<I", 7) + blob[12:])
    with pytest.raises(FormatError, match="kind"):
        load_checkpoint(tmp_path / "d.ckpt")

    (tmp_path / "e.ckpt").write_bytes(blob[:4] + struct.pack("<I", 9) + blob[8:])
    with pytest.raises(FormatError, match="version"):
        load_checkpoint(tmp_path / "e.ckpt")


# ---------------------------------------------------------------- curves csv

def test_runlog_csv_layout():
    log = RunLog(rows=[
        RunRecord(step=10, env_steps=500, mean_return=1.5, std_return=0.25,
                  bce_loss=1.375, js_to_expert=0.015625, eval_seed=42),
        RunRecord(step=20, env_steps=1000, mean_return=-2.0, std_return=0.0,
                  bce_loss=float("nan"), js_to_expert=None, eval_seed=43),
    ])
    text = runlog_csv(log)
    lines = text.splitlines()
    assert lines[0] == CSV_HEADER
    assert lines[1] == "10,500,1.5,0.25,1.375,0.015625"
    assert lines[2] == "20,1000,-2.0,0.0,nan,"   # no exact tracking: empty cell
    assert text.endswith("\n")


# ---------------------------------------------------------------- cli: gen-expert

def test_cli_gen_expert_writes_valid_demos(tmp_path, capsys):
    out = tmp_path / "chain.jsonl"
    assert main(["gen-expert", "--env", "chain", "--n", "5", "--out", str(out)]) == 0
    assert "wrote 5 episodes" in capsys.readouterr().out
    demos = read_demos(out)
    assert len(demos) == 5 and demos.env_id == "chain"
    assert all(len(t) == 5 for t in demos.trajectories)


def test_cli_gen_expert_is_deterministic(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    main(["gen-expert", "--env", "chain", "--n", "8", "--seed", "4", "--out", str(a)])
    main(["gen-expert", "--env", "chain", "--n", "8", "--seed", "4", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.jsonl"
    main(["gen-expert", "--env", "chain", "--n", "8", "--seed", "5", "--out", str(c)])
    assert a.read_bytes() != c.read_bytes()


def test_cli_gen_expert_mean_matches_exact_return(tmp_path):
    # the sampled mean must sit within 3 standard errors of the exact
    # expected return of the soft-optimal expert
    out = tmp_path / "chain.jsonl"
    assert main(["gen-expert", "--env", "chain", "--out", str(out)]) == 0
    demos = read_demos(out)
    assert len(demos) == 200  # documented default for this env

    spec = chain_spec()
    expert = soft_value_iteration(spec.mdp, 1.0)
    exact = expected_return(spec.mdp, expert.policy_table())
    assert exact == pytest.approx(1.6670641309288667, abs=1e-12)

    from asaf.envs import SoftExpertPolicy, rollout
    returns = [rollout(spec, SoftExpertPolicy(expert), seed=(0, i))[1] for i in range(200)]
    assert demos.mean_return == pytest.approx(np.mean(returns), abs=1e-12)
    stderr3 = 3.0 * np.std(returns) / np.sqrt(200.0)
    assert abs(demos.mean_return - exact) < stderr3


def test_cli_gen_expert_pointmass(tmp_path):
    out = tmp_path / "pm.jsonl"
    assert main(["gen-expert", "--env", "pointmass", "--n", "5", "--out", str(out)]) == 0
    demos = read_demos(out)
    assert demos.action_kind == "continuous"
    assert demos.trajectories[0].acts.shape == (50, 1)
    # worst start |x| = 1 costs about -2.9 before the controller settles
    assert demos.mean_return > -3.0


def test_cli_gen_expert_rejects_bad_args(tmp_path, capsys):
    out = str(tmp_path / "x.jsonl")
    assert main(["gen-expert", "--env", "chain", "--n", "0", "--out", out]) == 3
    assert main(["gen-expert", "--env", "chain", "--alpha", "-1", "--out", out]) == 3
    assert "validation error" in capsys.readouterr().err


# ---------------------------------------------------------------- cli: train/eval

@pytest.fixture()
def run_setup(tmp_path):
    demos = tmp_path / "demos.jsonl"
    main(["gen-expert", "--env", "chain", "--n", "5", "--out", str(demos)])
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        f"env = chain\nalgorithm = asaf\ndemos_path = {demos}\n"
        f"steps = 2\nepochs = 1\nn_g = 2\nbatch = 4\neval_interval = 1\neval_k = 2\n"
        f"out_dir = {tmp_path / 'out'}\n",
        encoding="utf-8",
    )
    return tmp_path, cfg


def test_cli_train_writes_curves_and_checkpoint(run_setup, capsys):
    tmp_path, cfg = run_setup
    assert main(["train", "--config", str(cfg)]) == 0
    assert "trained asaf" in capsys.readouterr().out
    lines = (tmp_path / "out" / "curves.csv").read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 3  # eval after each of the 2 outer steps
    policy = load_checkpoint(tmp_path / "out" / "policy.ckpt")
    assert isinstance(policy, CategoricalPolicy)


def test_cli_train_is_deterministic(run_setup):
    tmp_path, cfg = run_setup
    main(["train", "--config", str(cfg)])
    first = (tmp_path / "out" / "curves.csv").read_bytes()
    first_ckpt = (tmp_path / "out" / "policy.ckpt").read_bytes()
    main(["train", "--config", str(cfg)])
    assert (tmp_path / "out" / "curves.csv").read_bytes() == first
    assert (tmp_path / "out" / "policy.ckpt").read_bytes() == first_ckpt


def test_cli_train_zero_steps_header_only(tmp_path):
    demos = tmp_path / "demos.jsonl"
    main(["gen-expert", "--env", "chain", "--n", "3", "--out", str(demos)])
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"env = chain\nalgorithm = bc\ndemos_path = {demos}\nsteps = 0\n"
                   f"out_dir = {tmp_path / 'out'}\n", encoding="utf-8")
    assert main(["train", "--config", str(cfg)]) == 0
    assert (tmp_path / "out" / "curves.csv").read_text() == CSV_HEADER + "\n"


def test_cli_eval_reproduces_logged_evaluation(run_setup, capsys):
    tmp_path, cfg = run_setup
    main(["train", "--config", str(cfg)])
    capsys.readouterr()
    final = (tmp_path / "out" / "curves.csv").read_text().splitlines()[-1].split(",")
    step, logged_mean = int(final[0]), final[2]
    eval_seed = 0 + 100003 * step
    code = main(["eval", "--checkpoint", str(tmp_path / "out" / "policy.ckpt"),
                 "--env", "chain", "--k", "2", "--seed", str(eval_seed)])
    assert code == 0
    out = capsys.readouterr().out
    assert out.startswith(f"mean={logged_mean} ")
    assert "K=2" in out


def test_cli_exit_codes(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"

    cfg.write_text("env = chain\nwhatever = 3\n", encoding="utf-8")
    assert main(["train", "--config", str(cfg)]) == 2
    assert "line 2" in capsys.readouterr().err

    assert main(["train", "--config", str(tmp_path / "missing.cfg")]) == 4

    cfg.write_text(f"env = chain\nalgorithm = asaf\ndemos_path = {tmp_path / 'none.jsonl'}\n",
                   encoding="utf-8")
    assert main(["train", "--config", str(cfg)]) == 4

    # demos recorded on a different environment: semantic validation error
    demos = tmp_path / "pm.jsonl"
    main(["gen-expert", "--env", "pointmass", "--n", "2", "--out", str(demos)])
    cfg.write_text(f"env = chain\nalgorithm = asaf\ndemos_path = {demos}\nsteps = 1\n",
                   encoding="utf-8")
    assert main(["train", "--config", str(cfg)]) == 3

    capsys.readouterr()
    assert main(["eval", "--checkpoint", str(tmp_path / "none.ckpt"), "--env", "chain"]) == 4
    garbage = tmp_path / "junk.ckpt"
    garbage.write_bytes(b"not a checkpoint at all")
    assert main(["eval", "--checkpoint", str(garbage), "--env", "chain"]) == 4


def test_cli_eval_rejects_mismatched_env(tmp_path, capsys):
    rng = np.random.default_rng(5)
    ckpt = tmp_path / "p.ckpt"
    save_checkpoint(ckpt, CategoricalPolicy(Mlp.init((4, 8, 2), rng)))
    assert main(["eval", "--checkpoint", str(ckpt), "--env", "gridworld"]) == 3
    assert "does not fit" in capsys.readouterr().err


def test_cli_verify_lemma1(capsys):
    assert main(["verify", "--suite", "lemma1"]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert len(out) == 3
    assert all(line.endswith("PASS") for line in out)


def test_cli_usage_errors_exit_2(capsys):
    assert main(["verify", "--suite", "nonsense"]) == 2
    assert main(["frobnicate"]) == 2
    capsys.readouterr()


@pytest.mark.skipif(shutil.which("asaf") is None, reason="console script not on PATH")
def test_console_script_runs():
    proc = subprocess.run(["asaf", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "gen-expert" in proc.stdout
