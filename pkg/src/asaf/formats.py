"""On-disk formats: demo files, run configs, checkpoints, curve CSVs.

Demo file (UTF-8 text, one JSON object per line):
    line 1   header: {"format_version": 1, "env": str, "action_kind": str,
                      "obs_dim": int, "n_trajectories": int, "mean_return": float}
    line 2+  one trajectory each: {"obs": [[...]], "acts": [...], "len": int}

Reals are written with 17 significant digits and always carry a decimal
point, which makes the round trip bit-exact for float64 (including the sign
of zero).  Discrete actions are plain ints; continuous actions are rows of
reals.

Run config (UTF-8 text): one ``key = value`` per line, blank lines and
``#`` comments ignored.  Unknown keys are an error, as are malformed
values; both report the offending line number.  Missing keys fall back to
the documented defaults in DEFAULTS below; env, algorithm, and demos_path
have no default and must be present for training.

Checkpoint (binary, little-endian):
    bytes 0-3   magic "ASAF"
    u32         format version (1)
    u32         policy kind: 0 categorical, 1 gaussian
    u32         number of layer sizes, then that many u32 layer sizes
    f64 * n     flat parameters, n implied by the layer sizes

Curves CSV: header ``step,env_steps,mean_return,std_return,bce_loss,
js_to_expert``; the last column is empty when no exact tracking exists.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .envs import Trajectory
from .errors import ConfigError, FormatError
from .nn import Mlp
from .policies import CategoricalPolicy, GaussianPolicy
from .train import DemoSet, RunLog, TrainConfig

__all__ = [
    "DEFAULTS",
    "RunSetup",
    "format_real",
    "load_checkpoint",
    "parse_run_config",
    "read_demos",
    "runlog_csv",
    "save_checkpoint",
    "write_demos",
    "write_runlog_csv",
]

FORMAT_VERSION = 1
CHECKPOINT_MAGIC = b"ASAF"
CHECKPOINT_VERSION = 1


def format_real(x: float) -> str:
    """17 significant digits, always with a decimal point or exponent."""
    s = format(float(x), ".17g")
    if not any(c in s for c in ".eE") and s not in ("nan", "inf", "-inf"):
        s += ".0"
    return s


def _json_reals(rows) -> str:
    if np.ndim(rows) == 1:
        return "[" + ",".join(format_real(v) for v in rows) + "]"
    return "[" + ",".join(_json_reals(r) for r in rows) + "]"


def write_demos(path, demos: DemoSet) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            "{"
            + f'"format_version": {FORMAT_VERSION}, "env": {json.dumps(demos.env_id)}, '
            + f'"action_kind": {json.dumps(demos.action_kind)}, "obs_dim": {demos.obs_dim}, '
            + f'"n_trajectories": {len(demos)}, "mean_return": {format_real(demos.mean_return)}'
            + "}\n"
        )
        for traj in demos.trajectories:
            if demos.action_kind == "discrete":
                acts = "[" + ",".join(str(int(a)) for a in traj.acts) + "]"
            else:
                acts = _json_reals(np.atleast_2d(traj.acts))
            fh.write('{"obs": ' + _json_reals(traj.obs) + ', "acts": ' + acts + f', "len": {len(traj)}}}\n')


def read_demos(path) -> DemoSet:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError(f"{path}: empty demo file")
    header = _parse_json_line(path, 1, lines[0])
    required = {"format_version", "env", "action_kind", "obs_dim", "n_trajectories", "mean_return"}
    if set(header) != required:
        raise FormatError(f"{path}: header keys {sorted(header)} do not match {sorted(required)}")
    if header["format_version"] != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format_version {header['format_version']!r}")
    if header["action_kind"] not in ("discrete", "continuous"):
        raise FormatError(f"{path}: bad action_kind {header['action_kind']!r}")
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != header["n_trajectories"]:
        raise FormatError(f"{path}: header promises {header['n_trajectories']} trajectories, found {len(body)}")
    trajectories = []
    for i, line in enumerate(body, start=2):
        rec = _parse_json_line(path, i, line)
        if set(rec) != {"obs", "acts", "len"}:
            raise FormatError(f"{path}: line {i}: trajectory keys must be obs/acts/len")
        obs = np.asarray(rec["obs"], dtype=np.float64)
        if obs.ndim != 2 or obs.shape[1] != header["obs_dim"]:
            raise FormatError(f"{path}: line {i}: obs shape {obs.shape} does not match obs_dim {header['obs_dim']}")
        if header["action_kind"] == "discrete":
            acts = np.asarray(rec["acts"], dtype=np.int64)
            if acts.ndim != 1:
                raise FormatError(f"{path}: line {i}: discrete acts must be a flat list")
        else:
            acts = np.asarray(rec["acts"], dtype=np.float64)
            if acts.ndim != 2:
                raise FormatError(f"{path}: line {i}: continuous acts must be rows of reals")
        if len(obs) != rec["len"] or len(acts) != rec["len"]:
            raise FormatError(f"{path}: line {i}: len field {rec['len']} does not match arrays")
        trajectories.append(Trajectory(obs=obs, acts=acts))
    return DemoSet(
        trajectories=trajectories,
        env_id=header["env"],
        action_kind=header["action_kind"],
        obs_dim=int(header["obs_dim"]),
        mean_return=float(header["mean_return"]),
    )


def _parse_json_line(path, lineno: int, line: str):
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise FormatError(f"{path}: line {lineno}: expected a JSON object")
    return obj


# ---------------------------------------------------------------- run config

DEFAULTS = {
    "lr_d": 0.001,
    "batch": 10,
    "n_g": 10,
    "epochs": 50,
    "w": None,
    "stride": None,
    "clip": 1.0,
    "clip_mode": "norm",
    "steps": 100,
    "eval_k": 20,
    "eval_interval": 10,
    "seed": 0,
    "out_dir": "run",
}

_INT_KEYS = {"batch", "n_g", "epochs", "w", "stride", "steps", "eval_k", "eval_interval", "seed"}
_REAL_KEYS = {"lr_d", "clip"}
_STR_KEYS = {"env", "algorithm", "clip_mode", "demos_path", "out_dir"}
_ALL_KEYS = _INT_KEYS | _REAL_KEYS | _STR_KEYS


@dataclass
class RunSetup:
    """A parsed run config: what to train, on what, and where to write."""

    env_id: str
    config: TrainConfig
    demos_path: str
    out_dir: str


def parse_run_config(text: str, source: str = "<config>") -> RunSetup:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}: expected 'key = value', got {raw!r}", line=lineno)
        key, _, val = (part.strip() for part in line.partition("="))
        if key not in _ALL_KEYS:
            raise ConfigError(f"{source}: unknown key {key!r}", line=lineno)
        if key in values:
            raise ConfigError(f"{source}: duplicate key {key!r}", line=lineno)
        if key in _INT_KEYS:
            try:
                values[key] = int(val)
            except ValueError:
                raise ConfigError(f"{source}: key {key!r} needs an integer, got {val!r}", line=lineno) from None
        elif key in _REAL_KEYS:
            try:
                values[key] = float(val)
            except ValueError:
                raise ConfigError(f"{source}: key {key!r} needs a real, got {val!r}", line=lineno) from None
        else:
            values[key] = val
    for key in ("env", "algorithm", "demos_path"):
        if key not in values:
            raise ConfigError(f"{source}: required key {key!r} is missing")
    merged = dict(DEFAULTS)
    merged.update(values)
    cfg = TrainConfig(
        algorithm=merged["algorithm"],
        w=merged["w"],
        stride=merged["stride"],
        lr_d=merged["lr_d"],
        batch=merged["batch"],
        n_g=merged["n_g"],
        epochs=merged["epochs"],
        clip=merged["clip"],
        clip_mode=merged["clip_mode"],
        steps=merged["steps"],
        eval_k=merged["eval_k"],
        eval_interval=merged["eval_interval"],
        seed=merged["seed"],
    )
    return RunSetup(env_id=merged["env"], config=cfg, demos_path=merged["demos_path"], out_dir=merged["out_dir"])


# ---------------------------------------------------------------- checkpoint

_KIND_CODES = {"categorical": 0, "gaussian": 1}


def save_checkpoint(path, policy) -> None:
    if isinstance(policy, CategoricalPolicy):
        kind = _KIND_CODES["categorical"]
    elif isinstance(policy, GaussianPolicy):
        kind = _KIND_CODES["gaussian"]
    else:
        raise FormatError(f"cannot checkpoint policy type {type(policy).__name__}")
    sizes = policy.net.sizes
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<III", CHECKPOINT_VERSION, kind, len(sizes)))
        fh.write(struct.pack(f"<{len(sizes)}I", *sizes))
        fh.write(np.ascontiguousarray(policy.net.params, dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint (bad magic)")
    try:
        version, kind, n_sizes = struct.unpack_from("<III", blob, 4)
        sizes = struct.unpack_from(f"<{n_sizes}I", blob, 16)
    except struct.error as exc:
        raise FormatError(f"{path}: truncated checkpoint header") from exc
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    if kind not in _KIND_CODES.values():
        raise FormatError(f"{path}: unknown policy kind {kind}")
    if n_sizes < 2:
        raise FormatError(f"{path}: need at least two layer sizes, got {n_sizes}")
    offset = 16 + 4 * n_sizes
    n_params = sum(i * o + o for i, o in zip(sizes[:-1], sizes[1:]))
    expected = offset + 8 * n_params
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for sizes {sizes}, file has {len(blob)}")
    params = np.frombuffer(blob, dtype="<f8", count=n_params, offset=offset).astype(np.float64)
    net = Mlp(sizes, params)
    return CategoricalPolicy(net) if kind == 0 else GaussianPolicy(net)


# ---------------------------------------------------------------- curves csv

CSV_HEADER = "step,env_steps,mean_return,std_return,bce_loss,js_to_expert"


def runlog_csv(log: RunLog) -> str:
    lines = [CSV_HEADER]
    for row in log.rows:
        js = "" if row.js_to_expert is None else format_real(row.js_to_expert)
        lines.append(
            f"{row.step},{row.env_steps},{format_real(row.mean_return)},"
            f"{format_real(row.std_return)},{format_real(row.bce_loss)},{js}"
        )
    return "\n".join(lines) + "\n"


def write_runlog_csv(path, log: RunLog) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(runlog_csv(log))
