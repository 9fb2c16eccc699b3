"""Experiment orchestration: training runs, greedy evaluation, policy
comparison, trajectory replay, ECDFs, and the CSV/JSON outputs."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from . import __version__
from .agent import (
    DQNAgent,
    EpisodeMetrics,
    NearestPolicy,
    RandomPolicy,
    run_epoch,
)
from .config import ExperimentConfig
from .env import Action, ConnectionClass, Environment, GridWorld, action_space_size
from .errors import ValidationError
from .nn import checkpoint, kernels
from .nn.network import NetworkParams

# Evaluation episodes draw their walk/noise streams from keys disjoint from
# training epochs, identical across policies for a given seed tuple.
EVAL_KEY_OFFSET = 1_000_000

EPOCH_FIELDS = (
    "epoch", "steps", "c1", "c2", "c3", "c4", "cumulative_reward", "normalized_reward",
    "mean_location_error", "final_md", "epsilon", "mean_loss", "nlos_links",
)
METRIC_FAMILIES = {
    "connections.csv": ("epoch", "steps", "c1", "c2", "c3", "c4"),
    "rewards.csv": ("epoch", "cumulative_reward", "normalized_reward", "epsilon", "mean_loss"),
    "battery.csv": ("epoch", "final_md"),
    "location.csv": ("epoch", "mean_location_error", "nlos_links"),
}
COMPARISON_FIELDS = ("policy", "epochs", "steps", "mean_md", "nlos_links", "mean_location_error")
TRAJECTORY_FIELDS = (
    "step", "true_x", "true_y", "est_x", "est_y", "a_i", "a_j", "c_i", "c_j", "location_error",
)


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    steps: int
    c1: int
    c2: int
    c3: int
    c4: int
    cumulative_reward: float
    normalized_reward: float
    mean_location_error: float
    final_md: float
    epsilon: float
    mean_loss: float
    nlos_links: int

    @classmethod
    def from_metrics(cls, epoch: int, m: EpisodeMetrics) -> "EpochRecord":
        return cls(
            epoch=epoch,
            steps=m.steps,
            c1=m.counts[ConnectionClass.C1],
            c2=m.counts[ConnectionClass.C2],
            c3=m.counts[ConnectionClass.C3],
            c4=m.counts[ConnectionClass.C4],
            cumulative_reward=m.cumulative_reward,
            normalized_reward=m.normalized_reward,
            mean_location_error=m.mean_location_error,
            final_md=m.final_md,
            epsilon=m.epsilon,
            mean_loss=m.mean_loss,
            nlos_links=m.nlos_links,
        )

    def row(self, columns: Sequence[str] = EPOCH_FIELDS) -> list[str]:
        d = asdict(self)
        return [_fmt(d[c]) for c in columns]


@dataclass
class EcdfSeries:
    values: np.ndarray
    probabilities: np.ndarray

    def at(self, x: float) -> float:
        """ECDF evaluated at ``x`` (fraction of samples <= x)."""
        k = np.searchsorted(self.values, x, side="right")
        return float(k) / len(self.values)

    def steps(self) -> "EcdfSeries":
        """Plotting form: one point per distinct value, at its top step height."""
        vals, last = [], []
        for k, v in enumerate(self.values):
            if vals and v == vals[-1]:
                last[-1] = self.probabilities[k]
            else:
                vals.append(v)
                last.append(self.probabilities[k])
        return EcdfSeries(np.array(vals), np.array(last))


def compute_ecdf(samples: Iterable[float]) -> EcdfSeries:
    x = np.sort(np.asarray(list(samples), dtype=float))
    if x.size == 0:
        raise ValidationError("ECDF of an empty sample")
    return EcdfSeries(x, np.arange(1, x.size + 1) / x.size)


def make_policy(cfg: ExperimentConfig, n_u: int, params: Optional[NetworkParams] = None):
    if cfg.policy in ("dqlel", "ne-drl"):
        return DQNAgent(n_u, cfg.agent_config, seed=cfg.seeds.agent, reward_mode=cfg.policy, params=params)
    if cfg.policy == "rns":
        return RandomPolicy(n_u, seed=cfg.seeds.agent)
    return NearestPolicy()


class _CsvSink:
    """Writes the combined epoch log and the per-family metric files."""

    def __init__(self, out_dir: Path) -> None:
        out_dir.mkdir(parents=True, exist_ok=True)
        self._files = {}
        self._writers = {}
        for name, cols in (("epochs.csv", EPOCH_FIELDS), *METRIC_FAMILIES.items()):
            fh = open(out_dir / name, "w", newline="")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            self._files[name] = (fh, cols)
            self._writers[name] = w

    def write(self, rec: EpochRecord) -> None:
        for name, (fh, cols) in self._files.items():
            self._writers[name].writerow(rec.row(cols))
            fh.flush()

    def close(self) -> None:
        for fh, _ in self._files.values():
            fh.close()


def write_manifest(cfg: ExperimentConfig, out_dir: Path, extra: Optional[dict] = None) -> None:
    manifest = {
        "package": "uwbsel",
        "version": __version__,
        "kernel_backend": kernels.BACKEND,
        "config_sha256": cfg.content_hash(),
        "seeds": asdict(cfg.seeds),
        "e_total_uj": cfg.e_total,
        "config": cfg.to_dict(),
    }
    manifest.update(extra or {})
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


@dataclass
class RunResult:
    config: ExperimentConfig
    records: list[EpochRecord]
    policy: object
    env: Environment
    out_dir: Optional[Path] = None

    @property
    def params(self) -> Optional[NetworkParams]:
        return getattr(self.policy, "net", None)


def run_experiment(
    cfg: ExperimentConfig,
    write: bool = True,
    out_dir: Optional[Union[str, Path]] = None,
    on_epoch: Optional[Callable[[EpochRecord], None]] = None,
) -> RunResult:
    """Train (or just run) the configured policy for ``n_epoch`` epochs.

    With ``write`` the epoch records stream to CSV under the output
    directory, followed by ``manifest.json`` and, for learning policies,
    ``checkpoint.json``.
    """
    world = cfg.build_world()
    env = cfg.build_env(world)
    policy = make_policy(cfg, world.n_u)
    schedule = cfg.schedule.epsilon()
    target = Path(out_dir) if out_dir is not None else cfg.resolved_output_dir()
    sink = _CsvSink(target) if write else None
    records: list[EpochRecord] = []
    try:
        for epoch in range(cfg.schedule.n_epoch):
            m = run_epoch(env, policy, schedule(epoch), episode_key=epoch)
            rec = EpochRecord.from_metrics(epoch, m)
            records.append(rec)
            if sink:
                sink.write(rec)
            if on_epoch:
                on_epoch(rec)
    finally:
        if sink:
            sink.close()
    if write:
        write_manifest(cfg, target)
        if getattr(policy, "learns", False):
            checkpoint.save(target / "checkpoint.json", policy.net, extra={"policy": cfg.policy})
    return RunResult(cfg, records, policy, env, target if write else None)


def evaluate_policy(
    cfg: ExperimentConfig,
    policy,
    world: Optional[GridWorld] = None,
    n_epochs: Optional[int] = None,
    keep_outcomes: bool = False,
) -> list[EpisodeMetrics]:
    """Greedy (epsilon = 0), non-learning episodes on the evaluation keys."""
    env = cfg.build_env(world)
    n = cfg.evaluation.epochs if n_epochs is None else n_epochs
    return [
        run_epoch(env, policy, 0.0, EVAL_KEY_OFFSET + k, learn=False, keep_outcomes=keep_outcomes)
        for k in range(n)
    ]


def load_policy(cfg: ExperimentConfig, checkpoint_path: Optional[Union[str, Path]], world: GridWorld):
    if cfg.policy in ("dqlel", "ne-drl"):
        if checkpoint_path is None:
            raise ValidationError(f"policy {cfg.policy} needs a checkpoint")
        params = checkpoint.load(checkpoint_path)
        agent = make_policy(cfg, world.n_u)
        checkpoint.check_compatible(params, agent.input_length, agent.n_actions)
        return make_policy(cfg, world.n_u, params=params)
    return make_policy(cfg, world.n_u)


@dataclass
class PolicySummary:
    policy: str
    metrics: list[EpisodeMetrics]
    train_records: list[EpochRecord] = field(default_factory=list)

    @property
    def final_md(self) -> np.ndarray:
        return np.array([m.final_md for m in self.metrics])

    @property
    def location_errors(self) -> np.ndarray:
        return np.array([e for m in self.metrics for e in m.location_errors])

    @property
    def nlos_links(self) -> int:
        return int(sum(m.nlos_links for m in self.metrics))

    def row(self) -> dict:
        return {
            "policy": self.policy,
            "epochs": len(self.metrics),
            "steps": int(sum(m.steps for m in self.metrics)),
            "mean_md": float(self.final_md.mean()) if self.metrics else math.nan,
            "nlos_links": self.nlos_links,
            "mean_location_error": float(self.location_errors.mean()) if self.metrics else math.nan,
        }


def compare_policies(
    cfgs: Sequence[ExperimentConfig],
    out_path: Optional[Union[str, Path]] = None,
    train_dirs: Optional[Sequence[Optional[Union[str, Path]]]] = None,
) -> list[PolicySummary]:
    """Train where needed, then evaluate every policy on the same paired episodes."""
    if not cfgs:
        raise ValidationError("nothing to compare")
    ref = cfgs[0]
    for c in cfgs[1:]:
        if c.seeds.world != ref.seeds.world or c.seeds.walk != ref.seeds.walk:
            raise ValidationError("compared configs must share the world and walk seeds")
        if c.world != ref.world:
            raise ValidationError("compared configs must share the world definition")
    summaries = []
    for k, cfg in enumerate(cfgs):
        world = cfg.build_world()
        records: list[EpochRecord] = []
        if cfg.policy in ("dqlel", "ne-drl"):
            tdir = train_dirs[k] if train_dirs else None
            result = run_experiment(cfg, write=tdir is not None, out_dir=tdir)
            policy, records = result.policy, result.records
        else:
            policy = make_policy(cfg, world.n_u)
        summaries.append(PolicySummary(cfg.policy, evaluate_policy(cfg, policy, world), records))
    if out_path is not None:
        write_comparison(summaries, out_path)
    return summaries


def write_comparison(summaries: Sequence[PolicySummary], out_path: Union[str, Path]) -> None:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARISON_FIELDS)
        for s in summaries:
            row = s.row()
            w.writerow([_fmt(row[c]) for c in COMPARISON_FIELDS])


def trajectory_replay(
    cfg: ExperimentConfig,
    checkpoint_path: Optional[Union[str, Path]],
    n_steps: int,
    policy=None,
) -> list[dict]:
    """Greedy rollout of ``n_steps`` slots (fewer if a battery drains)."""
    if n_steps < 0:
        raise ValidationError("n_steps must be non-negative")
    world = cfg.build_world()
    if policy is None:
        policy = load_policy(cfg, checkpoint_path, world)
    env = cfg.build_env(world, horizon=n_steps)
    if n_steps == 0:
        return []
    m = run_epoch(env, policy, 0.0, EVAL_KEY_OFFSET, learn=False, keep_outcomes=True)
    rows = []
    for t, out in enumerate(m.outcomes):
        rows.append({
            "step": t,
            "true_x": out.truth[0], "true_y": out.truth[1],
            "est_x": out.estimate[0], "est_y": out.estimate[1],
            "a_i": out.action.a_i, "a_j": out.action.a_j,
            "c_i": out.link_flags[0], "c_j": out.link_flags[1],
            "location_error": out.location_error,
        })
    return rows


def rows_to_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()
