"""Deep Q-learning pair selector, baselines, and the per-epoch training loop."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Iterator, Mapping, Optional, Protocol, Sequence

import numpy as np

from .env import (
    Action,
    ConnectionClass,
    Environment,
    GridWorld,
    MdpState,
    StepOutcome,
    action_pairs,
    action_space_size,
    battery_deviation,
)
from .errors import ValidationError
from .nn import network as nn

BATTERY_ENCODINGS = ("deviation", "capacity")


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.9
    learning_rate: float = 1e-3
    replay_capacity: int = 10_000
    minibatch: int = 32
    history: int = 1
    target_refresh: int = 1
    max_grad_norm: float = 100.0
    filters: int = 16
    dense: tuple[int, ...] = (128, 64)
    output_activation: str = "linear"
    battery_encoding: str = "deviation"
    init_seed_offset: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ValidationError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive")
        if self.history < 1:
            raise ValidationError("history depth must be >= 1")
        if self.replay_capacity < 1 or self.minibatch < 1 or self.target_refresh < 1:
            raise ValidationError("replay_capacity, minibatch and target_refresh must be >= 1")
        if self.max_grad_norm < 0:
            raise ValidationError("max_grad_norm must be >= 0 (0 disables clipping)")
        if self.filters < 1 or any(u < 1 for u in self.dense):
            raise ValidationError("layer widths must be positive")
        if self.output_activation not in ("linear", "softmax"):
            raise ValidationError("output_activation must be 'linear' or 'softmax'")
        if self.battery_encoding not in BATTERY_ENCODINGS:
            raise ValidationError(f"battery_encoding must be one of {BATTERY_ENCODINGS}")
        object.__setattr__(self, "dense", tuple(int(u) for u in self.dense))

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "AgentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown agent parameter(s): {sorted(unknown)}")
        return cls(**dict(data))

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["dense"] = list(self.dense)
        return d


@dataclass(frozen=True)
class EpsilonSchedule:
    """Linear decay from ``eps_max`` by ``(eps_max - eps_min) / n_epoch`` per epoch."""

    eps_max: float = 1.0
    eps_min: float = 0.01
    n_epoch: int = 500

    def __post_init__(self) -> None:
        if not 0.0 <= self.eps_min <= self.eps_max <= 1.0:
            raise ValidationError("need 0 <= eps_min <= eps_max <= 1")
        if self.n_epoch < 1:
            raise ValidationError("n_epoch must be >= 1")

    def __call__(self, epoch: int) -> float:
        if epoch >= self.n_epoch:
            return self.eps_min
        eps = self.eps_max - epoch * (self.eps_max - self.eps_min) / self.n_epoch
        return min(self.eps_max, max(self.eps_min, eps))


@dataclass(frozen=True)
class Experience:
    phi: np.ndarray
    action: int
    reward: float
    phi_next: np.ndarray
    done: bool


class ReplayMemory:
    """Bounded FIFO experience pool with uniform sampling."""

    def __init__(self, capacity: int, phi_length: int) -> None:
        if capacity < 1:
            raise ValidationError("replay capacity must be >= 1")
        self.capacity = capacity
        self._phi = np.zeros((capacity, phi_length))
        self._phi_next = np.zeros((capacity, phi_length))
        self._action = np.zeros(capacity, dtype=np.intp)
        self._reward = np.zeros(capacity)
        self._done = np.zeros(capacity, dtype=bool)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, exp: Experience) -> None:
        k = self._next
        self._phi[k] = exp.phi
        self._phi_next[k] = exp.phi_next
        self._action[k] = exp.action
        self._reward[k] = exp.reward
        self._done[k] = exp.done
        self._next = (k + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def _order(self) -> np.ndarray:
        start = self._next - self._size
        return np.arange(start, self._next) % self.capacity

    def __iter__(self) -> Iterator[Experience]:
        for k in self._order():
            yield Experience(
                self._phi[k].copy(), int(self._action[k]), float(self._reward[k]),
                self._phi_next[k].copy(), bool(self._done[k]),
            )

    def sample(self, batch: int, rng: np.random.Generator):
        """Uniform draw (with replacement) of ``batch`` experiences as arrays."""
        if self._size < batch:
            raise ValidationError(f"memory holds {self._size} experiences, need {batch}")
        idx = self._order()[rng.integers(self._size, size=batch)]
        return self._phi[idx], self._action[idx], self._reward[idx], self._phi_next[idx], self._done[idx]


def select_action(q_values: Sequence[float], epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy index; greedy ties go to the lowest index."""
    q = np.asarray(q_values, dtype=float)
    if q.size == 0:
        raise ValidationError("no Q-values to choose from")
    if rng.random() < epsilon:
        return int(rng.integers(q.size))
    return int(np.argmax(q))


def compute_target(
    r_t: float, phi_next: np.ndarray, frozen: nn.NetworkParams, gamma: float, done: bool
) -> float:
    if done:
        return float(r_t)
    return float(r_t + gamma * np.max(nn.forward(frozen, phi_next)))


def compute_targets(
    rewards: np.ndarray, phi_next: np.ndarray, frozen: nn.NetworkParams, gamma: float, done: np.ndarray
) -> np.ndarray:
    best = nn.forward(frozen, phi_next).max(axis=1)
    return rewards + gamma * np.where(done, 0.0, best)


def train_step(
    net: nn.NetworkParams,
    frozen: nn.NetworkParams,
    memory: ReplayMemory,
    cfg: AgentConfig,
    rng: np.random.Generator,
) -> Optional[float]:
    """One SGD step on a uniform minibatch; ``None`` while memory is too small.

    ``net`` is updated in place.
    """
    if len(memory) < cfg.minibatch:
        return None
    phi, actions, rewards, phi_next, done = memory.sample(cfg.minibatch, rng)
    targets = compute_targets(rewards, phi_next, frozen, cfg.gamma, done)
    loss, grads = nn.loss_and_gradient(net, phi, actions, targets)
    if cfg.max_grad_norm > 0:
        norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
        if norm > cfg.max_grad_norm:
            grads = [g * (cfg.max_grad_norm / norm) for g in grads]
    nn.sgd_step_(net, grads, cfg.learning_rate)
    return loss


def state_length(n_u: int) -> int:
    return 4 + n_u


def phi_length(n_u: int, history: int) -> int:
    """Input length: ``history`` states interleaved with the ``history - 1``
    actions taken between them."""
    return history * state_length(n_u) + (history - 1)


def encode_state(
    state: MdpState, world: GridWorld, e_total: float, initial_battery: float, battery_encoding: str = "deviation"
) -> np.ndarray:
    """Network features of one state.

    Position is scaled to [0, 1] by the grid extents and the last move is
    kept raw.  Batteries are either each beacon's offset from the fleet mean
    in units of one reception energy (``deviation``) or the fraction of the
    initial charge left (``capacity``).
    """
    x, y = state.position
    sx = x / (world.n_x - 1) if world.n_x > 1 else 0.0
    sy = y / (world.n_y - 1) if world.n_y > 1 else 0.0
    b = state.batteries
    if battery_encoding == "deviation":
        feats = (b - b.mean()) / e_total
    else:
        feats = b / initial_battery
    return np.concatenate(([sx, sy, state.last_move[0], state.last_move[1]], feats))


class History:
    """Rolling ``phi`` built from the last ``depth`` encoded states."""

    def __init__(self, depth: int, n_actions: int) -> None:
        self.depth = depth
        self.n_actions = n_actions
        self._states: deque = deque(maxlen=depth)
        self._actions: deque = deque(maxlen=max(depth - 1, 0))

    def reset(self, s0: np.ndarray) -> np.ndarray:
        self._states.clear()
        self._actions.clear()
        for _ in range(self.depth):
            self._states.append(s0)
        for _ in range(self.depth - 1):
            self._actions.append(0.0)
        return self.phi()

    def push(self, action: int, s_next: np.ndarray) -> np.ndarray:
        if self.depth > 1:
            self._actions.append(action / max(self.n_actions - 1, 1))
        self._states.append(s_next)
        return self.phi()

    def phi(self) -> np.ndarray:
        if self.depth == 1:
            return self._states[0]
        parts = []
        for k, s in enumerate(self._states):
            parts.append(s)
            if k < self.depth - 1:
                parts.append([self._actions[k]])
        return np.concatenate(parts)


class Policy(Protocol):
    name: str
    learns: bool

    def act(self, env: Environment, phi: np.ndarray, epsilon: float) -> int: ...


NE_DRL_REWARD = {True: 1.0, False: -1.0}


class DQNAgent:
    """Online/frozen network pair with replay memory.

    ``reward_mode="dqlel"`` learns from the energy-and-link reward;
    ``"ne-drl"`` learns from +1 for a both-LoS pair and -1 otherwise.
    """

    learns = True

    def __init__(self, n_u: int, cfg: AgentConfig, seed: int = 0, reward_mode: str = "dqlel",
                 params: Optional[nn.NetworkParams] = None) -> None:
        if reward_mode not in ("dqlel", "ne-drl"):
            raise ValidationError(f"unknown reward mode {reward_mode!r}")
        self.name = reward_mode
        self.reward_mode = reward_mode
        self.cfg = cfg
        self.n_u = n_u
        self.n_actions = action_space_size(n_u)
        self.input_length = phi_length(n_u, cfg.history)
        if params is None:
            specs = nn.default_architecture(
                self.n_actions, filters=cfg.filters, dense=cfg.dense,
                output_activation=cfg.output_activation,
            )
            params = nn.init_network(specs, self.input_length, seed=seed + cfg.init_seed_offset)
        elif params.input_length != self.input_length or params.n_outputs != self.n_actions:
            raise ValidationError("network shape does not match the environment")
        self.net = params
        self.frozen = params.copy()
        self.memory = ReplayMemory(cfg.replay_capacity, self.input_length)
        self.rng = np.random.default_rng(seed)
        self.train_steps = 0

    def learner_reward(self, outcome: StepOutcome) -> float:
        if self.reward_mode == "ne-drl":
            return NE_DRL_REWARD[outcome.both_los]
        return outcome.reward

    def act(self, env: Environment, phi: np.ndarray, epsilon: float) -> int:
        return select_action(nn.forward(self.net, phi), epsilon, self.rng)

    def learn(self) -> Optional[float]:
        if len(self.memory) < self.cfg.minibatch:
            return None
        if self.train_steps % self.cfg.target_refresh == 0:
            self.frozen = self.net.copy()
        self.train_steps += 1
        return train_step(self.net, self.frozen, self.memory, self.cfg, self.rng)


class RandomPolicy:
    """RNS: a uniformly random pair every slot."""

    name = "rns"
    learns = False

    def __init__(self, n_u: int, seed: int = 0) -> None:
        self.n_actions = action_space_size(n_u)
        self.rng = np.random.default_rng(seed)

    def act(self, env: Environment, phi: np.ndarray, epsilon: float) -> int:
        return int(self.rng.integers(self.n_actions))


def nearest_pair(world: GridWorld, position: Sequence[int]) -> Action:
    center = np.asarray(world.cell_center(position))
    pos = np.array([b.position for b in world.beacons], dtype=float)
    d = np.hypot(pos[:, 0] - center[0], pos[:, 1] - center[1])
    order = np.lexsort((np.arange(len(d)), d))
    return Action(int(order[0]), int(order[1]))


class NearestPolicy:
    """NN-NS: the two beacons closest to the user's cell, ties by lowest index."""

    name = "nn-ns"
    learns = False

    def act(self, env: Environment, phi: np.ndarray, epsilon: float) -> int:
        return nearest_pair(env.world, env.state.position).index(env.n_u)


def baseline_policy(kind: str, env: Environment, rng: Optional[np.random.Generator] = None,
                    net: Optional[nn.NetworkParams] = None, phi: Optional[np.ndarray] = None) -> Action:
    """One-shot baseline decision for the current environment state."""
    kind = kind.lower()
    if kind == "rns":
        if rng is None:
            raise ValidationError("RNS needs a random stream")
        return Action.from_index(int(rng.integers(action_space_size(env.n_u))), env.n_u)
    if kind == "nn-ns":
        return nearest_pair(env.world, env.state.position)
    if kind == "ne-drl":
        if net is None or phi is None:
            raise ValidationError("NE-DRL needs a trained network and the encoded history")
        return Action.from_index(int(np.argmax(nn.forward(net, phi))), env.n_u)
    raise ValidationError(f"unknown baseline {kind!r}")


@dataclass
class EpisodeMetrics:
    steps: int = 0
    counts: dict = field(default_factory=lambda: {c: 0 for c in ConnectionClass})
    cumulative_reward: float = 0.0
    learner_reward: float = 0.0
    location_errors: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    final_md: float = 0.0
    epsilon: float = 0.0
    nlos_links: int = 0
    outcomes: list = field(default_factory=list)

    @property
    def mean_location_error(self) -> float:
        return float(np.mean(self.location_errors)) if self.location_errors else 0.0

    @property
    def mean_loss(self) -> float:
        return float(np.mean(self.losses)) if self.losses else math.nan

    @property
    def normalized_reward(self) -> float:
        return self.cumulative_reward / (10.0 * self.steps) if self.steps else 0.0


def run_epoch(
    env: Environment,
    policy,
    epsilon: float,
    episode_key: int,
    learn: bool = True,
    keep_outcomes: bool = False,
) -> EpisodeMetrics:
    """Play one episode; learning policies store experience and train every slot."""
    cfg: Optional[AgentConfig] = getattr(policy, "cfg", None)
    depth = cfg.history if cfg else 1
    encoding = cfg.battery_encoding if cfg else "deviation"
    n_actions = action_space_size(env.n_u)
    hist = History(depth, n_actions)

    state = env.reset(episode_key)
    encode = lambda s: encode_state(s, env.world, env.e_total, env.initial_battery, encoding)
    phi = hist.reset(encode(state))
    m = EpisodeMetrics(epsilon=epsilon, final_md=battery_deviation(state.batteries))
    done = env.done
    while not done:
        a = policy.act(env, phi, epsilon)
        out = env.step(Action.from_index(a, env.n_u))
        phi_next = hist.push(a, encode(out.next_state))
        if learn and policy.learns:
            r = policy.learner_reward(out)
            m.learner_reward += r
            policy.memory.push(Experience(phi, a, r, phi_next, out.done))
            loss = policy.learn()
            if loss is not None:
                m.losses.append(loss)
        m.steps += 1
        m.counts[out.connection_class] += 1
        m.cumulative_reward += out.reward
        m.location_errors.append(out.location_error)
        m.nlos_links += 2 - int(out.link_flags[0]) - int(out.link_flags[1])
        m.final_md = out.md_t
        if keep_outcomes:
            m.outcomes.append(out)
        phi = phi_next
        done = out.done
    return m
