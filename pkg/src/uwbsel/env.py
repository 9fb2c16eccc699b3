"""Grid-world MDP for beacon-pair selection.

The user sits at a cell center of an ``n_x`` by ``n_y`` grid and random-walks
in the eight compass directions.  Each time slot the agent picks a pair of
beacons; both pay one reception energy, the pair's link flags are read from
the link-condition matrix at the user's cell, and a TDoA fix is computed.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .channel import (
    Beacon,
    MeasurementModel,
    localize_pair,
    location_error,
    measure_tdoa,
)
from .errors import ValidationError

MOVES: tuple[tuple[int, int], ...] = tuple(
    (dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1) if (dx, dy) != (0, 0)
)

# Battery arithmetic is done on a dyadic grid of 2**-30 uJ.  Every battery
# level is then an exact float multiple of the quantum (below 2**53 quanta),
# so decrements accumulate without rounding.
ENERGY_QUANTUM = 2.0 ** -30


def quantize_energy(value: float) -> float:
    return round(value / ENERGY_QUANTUM) * ENERGY_QUANTUM


class ConnectionClass(enum.IntEnum):
    C1 = 1  # energy-optimized, both links LoS
    C2 = 2  # not energy-optimized, both links LoS
    C3 = 3  # energy-optimized, at least one NLoS link
    C4 = 4  # not energy-optimized, at least one NLoS link


@lru_cache(maxsize=None)
def action_pairs(n_u: int) -> tuple[tuple[int, int], ...]:
    """All beacon pairs ``(i, j)``, ``i < j``, in lexicographic order."""
    if n_u < 2:
        raise ValidationError(f"need at least two beacons, got {n_u}")
    return tuple(itertools.combinations(range(n_u), 2))


def action_space_size(n_u: int) -> int:
    if n_u < 2:
        raise ValidationError(f"need at least two beacons, got {n_u}")
    return math.factorial(n_u) // (math.factorial(n_u - 2) * 2)


@dataclass(frozen=True)
class Action:
    a_i: int
    a_j: int

    def __post_init__(self) -> None:
        if self.a_i == self.a_j:
            raise ValidationError("an action needs two distinct beacons")
        if self.a_i > self.a_j:
            lo, hi = self.a_j, self.a_i
            object.__setattr__(self, "a_i", lo)
            object.__setattr__(self, "a_j", hi)

    @classmethod
    def from_index(cls, index: int, n_u: int) -> "Action":
        return cls(*action_pairs(n_u)[index])

    def index(self, n_u: int) -> int:
        return action_pairs(n_u).index((self.a_i, self.a_j))


@dataclass(frozen=True)
class RewardConfig:
    md_threshold_eps: float = 0.9
    r_c1: float = 10.0
    r_c2: float = 5.0
    r_c3: float = -5.0
    r_c4: float = -10.0

    def __post_init__(self) -> None:
        if not 0.0 < self.md_threshold_eps < 1.0:
            raise ValidationError(f"md_threshold_eps must lie in (0, 1), got {self.md_threshold_eps}")

    def reward(self, cls: ConnectionClass) -> float:
        return (self.r_c1, self.r_c2, self.r_c3, self.r_c4)[int(cls) - 1]


@dataclass
class GridWorld:
    """Sub-area geometry and the fixed link-condition matrix.

    Cell ``(ix, iy)`` has center ``origin + ((ix + .5) * cell_size,
    (iy + .5) * cell_size)`` and flat index ``iy * n_x + ix``; column ``k`` of
    ``link_matrix`` lists the LoS (1) / NLoS (0) state of every beacon seen
    from cell ``k``.
    """

    n_x: int
    n_y: int
    beacons: list[Beacon]
    link_matrix: np.ndarray
    cell_size: float = 1.0
    origin: tuple[float, float] = (0.5, 0.5)
    rng_seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.n_x < 1 or self.n_y < 1 or not self.cell_size > 0:
            raise ValidationError("grid extents and cell size must be positive")
        self.link_matrix = np.asarray(self.link_matrix, dtype=np.int8)
        if self.link_matrix.shape != (self.n_u, self.n_l):
            raise ValidationError(
                f"link matrix must be {self.n_u}x{self.n_l}, got {self.link_matrix.shape}"
            )
        if not np.isin(self.link_matrix, (0, 1)).all():
            raise ValidationError("link matrix entries must be 0 or 1")
        self.centers = self._centers()
        for b in self.beacons:
            reach = np.hypot(*(self.centers - np.asarray(b.position)).T).max()
            if b.reception_range < reach:
                raise ValidationError(
                    f"beacon {b.id} range {b.reception_range} m does not cover the sub-area ({reach:.3f} m)"
                )

    @property
    def n_u(self) -> int:
        return len(self.beacons)

    @property
    def n_l(self) -> int:
        return self.n_x * self.n_y

    def _centers(self) -> np.ndarray:
        iy, ix = np.divmod(np.arange(self.n_l), self.n_x)
        return np.column_stack(
            [
                self.origin[0] + (ix + 0.5) * self.cell_size,
                self.origin[1] + (iy + 0.5) * self.cell_size,
            ]
        )

    def cell_index(self, position: Sequence[int]) -> int:
        return int(position[1]) * self.n_x + int(position[0])

    def cell_center(self, position: Sequence[int]) -> tuple[float, float]:
        c = self.centers[self.cell_index(position)]
        return float(c[0]), float(c[1])

    def link_flags(self, position: Sequence[int], action: Action) -> tuple[int, int]:
        col = self.cell_index(position)
        return int(self.link_matrix[action.a_i, col]), int(self.link_matrix[action.a_j, col])

    def to_dict(self) -> dict:
        return {
            "n_x": self.n_x,
            "n_y": self.n_y,
            "cell_size": self.cell_size,
            "origin": list(self.origin),
            "rng_seed": self.rng_seed,
            "beacons": [
                {"id": b.id, "position": list(b.position), "reception_range": b.reception_range}
                for b in self.beacons
            ],
            "cell_centers": self.centers.tolist(),
            "link_matrix": self.link_matrix.tolist(),
        }


def generate_link_matrix(n_u: int, n_l: int, p_nlos: float, rng: np.random.Generator) -> np.ndarray:
    if not 0.0 <= p_nlos <= 1.0:
        raise ValidationError(f"p_nlos must lie in [0, 1], got {p_nlos}")
    return (rng.random((n_u, n_l)) >= p_nlos).astype(np.int8)


def default_beacon_positions(n_u: int, n_x: int = 5, n_y: int = 4, cell_size: float = 1.0,
                             origin: tuple[float, float] = (0.5, 0.5)) -> list[tuple[float, float]]:
    """Beacons on the walls of the room enclosing the grid plus a half-cell margin.

    Four beacons take the corners, six add the midpoints of the long walls;
    other counts are spread evenly around the perimeter.
    """
    w = n_x * cell_size + 2 * origin[0]
    h = n_y * cell_size + 2 * origin[1]
    corners = [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)]
    if n_u == 4:
        return corners
    if n_u == 6:
        return [(0.0, 0.0), (w / 2, 0.0), (w, 0.0), (w, h), (w / 2, h), (0.0, h)]
    perimeter = 2 * (w + h)
    out = []
    for k in range(n_u):
        s = perimeter * k / n_u
        if s < w:
            out.append((s, 0.0))
        elif s < w + h:
            out.append((w, s - w))
        elif s < 2 * w + h:
            out.append((w - (s - w - h), h))
        else:
            out.append((0.0, h - (s - 2 * w - h)))
    return out


def make_world(
    n_x: int = 5,
    n_y: int = 4,
    n_u: int = 4,
    p_nlos: float = 0.3,
    seed: int = 0,
    beacon_positions: Optional[Sequence[Sequence[float]]] = None,
    reception_range: float = 10.0,
    cell_size: float = 1.0,
    origin: tuple[float, float] = (0.5, 0.5),
) -> GridWorld:
    if beacon_positions is None:
        beacon_positions = default_beacon_positions(n_u, n_x, n_y, cell_size, origin)
    beacons = [Beacon(i, (float(p[0]), float(p[1])), reception_range) for i, p in enumerate(beacon_positions)]
    rng = np.random.default_rng(seed)
    c = generate_link_matrix(len(beacons), n_x * n_y, p_nlos, rng)
    return GridWorld(n_x, n_y, beacons, c, cell_size=cell_size, origin=tuple(origin), rng_seed=seed)


@dataclass
class MdpState:
    position: tuple[int, int]
    last_move: tuple[int, int]
    batteries: np.ndarray
    t: int = 0
    last_estimate: Optional[tuple[float, float]] = None

    def copy(self) -> "MdpState":
        return replace(self, batteries=self.batteries.copy())


@dataclass(frozen=True)
class StepOutcome:
    reward: float
    next_state: MdpState
    connection_class: ConnectionClass
    location_error: float
    md_t: float
    md_threshold: float
    done: bool
    action: Action
    link_flags: tuple[int, int]
    truth: tuple[float, float]
    estimate: tuple[float, float]

    @property
    def both_los(self) -> bool:
        return self.link_flags == (1, 1)


def random_walk_step(state: MdpState, rng: np.random.Generator, n_x: int, n_y: int) -> MdpState:
    """One of the eight compass moves, resampled until it stays on the grid.

    A single-cell grid has no legal move; the user stays put.
    """
    if n_x == 1 and n_y == 1:
        return replace(state, last_move=(0, 0))
    x, y = state.position
    while True:
        dx, dy = MOVES[int(rng.integers(len(MOVES)))]
        nx, ny = x + dx, y + dy
        if 0 <= nx < n_x and 0 <= ny < n_y:
            break
    return replace(state, position=(nx, ny), last_move=(dx, dy))


def battery_deviation(batteries: Sequence[float], n_u: Optional[int] = None) -> float:
    """Normalized spread of the remaining batteries, ``std(B) / mean(B)``
    with the ``N_u - 1`` denominator."""
    b = np.asarray(batteries, dtype=float)
    n_u = len(b) if n_u is None else n_u
    if n_u < 2:
        raise ValidationError("battery deviation needs at least two beacons")
    mean = b.mean()
    if not mean > 0:
        raise ValidationError("mean battery is zero: the fleet is drained")
    return float(math.sqrt(float(np.sum((b - mean) ** 2)) / (n_u - 1)) / mean)


def md_threshold(eps: float, e_total: float, batteries: Sequence[float]) -> float:
    """Balance threshold on the same normalized scale as :func:`battery_deviation`.

    The budget is ``eps`` times one reception energy of spread; dividing by the
    mean battery puts it on the dimensionless deviation scale.
    """
    return eps * e_total / float(np.mean(batteries))


def classify(md_t: float, md_th: float, flags: tuple[int, int]) -> ConnectionClass:
    optimized = md_t <= md_th
    los = flags[0] == 1 and flags[1] == 1
    if los:
        return ConnectionClass.C1 if optimized else ConnectionClass.C2
    return ConnectionClass.C3 if optimized else ConnectionClass.C4


def reset_episode(world: GridWorld, initial_battery: float, rng: np.random.Generator) -> MdpState:
    if not initial_battery > 0:
        raise ValidationError("initial battery must be positive")
    cell = int(rng.integers(world.n_l))
    iy, ix = divmod(cell, world.n_x)
    return MdpState(
        position=(ix, iy),
        last_move=(0, 0),
        batteries=np.full(world.n_u, float(initial_battery)),
        t=0,
    )


def apply_action(
    world: GridWorld,
    state: MdpState,
    action: Action,
    e_total: float,
    reward_cfg: RewardConfig,
    meas_model: MeasurementModel,
    noise_rng: np.random.Generator,
    walk_rng: np.random.Generator,
    horizon: Optional[int] = None,
) -> StepOutcome:
    """Advance one time slot.

    Link flags come from the user's cell before moving.  A selected beacon
    without enough charge is clamped at zero and ends the episode.
    """
    batteries = state.batteries.copy()
    for k in (action.a_i, action.a_j):
        batteries[k] = max(batteries[k] - e_total, 0.0)
    flags = world.link_flags(state.position, action)

    if batteries.mean() > 0:
        md_t = battery_deviation(batteries)
        md_th = md_threshold(reward_cfg.md_threshold_eps, e_total, batteries)
    else:
        md_t, md_th = math.inf, 0.0
    cls = classify(md_t, md_th, flags)

    truth = world.cell_center(state.position)
    b_i, b_j = world.beacons[action.a_i], world.beacons[action.a_j]
    meas = measure_tdoa(truth, b_i, b_j, flags, meas_model, noise_rng)
    estimate = localize_pair(meas, b_i, b_j, world.centers, state.last_estimate, meas_model.c)
    err = location_error(truth, estimate)

    moved = random_walk_step(state, walk_rng, world.n_x, world.n_y)
    nxt = MdpState(
        position=moved.position,
        last_move=moved.last_move,
        batteries=batteries,
        t=state.t + 1,
        last_estimate=estimate,
    )
    done = bool((batteries < e_total).any()) or (horizon is not None and nxt.t >= horizon)
    return StepOutcome(
        reward=reward_cfg.reward(cls),
        next_state=nxt,
        connection_class=cls,
        location_error=err,
        md_t=md_t,
        md_threshold=md_th,
        done=done,
        action=action,
        link_flags=flags,
        truth=truth,
        estimate=estimate,
    )


@dataclass
class Environment:
    """Episode driver: owns the world, the energy cost and the per-episode streams."""

    world: GridWorld
    e_total: float
    initial_battery: float
    reward_cfg: RewardConfig = field(default_factory=RewardConfig)
    meas_model: MeasurementModel = field(default_factory=MeasurementModel)
    horizon: int = 50
    walk_seed: int = 0
    noise_seed: int = 0

    def __post_init__(self) -> None:
        self.e_total = quantize_energy(self.e_total)
        self.initial_battery = quantize_energy(self.initial_battery)
        if not self.e_total > 0:
            raise ValidationError("reception energy must be positive")
        if self.horizon < 0:
            raise ValidationError("horizon must be non-negative")
        self.state: Optional[MdpState] = None
        self.done = True

    @property
    def n_u(self) -> int:
        return self.world.n_u

    def reset(self, episode_key: int) -> MdpState:
        self._walk_rng = np.random.default_rng([self.walk_seed, episode_key])
        self._noise_rng = np.random.default_rng([self.noise_seed, episode_key])
        self.state = reset_episode(self.world, self.initial_battery, self._walk_rng)
        self.done = self.horizon == 0
        return self.state

    def step(self, action: Action) -> StepOutcome:
        if self.state is None or self.done:
            raise RuntimeError("episode is over; call reset()")
        out = apply_action(
            self.world, self.state, action, self.e_total, self.reward_cfg,
            self.meas_model, self._noise_rng, self._walk_rng, self.horizon,
        )
        self.state = out.next_state
        self.done = out.done
        return out
