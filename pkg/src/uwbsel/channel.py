"""TDoA measurement model, Nakagami-m power fading and grid localization."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from .errors import ValidationError

SPEED_OF_LIGHT = 3e8

Point = tuple[float, float]


@dataclass(frozen=True)
class Beacon:
    id: int
    position: Point
    reception_range: float = 10.0

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in self.position):
            raise ValidationError(f"beacon {self.id} position must be finite")
        if not self.reception_range > 0:
            raise ValidationError(f"beacon {self.id} reception_range must be positive")


@dataclass(frozen=True)
class MeasurementModel:
    """Measurement-level error model.

    LoS links get zero-mean Gaussian ToA noise; NLoS links additionally get an
    exponentially distributed positive excess delay.  With ``fading_enabled``
    the Gaussian std of each link is scaled by ``1/sqrt(g)`` for a unit-mean
    Gamma power gain ``g``.
    """

    los_noise_std: float = 1e-9
    nlos_bias_mean: float = 10e-9
    nakagami_m: float = 1.0
    fading_enabled: bool = False
    c: float = SPEED_OF_LIGHT

    def __post_init__(self) -> None:
        if self.los_noise_std < 0 or self.nlos_bias_mean < 0:
            raise ValidationError("los_noise_std and nlos_bias_mean must be non-negative")
        if self.nakagami_m < 0.5:
            raise ValidationError(f"nakagami_m must be >= 0.5, got {self.nakagami_m}")
        if not self.c > 0:
            raise ValidationError("propagation speed must be positive")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "MeasurementModel":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown measurement parameter(s): {sorted(unknown)}")
        return cls(**dict(data))


@dataclass(frozen=True)
class TdoaMeasurement:
    pair: tuple[int, int]
    t_ij: float
    link_flags: tuple[int, int] = (1, 1)

    def __post_init__(self) -> None:
        if self.pair[0] == self.pair[1]:
            raise ValidationError("a TDoA pair needs two distinct beacons")


def _dist(a: Sequence[float], b: Sequence[float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def true_tdoa(user: Sequence[float], b_i: Beacon, b_j: Beacon, c: float = SPEED_OF_LIGHT) -> float:
    """Noise-free arrival-time difference ``tau_i - tau_j`` in seconds."""
    if b_i.id == b_j.id:
        raise ValidationError("true_tdoa needs two distinct beacons")
    return (_dist(user, b_i.position) - _dist(user, b_j.position)) / c


def sample_channel_gain(m: float, rng: np.random.Generator) -> float:
    """One draw of the normalized Nakagami-m power gain, Gamma(m, 1/m)."""
    if m < 0.5:
        raise ValidationError(f"Nakagami shape m must be >= 0.5, got {m}")
    return float(rng.gamma(m, 1.0 / m))


def _link_error(los: int, model: MeasurementModel, rng: np.random.Generator) -> float:
    # Every draw is taken regardless of the link state so the random stream
    # advances identically for LoS and NLoS links.
    gain = sample_channel_gain(model.nakagami_m, rng) if model.fading_enabled else 1.0
    std = model.los_noise_std / math.sqrt(gain) if gain > 0 else math.inf
    noise = float(rng.normal(0.0, 1.0)) * std if model.los_noise_std > 0 else 0.0
    bias = float(rng.exponential(model.nlos_bias_mean)) if model.nlos_bias_mean > 0 else 0.0
    return noise if los else noise + bias


def measure_tdoa(
    user: Sequence[float],
    b_i: Beacon,
    b_j: Beacon,
    flags: tuple[int, int],
    model: MeasurementModel,
    rng: np.random.Generator,
) -> TdoaMeasurement:
    exact = true_tdoa(user, b_i, b_j, model.c)
    eta_i = _link_error(flags[0], model, rng)
    eta_j = _link_error(flags[1], model, rng)
    return TdoaMeasurement(pair=(b_i.id, b_j.id), t_ij=exact + (eta_i - eta_j), link_flags=tuple(flags))


def localize_pair(
    meas: TdoaMeasurement,
    b_i: Beacon,
    b_j: Beacon,
    grid: np.ndarray,
    prev_estimate: Optional[Sequence[float]] = None,
    c: float = SPEED_OF_LIGHT,
) -> Point:
    """Grid cell center whose predicted TDoA is closest to the measurement.

    Two beacons only pin the user to one hyperbola branch, so residual ties
    (exact equality) go to the cell nearest ``prev_estimate`` -- the grid
    centroid when there is none -- and then to the lowest cell index.
    """
    cells = np.asarray(grid, dtype=float).reshape(-1, 2)
    if len(cells) == 0:
        raise ValidationError("localization grid is empty")
    pi = np.asarray(b_i.position, dtype=float)
    pj = np.asarray(b_j.position, dtype=float)
    d_i = np.hypot(cells[:, 0] - pi[0], cells[:, 1] - pi[1])
    d_j = np.hypot(cells[:, 0] - pj[0], cells[:, 1] - pj[1])
    residual = np.abs(meas.t_ij - (d_i - d_j) / c)
    best = np.flatnonzero(residual == residual.min())
    if len(best) > 1:
        ref = cells.mean(axis=0) if prev_estimate is None else np.asarray(prev_estimate, dtype=float)
        dist = np.hypot(cells[best, 0] - ref[0], cells[best, 1] - ref[1])
        best = best[dist == dist.min()]
    k = int(best[0])
    return float(cells[k, 0]), float(cells[k, 1])


def location_error(truth: Sequence[float], estimate: Sequence[float]) -> float:
    return _dist(truth, estimate)
