"""JSON checkpoint container for :class:`NetworkParams`.

Floats are written with ``repr`` precision, so a save/load round trip is
bit-exact.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from ..errors import CheckpointError, ValidationError
from .network import LayerSpec, NetworkParams, param_shapes

FORMAT = "uwbsel-qnet"
VERSION = 1


def to_dict(params: NetworkParams, extra: Optional[dict[str, Any]] = None) -> dict[str, Any]:
    names = []
    for i in range(len(params.specs)):
        names += [f"layer{i}.weight", f"layer{i}.bias"]
    return {
        "format": FORMAT,
        "version": VERSION,
        "seed": params.seed,
        "input_length": params.input_length,
        "in_channels": params.in_channels,
        "specs": [s.to_dict() for s in params.specs],
        "params": [
            {"name": n, "shape": list(a.shape), "data": a.reshape(-1).tolist()}
            for n, a in zip(names, params.arrays())
        ],
        "extra": extra or {},
    }


def from_dict(data: dict[str, Any]) -> NetworkParams:
    if data.get("format") != FORMAT:
        raise CheckpointError(f"not a {FORMAT} checkpoint")
    if data.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {data.get('version')!r}")
    try:
        specs = tuple(LayerSpec(**s) for s in data["specs"])
        input_length = int(data["input_length"])
        in_channels = int(data.get("in_channels", 1))
        expected = param_shapes(specs, input_length, in_channels)
    except (KeyError, TypeError, ValidationError) as exc:
        raise CheckpointError(f"invalid checkpoint architecture: {exc}") from exc
    entries = data.get("params", [])
    if len(entries) != len(expected):
        raise CheckpointError(f"checkpoint has {len(entries)} arrays, architecture needs {len(expected)}")
    arrays = []
    for entry, shape in zip(entries, expected):
        if tuple(entry["shape"]) != tuple(shape):
            raise CheckpointError(f"{entry.get('name')}: shape {entry['shape']} != expected {list(shape)}")
        arr = np.asarray(entry["data"], dtype=float)
        if arr.size != int(np.prod(shape)):
            raise CheckpointError(f"{entry.get('name')}: data length does not match its shape")
        arrays.append(np.ascontiguousarray(arr.reshape(shape)))
    if not all(np.isfinite(a).all() for a in arrays):
        raise CheckpointError("checkpoint contains non-finite values")
    return NetworkParams(specs, input_length, arrays[0::2], arrays[1::2], data.get("seed"), in_channels)


def save(path: Union[str, Path], params: NetworkParams, extra: Optional[dict[str, Any]] = None) -> None:
    Path(path).write_text(json.dumps(to_dict(params, extra)))


def load(path: Union[str, Path]) -> NetworkParams:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return from_dict(data)


def load_extra(path: Union[str, Path]) -> dict[str, Any]:
    return json.loads(Path(path).read_text()).get("extra", {})


def check_compatible(params: NetworkParams, input_length: int, n_outputs: int) -> None:
    if params.input_length * params.in_channels != input_length or params.n_outputs != n_outputs:
        raise CheckpointError(
            f"checkpoint expects input {params.input_length}/output {params.n_outputs}, "
            f"run needs input {input_length}/output {n_outputs}"
        )
