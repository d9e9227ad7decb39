"""Self-describing textual checkpoint: name, shape, row-major values per parameter."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .autodiff import Module
from .errors import CheckpointError

FORMAT_VERSION = 1


def state_dict(module: Module) -> dict[str, np.ndarray]:
    return {name: t.values.copy() for name, t in module.named_parameters()}


def save_checkpoint(path: str | Path, module: Module, step: int = 0) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "step": step,
        "params": [
            {
                "name": name,
                "shape": list(t.values.shape),
                "values": t.values.reshape(-1).tolist(),
            }
            for name, t in module.named_parameters()
        ],
    }
    Path(path).write_text(json.dumps(payload))


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], int]:
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if payload.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format_version {payload.get('format_version')!r}"
        )
    params = {}
    for entry in payload.get("params", []):
        arr = np.asarray(entry["values"], dtype=np.float64).reshape(entry["shape"])
        params[entry["name"]] = arr
    return params, int(payload.get("step", 0))


def load_state(module: Module, params: dict[str, np.ndarray]) -> None:
    """Assign checkpoint arrays to module parameters by name, validating shapes."""
    own = dict(module.named_parameters())
    missing = sorted(set(own) - set(params))
    extra = sorted(set(params) - set(own))
    if missing or extra:
        raise CheckpointError(
            f"parameter name mismatch; missing={missing[:5]} extra={extra[:5]}"
        )
    for name, tensor in own.items():
        arr = params[name]
        if arr.shape != tensor.values.shape:
            raise CheckpointError(
                f"shape mismatch for {name}: checkpoint {arr.shape} "
                f"vs model {tensor.values.shape}"
            )
        tensor.values[...] = arr
