"""Checkpoint files.

Layout:

    RPDECKPT\\n
    <one line of sorted-key JSON header>\\n
    <params as little-endian float64><adam m><adam v>

The header records the block sizes under "counts".
"""

import json
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import CheckpointError
from .models import CHECKPOINT_VERSION, CheckpointHeader, PlateauState
from .optimizer import AdamState
from .resnet import NetworkConfig, NetworkParams

MAGIC = b"RPDECKPT\n"
_FLOAT = np.dtype("<f8")
BLOCKS = ("params", "m", "v")


@dataclass
class Checkpoint:
    config: Dict
    params: NetworkParams
    adam: AdamState
    iteration: int
    seed: int
    loss_tail: List[Tuple[int, float]] = field(default_factory=list)
    plateau: PlateauState = field(default_factory=PlateauState)

    @property
    def rng_counter(self) -> int:
        """Counter of the next batch draw; batches are keyed by iteration."""
        return self.iteration


class CheckpointManager:
    def __init__(self, directory: Optional[str] = None):
        if directory is None:
            directory = os.getcwd()
        self.directory = directory

    def path_for(self, iteration: int) -> str:
        return os.path.join(self.directory, f"checkpoint-{iteration}.ckpt")

    @property
    def latest_path(self) -> str:
        return os.path.join(self.directory, "latest.ckpt")

    def save(self, checkpoint: Checkpoint, path: Optional[str] = None) -> str:
        """Write `checkpoint` to `path` (default: by iteration) and refresh latest.ckpt."""
        path = path or self.path_for(checkpoint.iteration)
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        payload = encode(checkpoint)
        for target in (path, self.latest_path):
            with open(target, "wb") as f:
                f.write(payload)
        return path

    def load(self, path: Optional[str] = None) -> Checkpoint:
        """Load a checkpoint file (default: latest.ckpt)."""
        path = path or self.latest_path
        try:
            with open(path, "rb") as f:
                return decode(f.read())
        except FileNotFoundError:
            raise CheckpointError(f"checkpoint not found: {path}") from None


def encode(checkpoint: Checkpoint) -> bytes:
    params = checkpoint.params.flat
    header: CheckpointHeader = {
        "version": CHECKPOINT_VERSION,
        "config": checkpoint.config,
        "network": checkpoint.params.config.to_dict(),
        "iteration": checkpoint.iteration,
        "optimizer": checkpoint.adam.header(),
        "counts": {name: len(params) for name in BLOCKS},
        "loss_tail": [[int(i), float(loss)] for i, loss in checkpoint.loss_tail],
        "rng": {"seed": checkpoint.seed, "counter": checkpoint.rng_counter},
        "plateau": checkpoint.plateau.header(),
    }
    line = json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n"
    blocks = b"".join(
        np.ascontiguousarray(array, dtype=_FLOAT).tobytes()
        for array in (params, checkpoint.adam.m, checkpoint.adam.v)
    )
    return MAGIC + line + blocks


def decode(payload: bytes) -> Checkpoint:
    if not payload.startswith(MAGIC):
        raise CheckpointError("not a checkpoint file (bad magic line)")
    end = payload.find(b"\n", len(MAGIC))
    if end < 0:
        raise CheckpointError("checkpoint header is truncated")
    try:
        header = json.loads(payload[len(MAGIC) : end])
    except json.JSONDecodeError:
        raise CheckpointError("checkpoint header is not valid JSON") from None
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {header.get('version')} is not supported (expected {CHECKPOINT_VERSION})"
        )

    body = payload[end + 1 :]
    counts = header["counts"]
    expected = sum(counts[name] for name in BLOCKS) * _FLOAT.itemsize
    if len(body) != expected:
        raise CheckpointError(f"checkpoint body has {len(body)} bytes, header promises {expected}")
    arrays = {}
    offset = 0
    for name in BLOCKS:
        size = counts[name] * _FLOAT.itemsize
        arrays[name] = np.frombuffer(body[offset : offset + size], dtype=_FLOAT).astype(np.float64)
        offset += size

    network = NetworkConfig.from_dict(header["network"])
    try:
        params = NetworkParams.from_flat(network, arrays["params"])
    except ValueError as error:
        raise CheckpointError(f"checkpoint parameters do not fit the network: {error}") from None
    return Checkpoint(
        config=header["config"],
        params=params,
        adam=AdamState.from_header(header["optimizer"], arrays["m"], arrays["v"]),
        iteration=header["iteration"],
        seed=header["rng"]["seed"],
        loss_tail=[(int(i), float(loss)) for i, loss in header["loss_tail"]],
        plateau=PlateauState.from_header(header["plateau"]),
    )
