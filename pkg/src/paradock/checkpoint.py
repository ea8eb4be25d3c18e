"""Checkpoint file format: ascii manifest + raw little-endian float64 blob.

Layout::

    paradock-checkpoint-v1
    meta {"kind": "model", ...}
    array <name> <d0,d1,...> <byte offset> <element count>
    ...
    blob <total bytes>
    <blank line>
    <raw bytes>

Every array is stored as little-endian IEEE-754 float64; round-trips are
bit-exact. Names may not contain whitespace.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import ConfigError
from .model import ModelConfig, PairEncoder

MAGIC = "paradock-checkpoint-v1"


def save_arrays(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    lines = [MAGIC, "meta " + json.dumps(meta or {}, sort_keys=True)]
    blob = bytearray()
    for name in arrays:
        if any(ch.isspace() for ch in name):
            raise ConfigError(f"array name may not contain whitespace: {name!r}")
        arr = np.ascontiguousarray(np.asarray(arrays[name], dtype="<f8"))
        if arr.ndim == 0:
            arr = arr.reshape(1)
        shape = ",".join(str(d) for d in arr.shape)
        lines.append(f"array {name} {shape} {len(blob)} {arr.size}")
        blob.extend(arr.tobytes())
    lines.append(f"blob {len(blob)}")
    header = "\n".join(lines) + "\n\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(bytes(blob))


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        data = fh.read()
    sep = data.find(b"\n\n")
    if sep < 0:
        raise ConfigError(f"{path}: not a checkpoint (missing header terminator)")
    header = data[:sep].decode("ascii", errors="replace").splitlines()
    blob = data[sep + 2:]
    if not header or header[0] != MAGIC:
        raise ConfigError(f"{path}: bad magic {header[0]!r}" if header else f"{path}: empty")
    meta: dict = {}
    arrays: dict[str, np.ndarray] = {}
    declared = None
    for line in header[1:]:
        kind, _, rest = line.partition(" ")
        if kind == "meta":
            meta = json.loads(rest)
        elif kind == "array":
            try:
                name, shape_s, off_s, count_s = rest.split(" ")
                shape = tuple(int(d) for d in shape_s.split(","))
                offset, count = int(off_s), int(count_s)
            except ValueError:
                raise ConfigError(f"{path}: malformed manifest line {line!r}") from None
            end = offset + 8 * count
            if end > len(blob):
                raise ConfigError(f"{path}: array {name} exceeds blob size")
            arr = np.frombuffer(blob[offset:end], dtype="<f8").reshape(shape)
            arrays[name] = arr.copy()
        elif kind == "blob":
            declared = int(rest)
        else:
            raise ConfigError(f"{path}: unknown manifest record {kind!r}")
    if declared is not None and declared != len(blob):
        raise ConfigError(f"{path}: blob length {len(blob)} != declared {declared}")
    return arrays, meta


def save_model(path, model: PairEncoder, extra_meta: dict | None = None) -> None:
    meta = {"kind": "model", "model_config": model.config_dict()}
    if extra_meta:
        meta.update(extra_meta)
    save_arrays(path, model.state_arrays(), meta)


def load_model(path) -> tuple[PairEncoder, dict]:
    arrays, meta = load_arrays(path)
    if "model_config" not in meta:
        raise ConfigError(f"{path}: checkpoint carries no model config")
    cfg = ModelConfig(**meta["model_config"])
    model = PairEncoder(cfg, seed=None)
    model_arrays = {k: v for k, v in arrays.items() if not k.startswith("opt.")}
    model.load_state_arrays(model_arrays)
    return model, meta


def manifest(path) -> list[tuple[str, tuple, int]]:
    """(name, shape, element count) for each stored array, in file order."""
    arrays, _ = load_arrays(path)
    return [(name, tuple(a.shape), int(a.size)) for name, a in arrays.items()]
