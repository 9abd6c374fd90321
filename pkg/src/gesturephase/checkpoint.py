"""Checkpoint container: a JSON manifest plus raw little-endian arrays.

The manifest records parameter names, shapes, precision, a config
snapshot and the training seed; each parameter's bytes live in their own
zip entry. Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import zipfile

import numpy as np

from .errors import CheckpointError
from .nn import ParamBlock, dtype_name
from .util import zip_writestr

FORMAT_NAME = "gesturephase-checkpoint"
FORMAT_VERSION = 1

_LITTLE = {"float32": "<f4", "float64": "<f8"}


def save_checkpoint(path, blocks: list[ParamBlock], config_snapshot: dict,
                    seed: int, extra: dict | None = None) -> None:
    precisions = {dtype_name(b.value.dtype) for b in blocks}
    if len(precisions) != 1:
        raise CheckpointError(f"mixed precisions in one checkpoint: {sorted(precisions)}")
    precision = precisions.pop()
    manifest = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "precision": precision,
        "seed": int(seed),
        "config": config_snapshot,
        "params": [
            {"name": b.name, "shape": list(b.value.shape)} for b in blocks
        ],
    }
    if extra:
        manifest.update(extra)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        zip_writestr(zf, "manifest.json", json.dumps(manifest, indent=1, sort_keys=True))
        code = _LITTLE[precision]
        for b in blocks:
            zip_writestr(zf, f"params/{b.name}.bin",
                         np.ascontiguousarray(b.value, dtype=code).tobytes())


def load_checkpoint(path):
    """Return (manifest, {name: array}) with arrays in native byte order."""
    try:
        with zipfile.ZipFile(path, "r") as zf:
            manifest = json.loads(zf.read("manifest.json"))
            if manifest.get("format") != FORMAT_NAME:
                raise CheckpointError(f"{path} is not a {FORMAT_NAME} file")
            if manifest.get("version") != FORMAT_VERSION:
                raise CheckpointError(
                    f"unsupported checkpoint version {manifest.get('version')}"
                )
            code = _LITTLE.get(manifest.get("precision"))
            if code is None:
                raise CheckpointError(
                    f"unknown precision {manifest.get('precision')!r}"
                )
            arrays = {}
            for entry in manifest["params"]:
                name, shape = entry["name"], tuple(entry["shape"])
                raw = zf.read(f"params/{name}.bin")
                arr = np.frombuffer(raw, dtype=code)
                if arr.size != int(np.prod(shape, dtype=np.int64)):
                    raise CheckpointError(f"param {name!r}: size does not match shape")
                arrays[name] = arr.reshape(shape).astype(code[1:], copy=True)
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as e:
        raise CheckpointError(f"unreadable checkpoint {path}: {e}") from e
    return manifest, arrays


def restore_into(blocks: list[ParamBlock], arrays: dict) -> None:
    """Copy checkpoint arrays into parameter blocks, strictly by name."""
    have = set(arrays)
    want = {b.name for b in blocks}
    if have != want:
        missing = sorted(want - have)
        surplus = sorted(have - want)
        raise CheckpointError(
            f"parameter names do not match model (missing {missing}, surplus {surplus})"
        )
    for b in blocks:
        arr = arrays[b.name]
        if arr.shape != b.value.shape:
            raise CheckpointError(
                f"param {b.name!r}: checkpoint shape {arr.shape} vs model {b.value.shape}"
            )
        if arr.dtype != b.value.dtype:
            raise CheckpointError(
                f"param {b.name!r}: checkpoint dtype {arr.dtype} vs model {b.value.dtype}"
            )
        b.value[...] = arr
        b.zero_grad()
