"""Deterministic serialization helpers.

Outputs must be byte-identical across reruns with the same inputs and
seed, so zip entries get a fixed timestamp and JSON is written with
sorted keys.
"""

from __future__ import annotations

import hashlib
import json
import zipfile

_FIXED_DATE = (1980, 1, 1, 0, 0, 0)


def zip_writestr(zf: zipfile.ZipFile, name: str, data) -> None:
    info = zipfile.ZipInfo(filename=name, date_time=_FIXED_DATE)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def stable_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def dump_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, allow_nan=False)
        fh.write("\n")


def load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
