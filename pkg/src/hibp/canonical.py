"""Canonical JSON encoding with lossless float formatting.

Floats are written with 17 significant digits, enough to reconstruct the
exact double on parse, and object keys keep insertion order so identical
documents serialize to identical bytes. SHA-256 of these bytes is used as a
content hash.
"""

from __future__ import annotations

import hashlib
import json
import math

import numpy as np


def _render(obj) -> str:
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise ValueError("non-finite float has no canonical JSON form")
        s = format(x, ".17g")
        if "." not in s and "e" not in s and "E" not in s:
            s += ".0"  # keep JSON float typing on parse
        return s
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        items = ",".join(f"{json.dumps(str(k))}:{_render(v)}" for k, v in obj.items())
        return "{" + items + "}"
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_render(v) for v in obj) + "]"
    raise TypeError(f"cannot canonicalize {type(obj)!r}")


def dumps(obj) -> str:
    return _render(obj)


def dump_bytes(obj) -> bytes:
    return _render(obj).encode("ascii")


def digest(obj) -> str:
    return hashlib.sha256(dump_bytes(obj)).hexdigest()
