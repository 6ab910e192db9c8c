"""Small shared helpers: decimal serialization and data fingerprints."""

from __future__ import annotations

import hashlib

import numpy as np


def float17(x: float) -> str:
    """Decimal representation with 17 significant digits (exact round-trip)."""
    if isinstance(x, float) and (x != x):
        return "NaN"
    return format(float(x), ".17g")


def dumps17(obj, indent: int = 0) -> str:
    """Serialize nested dict/list/scalar structures to JSON text.

    Floats are written with 17 significant digits so that parsing the text
    back yields bit-identical doubles.  Dict keys keep insertion order, which
    makes the output deterministic for deterministically built structures.
    """
    pad = " " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = ",\n".join(
            f'{pad}  "{k}": {dumps17(v, indent + 2)}' for k, v in obj.items()
        )
        return "{\n" + items + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(np.asarray(obj).tolist()) if isinstance(obj, np.ndarray) else list(obj)
        if not seq:
            return "[]"
        body = ", ".join(dumps17(v, indent) for v in seq)
        return "[" + body + "]"
    if isinstance(obj, bool) or isinstance(obj, np.bool_):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return float17(float(obj))
    if isinstance(obj, str):
        out = obj.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
        return f'"{out}"'
    raise TypeError(f"cannot serialize object of type {type(obj)!r}")


def fingerprint(*arrays: np.ndarray) -> str:
    """Content hash of arrays (dtype- and layout-normalized), hex digest."""
    h = hashlib.sha256()
    for a in arrays:
        arr = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


def seed_from_content(master_seed: int, *arrays: np.ndarray) -> int:
    """Derive a group-specific seed from a master seed and array contents.

    Hashing the data instead of the group position keeps seeded procedures
    symmetric under relabeling of the groups.
    """
    digest = fingerprint(*arrays)
    return int(np.random.SeedSequence(
        [int(master_seed) & 0x7FFFFFFF, int(digest[:15], 16)]
    ).generate_state(1)[0])
