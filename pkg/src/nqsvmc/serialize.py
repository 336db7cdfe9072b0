"""Parameter snapshots on disk.

Layout: ASCII magic, an 8-byte little-endian header length, a JSON header
listing every leaf (slash-joined path, shape, dtype) plus a sha256 of the
payload, then the raw leaf bytes in header order, always little-endian.
Loading verifies the checksum, so truncated or bit-flipped files raise
instead of silently yielding garbage parameters.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .paramtree import tree_leaves

__all__ = ["SnapshotError", "save_params", "load_params", "check_compatible"]

MAGIC = b"NQSP1\n"


class SnapshotError(RuntimeError):
    """Malformed, truncated, or corrupted snapshot file."""


def save_params(path, tree) -> None:
    entries = []
    chunks = []
    for parts, leaf in tree_leaves(tree):
        # ascontiguousarray would promote 0-d leaves to shape (1,);
        # tobytes emits C order for any layout, so plain asarray is enough
        arr = np.asarray(leaf)
        arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        entries.append(
            {"path": "/".join(parts), "shape": list(arr.shape), "dtype": arr.dtype.str}
        )
        chunks.append(arr.tobytes())
    payload = b"".join(chunks)
    header = json.dumps(
        {
            "version": 1,
            "leaves": entries,
            "sha256": hashlib.sha256(payload).hexdigest(),
        },
        sort_keys=True,
    ).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        fh.write(payload)


def load_params(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(MAGIC):
        raise SnapshotError(f"{path}: not a parameter snapshot (bad magic)")
    base = len(MAGIC) + 8
    n_header = int.from_bytes(blob[len(MAGIC) : base], "little")
    try:
        header = json.loads(blob[base : base + n_header])
        leaves = header["leaves"]
        digest = header["sha256"]
    except (ValueError, KeyError) as exc:
        raise SnapshotError(f"{path}: unreadable header ({exc})") from None
    payload = blob[base + n_header :]
    if hashlib.sha256(payload).hexdigest() != digest:
        raise SnapshotError(f"{path}: checksum mismatch, file is corrupted")
    tree: dict = {}
    pos = 0
    for ent in leaves:
        dtype = np.dtype(ent["dtype"])
        shape = tuple(ent["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(payload, dtype=dtype, count=count, offset=pos)
        pos += count * dtype.itemsize
        node = tree
        parts = ent["path"].split("/")
        for key in parts[:-1]:
            node = node.setdefault(key, {})
        node[parts[-1]] = arr.reshape(shape).copy()
    if pos != len(payload):
        raise SnapshotError(f"{path}: {len(payload) - pos} trailing payload bytes")
    return tree


def check_compatible(loaded, reference) -> None:
    """Shape-only compatibility: same leaf paths, same shapes.

    Dtypes may differ (loading real parameters into a complex model of the
    same shapes is a supported transfer), so they are not compared here.
    """
    got = {"/".join(p): l.shape for p, l in tree_leaves(loaded)}
    want = {"/".join(p): l.shape for p, l in tree_leaves(reference)}
    missing = sorted(set(want) - set(got))
    extra = sorted(set(got) - set(want))
    bad = sorted(p for p in set(got) & set(want) if got[p] != want[p])
    if missing or extra or bad:
        lines = []
        for p in missing:
            lines.append(f"missing leaf '{p}' (model expects {want[p]})")
        for p in extra:
            lines.append(f"unexpected leaf '{p}' with shape {got[p]}")
        for p in bad:
            lines.append(f"leaf '{p}': snapshot {got[p]} vs model {want[p]}")
        raise SnapshotError("incompatible snapshot:\n  " + "\n  ".join(lines))
