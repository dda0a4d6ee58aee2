"""Versioned checkpoint container: one npz of arrays plus a JSON ``meta`` entry."""
from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np

VERSION = 1


class CheckpointError(ValueError):
    pass


def write_container(path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    header = dict(meta, format=f"cpdoc-{kind}", version=VERSION)
    buf = io.BytesIO()
    np.savez(buf, meta=np.array(json.dumps(header, sort_keys=True)),
             **{k: np.asarray(v) for k, v in arrays.items()})
    Path(path).write_bytes(buf.getvalue())


def read_container(path, kind: str) -> tuple[dict, dict[str, np.ndarray]]:
    try:
        doc = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint ({exc})") from exc
    with doc:
        if "meta" not in doc.files:
            raise CheckpointError(f"{path}: missing meta entry")
        meta = json.loads(str(doc["meta"]))
        arrays = {k: doc[k] for k in doc.files if k != "meta"}
    if meta.get("format") != f"cpdoc-{kind}":
        raise CheckpointError(f"{path}: expected a {kind} checkpoint, found {meta.get('format')!r}")
    if meta.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {meta.get('version')}")
    return meta, arrays
