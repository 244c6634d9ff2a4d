"""Shared model-file format: one .npz archive with a JSON meta record.

Arrays round-trip bitwise through numpy's format, so a loaded model predicts
exactly what the saved one did.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import InvalidInputError


def save_npz(path: str | Path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    payload = {"meta": np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)}
    payload.update(arrays)
    with open(Path(path), "wb") as fh:  # file handle keeps the exact path (savez appends .npz to names)
        np.savez(fh, **payload)


def load_npz(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    with np.load(Path(path), allow_pickle=False) as data:
        try:
            meta = json.loads(bytes(data["meta"]).decode())
        except KeyError as exc:
            raise InvalidInputError(f"{path}: missing meta record") from exc
        arrays = {k: data[k] for k in data.files if k != "meta"}
    return meta, arrays


def model_kind(path: str | Path) -> str:
    meta, _ = load_npz(path)
    kind = meta.get("kind")
    if not isinstance(kind, str):
        raise InvalidInputError(f"{path}: meta record has no model kind")
    return kind
