"""
Binary container shared by parameter checkpoints and dataset files.

Layout:
    magic line (ASCII, '\\n'-terminated)
    header length (uint64, little-endian)
    JSON header {"meta": {...}, "arrays": [{"name", "shape", "dtype", "offset", "nbytes"}]}
    raw little-endian array bytes, in header order
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Dict, Mapping, Tuple, Type

import numpy as np

from ..errors import CheckpointError, XfcsiError

CKPT_MAGIC = "XFCSI-CKPT-1"

_ALLOWED = {"<f4", "<f8", "<c8", "<c16", "<i4", "<i8", "|u1", "|b1"}


def _le(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    if a.dtype.byteorder == ">" or (a.dtype.byteorder == "=" and not np.little_endian):
        a = a.astype(a.dtype.newbyteorder("<"))
    return a


def write_container(
    path: str | Path,
    magic: str,
    meta: Mapping,
    arrays: Mapping[str, np.ndarray],
) -> None:
    entries = []
    blobs = []
    offset = 0
    for name, arr in arrays.items():
        a = _le(np.asarray(arr))
        raw = a.tobytes(order="C")
        entries.append({
            "name": name,
            "shape": list(a.shape),
            "dtype": a.dtype.str,
            "offset": offset,
            "nbytes": len(raw),
        })
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": meta, "arrays": entries}, sort_keys=True).encode("utf-8")

    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("wb") as f:
        f.write(magic.encode("ascii") + b"\n")
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for raw in blobs:
            f.write(raw)


def read_container(
    path: str | Path,
    magic: str,
    error: Type[XfcsiError] = CheckpointError,
) -> Tuple[dict, Dict[str, np.ndarray]]:
    p = Path(path)
    try:
        buf = p.read_bytes()
    except OSError as e:
        raise error(f"cannot read {p}: {e}") from e

    line = (magic + "\n").encode("ascii")
    if not buf.startswith(line):
        raise error(f"{p.name}: bad magic (expected {magic})")
    pos = len(line)
    if len(buf) < pos + 8:
        raise error(f"{p.name}: truncated header")
    (hlen,) = struct.unpack_from("<Q", buf, pos)
    pos += 8
    try:
        header = json.loads(buf[pos:pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise error(f"{p.name}: corrupt header ({e})") from e
    base = pos + hlen

    arrays: Dict[str, np.ndarray] = {}
    for ent in header.get("arrays", []):
        if ent["dtype"] not in _ALLOWED:
            raise error(f"{p.name}: unsupported dtype {ent['dtype']} for {ent['name']}")
        start = base + int(ent["offset"])
        end = start + int(ent["nbytes"])
        if end > len(buf):
            raise error(f"{p.name}: array {ent['name']} runs past end of file")
        a = np.frombuffer(buf[start:end], dtype=np.dtype(ent["dtype"]))
        arrays[ent["name"]] = a.reshape(ent["shape"]).copy()
    return header.get("meta", {}), arrays


def save_checkpoint(path: str | Path, params: Mapping[str, np.ndarray], meta: Mapping) -> None:
    write_container(path, CKPT_MAGIC, meta, params)


def load_checkpoint(path: str | Path) -> Tuple[dict, Dict[str, np.ndarray]]:
    return read_container(path, CKPT_MAGIC, CheckpointError)
