"""CSV, binary and manifest output."""
from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MAGIC = b"RSK1"


def fmt(v) -> str:
    """17 significant digits: enough to round-trip any double."""
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def write_kernel_csv(path: Path, t: float, K: np.ndarray) -> Path:
    """Row-major kernel: header ``t,n,row,c0..c{n-1}``, one line per row."""
    n = K.shape[0]
    header = ["t", "n", "row"] + [f"c{j}" for j in range(n)]
    return write_csv(path, header, ([t, n, i, *K[i]] for i in range(n)))


def read_kernel_csv(path: Path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return float(data[0, 0]), data[:, 3:]


def write_kernel_binary(path: Path, t: float, K: np.ndarray) -> Path:
    """``b"RSK1"`` then little-endian doubles ``t``, ``n`` and the ``n*n`` entries row-major."""
    n = K.shape[0]
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<dd", float(t), float(n)))
        fh.write(np.ascontiguousarray(K, dtype="<f8").tobytes())
    return path


def read_kernel_binary(path: Path):
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path} is not an RSK1 kernel file")
    t, n = struct.unpack("<dd", raw[4:20])
    n = int(n)
    K = np.frombuffer(raw[20:], dtype="<f8")
    if K.size != n * n:
        raise ValueError(f"{path}: expected {n * n} entries, found {K.size}")
    return t, K.reshape(n, n).copy()


def write_json(path: Path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=json_default) + "\n")
    return path


def json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=json_default)
    return hashlib.sha256(blob.encode()).hexdigest()


def write_manifest(out_dir: Path, config: dict, artifacts: Sequence[Path], command: str) -> Path:
    out_dir = Path(out_dir)
    entries = []
    for a in artifacts:
        a = Path(a)
        entries.append({"path": a.name, "sha256": hashlib.sha256(a.read_bytes()).hexdigest()})
    return write_json(out_dir / "manifest.json",
                      {"command": command, "config_hash": config_hash(config), "config": config,
                       "artifacts": entries})
