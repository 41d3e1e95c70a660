"""Readers and writers for frame stacks and correlation curves.

Frame stack (``.gmf``)::

    b"GMF1" | u32 version | u32 pixels | u32 frames | frames*pixels float32

all little-endian, frame-major. A UTF-8 JSON sidecar next to it (same stem,
``.json`` suffix) carries ``pixel_angles``, the stack metadata and the run
configuration that produced it.

Curves are CSV with header ``theta2,value[,stderr]`` written with 17
significant digits; their sidecar is the CSV path with ``.json`` appended.
"""
from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .estimator import FrameStack
from .exceptions import DomainError
from .model import CorrelationCurve

MAGIC = b"GMF1"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


def stack_sidecar(path) -> Path:
    return Path(path).with_suffix(".json")


def curve_sidecar(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_stack(path, stack: FrameStack, config=None):
    data = np.ascontiguousarray(stack.intensities, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, stack.pixels, stack.frames))
        fh.write(data.tobytes())
    write_json(stack_sidecar(path), {
        "pixel_angles": stack.pixel_angles,
        "meta": stack.meta,
        "config": config or {},
    })


def read_stack(path) -> FrameStack:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise DomainError(f"{path}: truncated header")
        magic, version, pixels, frames = _HEADER.unpack(head)
        if magic != MAGIC:
            raise DomainError(f"{path}: not a GMF1 frame stack")
        if version != VERSION:
            raise DomainError(f"{path}: unsupported version {version}")
        raw = fh.read()
    expected = 4 * pixels * frames
    if len(raw) != expected:
        raise DomainError(f"{path}: expected {expected} data bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4").reshape(frames, pixels)
    side = stack_sidecar(path)
    if side.exists():
        info = read_json(side)
        angles = np.asarray(info["pixel_angles"], dtype=float)
        meta = dict(info.get("meta", {}), config=info.get("config", {}))
    else:
        angles = np.linspace(-1.0, 1.0, pixels)
        meta = {}
    if angles.size != pixels:
        raise DomainError(f"{side}: pixel_angles length {angles.size} != {pixels}")
    return FrameStack(data.astype(np.float32), angles, meta)


def write_curve(path, curve: CorrelationCurve, config=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if curve.stderr is None:
            writer.writerow(["theta2", "value"])
            rows = zip(curve.theta2, curve.values)
        else:
            writer.writerow(["theta2", "value", "stderr"])
            rows = zip(curve.theta2, curve.values, curve.stderr)
        for row in rows:
            writer.writerow([format(float(v), ".17g") for v in row])
    write_json(curve_sidecar(path), {"meta": curve.meta, "config": config or {}})


def read_curve(path) -> CorrelationCurve:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header[:2] != ["theta2", "value"]:
            raise DomainError(f"{path}: expected header theta2,value[,stderr]")
        rows = [[float(x) for x in r] for r in reader if r]
    if not rows:
        raise DomainError(f"{path}: no data rows")
    table = np.array(rows, dtype=float)
    stderr = table[:, 2] if "stderr" in header and table.shape[1] > 2 else None
    side = curve_sidecar(path)
    meta = read_json(side).get("meta", {}) if side.exists() else {}
    return CorrelationCurve(table[:, 0], table[:, 1], stderr, meta)
