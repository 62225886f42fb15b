"""Array files: raw little-endian float32 plus a JSON sidecar.

An array named ``stem`` is stored as ``stem.bin`` (row-major float32, complex
data interleaved real/imag) and ``stem.json``::

    {"shape": [r, c], "dtype": "c64" | "f32", "order": "row-major"}

Extra sidecar keys are allowed (masks record their acquisition order there).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .forward_model import SamplingMask


def _stem(path) -> Path:
    path = Path(path)
    if path.suffix in (".bin", ".json"):
        path = path.with_suffix("")
    return path


def dumps_json(obj) -> str:
    """Canonical JSON used for every file the package writes."""
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def save_array(path, array, extra: dict | None = None) -> Path:
    """Write ``array`` to ``path.bin`` / ``path.json`` and return the stem."""
    stem = _stem(path)
    stem.parent.mkdir(parents=True, exist_ok=True)
    array = np.asarray(array)
    if np.iscomplexobj(array):
        data, dtype = np.ascontiguousarray(array, dtype="<c8"), "c64"
    else:
        data, dtype = np.ascontiguousarray(array, dtype="<f4"), "f32"
    stem.with_suffix(".bin").write_bytes(data.tobytes(order="C"))
    meta = {"shape": list(array.shape), "dtype": dtype, "order": "row-major"}
    if extra:
        meta.update(extra)
    stem.with_suffix(".json").write_text(dumps_json(meta))
    return stem


def load_sidecar(path) -> dict:
    return json.loads(_stem(path).with_suffix(".json").read_text())


def load_array(path) -> np.ndarray:
    stem = _stem(path)
    meta = load_sidecar(stem)
    if meta.get("order", "row-major") != "row-major":
        raise ValueError(f"unsupported array order {meta['order']!r}")
    dtype = {"c64": "<c8", "f32": "<f4"}[meta["dtype"]]
    raw = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype=dtype)
    return raw.reshape(meta["shape"]).copy()


def save_mask(path, mask: SamplingMask) -> Path:
    return save_array(path, mask.to_array().astype(np.float32),
                      extra={"acquisition_order": list(mask.acquired), "mode": mask.mode})


def load_mask(path) -> SamplingMask:
    meta = load_sidecar(path)
    arr = load_array(path)
    order = meta.get("acquisition_order")
    if order is None:
        order = np.flatnonzero(arr.ravel() > 0.5)
    mask = SamplingMask(arr.shape, tuple(order), meta.get("mode", "pointwise"))
    if not np.array_equal(mask.to_array(), arr > 0.5):
        raise ValueError("mask grid and recorded acquisition order disagree")
    return mask


def save_pgm(path, image, fftshift: bool = False) -> Path:
    """8-bit binary PGM (P5) of ``|image|``, scaled so the maximum maps to 255.

    1D inputs are written as a single-row image.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mag = np.abs(np.asarray(image, dtype=np.complex128 if np.iscomplexobj(image) else np.float64))
    if fftshift:
        mag = np.fft.fftshift(mag)
    if mag.ndim == 1:
        mag = mag[None, :]
    peak = mag.max()
    scaled = np.zeros(mag.shape) if peak <= 0 else mag / peak
    pixels = np.round(scaled * 255).astype(np.uint8)
    header = f"P5\n{pixels.shape[1]} {pixels.shape[0]}\n255\n".encode("ascii")
    path.write_bytes(header + pixels.tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ValueError("not a binary PGM file")
    width, height = int(tokens[1]), int(tokens[2])
    pixels = np.frombuffer(data[pos + 1:pos + 1 + width * height], dtype=np.uint8)
    return pixels.reshape(height, width)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path
