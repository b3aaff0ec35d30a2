"""File formats: PNG image export, the FQTN binary tensor format, and the
CSV layouts for spectrum profiles and training logs.

FQTN layout: magic ``FQTN``, u16 version, u8 rank, one u32 per dimension
(row-major), then the payload as little-endian float32.
"""

import csv
import struct

import numpy as np
from PIL import Image

__all__ = [
    "TensorFormatError",
    "TENSOR_MAGIC",
    "TENSOR_VERSION",
    "write_tensor",
    "read_tensor",
    "inspect_tensor_file",
    "write_png",
    "read_png",
    "diverging_image",
    "write_profile_csv",
    "write_training_log_csv",
    "TRAINING_LOG_COLUMNS",
]

TENSOR_MAGIC = b"FQTN"
TENSOR_VERSION = 1

TRAINING_LOG_COLUMNS = ["epoch", "L_ff", "L_ad", "L_qa", "L_pi", "total", "integrity_residual"]


class TensorFormatError(ValueError):
    """Tensor file is malformed."""


def write_tensor(path, arr) -> None:
    arr = np.asarray(arr)
    if arr.ndim < 1 or arr.ndim > 255:
        raise TensorFormatError(f"rank {arr.ndim} not representable")
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<H", TENSOR_VERSION))
        fh.write(struct.pack("<B", arr.ndim))
        for d in arr.shape:
            fh.write(struct.pack("<I", d))
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _parse_tensor_header(blob: bytes):
    if blob[:4] != TENSOR_MAGIC:
        raise TensorFormatError(f"bad magic bytes {blob[:4]!r}, expected {TENSOR_MAGIC!r}")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != TENSOR_VERSION:
        raise TensorFormatError(f"unsupported tensor format version {version}")
    (rank,) = struct.unpack_from("<B", blob, 6)
    header = 7 + 4 * rank
    if header > len(blob):
        raise TensorFormatError("truncated file: dimension list incomplete")
    dims = struct.unpack_from(f"<{rank}I", blob, 7)
    return dims, header


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    dims, header = _parse_tensor_header(blob)
    count = int(np.prod(dims, dtype=np.int64))
    if header + 4 * count != len(blob):
        raise TensorFormatError(
            f"payload length {len(blob) - header} does not match dims {dims} (need {4 * count})"
        )
    data = np.frombuffer(blob, dtype="<f4", count=count, offset=header)
    return data.reshape(dims).astype(np.float64)


def inspect_tensor_file(path) -> dict:
    """Validate magic/version/dims/payload length; returns header info."""
    with open(path, "rb") as fh:
        blob = fh.read()
    dims, header = _parse_tensor_header(blob)
    count = int(np.prod(dims, dtype=np.int64))
    if header + 4 * count != len(blob):
        raise TensorFormatError(
            f"payload length {len(blob) - header} does not match dims {dims} (need {4 * count})"
        )
    return {"dims": list(dims), "rank": len(dims), "payload_bytes": 4 * count}


def write_png(path, arr) -> None:
    """Quantize to 8 bits and write; (h, w, 3) -> RGB, (h, w) -> grayscale."""
    arr = np.asarray(arr, dtype=np.float64)
    data = np.clip(np.round(arr), 0, 255).astype(np.uint8)
    if data.ndim == 2:
        Image.fromarray(data, mode="L").save(path)
    elif data.ndim == 3 and data.shape[2] == 3:
        Image.fromarray(data, mode="RGB").save(path)
    else:
        raise ValueError(f"cannot export array of shape {arr.shape} as PNG")


def read_png(path) -> np.ndarray:
    """Load as float64 (h, w, 3) in [0, 255]."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64)


def diverging_image(values: np.ndarray) -> np.ndarray:
    """Signed grid to a blue-white-red image, symmetric about zero."""
    values = np.asarray(values, dtype=np.float64)
    peak = np.abs(values).max()
    t = values / peak if peak > 0 else np.zeros_like(values)
    rgb = np.empty(values.shape + (3,))
    rgb[:, :, 0] = 255.0 * np.clip(1.0 + np.minimum(t, 0.0), 0.0, 1.0)
    rgb[:, :, 1] = 255.0 * (1.0 - np.abs(t))
    rgb[:, :, 2] = 255.0 * np.clip(1.0 - np.maximum(t, 0.0), 0.0, 1.0)
    return rgb


def write_profile_csv(path, bin_centers, values) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_center_radius", "value"])
        for c, v in zip(bin_centers, values):
            writer.writerow([f"{c:.10g}", f"{v:.10g}"])


def write_training_log_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAINING_LOG_COLUMNS)
        for r in records:
            writer.writerow([
                r.epoch,
                f"{r.ff:.10g}", f"{r.ad:.10g}", f"{r.qa:.10g}", f"{r.pi:.10g}",
                f"{r.total:.10g}", f"{r.integrity_residual:.10g}",
            ])
