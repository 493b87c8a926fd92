"""On-disk artifact formats.

* Images: 8-bit grayscale PNG, written directly (fixed zlib level, no
  ancillary chunks) so identical inputs produce identical bytes.
* Depth sidecar (``.depth``): 16-byte header ``VBDF`` + uint32 width +
  uint32 height + uint32 reserved (all little-endian), then float32
  row-major z-depth in meters; invalid pixels are NaN.
* Warp field (``.warp``): 16-byte header ``VBWF`` + uint32 nx + uint32 ny +
  uint32 stride, then float32 rows of (src_u, src_v, dst_u, dst_v,
  dst_depth, valid) per vertex, row-major over the (ny, nx) grid.
* Error heatmaps: PNG with a fixed linear gray ramp, 0 px -> 0 and
  ``ramp_max`` px -> 255 (clipped), ramp_max recorded by the caller.
"""
from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .depth import DepthMap
from .passthrough import WarpField

DEPTH_MAGIC = b"VBDF"
WARP_MAGIC = b"VBWF"


class FormatError(ValueError):
    pass


# --- PNG ---------------------------------------------------------------------


def _png_chunk(tag: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
    )


def write_png_gray(image: np.ndarray, path: str | Path) -> None:
    """8-bit grayscale PNG from a float image in [0, 1] (clipped)."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise FormatError("grayscale PNG needs a 2-D array")
    data = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    h, w = data.shape
    raw = b"".join(b"\x00" + data[row].tobytes() for row in range(h))
    header = struct.pack(">IIBBBBB", w, h, 8, 0, 0, 0, 0)  # 8-bit gray
    png = (
        b"\x89PNG\r\n\x1a\n"
        + _png_chunk(b"IHDR", header)
        + _png_chunk(b"IDAT", zlib.compress(raw, 6))
        + _png_chunk(b"IEND", b"")
    )
    Path(path).write_bytes(png)


def read_png_gray(path: str | Path) -> np.ndarray:
    """Read back an 8-bit grayscale PNG written by write_png_gray."""
    blob = Path(path).read_bytes()
    if blob[:8] != b"\x89PNG\r\n\x1a\n":
        raise FormatError(f"not a PNG file: {path}")
    pos = 8
    width = height = None
    idat = b""
    while pos < len(blob):
        (length,) = struct.unpack(">I", blob[pos : pos + 4])
        tag = blob[pos + 4 : pos + 8]
        payload = blob[pos + 8 : pos + 8 + length]
        if tag == b"IHDR":
            width, height, bit_depth, color = struct.unpack(">IIBB", payload[:10])
            if bit_depth != 8 or color != 0:
                raise FormatError("only 8-bit grayscale PNGs are supported")
        elif tag == b"IDAT":
            idat += payload
        pos += 12 + length
    if width is None:
        raise FormatError("PNG missing IHDR")
    raw = zlib.decompress(idat)
    stride = width + 1
    rows = []
    prev = np.zeros(width, dtype=np.uint8)
    for r in range(height):
        line = raw[r * stride : (r + 1) * stride]
        filt = line[0]
        row = np.frombuffer(line[1:], dtype=np.uint8).copy()
        if filt == 0:
            pass
        elif filt == 2:  # Up
            row = (row.astype(np.int16) + prev).astype(np.uint8)
        else:
            raise FormatError(f"unsupported PNG filter {filt}")
        rows.append(row)
        prev = row
    return np.stack(rows).astype(np.float64) / 255.0


def write_error_heatmap(errors: np.ndarray, path: str | Path, ramp_max: float = 5.0) -> None:
    """Fixed-ramp grayscale heatmap: 0 px maps to black, ramp_max px to white."""
    if ramp_max <= 0:
        raise FormatError("ramp_max must be positive")
    write_png_gray(np.clip(np.asarray(errors, dtype=np.float64) / ramp_max, 0.0, 1.0), path)


# --- depth sidecar ---------------------------------------------------------------


def write_depth(depth: DepthMap, path: str | Path) -> None:
    vals = depth.values.astype(np.float32).copy()
    vals[~depth.valid] = np.nan
    header = DEPTH_MAGIC + struct.pack("<III", depth.width, depth.height, 0)
    Path(path).write_bytes(header + vals.tobytes())


def read_depth(path: str | Path) -> DepthMap:
    blob = Path(path).read_bytes()
    if len(blob) < 16 or blob[:4] != DEPTH_MAGIC:
        raise FormatError(f"not a depth sidecar: {path}")
    w, h, _ = struct.unpack("<III", blob[4:16])
    expected = 16 + 4 * w * h
    if len(blob) != expected:
        raise FormatError(f"depth sidecar truncated: {len(blob)} != {expected} bytes")
    vals = np.frombuffer(blob[16:], dtype=np.float32).reshape(h, w).astype(np.float64)
    valid = np.isfinite(vals)
    vals = np.where(valid, vals, 1.0)
    return DepthMap(vals, valid)


# --- warp field -------------------------------------------------------------------


def write_warp_field(warp: WarpField, path: str | Path) -> None:
    ny, nx = warp.dst_depth.shape
    vu, vv = np.meshgrid(warp.grid_u.astype(np.float32), warp.grid_v.astype(np.float32))
    rows = np.stack(
        [
            vu,
            vv,
            warp.dst[..., 0].astype(np.float32),
            warp.dst[..., 1].astype(np.float32),
            warp.dst_depth.astype(np.float32),
            warp.valid.astype(np.float32),
        ],
        axis=-1,
    )
    header = WARP_MAGIC + struct.pack("<III", nx, ny, warp.stride)
    Path(path).write_bytes(header + rows.astype(np.float32).tobytes())


def read_warp_field(path: str | Path) -> WarpField:
    blob = Path(path).read_bytes()
    if len(blob) < 16 or blob[:4] != WARP_MAGIC:
        raise FormatError(f"not a warp field file: {path}")
    nx, ny, stride = struct.unpack("<III", blob[4:16])
    expected = 16 + 4 * nx * ny * 6
    if len(blob) != expected:
        raise FormatError(f"warp field truncated: {len(blob)} != {expected} bytes")
    rows = np.frombuffer(blob[16:], dtype=np.float32).reshape(ny, nx, 6).astype(np.float64)
    return WarpField(
        grid_u=rows[0, :, 0].astype(np.int64),
        grid_v=rows[:, 0, 1].astype(np.int64),
        dst=rows[..., 2:4],
        dst_depth=rows[..., 4],
        valid=rows[..., 5] > 0.5,
        stride=int(stride),
    )
