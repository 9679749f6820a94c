"""File formats: PGM/PPM images, PFM float maps, raw volume dumps, checkpoints.

PFM convention: header "Pf" (1 channel) or "PF" (3 channels), a dimensions
line "width height", a scale line whose sign encodes endianness (negative =
little-endian), then rows stored bottom-to-top.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FileFormatError

VOLUME_MAGIC = b"DDLV"
CHECKPOINT_MAGIC = b"DSWC"
CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# PGM / PPM (binary, 8-bit)

def _read_pnm_token(f):
    """Read one whitespace-delimited token, skipping '#' comments."""
    tok = b""
    while True:
        ch = f.read(1)
        if ch == b"":
            raise FileFormatError("unexpected end of PNM header", offset=f.tell())
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = f.read(1)
            continue
        if ch.isspace():
            if tok:
                return tok
            continue
        tok += ch


def load_pnm(path) -> np.ndarray:
    """Load an 8-bit binary PGM (P5) or PPM (P6) as float32 in [0, 1].

    Returns (H, W) for PGM, (H, W, 3) for PPM.
    """
    with open(path, "rb") as f:
        magic = _read_pnm_token(f)
        if magic not in (b"P5", b"P6"):
            raise FileFormatError(f"not a binary PGM/PPM (magic {magic!r})", offset=0)
        width = int(_read_pnm_token(f))
        height = int(_read_pnm_token(f))
        maxval = int(_read_pnm_token(f))
        if maxval != 255:
            raise FileFormatError(f"only 8-bit PNM supported, maxval={maxval}", offset=f.tell())
        channels = 3 if magic == b"P6" else 1
        count = width * height * channels
        payload = f.read(count)
        if len(payload) != count:
            raise FileFormatError(
                f"truncated PNM payload: expected {count} bytes, got {len(payload)}",
                offset=f.tell(),
            )
    data = np.frombuffer(payload, dtype=np.uint8).astype(np.float32) / 255.0
    if channels == 3:
        return data.reshape(height, width, 3)
    return data.reshape(height, width)


def save_pnm(img: np.ndarray, path) -> None:
    """Save a float array in [0, 1] (H,W) as PGM or (H,W,3) as PPM, 8-bit."""
    arr = np.asarray(img)
    if arr.ndim == 2:
        magic = b"P5"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"expected (H,W) or (H,W,3) array, got shape {arr.shape}")
    h, w = arr.shape[:2]
    quant = np.clip(np.floor(arr * 255.0 + 0.5), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n255\n" % (w, h))
        f.write(quant.tobytes())


def save_pgm_raw(values: np.ndarray, path) -> None:
    """Save an already-quantized uint8 (H,W) array as PGM."""
    arr = np.ascontiguousarray(values, dtype=np.uint8)
    if arr.ndim != 2:
        raise ValueError("expected (H,W) uint8 array")
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (arr.shape[1], arr.shape[0]))
        f.write(arr.tobytes())


# ---------------------------------------------------------------------------
# PFM

def load_pfm(path) -> np.ndarray:
    """Load a PFM float map as float32, (H, W) or (H, W, 3), top row first."""
    with open(path, "rb") as f:
        header = f.readline().strip()
        if header == b"PF":
            channels = 3
        elif header == b"Pf":
            channels = 1
        else:
            raise FileFormatError(f"not a PFM file (header {header!r})", offset=0)
        dims_offset = f.tell()
        dims = f.readline().split()
        if len(dims) != 2:
            raise FileFormatError("malformed PFM dimensions line", offset=dims_offset)
        width, height = int(dims[0]), int(dims[1])
        scale_offset = f.tell()
        try:
            scale = float(f.readline().strip())
        except ValueError:
            raise FileFormatError("malformed PFM scale line", offset=scale_offset) from None
        if scale == 0:
            raise FileFormatError("PFM scale must be nonzero", offset=scale_offset)
        endian = "<" if scale < 0 else ">"
        count = width * height * channels
        payload_offset = f.tell()
        payload = f.read(4 * count)
        if len(payload) != 4 * count:
            raise FileFormatError(
                f"truncated PFM payload: expected {4 * count} bytes, got {len(payload)}",
                offset=payload_offset + len(payload),
            )
    data = np.frombuffer(payload, dtype=endian + "f4")
    if channels == 3:
        data = data.reshape(height, width, 3)
    else:
        data = data.reshape(height, width)
    # rows are stored bottom-to-top
    return np.ascontiguousarray(data[::-1]).astype(np.float32)


def save_pfm(values: np.ndarray, path, scale: float = -1.0) -> None:
    """Save a float map as PFM (little-endian for negative scale)."""
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim == 2:
        header = b"Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        header = b"PF"
    else:
        raise ValueError(f"expected (H,W) or (H,W,3) array, got shape {arr.shape}")
    if scale == 0:
        raise ValueError("scale must be nonzero")
    endian = "<f4" if scale < 0 else ">f4"
    with open(path, "wb") as f:
        f.write(header + b"\n")
        f.write(b"%d %d\n" % (arr.shape[1], arr.shape[0]))
        f.write(b"%g\n" % scale)
        f.write(np.ascontiguousarray(arr[::-1]).astype(endian).tobytes())


# ---------------------------------------------------------------------------
# Raw volume dump (little-endian float32, header magic "DDLV", dims D,H,W,C)

def save_volume(data: np.ndarray, path) -> None:
    """Dump a (D, H, W) or (D, H, W, C) volume; trailing C defaults to 1."""
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim == 3:
        d, h, w = arr.shape
        c = 1
    elif arr.ndim == 4:
        d, h, w, c = arr.shape
    else:
        raise ValueError(f"expected 3D or 4D volume, got shape {arr.shape}")
    with open(path, "wb") as f:
        f.write(VOLUME_MAGIC)
        f.write(struct.pack("<4I", d, h, w, c))
        f.write(np.ascontiguousarray(arr).astype("<f4").tobytes())


def load_volume(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != VOLUME_MAGIC:
            raise FileFormatError(f"bad volume magic {magic!r}", offset=0)
        hdr = f.read(16)
        if len(hdr) != 16:
            raise FileFormatError("truncated volume header", offset=4 + len(hdr))
        d, h, w, c = struct.unpack("<4I", hdr)
        count = d * h * w * c
        payload = f.read(4 * count)
        if len(payload) != 4 * count:
            raise FileFormatError("truncated volume payload", offset=20 + len(payload))
    arr = np.frombuffer(payload, dtype="<f4").reshape(d, h, w, c)
    return arr[..., 0] if c == 1 else arr


# ---------------------------------------------------------------------------
# Checkpoints: versioned header + named parameter groups as float64 LE

def save_checkpoint(groups: dict, path) -> None:
    """Write named parameter groups ({name: ndarray}) with shapes preserved."""
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(groups)))
        for name, arr in groups.items():
            arr = np.asarray(arr, dtype=np.float64)
            name_b = name.encode("utf-8")
            f.write(struct.pack("<I", len(name_b)))
            f.write(name_b)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack("<%dQ" % max(arr.ndim, 1), *(arr.shape or (0,))))
            f.write(np.ascontiguousarray(arr).astype("<f8").tobytes())


def load_checkpoint(path) -> dict:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise FileFormatError(f"bad checkpoint magic {magic!r}", offset=0)
        version, n_groups = struct.unpack("<II", f.read(8))
        if version != CHECKPOINT_VERSION:
            raise FileFormatError(f"unsupported checkpoint version {version}", offset=4)
        groups = {}
        for _ in range(n_groups):
            (name_len,) = struct.unpack("<I", f.read(4))
            name = f.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<I", f.read(4))
            shape = struct.unpack("<%dQ" % max(ndim, 1), f.read(8 * max(ndim, 1)))
            if ndim == 0:
                shape = ()
            count = int(np.prod(shape)) if shape else 1
            offset = f.tell()
            payload = f.read(8 * count)
            if len(payload) != 8 * count:
                raise FileFormatError(
                    f"truncated checkpoint group {name!r}", offset=offset + len(payload)
                )
            groups[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    return groups


# ---------------------------------------------------------------------------
# Dataset manifest: one sample directory name per line

def save_manifest(names, path) -> None:
    Path(path).write_text("".join(f"{n}\n" for n in names), encoding="utf-8")


def load_manifest(path):
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [ln.strip() for ln in lines if ln.strip()]
