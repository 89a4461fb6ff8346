"""Binary PGM (P5) image I/O and frame-sequence directories.

Frames are float arrays in [0, 1]; files store them quantized to 8 or 16
bits (16-bit samples are big-endian, as the format requires). A frame
sequence is a directory of numbered ``frame_0000.pgm`` files plus a
``manifest.json`` with ``{T, N_x, N_y, dtype}``.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .ssm import FrameSequence


def write_pgm(path, image: np.ndarray, bits: int = 16) -> None:
    """Write a 2D array with values in [0, 1] as binary PGM."""
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError("expected a 2D image")
    if bits == 8:
        maxval, dtype = 255, ">u1"
    elif bits == 16:
        maxval, dtype = 65535, ">u2"
    else:
        raise ValueError("bits must be 8 or 16")
    quant = np.clip(np.rint(image * maxval), 0, maxval).astype(dtype)
    rows, cols = image.shape
    header = f"P5\n{cols} {rows}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + quant.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM into a float array scaled to [0, 1]."""
    data = Path(path).read_bytes()
    # header: magic, width, height, maxval as whitespace/comment-separated tokens
    tokens = []
    pos = 0
    while len(tokens) < 4:
        m = re.match(rb"\s*(#[^\n]*\n)*\s*(\S+)", data[pos:])
        if m is None:
            raise ValueError(f"{path}: truncated PGM header")
        tokens.append(m.group(2))
        pos += m.end()
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    cols, rows, maxval = (int(t) for t in tokens[1:])
    if maxval <= 0 or maxval > 65535:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    dtype = ">u2" if maxval > 255 else ">u1"
    pos += 1  # single whitespace byte after maxval
    count = rows * cols
    raw = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    if raw.size != count:
        raise ValueError(f"{path}: pixel data truncated")
    return raw.reshape(rows, cols).astype(float) / maxval


def save_sequence(directory, seq: FrameSequence, bits: int = 16) -> None:
    """Write a frame sequence as numbered PGM files plus a manifest."""
    if seq.shape is None:
        raise ValueError("sequence needs 2D shape metadata for PGM export")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    nx, ny = seq.shape
    for t in range(seq.T):
        write_pgm(directory / f"frame_{t:04d}.pgm", seq.frame_image(t), bits=bits)
    manifest = {"T": seq.T, "N_x": nx, "N_y": ny,
                "dtype": "uint16" if bits == 16 else "uint8"}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_sequence(directory) -> FrameSequence:
    """Load a frame sequence written by :func:`save_sequence`."""
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    T, nx, ny = manifest["T"], manifest["N_x"], manifest["N_y"]
    frames = np.empty((T, nx * ny))
    for t in range(T):
        img = read_pgm(directory / f"frame_{t:04d}.pgm")
        if img.shape != (nx, ny):
            raise ValueError(
                f"frame {t} has shape {img.shape}, manifest says {(nx, ny)}"
            )
        frames[t] = img.ravel()
    return FrameSequence(frames, (nx, ny))
