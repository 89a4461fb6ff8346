"""Regularizers: proximity operators and per-frame denoisers.

The prox side covers the closed-form cases (zero, weighted l1 soft
threshold, weighted squared l2 shrinkage). The denoiser side provides
deterministic classical denoisers for plug-and-play mode plus a
subprocess protocol so an external pre-trained denoiser can participate:
the frame is written as 16-bit PGM with a JSON sidecar, the command is
invoked in a scratch directory, and ``frame_out.pgm`` is read back.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .pgm import read_pgm, write_pgm


class DenoiserError(RuntimeError):
    """Raised when a denoiser (typically an external one) fails."""


@dataclass(frozen=True)
class ProxOp:
    """Closed-form proximity operator of ``weight * g`` for a simple g."""

    kind: str  # zero | l1 | sq_l2
    weight: float = 1.0

    def __post_init__(self):
        if self.kind not in ("zero", "l1", "sq_l2"):
            raise ValueError(f"unknown prox kind {self.kind!r}")
        if self.weight < 0:
            raise ValueError("weight must be nonnegative")


def prox(op: ProxOp, v: np.ndarray, scale: float) -> np.ndarray:
    """Evaluate ``argmin_u  scale * weight * g(u) + 0.5 ||u - v||^2``.

    ``scale`` is the ``1/rho`` factor supplied by the caller. For
    ``l1``, g is the l1 norm (soft threshold at ``weight * scale``); for
    ``sq_l2``, g is ``0.5 ||.||^2`` (shrink by ``1 + weight * scale``).
    """
    v = np.asarray(v, dtype=float)
    if op.kind == "zero":
        return v.copy()
    gamma = op.weight * scale
    if op.kind == "l1":
        return np.sign(v) * np.maximum(np.abs(v) - gamma, 0.0)
    return v / (1.0 + gamma)


@dataclass(frozen=True)
class Denoiser:
    """Deterministic per-frame denoiser.

    ``kind`` selects the algorithm; the remaining fields are
    kind-specific. ``clamp`` pins the output to [0, 1] after denoising
    (images are normalized); disable it when the solver needs the raw
    operator.
    """

    kind: str  # identity | gaussian_smooth | median3 | tv_chambolle | external
    smooth_sigma: float | None = None   # gaussian_smooth; None -> use call sigma
    tv_weight: float = 0.1              # tv_chambolle
    tv_iters: int = 30                  # tv_chambolle
    command: str | None = None          # external
    workdir: str | None = None          # external; None -> fresh temp dir per call
    timeout: float = 60.0               # external, seconds
    clamp: bool = True

    def __post_init__(self):
        kinds = ("identity", "gaussian_smooth", "median3", "tv_chambolle", "external")
        if self.kind not in kinds:
            raise ValueError(f"unknown denoiser kind {self.kind!r}")
        if self.kind == "external" and not self.command:
            raise ValueError("external denoiser requires a command")


def tv_chambolle(frame: np.ndarray, shape, weight: float, iters: int) -> np.ndarray:
    """Total-variation denoising by dual projection (fixed iterations).

    Minimizes ``0.5 * ||u - f||^2 + weight * TV(u)`` with isotropic TV and
    forward differences; the iteration count is fixed so traces stay
    deterministic.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    f = np.asarray(frame, dtype=float).reshape(shape)
    if weight <= 0:
        return f.ravel().copy()
    px = np.zeros(shape)
    py = np.zeros(shape)
    tau = 0.25
    for _ in range(iters):
        div_p = _divergence(px, py)
        g = div_p - f / weight
        gx, gy = _forward_gradient(g)
        denom = 1.0 + tau * np.hypot(gx, gy)
        px = (px + tau * gx) / denom
        py = (py + tau * gy) / denom
    u = f - weight * _divergence(px, py)
    return u.ravel()


def _forward_gradient(u: np.ndarray):
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:, :-1] = u[:, 1:] - u[:, :-1]
    gy[:-1, :] = u[1:, :] - u[:-1, :]
    return gx, gy


def _divergence(px: np.ndarray, py: np.ndarray) -> np.ndarray:
    # negative adjoint of _forward_gradient; px/py carry structural zeros
    # in their last column/row
    div = np.zeros_like(px)
    div[:, 0] += px[:, 0]
    div[:, 1:] += px[:, 1:] - px[:, :-1]
    div[0, :] += py[0, :]
    div[1:, :] += py[1:, :] - py[:-1, :]
    return div


def external_denoise(
    command: str,
    frame: np.ndarray,
    shape,
    sigma: float,
    workdir: str | None = None,
    timeout: float = 60.0,
) -> np.ndarray:
    """Denoise one frame through an external command.

    Protocol: the frame is written to ``frame_in.pgm`` (P5, 16-bit
    big-endian) with a ``meta.json`` sidecar ``{sigma, width, height}``;
    the command runs with the scratch directory as cwd and must produce
    ``frame_out.pgm`` with the same dimensions and exit 0.
    """
    nx, ny = shape
    frame = np.asarray(frame, dtype=float)

    def run(directory: Path) -> np.ndarray:
        write_pgm(directory / "frame_in.pgm", frame.reshape(nx, ny), bits=16)
        meta = {"sigma": float(sigma), "width": int(ny), "height": int(nx)}
        (directory / "meta.json").write_text(json.dumps(meta))
        argv = shlex.split(command)
        try:
            proc = subprocess.run(
                argv, cwd=directory, timeout=timeout,
                capture_output=True, text=True,
            )
        except FileNotFoundError as exc:
            raise DenoiserError(f"cannot launch denoiser command {command!r}: {exc}")
        except subprocess.TimeoutExpired:
            raise DenoiserError(f"denoiser command {command!r} timed out after {timeout}s")
        if proc.returncode != 0:
            raise DenoiserError(
                f"denoiser command {command!r} exited {proc.returncode}: {proc.stderr.strip()}"
            )
        out_path = directory / "frame_out.pgm"
        if not out_path.exists():
            raise DenoiserError(f"denoiser command {command!r} produced no frame_out.pgm")
        try:
            out = read_pgm(out_path)
        except ValueError as exc:
            raise DenoiserError(f"malformed denoiser output: {exc}")
        if out.shape != (nx, ny):
            raise DenoiserError(
                f"denoiser output shape {out.shape} does not match input {(nx, ny)}"
            )
        return out.ravel()

    if workdir is not None:
        return run(Path(workdir))
    with tempfile.TemporaryDirectory(prefix="dyninv_denoise_") as tmp:
        return run(Path(tmp))


def denoise(d: Denoiser, frame: np.ndarray, shape, sigma: float) -> np.ndarray:
    """Apply a denoiser to one flat frame at strength ``sigma``."""
    nx, ny = shape
    frame = np.asarray(frame, dtype=float)
    if frame.shape != (nx * ny,):
        raise ValueError(f"frame length {frame.shape} does not match shape {shape}")
    if d.kind == "identity":
        out = frame.copy()
    elif d.kind == "gaussian_smooth":
        s = d.smooth_sigma if d.smooth_sigma is not None else sigma
        img = frame.reshape(nx, ny)
        out = ndimage.gaussian_filter(img, s, mode="reflect").ravel() if s > 0 else frame.copy()
    elif d.kind == "median3":
        out = ndimage.median_filter(frame.reshape(nx, ny), size=3, mode="nearest").ravel()
    elif d.kind == "tv_chambolle":
        out = tv_chambolle(frame, (nx, ny), d.tv_weight, d.tv_iters)
    else:
        out = external_denoise(d.command, frame, (nx, ny), sigma,
                               workdir=d.workdir, timeout=d.timeout)
    if d.clamp:
        np.clip(out, 0.0, 1.0, out=out)
    return out


_BUILTIN_KINDS = ("identity", "gaussian_smooth", "median3", "tv_chambolle", "external")


def make_denoiser(spec) -> Denoiser:
    """Build a denoiser from an id string or a config dict."""
    if isinstance(spec, Denoiser):
        return spec
    if isinstance(spec, str):
        return Denoiser(kind=spec)
    if isinstance(spec, dict):
        d = dict(spec)
        kind = d.pop("kind", None)
        if kind not in _BUILTIN_KINDS:
            raise ValueError(f"unknown denoiser kind {kind!r}")
        return Denoiser(kind=kind, **d)
    raise ValueError(f"cannot build a denoiser from {spec!r}")
