"""Reconstruction quality metrics."""

from __future__ import annotations

import math

import numpy as np

from .ssm import FrameSequence

PSNR_CAP_DB = 99.0


def psnr(x_hat: np.ndarray, x_true: np.ndarray, max_val: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB, capped at 99 (zero-error sentinel)."""
    x_hat = np.asarray(x_hat, dtype=float)
    x_true = np.asarray(x_true, dtype=float)
    if x_hat.shape != x_true.shape:
        raise ValueError(f"shape mismatch: {x_hat.shape} vs {x_true.shape}")
    if max_val <= 0:
        raise ValueError("max_val must be positive")
    mse = float(np.mean((x_hat - x_true) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(max_val * max_val / mse), PSNR_CAP_DB)


def mean_psnr(seq_hat: FrameSequence, seq_true: FrameSequence, max_val: float = 1.0) -> float:
    """Arithmetic mean of per-frame PSNR over two sequences."""
    if seq_hat.T != seq_true.T or seq_hat.dim != seq_true.dim:
        raise ValueError("sequences have different dimensions")
    return float(np.mean([
        psnr(seq_hat.frames[t], seq_true.frames[t], max_val) for t in range(seq_hat.T)
    ]))
