"""Forward Kalman filter with a two-stage update and RTS smoothing.

Each frame is updated twice on the forward pass: once with the real
measurement and once with an auxiliary pseudo-measurement whose noise
covariance is the scaled identity ``rho^{-1} I``. A backward
Rauch-Tung-Striebel pass then produces the smoothed means, which minimize
the same quadratic objective as the stacked closed-form solve; that
equivalence is the core correctness property of this module and is tested
at 1e-8 relative accuracy.

Conventions:

- At the first frame the prediction step is skipped; both updates are
  applied directly to the prior belief, so the first-frame prior enters
  the objective exactly once.
- The smoothing gain is ``G_t = P_t A_{t+1}^T Pbar_{t+1}^{-1}`` (transpose
  on the transition operator, predicted covariance of the *next* frame);
  this is the only form consistent with the closed-form solution.
- Covariance updates use ``P - K S K^T`` with explicit symmetrization;
  all inverses are factorize-and-solve.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .operators import Covariance, LinOp
from .ssm import FrameSequence, SequenceModel, broadcast_ops


class Belief(NamedTuple):
    """Gaussian state estimate: mean vector and dense covariance."""

    mean: np.ndarray
    cov: np.ndarray


class FilterTrace(NamedTuple):
    """Per-frame beliefs from the forward pass.

    ``predicted[0]`` is the prior belief itself (no prediction happens at
    the first frame).
    """

    predicted: list[Belief]
    post_y: list[Belief]
    filtered: list[Belief]


class SmootherOutput(NamedTuple):
    """Smoothed means and their covariances, one per frame."""

    means: FrameSequence
    covs: np.ndarray  # (T, N, N)


def _sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def predict(prev: Belief, A_t: LinOp, Q_t: Covariance) -> Belief:
    """Propagate a belief through the dynamics: ``A m``, ``A P A^T + Q``."""
    mean = A_t.apply(prev.mean)
    ap = A_t.apply_mat(prev.cov)
    cov = Q_t.add_to(A_t.apply_mat(ap.T))
    return Belief(mean, _sym(cov))


def _update(belief: Belief, op: LinOp, noise: Covariance, obs: np.ndarray) -> Belief:
    """Condition a belief on ``obs = op @ state + noise``."""
    m, p = belief
    op_p = op.apply_mat(p)                  # op @ P, (out, N)
    s = noise.add_to(op.apply_mat(op_p.T))  # op P op^T + noise, (out, out)
    s = _sym(s)
    try:
        factor = cho_factor(s, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"innovation covariance not PD: {exc}") from exc
    gain = cho_solve(factor, op_p, check_finite=False).T  # K = P op^T S^{-1}
    mean = m + gain @ (obs - op.apply(m))
    cov = _sym(p - gain @ op_p)             # K S K^T == K (op P) for K = P op^T S^{-1}
    return Belief(mean, cov)


def update_measurement(pred: Belief, H_t: LinOp, R_t: Covariance, y_t: np.ndarray) -> Belief:
    """Kalman update with the real measurement of one frame."""
    return _update(pred, H_t, R_t, np.asarray(y_t, dtype=float))


def update_auxiliary(post_y: Belief, W_t: LinOp, sigma: Covariance, z_t: np.ndarray) -> Belief:
    """Second update with the auxiliary target ``z_t`` observed through ``W_t``.

    Same algebra as :func:`update_measurement` with ``(W_t, sigma, z_t)``
    in place of ``(H_t, R_t, y_t)``; ``sigma`` is ``rho^{-1} I`` in the
    ADMM context.
    """
    return _update(post_y, W_t, sigma, np.asarray(z_t, dtype=float))


def rts_smooth(model: SequenceModel, trace: FilterTrace) -> SmootherOutput:
    """Backward smoothing pass over a completed forward trace."""
    T, n = model.T, model.N
    means = np.empty((T, n))
    covs = np.empty((T, n, n))
    means[T - 1] = trace.filtered[T - 1].mean
    covs[T - 1] = trace.filtered[T - 1].cov
    for t in range(T - 2, -1, -1):
        m_t, p_t = trace.filtered[t]
        m_pred, p_pred = trace.predicted[t + 1]
        a_next = model.A[t]
        p_at = a_next.apply_mat(p_t).T      # P_t A_{t+1}^T
        factor = cho_factor(p_pred, lower=True, check_finite=False)
        gain = cho_solve(factor, p_at.T, check_finite=False).T  # G_t = P_t A^T Pbar^{-1}
        means[t] = m_t + gain @ (means[t + 1] - m_pred)
        covs[t] = _sym(p_t + gain @ (covs[t + 1] - p_pred) @ gain.T)
    return SmootherOutput(FrameSequence(means, model.shape), covs)


def forward_filter(
    model: SequenceModel,
    y: FrameSequence,
    z_rho: FrameSequence,
    rho: float,
    W,
) -> FilterTrace:
    """Run the two-stage forward filter over all frames."""
    W = broadcast_ops(W, model.T)
    predicted: list[Belief] = []
    post_y: list[Belief] = []
    filtered: list[Belief] = []
    for t in range(model.T):
        if t == 0:
            pred = Belief(model.m1.copy(), model.P1.to_dense().copy())
        else:
            pred = predict(filtered[t - 1], model.A[t - 1], model.Q[t - 1])
        by = update_measurement(pred, model.H[t], model.R[t], y.frames[t])
        sigma = Covariance.scaled_identity(W[t].output_dim, 1.0 / rho)
        bz = update_auxiliary(by, W[t], sigma, z_rho.frames[t])
        predicted.append(pred)
        post_y.append(by)
        filtered.append(bz)
    return FilterTrace(predicted, post_y, filtered)


def ks_x_update(
    model: SequenceModel,
    z_rho: FrameSequence,
    rho: float,
    W,
    y: FrameSequence,
) -> SmootherOutput:
    """Smoother-based minimizer of the augmented x-step objective.

    Filters forward (prediction skipped at the first frame, two updates
    per frame) then smooths backward. The returned means minimize
    ``phi(., z_rho)``; the covariances quantify per-frame uncertainty.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    trace = forward_filter(model, y, z_rho, rho, W)
    return rts_smooth(model, trace)
