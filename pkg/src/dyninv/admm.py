"""Outer ADMM loop with interchangeable x-update strategies.

One iteration splits into three steps: minimize the augmented quadratic
in x (exactly, by one gradient-descent step, by one exact-line-search
step, or by a Kalman smoother), regularize in w (proximity operator or
plug-and-play denoiser), then update the scaled dual variable. The exact
and smoother strategies solve the same quadratic and produce matching
trajectories; the one-step strategies trade accuracy per iteration for
cost.

The exact strategy materializes the stacked ``(N T) x (N T)`` normal
system and factorizes it densely on every call, so it is guarded by a
size cap; the smoother costs ``O(T N^3)`` per call instead.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .kalman import SmootherOutput, ks_x_update
from .metrics import psnr
from .operators import IdentityOp, LinOp
from .priors import Denoiser, ProxOp, denoise, make_denoiser, prox
from .ssm import FrameSequence, SequenceModel, broadcast_ops, eval_phi

X_STRATEGIES = ("exact", "gd", "cg", "ks")
W_MODES = ("prox", "denoiser")
INIT_MODES = ("backprojection", "zeros")


class SolverError(RuntimeError):
    """Raised when a solve cannot proceed (cap exceeded, bad curvature, ...)."""


@dataclass(frozen=True)
class AdmmState:
    """Iterate triple plus penalty and iteration counter."""

    x: FrameSequence
    w: FrameSequence
    eta: FrameSequence
    rho: float
    k: int = 0


@dataclass
class SolverConfig:
    """Configuration of one solver run.

    ``gd_step`` may be a positive float (the literal iteration uses 1) or
    ``"auto"`` for ``1 / L`` with ``L`` estimated by 20 power-method
    iterations. ``cg_sub_iters=1`` is the single exact-line-search step;
    larger values run a genuine conjugate-gradient sub-solve instead.
    """

    x_strategy: str = "ks"
    w_mode: str = "prox"
    rho: float = 1.0
    max_iters: int = 100
    stop_tol: float = 0.0
    gd_step: float | str = 1.0
    cg_sub_iters: int = 1
    prox: ProxOp | Sequence[ProxOp] | None = None
    w_op: LinOp | Sequence[LinOp] | None = None
    denoiser: Denoiser | str | dict | None = None
    denoiser_sigma: float = 0.05
    init: str = "backprojection"
    exact_cap: int = 20000

    def validate(self) -> None:
        if self.x_strategy not in X_STRATEGIES:
            raise ValueError(f"unknown x_strategy {self.x_strategy!r}")
        if self.w_mode not in W_MODES:
            raise ValueError(f"unknown w_mode {self.w_mode!r}")
        if self.init not in INIT_MODES:
            raise ValueError(f"unknown init mode {self.init!r}")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.stop_tol < 0:
            raise ValueError("stop_tol must be nonnegative")
        if self.cg_sub_iters < 1:
            raise ValueError("cg_sub_iters must be >= 1")
        if isinstance(self.gd_step, str):
            if self.gd_step != "auto":
                raise ValueError("gd_step must be a positive number or 'auto'")
        elif self.gd_step <= 0:
            raise ValueError("gd_step must be a positive number or 'auto'")
        if self.w_mode == "denoiser":
            if self.denoiser is None:
                raise ValueError("denoiser mode requires a denoiser")
            if self.w_op is not None and not (
                isinstance(self.w_op, IdentityOp)
                or (isinstance(self.w_op, str) and self.w_op == "identity")
            ):
                raise ValueError("denoiser mode requires the identity transform")


@dataclass(frozen=True)
class IterationRecord:
    k: int
    phi: float
    primal_residual: float
    dual_residual: float
    rel_change: float
    wall_ms: float
    frame_psnr: tuple[float, ...] | None = None
    mean_psnr: float | None = None


@dataclass
class SolveTrace:
    """Per-iteration diagnostics of one solver run."""

    records: list[IterationRecord] = field(default_factory=list)

    def phi_values(self) -> list[float]:
        return [r.phi for r in self.records]

    def psnr_values(self) -> list[float]:
        return [r.mean_psnr for r in self.records]

    def __len__(self) -> int:
        return len(self.records)


def compute_z_rho(state: AdmmState) -> FrameSequence:
    """Auxiliary target of the x-step: ``rho^{-1} eta + w``."""
    return FrameSequence(state.eta.frames / state.rho + state.w.frames, state.w.shape)


def grad_phi(
    model: SequenceModel,
    y: FrameSequence,
    x: FrameSequence,
    z_rho: FrameSequence,
    rho: float,
    W,
) -> FrameSequence:
    """Gradient of the augmented x-step objective, matrix-free."""
    W = broadcast_ops(W, model.T)
    g = np.empty_like(x.frames)
    v = np.empty_like(x.frames)  # blockdiag(P1, Q2..QT)^{-1} (psi x - m)
    v[0] = model.P1.solve(x.frames[0] - model.m1)
    for t in range(1, model.T):
        resid = x.frames[t] - model.A[t - 1].apply(x.frames[t - 1])
        v[t] = model.Q[t - 1].solve(resid)
    for t in range(model.T):
        h_t = model.H[t]
        g[t] = h_t.apply_adjoint(model.R[t].solve(h_t.apply(x.frames[t]) - y.frames[t]))
        g[t] += v[t]
        if t < model.T - 1:
            g[t] -= model.A[t].apply_adjoint(v[t + 1])
        w_t = W[t]
        g[t] += rho * w_t.apply_adjoint(w_t.apply(x.frames[t]) - z_rho.frames[t])
    return FrameSequence(g, x.shape)


def hessian_apply(
    model: SequenceModel,
    d: FrameSequence,
    rho: float,
    W,
) -> FrameSequence:
    """Apply the (constant) Hessian of the x-step objective to a direction."""
    W = broadcast_ops(W, model.T)
    out = np.empty_like(d.frames)
    v = np.empty_like(d.frames)
    v[0] = model.P1.solve(d.frames[0])
    for t in range(1, model.T):
        resid = d.frames[t] - model.A[t - 1].apply(d.frames[t - 1])
        v[t] = model.Q[t - 1].solve(resid)
    for t in range(model.T):
        h_t = model.H[t]
        out[t] = h_t.apply_adjoint(model.R[t].solve(h_t.apply(d.frames[t])))
        out[t] += v[t]
        if t < model.T - 1:
            out[t] -= model.A[t].apply_adjoint(v[t + 1])
        w_t = W[t]
        out[t] += rho * w_t.apply_adjoint(w_t.apply(d.frames[t]))
    return FrameSequence(out, d.shape)


def estimate_hessian_norm(
    model: SequenceModel, rho: float, W, iters: int = 20, seed: int = 0
) -> float:
    """Largest Hessian eigenvalue estimate by power iteration."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((model.T, model.N))
    v /= np.linalg.norm(v)
    lam = 1.0
    for _ in range(iters):
        hv = hessian_apply(model, FrameSequence(v, model.shape), rho, W).frames
        lam = float(np.linalg.norm(hv))
        if lam == 0.0:
            return 1.0
        v = hv / lam
    return lam


def build_stacked_system(model: SequenceModel, rho: float, W) -> np.ndarray:
    """Dense ``(N T) x (N T)`` normal matrix of the x-step objective."""
    W = broadcast_ops(W, model.T)
    n, T = model.N, model.T
    nt = n * T
    lhs = np.zeros((nt, nt))
    qinv = [model.prior_or_process_cov(t).solve(np.eye(n)) for t in range(T)]
    for t in range(T):
        sl = slice(t * n, (t + 1) * n)
        h_dense = model.H[t].to_dense()
        lhs[sl, sl] += h_dense.T @ model.R[t].solve(h_dense)
        w_dense = W[t].to_dense()
        lhs[sl, sl] += rho * (w_dense.T @ w_dense)
        lhs[sl, sl] += qinv[t]
        if t < T - 1:
            sn = slice((t + 1) * n, (t + 2) * n)
            a_dense = model.A[t].to_dense()
            qinv_a = qinv[t + 1] @ a_dense
            lhs[sl, sl] += a_dense.T @ qinv_a
            lhs[sl, sn] -= qinv_a.T
            lhs[sn, sl] -= qinv_a
    return lhs


def exact_x_update(
    model: SequenceModel,
    y: FrameSequence,
    state: AdmmState,
    W,
    cap: int = 20000,
) -> FrameSequence:
    """Closed-form x-step: dense Cholesky solve of the stacked system."""
    n, T = model.N, model.T
    if n * T > cap:
        raise SolverError(
            f"stacked system size {n * T} exceeds cap {cap}; use the ks strategy"
        )
    W = broadcast_ops(W, model.T)
    z = compute_z_rho(state)
    rhs = np.empty((T, n))
    for t in range(T):
        rhs[t] = model.H[t].apply_adjoint(model.R[t].solve(y.frames[t]))
        rhs[t] += state.rho * W[t].apply_adjoint(z.frames[t])
    rhs[0] += model.P1.solve(model.m1)
    lhs = build_stacked_system(model, state.rho, W)
    try:
        factor = cho_factor(lhs, lower=True, overwrite_a=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"stacked system is singular: {exc}") from exc
    sol = cho_solve(factor, rhs.ravel(), check_finite=False)
    return FrameSequence(sol.reshape(T, n), state.x.shape)


def gd_x_update(
    model: SequenceModel,
    y: FrameSequence,
    state: AdmmState,
    W,
    step: float,
) -> FrameSequence:
    """One explicit gradient step on the x-objective."""
    z = compute_z_rho(state)
    g = grad_phi(model, y, state.x, z, state.rho, W)
    return FrameSequence(state.x.frames - step * g.frames, state.x.shape)


def cg_x_update(
    model: SequenceModel,
    y: FrameSequence,
    state: AdmmState,
    W,
    sub_iters: int = 1,
) -> FrameSequence:
    """Steepest descent with exact line search (one step per call).

    With ``sub_iters > 1`` this becomes a genuine conjugate-gradient
    sub-solve of the quadratic, which is not the single-step scheme but is
    useful for comparison.
    """
    z = compute_z_rho(state)
    x = state.x.frames.copy()
    r = -grad_phi(model, y, state.x.with_frames(x), z, state.rho, W).frames
    p = r.copy()
    rs = float(np.sum(r * r))
    for _ in range(sub_iters):
        if rs == 0.0:
            break
        hp = hessian_apply(model, FrameSequence(p, state.x.shape), state.rho, W).frames
        curvature = float(np.sum(p * hp))
        if curvature <= 0.0:
            raise SolverError("non-positive curvature: system is not PD")
        alpha = rs / curvature
        x += alpha * p
        r -= alpha * hp
        rs_new = float(np.sum(r * r))
        if rs_new == 0.0:
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    return FrameSequence(x, state.x.shape)


def w_update_prox(state: AdmmState, Wx: FrameSequence, prox_ops) -> FrameSequence:
    """Per-frame proximity step at ``W x - rho^{-1} eta``.

    The minus sign pairs with the x-target ``z = w + rho^{-1} eta`` and
    the dual step ``eta += rho (w - W x)``: minimizing the augmented
    Lagrangian over w completes the square around ``W x - rho^{-1} eta``,
    and any other sign makes the dual recursion expansive.
    """
    if isinstance(prox_ops, ProxOp):
        prox_ops = [prox_ops] * Wx.T
    if len(prox_ops) != Wx.T:
        raise ValueError(f"expected {Wx.T} prox operators, got {len(prox_ops)}")
    scale = 1.0 / state.rho
    out = np.empty_like(Wx.frames)
    for t in range(Wx.T):
        v = Wx.frames[t] - state.eta.frames[t] / state.rho
        out[t] = prox(prox_ops[t], v, scale)
    return FrameSequence(out, Wx.shape)


def w_update_denoiser(
    state: AdmmState,
    x_new: FrameSequence,
    denoiser: Denoiser,
    sigma: float,
) -> FrameSequence:
    """Per-frame plug-and-play step: denoise ``x - rho^{-1} eta``.

    The dual offset carries the same sign as in :func:`w_update_prox` so
    the plug-and-play loop keeps the contractive dual recursion. Frames
    without 2D shape metadata are treated as single-row images.
    """
    shape = x_new.shape if x_new.shape is not None else (1, x_new.dim)
    out = np.empty_like(x_new.frames)
    for t in range(x_new.T):
        v = x_new.frames[t] - state.eta.frames[t] / state.rho
        out[t] = denoise(denoiser, v, shape, sigma)
    return FrameSequence(out, x_new.shape)


def dual_update(state: AdmmState, w_new: FrameSequence, Wx_new: FrameSequence) -> FrameSequence:
    """Scaled dual ascent: ``eta + rho (w - W x)``."""
    return FrameSequence(
        state.eta.frames + state.rho * (w_new.frames - Wx_new.frames),
        state.eta.shape,
    )


def _initial_x(model: SequenceModel, y: FrameSequence, mode: str) -> FrameSequence:
    frames = np.zeros((model.T, model.N))
    if mode == "backprojection":
        for t in range(model.T):
            frames[t] = model.H[t].apply_adjoint(y.frames[t])
    return FrameSequence(frames, model.shape)


def solve(
    model: SequenceModel,
    y: FrameSequence,
    config: SolverConfig,
    truth: FrameSequence | None = None,
) -> tuple[FrameSequence, SolveTrace, SmootherOutput | None]:
    """Run the configured ADMM loop and return the final reconstruction.

    Returns the final frame estimate, the per-iteration trace, and (for
    the smoother strategy) the last smoother output with its per-frame
    covariances.
    """
    config.validate()
    T = model.T
    if config.w_mode == "denoiser":
        W = [IdentityOp(model.N)] * T
        denoiser = make_denoiser(config.denoiser)
        prox_ops = None
    else:
        W = broadcast_ops(config.w_op if config.w_op is not None else IdentityOp(model.N), T)
        denoiser = None
        prox_ops = config.prox if config.prox is not None else ProxOp("zero")
    s_dim = W[0].output_dim
    if any(w.output_dim != s_dim for w in W):
        raise ValueError("all frame transforms must share one output dimension")

    step = config.gd_step
    if config.x_strategy == "gd" and step == "auto":
        step = 1.0 / estimate_hessian_norm(model, config.rho, W)

    x = _initial_x(model, y, config.init)
    w_shape = x.shape if s_dim == model.N else None
    w = FrameSequence(
        np.stack([W[t].apply(x.frames[t]) for t in range(T)]), w_shape
    )
    eta = FrameSequence(np.zeros((T, s_dim)), w_shape)
    state = AdmmState(x=x, w=w, eta=eta, rho=config.rho, k=0)

    trace = SolveTrace()
    smoother: SmootherOutput | None = None
    for k in range(config.max_iters):
        t_start = time.perf_counter()
        z = compute_z_rho(state)
        if config.x_strategy == "exact":
            x_new = exact_x_update(model, y, state, W, cap=config.exact_cap)
        elif config.x_strategy == "gd":
            x_new = gd_x_update(model, y, state, W, step)
        elif config.x_strategy == "cg":
            x_new = cg_x_update(model, y, state, W, sub_iters=config.cg_sub_iters)
        else:
            smoother = ks_x_update(model, z, state.rho, W, y)
            x_new = smoother.means
        wx = FrameSequence(
            np.stack([W[t].apply(x_new.frames[t]) for t in range(T)]), w_shape
        )
        if config.w_mode == "prox":
            w_new = w_update_prox(state, wx, prox_ops)
        else:
            w_new = w_update_denoiser(state, x_new, denoiser, config.denoiser_sigma)
        eta_new = dual_update(state, w_new, wx)

        denom = max(float(np.linalg.norm(state.x.frames)), 1e-300)
        rel_change = float(np.linalg.norm(x_new.frames - state.x.frames)) / denom
        frame_psnr = None
        if truth is not None:
            frame_psnr = tuple(
                psnr(x_new.frames[t], truth.frames[t]) for t in range(T)
            )
        record = IterationRecord(
            k=k,
            phi=eval_phi(model, y, x_new, z, state.rho, W),
            primal_residual=float(np.linalg.norm(w_new.frames - wx.frames)),
            dual_residual=state.rho * float(np.linalg.norm(w_new.frames - state.w.frames)),
            rel_change=rel_change,
            wall_ms=(time.perf_counter() - t_start) * 1e3,
            frame_psnr=frame_psnr,
            mean_psnr=float(np.mean(frame_psnr)) if frame_psnr is not None else None,
        )
        trace.records.append(record)
        state = AdmmState(x=x_new, w=w_new, eta=eta_new, rho=config.rho, k=k + 1)
        if config.stop_tol > 0 and rel_change <= config.stop_tol:
            break
    return state.x, trace, smoother if config.x_strategy == "ks" else None
