"""State-space model container, simulation, and objective evaluation.

The model couples per-frame measurements ``y_t = H_t x_t + r_t`` with
linear dynamics ``x_t = A_t x_{t-1} + q_t`` and a Gaussian prior on the
first frame. The stacked residual operator maps a frame sequence to
``(x_1, x_2 - A_2 x_1, ..., x_T - A_T x_{T-1})``; weighting its output by
``blockdiag(P_1, Q_2, ..., Q_T)^{-1}`` folds the first-frame prior into
the same quadratic form as the dynamics, which is the convention used
throughout the solver modules.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .operators import Covariance, LinOp, mahalanobis_sq


@dataclass(frozen=True)
class FrameSequence:
    """Ordered sequence of flat frames with optional 2D shape metadata.

    ``frames`` has shape ``(T, dim)``. ``shape = (nx, ny)`` records the
    image geometry when the frames are images (``nx * ny == dim``); it is
    ``None`` for transformed-domain sequences such as stacked gradients.
    """

    frames: np.ndarray
    shape: tuple[int, int] | None = None

    def __post_init__(self):
        frames = np.atleast_2d(np.asarray(self.frames, dtype=float))
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise ValueError("frames must be a (T, dim) array with T >= 1")
        object.__setattr__(self, "frames", frames)
        if self.shape is not None:
            nx, ny = self.shape
            if nx * ny != frames.shape[1]:
                raise ValueError(
                    f"shape {self.shape} inconsistent with frame length {frames.shape[1]}"
                )
            object.__setattr__(self, "shape", (int(nx), int(ny)))

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    def frame(self, t: int) -> np.ndarray:
        return self.frames[t]

    def frame_image(self, t: int) -> np.ndarray:
        if self.shape is None:
            raise ValueError("sequence has no 2D shape metadata")
        return self.frames[t].reshape(self.shape)

    def with_frames(self, frames: np.ndarray) -> "FrameSequence":
        return FrameSequence(frames, self.shape)

    def copy(self) -> "FrameSequence":
        return FrameSequence(self.frames.copy(), self.shape)

    def norm(self) -> float:
        return float(np.linalg.norm(self.frames))

    def __add__(self, other: "FrameSequence") -> "FrameSequence":
        return FrameSequence(self.frames + other.frames, self.shape)

    def __sub__(self, other: "FrameSequence") -> "FrameSequence":
        return FrameSequence(self.frames - other.frames, self.shape)

    def __mul__(self, scalar: float) -> "FrameSequence":
        return FrameSequence(self.frames * scalar, self.shape)

    __rmul__ = __mul__


@dataclass(frozen=True)
class SequenceModel:
    """Linear-Gaussian state-space model over ``T`` frames.

    ``H[t]`` and ``R[t]`` describe the measurement at frame ``t``
    (0-based); ``A[k]`` and ``Q[k]`` propagate frame ``k`` to ``k + 1``,
    so both lists have length ``T - 1``. ``m1``/``P1`` are the prior mean
    and covariance of the first frame.
    """

    H: list[LinOp]
    R: list[Covariance]
    A: list[LinOp]
    Q: list[Covariance]
    m1: np.ndarray
    P1: Covariance
    shape: tuple[int, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "m1", np.asarray(self.m1, dtype=float))
        T = len(self.H)
        if T < 1:
            raise ValueError("model needs at least one frame")
        n = self.H[0].input_dim
        m = self.H[0].output_dim
        if len(self.R) != T:
            raise ValueError("R must have one covariance per frame")
        if len(self.A) != T - 1 or len(self.Q) != T - 1:
            raise ValueError("A and Q must have length T - 1")
        for h, r in zip(self.H, self.R):
            if h.shape != (m, n) or r.dim != m:
                raise ValueError("inconsistent measurement dimensions")
        for a, q in zip(self.A, self.Q):
            if a.shape != (n, n) or q.dim != n:
                raise ValueError("inconsistent transition dimensions")
        if self.m1.shape != (n,) or self.P1.dim != n:
            raise ValueError("prior dimensions do not match state dimension")
        if self.shape is not None and self.shape[0] * self.shape[1] != n:
            raise ValueError("frame shape inconsistent with state dimension")

    @property
    def T(self) -> int:
        return len(self.H)

    @property
    def N(self) -> int:
        return self.H[0].input_dim

    @property
    def M(self) -> int:
        return self.H[0].output_dim

    def prior_or_process_cov(self, t: int) -> Covariance:
        """Block ``t`` of ``blockdiag(P_1, Q_2, ..., Q_T)`` (0-based)."""
        return self.P1 if t == 0 else self.Q[t - 1]


def simulate(model: SequenceModel, seed: int, initial_state: np.ndarray | None = None):
    """Draw a trajectory and its measurements from the model.

    The first frame is sampled from the prior unless ``initial_state`` is
    supplied. Zero covariances are allowed here (noiseless generation);
    output is deterministic given the seed.
    """
    rng = np.random.default_rng(seed)
    T, n, m = model.T, model.N, model.M
    states = np.empty((T, n))
    if initial_state is not None:
        states[0] = np.asarray(initial_state, dtype=float)
    else:
        states[0] = model.m1 + model.P1.chol() @ rng.standard_normal(n)
    for t in range(1, T):
        q = model.Q[t - 1].chol() @ rng.standard_normal(n)
        states[t] = model.A[t - 1].apply(states[t - 1]) + q
    meas = np.empty((T, m))
    for t in range(T):
        r = model.R[t].chol() @ rng.standard_normal(m)
        meas[t] = model.H[t].apply(states[t]) + r
    meas_shape = model.shape if m == model.N else None
    return FrameSequence(states, model.shape), FrameSequence(meas, meas_shape)


def shifted_patch_sequence(image: np.ndarray, patch_shape, T: int, shift) -> FrameSequence:
    """Cut ``T`` patches from an image, sliding by ``shift`` per frame.

    Frame ``t`` is the patch at offset ``(t * shift_rows, t * shift_cols)``
    from the top-left corner. Integer images are rescaled to [0, 1] by
    their dtype range; float images are assumed already in [0, 1].
    """
    image = np.asarray(image)
    if np.issubdtype(image.dtype, np.integer):
        image = image.astype(float) / np.iinfo(image.dtype).max
    else:
        image = image.astype(float)
    nx, ny = patch_shape
    dx, dy = shift
    rows, cols = image.shape
    last_r = (T - 1) * dx + nx
    last_c = (T - 1) * dy + ny
    if min(dx * (T - 1), dy * (T - 1)) < 0 or last_r > rows or last_c > cols:
        raise ValueError(
            f"patch {patch_shape} shifted {T - 1} times by {shift} exits image {image.shape}"
        )
    frames = np.empty((T, nx * ny))
    for t in range(T):
        r0, c0 = t * dx, t * dy
        frames[t] = image[r0:r0 + nx, c0:c0 + ny].ravel()
    return FrameSequence(frames, (nx, ny))


def apply_psi(model: SequenceModel, x: FrameSequence) -> FrameSequence:
    """Stacked residual: ``(x_1, x_2 - A_2 x_1, ..., x_T - A_T x_{T-1})``."""
    if x.T != model.T or x.dim != model.N:
        raise ValueError("sequence dimensions do not match model")
    out = np.empty_like(x.frames)
    out[0] = x.frames[0]
    for t in range(1, model.T):
        out[t] = x.frames[t] - model.A[t - 1].apply(x.frames[t - 1])
    return FrameSequence(out, x.shape)


def apply_psi_adjoint(model: SequenceModel, v: FrameSequence) -> FrameSequence:
    """Adjoint of :func:`apply_psi`: frame ``t`` is ``v_t - A_{t+1}^T v_{t+1}``."""
    if v.T != model.T or v.dim != model.N:
        raise ValueError("sequence dimensions do not match model")
    out = v.frames.copy()
    for t in range(model.T - 1):
        out[t] -= model.A[t].apply_adjoint(v.frames[t + 1])
    return FrameSequence(out, v.shape)


def eval_F(model: SequenceModel, y: FrameSequence, x: FrameSequence) -> float:
    """Data-fidelity objective: measurement plus dynamics Mahalanobis terms."""
    total = 0.0
    for t in range(model.T):
        resid = y.frames[t] - model.H[t].apply(x.frames[t])
        total += 0.5 * mahalanobis_sq(resid, model.R[t])
    for t in range(1, model.T):
        resid = x.frames[t] - model.A[t - 1].apply(x.frames[t - 1])
        total += 0.5 * mahalanobis_sq(resid, model.Q[t - 1])
    return total


def broadcast_ops(w, T: int) -> list[LinOp]:
    """Expand a single operator (or pass through a list) to one per frame."""
    if isinstance(w, LinOp):
        return [w] * T
    w = list(w)
    if len(w) != T:
        raise ValueError(f"expected {T} operators, got {len(w)}")
    return w


def eval_phi(
    model: SequenceModel,
    y: FrameSequence,
    x: FrameSequence,
    z: FrameSequence,
    rho: float,
    W,
) -> float:
    """Augmented x-step objective: fidelity + first-frame prior + coupling.

    The coupling term is ``rho/2 * sum_t ||W_t x_t - z_t||^2``, i.e. the
    pseudo-measurement weight is the scaled identity ``rho * I``.
    """
    W = broadcast_ops(W, model.T)
    total = eval_F(model, y, x)
    total += 0.5 * mahalanobis_sq(x.frames[0] - model.m1, model.P1)
    for t in range(model.T):
        resid = W[t].apply(x.frames[t]) - z.frames[t]
        total += 0.5 * rho * float(resid @ resid)
    return total
