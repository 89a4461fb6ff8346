"""Linear operators and covariance matrices used by the solvers.

Operators come in four kinds: dense matrices, the identity, separable 2D
Gaussian blur in Toeplitz (zero-boundary) form, and stacked first
differences. Every operator supports forward application, adjoint
application, and dense materialization; the dense form is the reference
against which the structured fast paths are tested.

All operators are immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage
from scipy.linalg import cho_factor, cho_solve, solve_triangular


class LinOp:
    """Base class for matrix-free linear operators.

    Subclasses implement :meth:`apply` and :meth:`apply_adjoint` and
    expose ``shape = (output_dim, input_dim)``. ``to_dense`` materializes
    the operator column by column and caches the result.
    """

    kind: str = "abstract"

    def __init__(self, output_dim: int, input_dim: int):
        if output_dim <= 0 or input_dim <= 0:
            raise ValueError("operator dimensions must be positive")
        self.shape = (output_dim, input_dim)
        self._dense: np.ndarray | None = None

    @property
    def output_dim(self) -> int:
        return self.shape[0]

    @property
    def input_dim(self) -> int:
        return self.shape[1]

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Compute ``A v`` for a vector of length ``input_dim``."""
        raise NotImplementedError

    def apply_adjoint(self, u: np.ndarray) -> np.ndarray:
        """Compute ``A^T u`` for a vector of length ``output_dim``."""
        raise NotImplementedError

    def apply_mat(self, m: np.ndarray) -> np.ndarray:
        """Compute ``A M`` column-wise; used for covariance propagation."""
        return self.to_dense() @ m

    def to_dense(self) -> np.ndarray:
        """Materialize as a dense ``(output_dim, input_dim)`` matrix."""
        if self._dense is None:
            cols = np.empty((self.output_dim, self.input_dim))
            e = np.zeros(self.input_dim)
            for i in range(self.input_dim):
                e[i] = 1.0
                cols[:, i] = self.apply(e)
                e[i] = 0.0
            self._dense = cols
        return self._dense

    def _check_input(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.input_dim,):
            raise ValueError(
                f"expected vector of length {self.input_dim}, got shape {v.shape}"
            )
        return v

    def _check_output(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.output_dim,):
            raise ValueError(
                f"expected vector of length {self.output_dim}, got shape {u.shape}"
            )
        return u

    def __repr__(self) -> str:
        return f"{type(self).__name__}(out={self.output_dim}, in={self.input_dim})"


class DenseOp(LinOp):
    """Operator backed by an explicit matrix."""

    kind = "dense"

    def __init__(self, mat: np.ndarray):
        mat = np.asarray(mat, dtype=float)
        if mat.ndim != 2:
            raise ValueError("dense operator requires a 2-D matrix")
        super().__init__(mat.shape[0], mat.shape[1])
        self._dense = mat

    def apply(self, v):
        return self._dense @ self._check_input(v)

    def apply_adjoint(self, u):
        return self._dense.T @ self._check_output(u)

    def apply_mat(self, m):
        return self._dense @ m


class IdentityOp(LinOp):
    """The identity on vectors of a fixed length."""

    kind = "identity"

    def __init__(self, dim: int):
        super().__init__(dim, dim)

    def apply(self, v):
        return self._check_input(v).copy()

    def apply_adjoint(self, u):
        return self._check_output(u).copy()

    def apply_mat(self, m):
        return m

    def to_dense(self):
        if self._dense is None:
            self._dense = np.eye(self.input_dim)
        return self._dense


class GaussianBlurOp(LinOp):
    """Separable 2D Gaussian blur with zero (Toeplitz) boundary.

    The 1D kernel is a Gaussian truncated at ``kernel_radius`` and
    normalized to unit sum; the 2D kernel is its outer product. Pixels
    outside the frame are treated as zero, so the matrix form is
    block-Toeplitz rather than circulant.
    """

    kind = "gaussian_blur"

    def __init__(self, kernel_sigma: float, kernel_radius: int, frame_shape):
        nx, ny = frame_shape
        if kernel_radius < 0:
            raise ValueError("kernel_radius must be >= 0")
        if min(nx, ny) < 2 * kernel_radius + 1:
            raise ValueError(
                f"frame shape {frame_shape} too small for kernel radius {kernel_radius}"
            )
        if kernel_sigma <= 0:
            raise ValueError("kernel_sigma must be positive")
        n = nx * ny
        super().__init__(n, n)
        self.frame_shape = (int(nx), int(ny))
        self.kernel_sigma = float(kernel_sigma)
        self.kernel_radius = int(kernel_radius)
        d = np.arange(-kernel_radius, kernel_radius + 1, dtype=float)
        k = np.exp(-0.5 * (d / kernel_sigma) ** 2)
        self.kernel_1d = k / k.sum()

    def _blur(self, v: np.ndarray, kernel: np.ndarray) -> np.ndarray:
        img = v.reshape(self.frame_shape)
        out = ndimage.convolve1d(img, kernel, axis=0, mode="constant", cval=0.0)
        out = ndimage.convolve1d(out, kernel, axis=1, mode="constant", cval=0.0)
        return out.ravel()

    def apply(self, v):
        return self._blur(self._check_input(v), self.kernel_1d)

    def apply_adjoint(self, u):
        # adjoint of zero-padded convolution = correlation = convolution
        # with the reversed kernel
        return self._blur(self._check_output(u), self.kernel_1d[::-1])


class FirstDifferenceOp(LinOp):
    """Stacked horizontal and vertical forward differences of a frame.

    Output is ``(d_h, d_v)`` flattened to length ``2 N``, where
    ``d_h[i, j] = x[i, j+1] - x[i, j]`` (zero in the last column) and
    ``d_v[i, j] = x[i+1, j] - x[i, j]`` (zero in the last row).
    """

    kind = "first_difference"

    def __init__(self, frame_shape):
        nx, ny = frame_shape
        if nx < 2 or ny < 2:
            raise ValueError("frame shape must be at least 2x2")
        n = nx * ny
        super().__init__(2 * n, n)
        self.frame_shape = (int(nx), int(ny))

    def apply(self, v):
        img = self._check_input(v).reshape(self.frame_shape)
        dh = np.zeros(self.frame_shape)
        dv = np.zeros(self.frame_shape)
        dh[:, :-1] = img[:, 1:] - img[:, :-1]
        dv[:-1, :] = img[1:, :] - img[:-1, :]
        return np.concatenate([dh.ravel(), dv.ravel()])

    def apply_adjoint(self, u):
        u = self._check_output(u)
        n = self.input_dim
        dh = u[:n].reshape(self.frame_shape)
        dv = u[n:].reshape(self.frame_shape)
        out = np.zeros(self.frame_shape)
        out[:, 1:] += dh[:, :-1]
        out[:, :-1] -= dh[:, :-1]
        out[1:, :] += dv[:-1, :]
        out[:-1, :] -= dv[:-1, :]
        return out.ravel()


def dense_operator(mat) -> DenseOp:
    return DenseOp(mat)


def identity_operator(dim: int) -> IdentityOp:
    return IdentityOp(dim)


def gaussian_blur_operator(
    kernel_sigma: float, kernel_radius: int | None = None, frame_shape=None
) -> LinOp:
    """Build the shared blur operator for a frame of shape ``(nx, ny)``.

    ``kernel_radius=None`` selects ``ceil(3 * kernel_sigma)``, covering
    essentially the full Gaussian mass. Radius 0 degenerates to the
    identity.
    """
    if frame_shape is None:
        raise ValueError("frame_shape is required")
    if kernel_radius is None:
        kernel_radius = math.ceil(3.0 * kernel_sigma)
    if kernel_radius == 0:
        nx, ny = frame_shape
        return IdentityOp(nx * ny)
    return GaussianBlurOp(kernel_sigma, kernel_radius, frame_shape)


def first_difference_operator(frame_shape) -> FirstDifferenceOp:
    return FirstDifferenceOp(frame_shape)


class Covariance:
    """SPD covariance matrix, either dense or a scaled identity.

    Inverses are never formed explicitly: solves go through a cached
    Cholesky factorization, which doubles as the positive-definiteness
    check. A zero scaled identity is representable (for noiseless
    simulation) but refuses to solve.
    """

    def __init__(self, dim: int, *, mat: np.ndarray | None = None,
                 sigma_sq: float | None = None):
        if (mat is None) == (sigma_sq is None):
            raise ValueError("exactly one of mat / sigma_sq must be given")
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = int(dim)
        if mat is not None:
            mat = np.asarray(mat, dtype=float)
            if mat.shape != (dim, dim):
                raise ValueError(f"expected ({dim}, {dim}) matrix, got {mat.shape}")
            scale = np.abs(mat).max()
            if scale > 0 and np.abs(mat - mat.T).max() > 1e-12 * scale:
                raise ValueError("covariance matrix is not symmetric")
            self.kind = "dense"
            self._mat = mat
            self.sigma_sq = None
        else:
            if sigma_sq < 0:
                raise ValueError("sigma_sq must be nonnegative")
            self.kind = "scaled_identity"
            self._mat = None
            self.sigma_sq = float(sigma_sq)
        self._cho = None
        self._chol_lower: np.ndarray | None = None

    @classmethod
    def dense(cls, mat) -> "Covariance":
        mat = np.asarray(mat, dtype=float)
        return cls(mat.shape[0], mat=mat)

    @classmethod
    def scaled_identity(cls, dim: int, sigma_sq: float) -> "Covariance":
        return cls(dim, sigma_sq=sigma_sq)

    @property
    def is_zero(self) -> bool:
        return self.kind == "scaled_identity" and self.sigma_sq == 0.0

    def to_dense(self) -> np.ndarray:
        if self.kind == "dense":
            return self._mat
        return self.sigma_sq * np.eye(self.dim)

    def add_to(self, m: np.ndarray) -> np.ndarray:
        """Return ``m + C`` without materializing a scaled identity."""
        if self.kind == "dense":
            return m + self._mat
        out = m.copy()
        out[np.diag_indices(self.dim)] += self.sigma_sq
        return out

    def _factor(self):
        if self._cho is None:
            self._cho = cho_factor(self._mat, lower=True)
        return self._cho

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Compute ``C^{-1} b`` for a vector or a stack of columns."""
        if self.kind == "scaled_identity":
            if self.sigma_sq == 0.0:
                raise np.linalg.LinAlgError("zero covariance is singular")
            return np.asarray(b, dtype=float) / self.sigma_sq
        return cho_solve(self._factor(), b)

    def chol(self) -> np.ndarray:
        """Lower Cholesky factor ``L`` with ``C = L L^T`` (zero allowed)."""
        if self._chol_lower is None:
            if self.kind == "scaled_identity":
                self._chol_lower = math.sqrt(self.sigma_sq) * np.eye(self.dim)
            else:
                self._chol_lower = np.linalg.cholesky(self._mat)
        return self._chol_lower

    def __repr__(self) -> str:
        if self.kind == "scaled_identity":
            return f"Covariance(scaled_identity, dim={self.dim}, sigma_sq={self.sigma_sq})"
        return f"Covariance(dense, dim={self.dim})"


def mahalanobis_sq(v: np.ndarray, cov: Covariance) -> float:
    """Squared Mahalanobis norm ``v^T C^{-1} v`` via Cholesky solve."""
    v = np.asarray(v, dtype=float)
    if v.shape != (cov.dim,):
        raise ValueError(f"expected vector of length {cov.dim}, got shape {v.shape}")
    if cov.kind == "scaled_identity":
        if cov.sigma_sq == 0.0:
            raise np.linalg.LinAlgError("zero covariance is singular")
        return float(v @ v) / cov.sigma_sq
    c, lower = cov._factor()
    w = solve_triangular(c, v, lower=lower)
    return float(w @ w)
