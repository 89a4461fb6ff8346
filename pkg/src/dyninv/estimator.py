"""Scikit-learn style wrapper around the ADMM solvers.

The estimator treats the measurement sequence as the data matrix
(one row per frame) and the reconstructed sequence as the transformed
output, so solvers compose with pipelines, grid search, and ``clone``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .admm import SolverConfig, solve
from .ssm import FrameSequence, SequenceModel


class SequenceReconstructor(BaseEstimator, TransformerMixin):
    """Reconstruct a frame sequence from its measurement sequence.

    Parameters mirror :class:`~dyninv.admm.SolverConfig`; ``model`` is the
    state-space model the measurements came from. ``fit`` runs the solver
    and stores diagnostics; ``transform`` returns the reconstruction as a
    ``(T, N)`` array.
    """

    def __init__(
        self,
        model: SequenceModel | None = None,
        x_strategy: str = "ks",
        w_mode: str = "prox",
        rho: float = 1.0,
        max_iters: int = 100,
        stop_tol: float = 0.0,
        gd_step: float | str = 1.0,
        cg_sub_iters: int = 1,
        prox=None,
        w_op=None,
        denoiser=None,
        denoiser_sigma: float = 0.05,
        init: str = "backprojection",
        exact_cap: int = 20000,
    ):
        self.model = model
        self.x_strategy = x_strategy
        self.w_mode = w_mode
        self.rho = rho
        self.max_iters = max_iters
        self.stop_tol = stop_tol
        self.gd_step = gd_step
        self.cg_sub_iters = cg_sub_iters
        self.prox = prox
        self.w_op = w_op
        self.denoiser = denoiser
        self.denoiser_sigma = denoiser_sigma
        self.init = init
        self.exact_cap = exact_cap

    def _config(self) -> SolverConfig:
        return SolverConfig(
            x_strategy=self.x_strategy,
            w_mode=self.w_mode,
            rho=self.rho,
            max_iters=self.max_iters,
            stop_tol=self.stop_tol,
            gd_step=self.gd_step,
            cg_sub_iters=self.cg_sub_iters,
            prox=self.prox,
            w_op=self.w_op,
            denoiser=self.denoiser,
            denoiser_sigma=self.denoiser_sigma,
            init=self.init,
            exact_cap=self.exact_cap,
        )

    def _measurements(self, X) -> FrameSequence:
        if self.model is None:
            raise ValueError("a SequenceModel must be supplied via the model parameter")
        if isinstance(X, FrameSequence):
            X = X.frames
        X = check_array(X, dtype=np.float64, ensure_2d=True)
        if X.shape != (self.model.T, self.model.M):
            raise ValueError(
                f"expected measurements of shape {(self.model.T, self.model.M)}, got {X.shape}"
            )
        shape = self.model.shape if self.model.M == self.model.N else None
        return FrameSequence(X, shape)

    def fit(self, X, y=None):
        """Solve the inverse problem for the given measurement rows."""
        measurements = self._measurements(X)
        x_hat, trace, smoother = solve(self.model, measurements, self._config())
        self.reconstruction_ = x_hat
        self.trace_ = trace
        self.smoother_ = smoother
        self.n_features_in_ = measurements.dim
        self._fit_measurements_ = measurements.frames.copy()
        return self

    def transform(self, X) -> np.ndarray:
        """Reconstruct the given measurements; returns a ``(T, N)`` array."""
        check_is_fitted(self, "reconstruction_")
        measurements = self._measurements(X)
        if np.array_equal(measurements.frames, self._fit_measurements_):
            return self.reconstruction_.frames.copy()
        x_hat, _, _ = solve(self.model, measurements, self._config())
        return x_hat.frames

    def fit_transform(self, X, y=None) -> np.ndarray:
        self.fit(X, y)
        return self.reconstruction_.frames.copy()
