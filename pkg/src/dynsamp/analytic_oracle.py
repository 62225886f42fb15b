"""Exact posterior moments for the Gaussian model on small grids.

With the roughness prior and Gaussian noise the posterior is complex Gaussian
with precision ``A'A / sigma^2 + lam T'T + eps I``. Everything here uses dense
matrices and is meant for grids of at most 4096 pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import LinearOperator, cg

from .adaptive import ExhaustionError
from .forward_model import MeasurementSet, SamplingMask, SensingOperator
from .priors import apply_T, apply_TH

MAX_ORACLE_SIZE = 4096


@dataclass(frozen=True, eq=False)
class GaussianProblem:
    operator: SensingOperator
    lam: float
    noise_sigma: float
    ridge: float | None = None

    def __post_init__(self):
        if int(np.prod(self.operator.shape)) > MAX_ORACLE_SIZE:
            raise ValueError(f"oracle limited to grids of at most {MAX_ORACLE_SIZE} pixels")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not self.noise_sigma > 0:
            raise ValueError("noise_sigma must be positive")
        if self.ridge is None:
            object.__setattr__(self, "ridge", 1e-8 * self.lam)
        elif self.ridge < 0:
            raise ValueError("ridge must be non-negative")

    @property
    def shape(self):
        return self.operator.shape

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def with_mask(self, mask: SamplingMask) -> GaussianProblem:
        return GaussianProblem(self.operator.with_mask(mask), self.lam, self.noise_sigma, self.ridge)


def dense_forward(op: SensingOperator) -> np.ndarray:
    """Matrix of ``op.forward`` with rows ordered coil-major, shape ``(C*N, N)``."""
    n = int(np.prod(op.shape))
    cols = [op.forward(e.reshape(op.shape)).ravel() for e in np.eye(n, dtype=np.complex128)]
    return np.stack(cols, axis=1)


def dense_roughness(shape) -> np.ndarray:
    """``T'T`` as a dense real matrix."""
    n = int(np.prod(shape))
    cols = [apply_TH(apply_T(e.reshape(shape))).ravel() for e in np.eye(n)]
    return np.stack(cols, axis=1).real


def posterior_precision(prob: GaussianProblem) -> np.ndarray:
    A = dense_forward(prob.operator)
    Q = A.conj().T @ A / prob.noise_sigma**2 + prob.lam * dense_roughness(prob.shape)
    Q = Q + prob.ridge * np.eye(prob.size)
    return 0.5 * (Q + Q.conj().T)


def posterior_covariance(prob: GaussianProblem) -> np.ndarray:
    Q = posterior_precision(prob)
    try:
        factor = scipy.linalg.cho_factor(Q, lower=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            "posterior precision is singular; use a ridge epsilon > 0 or measure the DC sample") from exc
    sigma = scipy.linalg.cho_solve(factor, np.eye(prob.size, dtype=np.complex128))
    return 0.5 * (sigma + sigma.conj().T)


def posterior_moments(prob: GaussianProblem, y) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean image and dense covariance ``(N, N)``.

    ``Sigma = (A'A / sigma^2 + lam T'T + eps I)^-1`` and
    ``mean = Sigma A'y / sigma^2``, via a Cholesky solve.
    """
    values = y.values if isinstance(y, MeasurementSet) else np.asarray(y)
    sigma = posterior_covariance(prob)
    rhs = prob.operator.adjoint(values).ravel() / prob.noise_sigma**2
    return (sigma @ rhs).reshape(prob.shape), sigma


def posterior_mean_cg(prob: GaussianProblem, y, rtol: float = 1e-13) -> np.ndarray:
    """Matrix-free conjugate-gradient route to the posterior mean (cross-check)."""
    values = y.values if isinstance(y, MeasurementSet) else np.asarray(y)
    op, shape = prob.operator, prob.shape

    def matvec(v):
        x = v.reshape(shape)
        out = op.normal(x) / prob.noise_sigma**2 + prob.lam * apply_TH(apply_T(x)) + prob.ridge * x
        return out.ravel()

    lin = LinearOperator((prob.size, prob.size), matvec=matvec, dtype=np.complex128)
    b = op.adjoint(values).ravel() / prob.noise_sigma**2
    sol, info = cg(lin, b, rtol=rtol, atol=0.0, maxiter=20 * prob.size)
    if info != 0:
        raise RuntimeError(f"conjugate gradient did not converge (info={info})")
    return sol.reshape(shape)


def measurement_variance(prob: GaussianProblem, sigma: np.ndarray) -> np.ndarray:
    """Variance of noisy full-grid projections: ``diag(A Sigma A') + sigma_noise^2``, summed over coils."""
    if sigma.shape != (prob.size, prob.size):
        raise ValueError(f"covariance shape {sigma.shape} does not match problem size {prob.size}")
    A = dense_forward(prob.operator.full())
    diag = np.einsum("ij,jk,ik->i", A, sigma, A.conj()).real
    diag = diag.reshape(prob.operator.num_coils, *prob.shape) + prob.noise_sigma**2
    return diag.sum(axis=0)


def _argmax_lowest(values: np.ndarray, candidates: np.ndarray, rtol: float) -> int:
    vals = values[candidates]
    top = vals.max()
    # values equal up to roundoff count as ties
    tied = candidates[vals >= top - rtol * abs(top)]
    return int(tied.min())


def greedy_oracle_selection(prob: GaussianProblem, initial_mask: SamplingMask, n_add: int,
                            mode: str = "pointwise", rtol: float = 1e-9) -> list[int]:
    """Exact greedy picks: at each step acquire the unmeasured location of largest
    measurement variance, lowest index first among ties.

    In line mode on a 2D grid columns are ranked by their summed variance and the
    returned list holds column numbers.
    """
    mask = initial_mask
    picks: list[int] = []
    line = mode == "line" and len(prob.shape) == 2
    for _ in range(n_add):
        var = measurement_variance(prob.with_mask(mask), posterior_covariance(prob.with_mask(mask)))
        if line:
            free = np.flatnonzero(~mask.to_array().any(axis=0))
            scores = var.sum(axis=0)
        else:
            free = np.flatnonzero(~mask.to_array().ravel())
            scores = var.ravel()
        if len(free) == 0:
            raise ExhaustionError("no unmeasured locations left")
        best = _argmax_lowest(scores, free, rtol)
        picks.append(best)
        if line:
            rows = prob.shape[0]
            mask = mask.extend([r * prob.shape[1] + best for r in range(rows)])
        else:
            mask = mask.extend([best])
    return picks
