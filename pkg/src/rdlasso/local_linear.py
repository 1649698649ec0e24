"""Kernel-weighted local linear fits around the cutoff.

The fit regresses the outcome on (1, T, x/h, T*x/h) plus an optional fixed
covariate subset, weighting each observation by K(x/h)/h.  The second
coefficient is the estimated jump at the cutoff.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import RankDeficient, TooFewObservations
from .kernels import KernelSpec

RANK_RTOL = 1e-10


def design_matrix(x: np.ndarray, h: float) -> np.ndarray:
    """Running-variable design (1, T, x/h, T*x/h) with T = 1(x >= 0)."""
    t = (x >= 0.0).astype(float)
    xh = x / h
    return np.column_stack((np.ones_like(x), t, xh, t * xh))


def kernel_weights(x: np.ndarray, h: float, kernel: KernelSpec) -> np.ndarray:
    """Weights K(x/h)/h; zero outside the bandwidth window."""
    return kernel.eval(x / h) / h


def solve_weighted_ls(a: np.ndarray, w: np.ndarray, y: np.ndarray):
    """Solve min_b sum_i w_i (y_i - a_i'b)^2 via Cholesky of the weighted Gram.

    Returns (b, gram).  Raises RankDeficient when a pivot falls below
    RANK_RTOL times the largest Gram diagonal.
    """
    aw = a * w[:, None]
    gram = aw.T @ a
    rhs = aw.T @ y
    return _solve_gram(gram, rhs), gram


def _solve_gram(gram: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    tol = RANK_RTOL * max(float(np.max(np.diag(gram))), np.finfo(float).tiny)
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise RankDeficient("weighted design is singular") from exc
    if np.min(np.diag(chol)) ** 2 < tol:
        raise RankDeficient(
            "weighted design is rank deficient beyond tolerance; the bandwidth "
            "may be too small or covariates collinear"
        )
    z = np.linalg.solve(chol, rhs)
    return np.linalg.solve(chol.T, z)


@dataclass(frozen=True)
class LocalFit:
    """Result of a kernel-weighted least squares fit at bandwidth h.

    ``theta`` holds (intercept, jump, slope, slope change) on the scaled
    design; ``tau`` is the jump.  ``residuals`` covers every row, but rows
    with in_bw False received zero weight and are excluded from any
    variance computed downstream.
    """

    subset: tuple
    h: float
    kernel: KernelSpec
    theta: np.ndarray
    gamma: np.ndarray
    residuals: np.ndarray
    n_eff: int
    in_bw: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    gram: np.ndarray = field(repr=False)

    @property
    def tau(self) -> float:
        return float(self.theta[1])


def _check_subset(subset, p):
    subset = tuple(sorted(int(k) for k in subset))
    if len(set(subset)) != len(subset):
        raise ValueError("covariate subset contains duplicate indices")
    if subset and (subset[0] < 0 or subset[-1] >= p):
        raise ValueError(f"covariate index out of range for p={p}")
    return subset


def fit_adjusted(data: Dataset, subset, h: float, kernel: KernelSpec) -> LocalFit:
    """Local linear RD fit with a fixed covariate subset entered linearly.

    Parameters
    ----------
    data : Dataset
    subset : iterable of int
        Covariate column indices to adjust for (may be empty).
    h : float
        Bandwidth, > 0.
    kernel : KernelSpec

    Raises
    ------
    TooFewObservations
        Fewer than ``len(subset) + 5`` points inside the bandwidth.
    RankDeficient
        Singular weighted design.
    """
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    subset = _check_subset(subset, data.p)
    in_bw = np.abs(data.x) <= h
    n_eff = int(in_bw.sum())
    if n_eff < len(subset) + 4 + 1:
        raise TooFewObservations(
            f"{n_eff} observations within h={h:g} cannot identify "
            f"{len(subset) + 4} parameters with margin"
        )
    w = kernel_weights(data.x, h, kernel)
    v = design_matrix(data.x, h)
    d = np.column_stack((v, data.z[:, subset])) if subset else v
    beta, gram = solve_weighted_ls(d, w, data.y)
    resid = data.y - d @ beta
    return LocalFit(
        subset=subset,
        h=float(h),
        kernel=kernel,
        theta=beta[:4],
        gamma=beta[4:],
        residuals=resid,
        n_eff=n_eff,
        in_bw=in_bw,
        weights=w,
        gram=gram,
    )


def fit_baseline(data: Dataset, h: float, kernel: KernelSpec) -> LocalFit:
    """Local linear RD fit without covariates (subset = empty)."""
    return fit_adjusted(data, (), h, kernel)


def fwl_theta(data: Dataset, subset, h: float, kernel: KernelSpec) -> np.ndarray:
    """Jump-block coefficients via explicit partialling-out.

    Regresses the outcome and each running-variable design column on the
    selected covariates (kernel weighted), then fits the partialled outcome
    on the partialled design.  Algebraically identical to the joint solve in
    ``fit_adjusted``; kept as an independent cross-check.
    """
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    subset = _check_subset(subset, data.p)
    w = kernel_weights(data.x, h, kernel)
    v = design_matrix(data.x, h)
    if not subset:
        theta, _ = solve_weighted_ls(v, w, data.y)
        return theta
    z = data.z[:, subset]
    zw = z * w[:, None]
    gz = zw.T @ z
    try:
        gamma_y = np.linalg.solve(gz, zw.T @ data.y)
        gamma_v = np.linalg.solve(gz, zw.T @ v)
        v_part = v - z @ gamma_v
        y_part = data.y - z @ gamma_y
        vw = v_part * w[:, None]
        theta = np.linalg.solve(vw.T @ v_part, vw.T @ y_part)
    except np.linalg.LinAlgError as exc:
        raise RankDeficient("covariate block is singular in partialling") from exc
    return theta
