"""Localized, partially penalized lasso for covariate selection.

The selection step minimizes

    sum_i K_b(x_i) (y_i - V_i'theta - (Z_i - mu)'gamma)^2 + lam * sum_k w_k |gamma_k|

over (theta, gamma), where only the covariate block gamma is penalized and
w_k are per-covariate loadings that put all coordinates on a common scale.
The solver is cyclic coordinate descent with exact soft-thresholding for
gamma and an exact small solve for the unpenalized block after every sweep,
with an active-set restriction plus a full verification sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .data import Dataset
from .errors import DegenerateCovariate, RankDeficient, TooFewObservations
from .kernels import KernelSpec
from .local_linear import design_matrix, kernel_weights

ZERO_SNAP = 1e-12
DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class PenaltyWeights:
    """Per-covariate standardization loadings at bandwidth b.

    ``mu_z`` is the raw kernel-weighted covariate mean used for centering and
    ``w`` the matching local scale; both are deterministic functions of the
    sample, the bandwidth and the kernel.
    """

    w: np.ndarray
    b: float
    mu_z: np.ndarray


@dataclass(frozen=True)
class SelectionResult:
    """First-step solution: coefficients, support, and solver diagnostics."""

    theta_tilde: np.ndarray
    gamma_tilde: np.ndarray
    selected: tuple
    lam: float
    b: float
    objective: float
    iterations: int
    converged: bool
    objective_trace: tuple = field(repr=False, default=())


@dataclass(frozen=True)
class KktReport:
    """Stationarity certificate for a selection solution.

    ``gamma_violations[k]`` measures how far coordinate k is from satisfying
    its subgradient condition (equality on the support, inequality off it);
    ``theta_score`` is the unpenalized block gradient and should be ~0.
    """

    gamma_violations: np.ndarray
    theta_score: np.ndarray


def standardization_weights(data: Dataset, b: float, kernel: KernelSpec) -> PenaltyWeights:
    """Local mean and scale of each covariate at bandwidth b.

    mu_k = (1/n) sum_i Z_ik K_b(x_i) and
    w_k^2 = (b/n) sum_i (K_b(x_i) Z_ik - mu_k)^2.

    Raises
    ------
    TooFewObservations
        Fewer than two points inside the bandwidth.
    DegenerateCovariate
        Some covariate is locally constant at zero scale.
    """
    if b <= 0:
        raise ValueError("bandwidth must be positive")
    if int((np.abs(data.x) <= b).sum()) < 2:
        raise TooFewObservations(f"need at least 2 observations within b={b:g}")
    n = data.n
    kb = kernel_weights(data.x, b, kernel)
    kz = data.z * kb[:, None]
    mu = kz.sum(axis=0) / n
    w2 = (b / n) * ((kz - mu) ** 2).sum(axis=0)
    w = np.sqrt(w2)
    if data.p and np.min(w) < DEGENERATE_TOL:
        bad = int(np.argmin(w))
        raise DegenerateCovariate(
            f"covariate {bad} has zero local scale at b={b:g}"
        )
    return PenaltyWeights(w=w, b=float(b), mu_z=mu)


@njit(cache=True)
def _chol_solve_inplace(a, b):
    """Cholesky solve of a small SPD system; a and b are overwritten.

    Returns False when a pivot falls below 1e-10 times the largest diagonal
    (the shared rank tolerance).
    """
    k = a.shape[0]
    maxdiag = 0.0
    for i in range(k):
        if a[i, i] > maxdiag:
            maxdiag = a[i, i]
    tol = 1e-10 * maxdiag
    for i in range(k):
        for j in range(i):
            acc = a[i, j]
            for t in range(j):
                acc -= a[i, t] * a[j, t]
            a[i, j] = acc / a[j, j]
        acc = a[i, i]
        for t in range(i):
            acc -= a[i, t] * a[i, t]
        if acc <= 0.0 or acc < tol:
            return False
        a[i, i] = np.sqrt(acc)
    for i in range(k):
        acc = b[i]
        for t in range(i):
            acc -= a[i, t] * b[t]
        b[i] = acc / a[i, i]
    for i in range(k - 1, -1, -1):
        acc = b[i]
        for t in range(i + 1, k):
            acc -= a[t, i] * b[t]
        b[i] = acc / a[i, i]
    return True


@njit(cache=True)
def _cd_run(gram, cvec, yty, k0, thr, pen_w, beta, max_sweeps, tol, obj_tol,
            trace):
    """Cyclic coordinate descent with an unpenalized leading block.

    Each iteration is one cyclic soft-thresholding pass over the (active)
    penalized coordinates followed by an exact solve of the leading k0
    coordinates; ``trace`` records the objective after every iteration.
    After the second iteration the pass restricts to the current support,
    with a full verification pass before convergence is declared.  A
    positive ``obj_tol`` additionally stops on an objective plateau (used
    for path solves where coefficient convergence may be unattainable).

    Returns (iterations, converged, status); status 1 flags a rank
    deficient unpenalized block.
    """
    m = gram.shape[0]
    p = m - k0
    s = gram @ beta
    work_a = np.empty((k0, k0))
    work_b = np.empty(k0)
    if k0 > 0:
        for i in range(k0):
            work_b[i] = cvec[i] - s[i]
            for j in range(k0):
                work_a[i, j] = gram[i, j]
                work_b[i] += gram[i, j] * beta[j]
        if not _chol_solve_inplace(work_a, work_b):
            return 0, False, 1
        for i in range(k0):
            diff = work_b[i] - beta[i]
            if diff != 0.0:
                beta[i] = work_b[i]
                for r in range(m):
                    s[r] += gram[i, r] * diff
    active = np.arange(p)
    nact = p
    it = 0
    converged = False
    prev_obj = np.inf
    while it < max_sweeps:
        maxd = 0.0
        for ii in range(nact):
            k = active[ii]
            j = k0 + k
            gjj = gram[j, j]
            if gjj <= 0.0:
                continue
            old = beta[j]
            rho = cvec[j] - s[j] + gjj * old
            t = thr[k]
            if rho > t:
                new = (rho - t) / gjj
            elif rho < -t:
                new = (rho + t) / gjj
            else:
                new = 0.0
            if -1e-12 < new < 1e-12:
                new = 0.0
            if new != old:
                diff = new - old
                beta[j] = new
                for r in range(m):
                    s[r] += gram[j, r] * diff
                ad = abs(diff)
                if ad > maxd:
                    maxd = ad
        if k0 > 0:
            for i in range(k0):
                work_b[i] = cvec[i] - s[i]
                for j in range(k0):
                    work_a[i, j] = gram[i, j]
                    work_b[i] += gram[i, j] * beta[j]
            if not _chol_solve_inplace(work_a, work_b):
                return it, False, 1
            for i in range(k0):
                diff = work_b[i] - beta[i]
                if diff != 0.0:
                    beta[i] = work_b[i]
                    for r in range(m):
                        s[r] += gram[i, r] * diff
                    ad = abs(diff)
                    if ad > maxd:
                        maxd = ad
        if it % 64 == 63:  # kill accumulated drift in the running products
            s = gram @ beta
        pen = 0.0
        for k in range(p):
            bk = beta[k0 + k]
            if bk != 0.0:
                pen += pen_w[k] * abs(bk)
        obj = beta @ s - 2.0 * (cvec @ beta) + yty + pen
        trace[it] = obj
        it += 1
        scale = 1.0
        for r in range(m):
            ab = abs(beta[r])
            if ab > scale:
                scale = ab
        if maxd < tol * scale:
            if nact == p:
                converged = True
                break
            nact = p  # verification pass over every coordinate
            for k in range(p):
                active[k] = k
            continue
        if obj_tol > 0.0 and abs(prev_obj - obj) < obj_tol * (1.0 + abs(obj)):
            break
        prev_obj = obj
        if it >= 2:
            cnt = 0
            for k in range(p):
                if beta[k0 + k] != 0.0:
                    active[cnt] = k
                    cnt += 1
            if cnt > 0:
                nact = cnt
            else:
                nact = p
                for k in range(p):
                    active[k] = k
    return it, converged, 0


class _GramProblem:
    """Precomputed weighted cross products for one (sample, bandwidth) pair.

    Builds everything on the rows with positive kernel weight only, so paths
    over many penalty values reuse one Gram matrix.  ``k0`` is 4 when the
    running-variable block is included and 0 for covariate-only problems.
    """

    def __init__(self, data: Dataset, b: float, kernel: KernelSpec,
                 mu_z: np.ndarray, outcome: np.ndarray | None = None,
                 include_v: bool = True):
        if b <= 0:
            raise ValueError("bandwidth must be positive")
        y = data.y if outcome is None else np.asarray(outcome, dtype=float)
        w = kernel_weights(data.x, b, kernel)
        rows = w > 0.0
        if int(rows.sum()) < 2:
            raise TooFewObservations(f"no usable observations within b={b:g}")
        self.b = float(b)
        self.k0 = 4 if include_v else 0
        self.p = data.p
        self.w = w[rows]
        self.y = y[rows]
        self.zc = data.z[rows] - mu_z
        if include_v:
            self.v = design_matrix(data.x[rows], b)
            a = np.column_stack((self.v, self.zc)) if self.p else self.v
        else:
            self.v = None
            a = self.zc
        aw = a * self.w[:, None]
        self.gram = aw.T @ a
        self.cvec = aw.T @ self.y
        self.yty = float(self.w @ (self.y**2))
        self._a = a

    @classmethod
    def from_arrays(cls, a, w, y, k0, p, b):
        """Build a problem directly from design rows (used for CV folds)."""
        self = cls.__new__(cls)
        self.b = float(b)
        self.k0 = k0
        self.p = p
        self.w = w
        self.y = y
        self._a = a
        self.v = a[:, :k0] if k0 else None
        self.zc = a[:, k0:]
        aw = a * w[:, None]
        self.gram = aw.T @ a
        self.cvec = aw.T @ y
        self.yty = float(w @ (y**2))
        return self

    def objective(self, beta, s, lam, loadings):
        pen = lam * float(loadings @ np.abs(beta[self.k0:])) if self.p else 0.0
        if not np.isfinite(pen):  # lam = inf with empty support
            pen = 0.0
        return float(beta @ s) - 2.0 * float(self.cvec @ beta) + self.yty + pen

    def residuals(self, beta):
        return self.y - self._a @ beta

    def solve(self, lam, loadings, beta0=None, max_iter=10_000, tol=1e-9,
              obj_tol=0.0):
        """Run coordinate descent; returns (beta, iterations, converged, trace)."""
        k0, p = self.k0, self.p
        beta = np.zeros(k0 + p) if beta0 is None else np.array(beta0, dtype=float)
        if np.isinf(lam):
            thr = np.full(p, np.inf)
            pen_w = np.full(p, np.inf)
        else:
            pen_w = lam * np.asarray(loadings, dtype=float)
            thr = pen_w / 2.0
        trace = np.empty(max(max_iter, 1))
        it, converged, status = _cd_run(
            self.gram, self.cvec, self.yty, k0, thr, pen_w, beta,
            max_iter, tol, obj_tol, trace,
        )
        if status == 1:
            raise RankDeficient(
                "unpenalized block is singular at this bandwidth"
            )
        return beta, it, converged, tuple(trace[:it])


def local_lasso(data: Dataset, b: float, lam: float, kernel: KernelSpec,
                weights: PenaltyWeights, *, max_iter: int = 10_000,
                tol: float = 1e-9) -> SelectionResult:
    """Solve the localized penalized regression and report the active set.

    Parameters
    ----------
    data : Dataset
    b : float
        Selection bandwidth.
    lam : float
        Penalty level, >= 0; ``inf`` forces an empty active set.
    kernel : KernelSpec
    weights : PenaltyWeights
        Loadings and centering computed for this sample and bandwidth.

    Returns
    -------
    SelectionResult
        Best iterate; ``converged`` is False when the iteration cap was hit.
    """
    if lam < 0:
        raise ValueError("penalty must be nonnegative")
    if data.p and np.min(weights.w) < DEGENERATE_TOL:
        raise DegenerateCovariate("penalty loadings contain a zero")
    problem = _GramProblem(data, b, kernel, weights.mu_z)
    beta, iters, converged, trace = problem.solve(
        lam, weights.w, max_iter=max_iter, tol=tol
    )
    gamma = beta[4:]
    selected = tuple(int(k) for k in np.flatnonzero(gamma != 0.0))
    return SelectionResult(
        theta_tilde=beta[:4],
        gamma_tilde=gamma,
        selected=selected,
        lam=float(lam),
        b=float(b),
        objective=trace[-1] if trace else problem.objective(beta, problem.gram @ beta, lam, weights.w),
        iterations=iters,
        converged=converged,
        objective_trace=trace,
    )


def kkt_residuals(data: Dataset, result: SelectionResult, kernel: KernelSpec,
                  weights: PenaltyWeights) -> KktReport:
    """Stationarity violations of a selection solution.

    On the active set the subgradient condition holds with equality, off it
    with inequality; the unpenalized block score must vanish.  Violations are
    on the scale of the penalized score, i.e. comparable to lam * max(w).
    """
    kb = kernel_weights(data.x, result.b, kernel)
    v = design_matrix(data.x, result.b)
    zc = data.z - weights.mu_z
    r = data.y - v @ result.theta_tilde - (zc @ result.gamma_tilde if data.p else 0.0)
    kr = kb * r
    score = 2.0 * (zc.T @ kr) if data.p else np.zeros(0)
    theta_score = 2.0 * (v.T @ kr)
    lam_w = result.lam * weights.w
    viol = np.empty(data.p)
    on = np.zeros(data.p, dtype=bool)
    if result.selected:
        on[list(result.selected)] = True
    viol[on] = np.abs(np.abs(score[on]) - lam_w[on])
    viol[~on] = np.maximum(0.0, np.abs(score[~on]) - lam_w[~on])
    return KktReport(gamma_violations=viol, theta_score=theta_score)


def double_selection(data: Dataset, b: float, lambda_y: float, lambda_t: float,
                     kernel: KernelSpec, weights: PenaltyWeights) -> tuple:
    """Union of covariates predictive for the outcome or for treatment.

    The outcome step is ``local_lasso``; the treatment step penalizes a
    regression of the treatment indicator on the centered covariates alone,
    with no unpenalized block.
    """
    y_sel = local_lasso(data, b, lambda_y, kernel, weights).selected
    t = data.t_obs if data.t_obs is not None else data.treatment()
    problem = _GramProblem(data, b, kernel, weights.mu_z, outcome=t, include_v=False)
    beta, _, _, _ = problem.solve(lambda_t, weights.w)
    t_sel = tuple(int(k) for k in np.flatnonzero(beta != 0.0))
    return tuple(sorted(set(y_sel) | set(t_sel)))
