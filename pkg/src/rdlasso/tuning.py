"""Data-driven choice of the selection penalty and the two bandwidths."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .data import Dataset
from .errors import (
    DegenerateCovariate,
    DegenerateDensity,
    NonfiniteQuantile,
    RankDeficient,
    TooFewObservations,
)
from .kernels import KernelSpec, curvature_weight, variance_constant
from .local_linear import fit_adjusted, fit_baseline, kernel_weights
from .selection import PenaltyWeights, _GramProblem

GRID_SPAN = 1e4  # lambda grid covers [lambda_max / GRID_SPAN, lambda_max]

# Stopping for path-interior solves inside the tuning rules.  Only their
# residuals feed the tuning statistics, and far below the selected penalty
# the problem is deliberately overparametrized, where exact coefficient
# convergence is unattainable; a sweep budget plus an objective plateau stop
# keeps those solves bounded.
PATH_MAX_SWEEPS = 150
PATH_OBJ_TOL = 1e-10


@dataclass(frozen=True)
class BchConfig:
    c: float = 1.1
    gamma: float = 0.05
    nu: float = 1e-5
    max_rounds: int = 10


@dataclass(frozen=True)
class LvConfig:
    M: int | None = None  # grid size; defaults to 5 * p
    L: int = 100
    alpha: float = 0.05


@dataclass(frozen=True)
class CvConfig:
    folds: int = 10
    grid_size: int = 100


@dataclass(frozen=True)
class TuningConfig:
    """Knobs for the three penalty rules plus the RNG seed they share."""

    bch: BchConfig = field(default_factory=BchConfig)
    lv: LvConfig = field(default_factory=LvConfig)
    cv: CvConfig = field(default_factory=CvConfig)
    rng_seed: int = 0

    def __post_init__(self):
        if not self.bch.c > 1:
            raise ValueError("bch.c must exceed 1")
        if not 0 < self.bch.gamma < 1:
            raise ValueError("bch.gamma must be in (0, 1)")
        if not 0 < self.lv.alpha < 1:
            raise ValueError("lv.alpha must be in (0, 1)")
        if self.cv.folds < 2:
            raise ValueError("cv.folds must be at least 2")
        if self.lv.L < 1 or (self.lv.M is not None and self.lv.M < 1):
            raise ValueError("lv.M and lv.L must be positive")


@dataclass(frozen=True)
class BandwidthPlan:
    """Selection bandwidth b, final bandwidth h, and pilot diagnostics."""

    b: float
    h: float
    method: str  # "plugin" or "fixed"
    diagnostics: dict = field(default_factory=dict, compare=False)


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


# ---------------------------------------------------------------------------
# penalty level rules


def lambda_bch(data: Dataset, b: float, kernel: KernelSpec, cfg: TuningConfig,
               *, scaling: str = "calibrated"):
    """Iterated plug-in penalty with residual-based loadings.

    Starts from baseline-fit residuals, builds loadings
    w_k = sqrt((1/(n b)) sum_i K(x_i/b)^2 (Z_ik r_i)^2), fits the penalized
    problem, refreshes the residuals and the loadings (with a degrees-of-
    freedom factor), and repeats until the loadings settle.

    Parameters
    ----------
    scaling : {"calibrated", "literal"}
        "calibrated" sets lam = 2 c sqrt(n/b) z_{1 - gamma/(2p)}, which is on
        the scale of the solver's summed objective.  "literal" keeps the raw
        2 c sqrt(n*b) z rule, which under-penalizes that objective by a
        factor of b; retained for reference.

    Returns
    -------
    (lam, loadings) : penalty level and the final p-vector of loadings.
    """
    if data.p == 0:
        raise NonfiniteQuantile("penalty quantile is undefined without covariates")
    if scaling not in ("calibrated", "literal"):
        raise ValueError("scaling must be 'calibrated' or 'literal'")
    n, p = data.n, data.p
    quant = norm.ppf(1.0 - cfg.bch.gamma / (2.0 * p))
    root = np.sqrt(n / b) if scaling == "calibrated" else np.sqrt(n * b)
    lam = 2.0 * cfg.bch.c * root * quant

    mu_z = local_covariate_mean(data, b, kernel)
    problem = _GramProblem(data, b, kernel, mu_z)
    rows = kernel_weights(data.x, b, kernel) > 0
    kb_rows = kernel.eval(data.x[rows] / b)  # K(x/b), not divided by b
    z2_rows = data.z[rows] ** 2

    def loadings_from(resid_rows):
        w2 = ((kb_rows * resid_rows) ** 2) @ z2_rows / (n * b)
        return np.sqrt(w2)

    base = fit_baseline(data, b, kernel)
    w = loadings_from(base.residuals[rows])
    if np.min(w) < 1e-12:
        raise DegenerateCovariate("a BCH penalty loading is numerically zero")
    beta = None
    for _ in range(cfg.bch.max_rounds):
        beta, _, _, _ = problem.solve(lam, w, beta0=beta)
        resid = problem.residuals(beta)
        n_sel = int(np.count_nonzero(beta[4:]))
        denom = n * b - n_sel - 4.0
        dof = np.sqrt(n * b / denom) if denom > 0 else np.sqrt(n * b)
        w_new = loadings_from(resid) * dof
        change = float(np.max(np.abs(w_new - w)))
        w = w_new
        if np.min(w) < 1e-12:
            raise DegenerateCovariate("a BCH penalty loading is numerically zero")
        if change < cfg.bch.nu:
            break
    return lam, w


def local_covariate_mean(data: Dataset, b: float, kernel: KernelSpec) -> np.ndarray:
    """Raw kernel-weighted covariate mean (1/n) sum_i Z_i K_b(x_i)."""
    kb = kernel_weights(data.x, b, kernel)
    return (data.z * kb[:, None]).sum(axis=0) / data.n


def lambda_grid(data: Dataset, b: float, kernel: KernelSpec,
                weights: PenaltyWeights, size: int) -> np.ndarray:
    """Geometric penalty grid whose top value zeroes every covariate.

    The top of the grid is the stationarity bound at gamma = 0 (largest
    loading-scaled score of the centered covariates against baseline
    residuals); the grid spans four decades below it.
    """
    problem = _GramProblem(data, b, kernel, weights.mu_z)
    beta, _, _, _ = problem.solve(np.inf, weights.w)
    r = problem.residuals(beta)
    if data.p == 0:
        return np.zeros(1)
    score = 2.0 * ((problem.zc * problem.w[:, None]).T @ r)
    lam_max = float(np.max(np.abs(score) / weights.w))
    if lam_max <= 0.0:
        return np.zeros(1)
    if size < 2:
        return np.array([lam_max])
    return np.geomspace(lam_max / GRID_SPAN, lam_max, size)


def lambda_lv(data: Dataset, b: float, kernel: KernelSpec,
              weights: PenaltyWeights, cfg: TuningConfig, rng,
              *, statistic: str = "kkt") -> float:
    """Multiplier-bootstrap penalty rule.

    Fits the penalty path from the top, perturbs each path residual vector
    with L standard normal multiplier draws, and picks the smallest grid
    value that dominates the level-alpha critical value (the empirical
    1-alpha quantile) of the perturbed score maxima from that point up.

    Parameters
    ----------
    statistic : {"kkt", "literal"}
        "kkt" compares max_k |2 sum_i K_b(x_i) (Z_ik - mu_k) r_i e_i| / w_k
        against the penalty, mirroring the stationarity condition of the
        solver's objective.  "literal" uses the raw form
        max_k |(2/(nb)) sum_i w_k K(x_i/b) Z_ik r_i e_i| with the loadings
        multiplying; its scale does not match the summed objective and it is
        retained for reference.
    """
    if statistic not in ("kkt", "literal"):
        raise ValueError("statistic must be 'kkt' or 'literal'")
    rng = _as_rng(rng)
    m_size = cfg.lv.M if cfg.lv.M is not None else 5 * max(data.p, 1)
    if m_size < 2:
        raise ValueError("the multiplier rule needs a grid of at least 2 values")
    grid = lambda_grid(data, b, kernel, weights, m_size)
    problem = _GramProblem(data, b, kernel, weights.mu_z)
    nb_rows = problem.w.shape[0]
    draws = rng.standard_normal((nb_rows, cfg.lv.L))

    if statistic == "kkt":
        q_mat = 2.0 * (problem.zc * problem.w[:, None]).T / weights.w[:, None]
    else:
        z_raw = problem.zc + weights.mu_z
        kb_raw = problem.w * b  # K(x/b) on the kept rows
        q_mat = (2.0 / (data.n * b)) * weights.w[:, None] * (z_raw * kb_raw[:, None]).T

    # Walk the grid from the largest penalty down.  The rule returns the
    # smallest m whose whole upper tail satisfies q_alpha(lam) <= lam, so the
    # scan can stop exactly at the first failure; smaller penalties cannot
    # change the answer.
    beta = None
    prev_resid = None
    prev_q = np.inf
    chosen = grid.shape[0] - 1
    for m in range(grid.shape[0] - 1, -1, -1):
        beta, _, _, _ = problem.solve(grid[m], weights.w, beta0=beta,
                                      max_iter=PATH_MAX_SWEEPS,
                                      obj_tol=PATH_OBJ_TOL)
        resid = problem.residuals(beta)
        if prev_resid is not None and np.array_equal(resid, prev_resid):
            q_m = prev_q
        else:
            stats = np.max(np.abs(q_mat @ (resid[:, None] * draws)), axis=0)
            q_m = float(np.quantile(stats, 1.0 - cfg.lv.alpha))
            prev_resid, prev_q = resid, q_m
        if q_m > grid[m]:
            # condition fails here; the previous grid point starts the
            # longest valid tail (or the largest penalty if none passed)
            chosen = min(m + 1, grid.shape[0] - 1)
            return float(grid[chosen])
        chosen = m
    return float(grid[chosen])


def lambda_cv(data: Dataset, b: float, kernel: KernelSpec,
              weights: PenaltyWeights, cfg: TuningConfig, rng,
              *, folds: np.ndarray | None = None) -> float:
    """K-fold cross-validated penalty on the in-bandwidth sample.

    Folds are stratified by the side of the cutoff so the boundary contrast
    is estimable in every training set.  The out-of-fold loss is the
    kernel-weighted squared prediction error of the penalized fit.

    Parameters
    ----------
    folds : array of int, optional
        Pre-assigned fold label per observation (full data length); entries
        for rows outside the bandwidth are ignored.  By default folds are
        drawn from ``rng``.
    """
    rng = _as_rng(rng)
    n_folds = cfg.cv.folds
    grid = lambda_grid(data, b, kernel, weights, cfg.cv.grid_size)
    if grid.shape[0] == 1:
        return float(grid[0])
    problem = _GramProblem(data, b, kernel, weights.mu_z)
    kb = kernel_weights(data.x, b, kernel)
    rows = np.flatnonzero(kb > 0)
    if rows.size < n_folds:
        raise TooFewObservations(
            f"{rows.size} in-bandwidth observations cannot support {n_folds} folds"
        )
    if folds is None:
        fold_of = np.empty(rows.size, dtype=int)
        side = data.x[rows] >= 0
        for mask in (side, ~side):
            idx = np.flatnonzero(mask)
            rng.shuffle(idx)
            fold_of[idx] = np.arange(idx.size) % n_folds
    else:
        fold_of = np.asarray(folds)[rows]

    a = problem._a
    y = problem.y
    w = problem.w
    loss = np.zeros(grid.shape[0])
    order = np.argsort(grid)[::-1]  # fit from the largest penalty down
    for f in range(n_folds):
        hold = fold_of == f
        train = ~hold
        if int(train.sum()) < 5 or not hold.any():
            raise TooFewObservations(f"fold {f} leaves too few training rows")
        sub = _GramProblem.from_arrays(a[train], w[train], y[train],
                                       problem.k0, problem.p, problem.b)
        beta = None
        ah, wh, yh = a[hold], w[hold], y[hold]
        for m in order:
            try:
                beta, _, _, _ = sub.solve(grid[m], weights.w, beta0=beta,
                                          max_iter=PATH_MAX_SWEEPS,
                                          obj_tol=PATH_OBJ_TOL)
            except RankDeficient as exc:
                raise TooFewObservations(
                    f"training rows of fold {f} cannot identify the fit"
                ) from exc
            err = yh - ah @ beta
            loss[m] += float(wh @ (err**2))
    best = order[int(np.argmin(loss[order]))]  # ties resolve to the larger penalty
    return float(grid[best])


# ---------------------------------------------------------------------------
# bandwidths


def silverman_bandwidth(x: np.ndarray) -> float:
    sd = float(np.std(x))
    iqr = float(np.subtract(*np.percentile(x, [75, 25])))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 1.06 * spread * x.shape[0] ** (-0.2)


def density_at_cutoff(x: np.ndarray, kernel: KernelSpec) -> float:
    """Kernel density of the running variable at 0, boundary corrected.

    Uses a Silverman pilot bandwidth; the estimate is renormalized by the
    kernel mass falling inside the observed range so it stays consistent
    when 0 sits at the edge of the support.
    """
    s = silverman_bandwidth(x)
    if not np.isfinite(s) or s <= 0:
        raise DegenerateDensity("running variable has no spread")
    raw = float(np.mean(kernel.eval(x / s))) / s
    mass = float(kernel.cdf(np.max(x) / s) - kernel.cdf(np.min(x) / s))
    if mass <= 0:
        raise DegenerateDensity("no kernel mass over the observed range")
    dens = raw / mass
    if dens <= 1e-12:
        raise DegenerateDensity("estimated density at the cutoff is zero")
    return dens


def _quartic_side_fit(x, y):
    """Global degree-4 fit on one side; returns curvature at 0, its variance,
    and the residual variance."""
    n = x.shape[0]
    if n < 6:
        raise TooFewObservations("need at least 6 points per side for the pilot fit")
    d = np.column_stack([x**k for k in range(5)])
    g = d.T @ d
    try:
        coef = np.linalg.solve(g, d.T @ y)
        ginv22 = np.linalg.solve(g, np.eye(5)[:, 2])[2]
    except np.linalg.LinAlgError as exc:
        raise TooFewObservations("degenerate running variable on one side") from exc
    resid = y - d @ coef
    sigma2 = float(resid @ resid) / (n - 5)
    curv = 2.0 * coef[2]
    curv_var = 4.0 * sigma2 * float(ginv22)
    return curv, curv_var, sigma2


def _pilot(data: Dataset, kernel: KernelSpec):
    if data.n < 50:
        raise TooFewObservations("plug-in bandwidth needs at least 50 observations")
    right = data.x >= 0
    curv_r, var_r, sig2_r = _quartic_side_fit(data.x[right], data.y[right])
    curv_l, var_l, sig2_l = _quartic_side_fit(data.x[~right], data.y[~right])
    delta = curv_r - curv_l
    se_delta = np.sqrt(max(var_r + var_l, 0.0))
    # regularized curvature gap keeps the bandwidth finite when the fitted
    # curvatures cancel
    delta_reg = np.sqrt(delta**2 + (3.0 * se_delta) ** 2)
    cb = curvature_weight(kernel)
    cs = variance_constant(kernel)
    bias_amp = 0.5 * abs(cb) * delta_reg
    dens = density_at_cutoff(data.x, kernel)
    s2 = cs * (sig2_r + sig2_l) / dens
    b = (s2 / (4.0 * bias_amp**2 * data.n)) ** 0.2
    # keep enough points inside the window to identify the baseline fit
    order = np.sort(np.abs(data.x))
    floor = order[min(5, data.n - 1)] * (1.0 + 1e-12)
    b = max(b, floor)
    diag = {
        "curvature_right": curv_r,
        "curvature_left": curv_l,
        "curvature_se": float(se_delta),
        "sigma2_right": sig2_r,
        "sigma2_left": sig2_l,
        "density": dens,
        "variance_scale": s2,
        "bias_scale": float(bias_amp),
    }
    return float(b), diag


def pilot_bandwidth(data: Dataset, kernel: KernelSpec) -> float:
    """MSE-style plug-in bandwidth for the no-covariates fit.

    b = [ S2 / (4 B2 n) ]^(1/5), with the squared-bias scale built from
    one-sided global quartic fits (curvature gap regularized by three times
    its standard error, added in quadrature) and the variance scale from the
    pilot residual variances and a density estimate at the cutoff.
    """
    b, _ = _pilot(data, kernel)
    return b


def final_bandwidth(data: Dataset, selected, kernel: KernelSpec, b: float) -> float:
    """Plug-in bandwidth for the covariate-adjusted outcome.

    Computes the adjustment coefficients on the selected covariates at the
    selection bandwidth b, forms y - Z(selected) @ gamma, and applies the
    pilot rule to that adjusted outcome.  With an empty selection this is
    exactly the pilot bandwidth on the raw outcome.
    """
    selected = tuple(selected)
    if not selected:
        return pilot_bandwidth(data, kernel)
    fit = fit_adjusted(data, selected, b, kernel)
    y_adj = data.y - data.z[:, list(fit.subset)] @ fit.gamma
    return pilot_bandwidth(data.with_outcome(y_adj), kernel)
