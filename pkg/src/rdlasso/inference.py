"""End-to-end estimation pipelines, standard errors, and balance diagnostics."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import norm

from .data import Dataset
from .errors import (
    ConfigError,
    DegenerateCovariate,
    EmptyEffectiveSample,
    NonpositiveVariance,
    WeakJump,
)
from .kernels import KernelSpec, variance_constant
from .local_linear import LocalFit, design_matrix, fit_adjusted
from .selection import PenaltyWeights, local_lasso, double_selection, standardization_weights
from .tuning import (
    TuningConfig,
    _pilot,
    density_at_cutoff,
    final_bandwidth,
    lambda_bch,
    lambda_cv,
    lambda_lv,
)

LAMBDA_METHODS = ("bch", "lv", "cv", "fixed", "none")
WEAK_JUMP_FLOOR = 0.05


@dataclass(frozen=True)
class PipelineConfig:
    """Everything the two-step pipeline needs beyond the data.

    ``covariates`` is either ``"lasso"`` (run the selection step) or an
    explicit tuple of covariate indices to adjust for (the empty tuple gives
    the no-covariates fit).  ``b`` and ``h`` override the plug-in bandwidths
    when set.
    """

    kernel: str = "triangular"
    lambda_method: str = "bch"
    lambda_value: float | None = None
    covariates: object = "lasso"
    b: float | None = None
    h: float | None = None
    ci_level: float = 0.95
    se_method: str = "plugin"
    use_double_selection: bool = False
    bch_scaling: str = "calibrated"
    lv_statistic: str = "kkt"
    tuning: TuningConfig = field(default_factory=TuningConfig)

    def __post_init__(self):
        if self.lambda_method not in LAMBDA_METHODS:
            raise ConfigError(
                f"unknown lambda method {self.lambda_method!r}; "
                f"choose one of {', '.join(LAMBDA_METHODS)}"
            )
        if self.lambda_method == "fixed":
            if self.lambda_value is None or self.lambda_value < 0:
                raise ConfigError("lambda_method 'fixed' needs lambda_value >= 0")
        if not 0 < self.ci_level < 1:
            raise ConfigError("ci_level must lie in (0, 1)")
        if self.se_method not in ("plugin", "sandwich"):
            raise ConfigError("se_method must be 'plugin' or 'sandwich'")
        if not (self.covariates == "lasso" or isinstance(self.covariates, tuple)):
            raise ConfigError("covariates must be 'lasso' or a tuple of indices")
        for name in ("b", "h"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ConfigError(f"{name} must be positive when given")

    @property
    def kernel_spec(self) -> KernelSpec:
        return KernelSpec(self.kernel)

    @property
    def seed(self) -> int:
        return self.tuning.rng_seed


@dataclass(frozen=True)
class RDEstimate:
    """A jump estimate with its uncertainty and full pipeline provenance."""

    tau_hat: float
    se: float
    ci_lower: float
    ci_upper: float
    ci_level: float
    h: float
    b: float
    lam: float
    lambda_method: str
    selected: tuple
    n_eff: int
    design: str  # "sharp" or "fuzzy"
    seed: int
    components: dict | None = None
    audit: dict = field(default_factory=dict, compare=False)

    @property
    def n_selected(self) -> int:
        return len(self.selected)

    def to_record(self) -> dict:
        """Flat record with the externally fixed field names."""
        return {
            "tau_hat": self.tau_hat,
            "se": self.se,
            "ci_lower": self.ci_lower,
            "ci_upper": self.ci_upper,
            "h": self.h,
            "b": self.b,
            "lambda": self.lam,
            "n_selected": self.n_selected,
            "selected_indices": " ".join(str(k) for k in self.selected),
        }


@dataclass(frozen=True)
class BalanceRow:
    index: int
    jump: float
    se: float
    p_value: float
    bh_rejected: bool


@dataclass(frozen=True)
class BalanceReport:
    """Per-covariate jump tests with a step-up multiplicity correction."""

    rows: tuple
    q: float
    global_reject: bool


def confidence_interval(tau_hat: float, se: float, level: float):
    """Conventional normal interval tau_hat +- z_{1-(1-level)/2} * se."""
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    if se < 0:
        raise ValueError("se must be nonnegative")
    if se == 0:
        warnings.warn("zero standard error: degenerate point interval",
                      RuntimeWarning, stacklevel=2)
    z = norm.ppf(1.0 - (1.0 - level) / 2.0)
    return tau_hat - z * se, tau_hat + z * se


def standard_error(fit: LocalFit, data: Dataset, kernel: KernelSpec,
                   method: str = "plugin") -> float:
    """Standard error of the fitted jump.

    ``plugin`` uses sqrt(C_S (s2_plus + s2_minus) / (f_hat(0) n h)) with the
    side variances computed as kernel-weighted mean squared in-bandwidth
    residuals, each carrying a degrees-of-freedom correction, and f_hat(0) a
    boundary-corrected density estimate.  ``sandwich`` is the usual
    heteroskedasticity-robust variance of the weighted least squares jump
    coefficient.
    """
    if method == "plugin":
        s2 = _side_variances(fit, data)
        if s2 is None:
            warnings.warn("all in-bandwidth residuals are zero; SE set to 0",
                          RuntimeWarning, stacklevel=2)
            return 0.0
        dens = density_at_cutoff(data.x, kernel)
        cs = variance_constant(kernel)
        return float(np.sqrt(cs * (s2[0] + s2[1]) / (dens * data.n * fit.h)))
    if method == "sandwich":
        var = _sandwich_block(fit, data, fit.residuals, fit.residuals)
        if var <= 0:
            if np.allclose(fit.residuals[fit.in_bw], 0.0):
                warnings.warn("all in-bandwidth residuals are zero; SE set to 0",
                              RuntimeWarning, stacklevel=2)
                return 0.0
            raise NonpositiveVariance("sandwich variance is not positive")
        return float(np.sqrt(var))
    raise ValueError(f"unknown SE method {method!r}")


def _side_variances(fit: LocalFit, data: Dataset):
    """Kernel-weighted residual variances by side; None when exactly zero."""
    k_par = 4 + len(fit.subset)
    out = []
    for side_mask in (data.x >= 0, data.x < 0):
        m = fit.in_bw & side_mask
        n_side = int(m.sum())
        dof = n_side - k_par / 2.0
        if dof <= 0:
            raise NonpositiveVariance(
                f"{n_side} in-bandwidth observations on one side cannot "
                f"support a residual variance for {k_par} parameters"
            )
        w = fit.weights[m]
        msr = float(w @ fit.residuals[m] ** 2) / float(w.sum())
        out.append(msr * n_side / dof)
    if out[0] + out[1] <= 0.0:
        return None
    return out


def _sandwich_block(fit: LocalFit, data: Dataset, r_a: np.ndarray,
                    r_b: np.ndarray) -> float:
    """(2,2) element of bread @ meat(r_a, r_b) @ bread on the fit's design."""
    cols = list(fit.subset)
    v = design_matrix(data.x, fit.h)
    d = np.column_stack((v, data.z[:, cols])) if cols else v
    wd = d * fit.weights[:, None]
    meat = wd.T @ (wd * (r_a * r_b)[:, None])
    bread = np.linalg.inv(fit.gram)
    return float((bread @ meat @ bread)[1, 1])


def _select(data: Dataset, b: float, config: PipelineConfig, rng, audit: dict):
    """Run the configured selection rule; returns (selected, lam, method)."""
    kernel = config.kernel_spec
    method = config.lambda_method
    if data.p == 0 or method == "none":
        return (), np.inf, "none"
    if method == "fixed" and np.isinf(config.lambda_value):
        return (), np.inf, "fixed"
    weights = standardization_weights(data, b, kernel)
    if method == "bch":
        lam, loadings = lambda_bch(data, b, kernel, config.tuning,
                                   scaling=config.bch_scaling)
        pw = PenaltyWeights(w=loadings, b=b, mu_z=weights.mu_z)
    elif method == "lv":
        lam = lambda_lv(data, b, kernel, weights, config.tuning, rng,
                        statistic=config.lv_statistic)
        pw = weights
    elif method == "cv":
        lam = lambda_cv(data, b, kernel, weights, config.tuning, rng)
        pw = weights
    else:  # fixed, finite
        lam = float(config.lambda_value)
        pw = weights
    if config.use_double_selection:
        selected = double_selection(data, b, lam, lam, kernel, pw)
        audit["selection"] = {"double_selection": True, "lambda": lam}
    else:
        result = local_lasso(data, b, lam, kernel, pw)
        selected = result.selected
        audit["selection"] = {
            "iterations": result.iterations,
            "converged": result.converged,
            "objective": result.objective,
        }
    audit["penalty_loadings"] = pw.w
    return selected, lam, method


def estimate_sharp(data: Dataset, config: PipelineConfig) -> RDEstimate:
    """Two-step estimate of the outcome jump in a sharp design.

    Pipeline: pilot bandwidth, covariate standardization, penalty choice,
    penalized selection, final bandwidth on the adjusted outcome, covariate-
    adjusted local linear fit, plug-in (or sandwich) standard error, normal
    confidence interval.  All intermediates land in ``RDEstimate.audit``.
    """
    kernel = config.kernel_spec
    rng = np.random.default_rng(config.seed)
    audit: dict = {}

    if config.b is not None:
        b = config.b
    else:
        b, pilot_diag = _pilot(data, kernel)
        audit["pilot"] = pilot_diag
    if not np.any(np.abs(data.x) <= b):
        raise EmptyEffectiveSample(f"no observations within b={b:g}")

    if isinstance(config.covariates, tuple):
        selected = tuple(sorted(int(k) for k in config.covariates))
        lam, method = float("nan"), "subset"
    else:
        selected, lam, method = _select(data, b, config, rng, audit)

    h = config.h if config.h is not None else final_bandwidth(data, selected, kernel, b)
    if not np.any(np.abs(data.x) <= h):
        raise EmptyEffectiveSample(f"no observations within h={h:g}")

    fit = fit_adjusted(data, selected, h, kernel)
    se = standard_error(fit, data, kernel, method=config.se_method)
    lo, hi = confidence_interval(fit.tau, se, config.ci_level)
    audit["n_eff_b"] = int((np.abs(data.x) <= b).sum())
    return RDEstimate(
        tau_hat=fit.tau,
        se=se,
        ci_lower=lo,
        ci_upper=hi,
        ci_level=config.ci_level,
        h=float(h),
        b=float(b),
        lam=lam,
        lambda_method=method,
        selected=selected,
        n_eff=fit.n_eff,
        design="sharp",
        seed=config.seed,
        audit=audit,
    )


def estimate_fuzzy(data: Dataset, config: PipelineConfig) -> RDEstimate:
    """Ratio estimate for fuzzy designs: outcome jump over treatment jump.

    Runs the two-step pipeline for the outcome and for the observed
    treatment with shared bandwidths, refits both on the union of the
    selected covariates so the final regressions share one design, and
    propagates the joint uncertainty of the two jump coefficients through
    the delta method.
    """
    if data.t_obs is None:
        raise ConfigError("fuzzy estimation needs an observed treatment column")
    kernel = config.kernel_spec
    rng = np.random.default_rng(config.seed)
    audit: dict = {}

    if config.b is not None:
        b = config.b
    else:
        b, pilot_diag = _pilot(data, kernel)
        audit["pilot"] = pilot_diag

    if isinstance(config.covariates, tuple):
        selected = tuple(sorted(int(k) for k in config.covariates))
        lam = float("nan")
        method = "subset"
    else:
        selected_y, lam, method = _select(data, b, config, rng, audit)
        t_data = data.with_outcome(data.t_obs)
        selected_t = _select_for_treatment(t_data, b, config, rng)
        selected = tuple(sorted(set(selected_y) | set(selected_t)))
        audit["selected_outcome"] = selected_y
        audit["selected_treatment"] = selected_t

    h = config.h if config.h is not None else final_bandwidth(data, selected, kernel, b)

    fit_y = fit_adjusted(data, selected, h, kernel)
    fit_t = fit_adjusted(data.with_outcome(data.t_obs), selected, h, kernel)
    tau_y, tau_t = fit_y.tau, fit_t.tau
    if abs(tau_t) < WEAK_JUMP_FLOOR:
        raise WeakJump(
            f"treatment jump {tau_t:.4f} is below {WEAK_JUMP_FLOOR}; "
            "the ratio estimate is unreliable"
        )
    var_y = _sandwich_block(fit_y, data, fit_y.residuals, fit_y.residuals)
    var_t = _sandwich_block(fit_y, data, fit_t.residuals, fit_t.residuals)
    cov_yt = _sandwich_block(fit_y, data, fit_y.residuals, fit_t.residuals)
    tau_f = tau_y / tau_t
    var_f = (var_y / tau_t**2 + tau_y**2 * var_t / tau_t**4
             - 2.0 * tau_y * cov_yt / tau_t**3)
    se = float(np.sqrt(max(var_f, 0.0)))
    lo, hi = confidence_interval(tau_f, se, config.ci_level)
    return RDEstimate(
        tau_hat=tau_f,
        se=se,
        ci_lower=lo,
        ci_upper=hi,
        ci_level=config.ci_level,
        h=float(h),
        b=float(b),
        lam=lam,
        lambda_method=method,
        selected=selected,
        n_eff=fit_y.n_eff,
        design="fuzzy",
        seed=config.seed,
        components={
            "tau_y": tau_y,
            "tau_t": tau_t,
            "var_y": var_y,
            "var_t": var_t,
            "cov_yt": cov_yt,
        },
        audit=audit,
    )


def _select_for_treatment(t_data: Dataset, b: float, config: PipelineConfig, rng):
    """Selection step with the treatment as outcome.

    Deterministic compliance makes the treatment a perfect function of the
    running-variable block, so the selection problem degenerates; in that
    case no covariate can explain residual variance and the set is empty.
    """
    from .local_linear import fit_baseline

    base = fit_baseline(t_data, b, config.kernel_spec)
    resid = base.residuals[base.in_bw]
    if float(np.max(np.abs(resid), initial=0.0)) < 1e-10:
        return ()
    try:
        selected, _, _ = _select(t_data, b, config, rng, {})
    except DegenerateCovariate:
        return ()
    return selected


def benjamini_hochberg(p_values: np.ndarray, q: float) -> np.ndarray:
    """Step-up rejection flags controlling the false discovery rate at q."""
    p_values = np.asarray(p_values, dtype=float)
    m = p_values.shape[0]
    order = np.argsort(p_values, kind="stable")
    thresholds = q * (np.arange(1, m + 1) / m)
    below = p_values[order] <= thresholds
    rejected = np.zeros(m, dtype=bool)
    if below.any():
        k_star = int(np.max(np.flatnonzero(below)))
        rejected[order[: k_star + 1]] = True
    return rejected


def balance_tests(data: Dataset, config: PipelineConfig, q: float,
                  subset=None, shared_bandwidth: bool = False,
                  threads: int = 1) -> BalanceReport:
    """Jump tests treating each covariate as the outcome.

    Each covariate gets a no-covariates local linear fit at its own plug-in
    bandwidth (or at the shared pilot bandwidth when ``shared_bandwidth``),
    a two-sided normal p-value, and a step-up multiplicity flag at level q.

    Parameters
    ----------
    subset : iterable of int, optional
        Restrict testing to these covariate indices (e.g. a selected set).
    """
    if data.p < 1:
        raise ConfigError("balance tests need at least one covariate")
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    kernel = config.kernel_spec
    indices = list(range(data.p)) if subset is None else sorted(int(k) for k in subset)
    shared_b = None
    if shared_bandwidth:
        shared_b = config.b if config.b is not None else _pilot(data, kernel)[0]

    def one(k):
        d_k = data.with_outcome(data.z[:, k])
        b_k = shared_b if shared_b is not None else _pilot(d_k, kernel)[0]
        fit = fit_adjusted(d_k, (), b_k, kernel)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            se = standard_error(fit, d_k, kernel, method=config.se_method)
        if se == 0.0:
            pval = 1.0 if fit.tau == 0.0 else 0.0
        else:
            pval = 2.0 * float(norm.sf(abs(fit.tau) / se))
        return fit.tau, se, pval

    if threads > 1:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=threads)(delayed(one)(k) for k in indices)
    else:
        results = [one(k) for k in indices]

    pvals = np.array([r[2] for r in results])
    rejected = benjamini_hochberg(pvals, q)
    rows = tuple(
        BalanceRow(index=k, jump=r[0], se=r[1], p_value=r[2], bh_rejected=bool(rej))
        for k, r, rej in zip(indices, results, rejected)
    )
    return BalanceReport(rows=rows, q=q, global_reject=bool(rejected.any()))
