"""Built-in data generating processes and a coverage study harness.

The benchmark design draws the running variable from a rescaled beta
distribution, couples 200 covariates to the regression noise, and adds a
jump of 0.02 at the cutoff on top of quintic conditional means.  The
``sparse`` variant makes covariate relevance decay quadratically; the
``nonsparse`` variant spreads the same total covariate signal evenly over
the first 50 covariates.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset
from .errors import NotPositiveDefinite, NumericalError
from .inference import PipelineConfig, estimate_sharp
from .tuning import TuningConfig

# conditional mean polynomials, low degree first
_POLY_CONTROL = (0.36, 0.96, 5.47, 15.28, 15.87, 5.14)
_POLY_TREATED = (0.38, 0.62, -2.84, 8.42, -10.24, 4.31)
_COV_LOAD_CONTROL = 0.22
_COV_LOAD_TREATED = 0.28
ALPHA_NONSPARSE = 0.3883765
TAU_TRUE = _POLY_TREATED[0] - _POLY_CONTROL[0]  # 0.02


@dataclass(frozen=True)
class DgpConfig:
    """Parameters of the benchmark design.

    The joint distribution of (noise, covariates) is normal with
    Cov(eps, Z_k) = 0.8 sqrt(6) sigma_eps^2 / (pi k) and Var(Z) diagonal;
    positive definiteness of that joint covariance is checked on
    construction.
    """

    n: int = 1000
    p: int = 200
    variant: str = "sparse"
    sigma_eps: float = 0.1295
    sigma_z: float = 0.1353
    seed: int = 0

    def __post_init__(self):
        if self.variant not in ("sparse", "nonsparse"):
            raise ValueError("variant must be 'sparse' or 'nonsparse'")
        if self.n < 1 or self.p < 0:
            raise ValueError("need n >= 1 and p >= 0")
        if self.conditional_noise_var() <= 0:
            raise NotPositiveDefinite(
                "joint covariance of (noise, covariates) is not positive definite"
            )

    def noise_covariate_cov(self) -> np.ndarray:
        k = np.arange(1, self.p + 1, dtype=float)
        return 0.8 * np.sqrt(6.0) * self.sigma_eps**2 / (np.pi * k)

    def covariate_coefficients(self) -> np.ndarray:
        k = np.arange(1, self.p + 1, dtype=float)
        if self.variant == "sparse":
            return 2.0 / k**2
        alpha = np.zeros(self.p)
        alpha[: min(50, self.p)] = ALPHA_NONSPARSE
        return alpha

    def conditional_noise_var(self) -> float:
        # Schur complement of the diagonal covariate block
        v = self.noise_covariate_cov()
        return self.sigma_eps**2 - float(v @ v) / self.sigma_z**2


def generate(cfg: DgpConfig, rep_seed: int) -> Dataset:
    """Draw one sample; deterministic in (cfg.seed, rep_seed).

    Uses a counter-based generator so replication streams are independent
    of evaluation order, a two-gamma construction for the beta-distributed
    running variable, and the exact factorization of the joint normal for
    (noise, covariates).
    """
    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence((cfg.seed, rep_seed)))
    )
    g1 = rng.gamma(2.0, 1.0, size=cfg.n)
    g2 = rng.gamma(4.0, 1.0, size=cfg.n)
    x = 2.0 * g1 / (g1 + g2) - 1.0

    z = cfg.sigma_z * rng.standard_normal((cfg.n, cfg.p))
    v = cfg.noise_covariate_cov()
    eps_mean = (z @ v) / cfg.sigma_z**2 if cfg.p else np.zeros(cfg.n)
    eps = eps_mean + np.sqrt(cfg.conditional_noise_var()) * rng.standard_normal(cfg.n)

    treated = x >= 0
    mean = np.where(treated,
                    np.polynomial.polynomial.polyval(x, _POLY_TREATED),
                    np.polynomial.polynomial.polyval(x, _POLY_CONTROL))
    alpha = cfg.covariate_coefficients()
    cov_term = z @ alpha if cfg.p else np.zeros(cfg.n)
    y = eps + mean + np.where(treated, _COV_LOAD_TREATED, _COV_LOAD_CONTROL) * cov_term
    return Dataset(y=y, x=x, z=z, meta={"tau_true": TAU_TRUE})


@dataclass(frozen=True)
class EstimatorSpec:
    """One labelled pipeline configuration for the harness.

    ``covariate_mode`` is "given" (use the sample's covariates as-is) or
    "optimal" (replace them by the single oracle combination Z @ alpha,
    which the harness can build because it knows the design).
    """

    label: str
    config: PipelineConfig
    covariate_mode: str = "given"


def lasso_estimator(method: str, label: str | None = None, **kwargs) -> EstimatorSpec:
    cfg = PipelineConfig(lambda_method=method, **kwargs)
    return EstimatorSpec(label=label or f"Lasso ({method.upper()})", config=cfg)


def fixed_subset_estimator(k: int, **kwargs) -> EstimatorSpec:
    label = "Fixed: No Covariates" if k == 0 else f"Fixed: First {k}"
    cfg = PipelineConfig(covariates=tuple(range(k)), **kwargs)
    return EstimatorSpec(label=label, config=cfg)


def optimal_covariate_estimator(**kwargs) -> EstimatorSpec:
    cfg = PipelineConfig(covariates=(0,), **kwargs)
    return EstimatorSpec(label="Fixed: Optimal Covariate", config=cfg,
                         covariate_mode="optimal")


def standard_estimators(methods=("cv", "bch", "lv"), fixed=(0, 1, 10, 30, 50),
                        optimal=True, **kwargs) -> list:
    """The usual comparison battery: penalized rows, fixed subsets, oracle."""
    specs = [lasso_estimator(m, **kwargs) for m in methods]
    specs += [fixed_subset_estimator(k, **kwargs) for k in fixed]
    if optimal:
        specs.append(optimal_covariate_estimator(**kwargs))
    return specs


@dataclass(frozen=True)
class McRow:
    label: str
    n_cov_avg: float
    bias: float
    sd: float
    avg_se: float
    ci_length_avg: float
    coverage_pct: float
    n_ok: int
    n_failed: int


@dataclass(frozen=True)
class McSummary:
    """Per-estimator Monte Carlo summary over shared replications."""

    rows: dict
    reps: int
    seed: int
    tau_true: float
    elapsed_sec: float = field(default=0.0, compare=False)

    def labels(self):
        return list(self.rows)


def _rep_seed_for(master_seed: int, rep: int, slot: int) -> int:
    ss = np.random.SeedSequence((master_seed, rep, slot))
    return int(ss.generate_state(1)[0])


def _run_one_rep(cfg: DgpConfig, estimators, master_seed: int, rep: int):
    data = generate(replace(cfg, seed=master_seed), rep)
    alpha = cfg.covariate_coefficients()
    optimal_data = None
    out = []
    for j, spec in enumerate(estimators):
        if spec.covariate_mode == "optimal":
            if optimal_data is None:
                optimal_data = data.with_covariates((data.z @ alpha)[:, None])
            d = optimal_data
        else:
            d = data
        tuning = replace(spec.config.tuning,
                         rng_seed=_rep_seed_for(master_seed, rep, j))
        config = replace(spec.config, tuning=tuning)
        try:
            est = estimate_sharp(d, config)
        except NumericalError as exc:
            out.append(("fail", type(exc).__name__))
            continue
        out.append((
            "ok",
            (est.tau_hat, est.se, est.ci_upper - est.ci_lower,
             est.ci_lower <= data.meta["tau_true"] <= est.ci_upper,
             est.n_selected),
        ))
    return out


def run_monte_carlo(cfg: DgpConfig, reps: int, estimators, master_seed: int,
                    threads: int = 1) -> McSummary:
    """Replicate every estimator on shared draws and tabulate the results.

    Failed replications (numerical errors from any stage) are counted per
    estimator and excluded from its averages, never retried.  Results are
    bit-identical for a given master seed regardless of ``threads``.
    """
    import time

    if reps < 1:
        raise ValueError("need at least one replication")
    estimators = list(estimators)
    t0 = time.perf_counter()
    if threads > 1:
        from joblib import Parallel, delayed

        per_rep = Parallel(n_jobs=threads)(
            delayed(_run_one_rep)(cfg, estimators, master_seed, r)
            for r in range(reps)
        )
    else:
        per_rep = [_run_one_rep(cfg, estimators, master_seed, r)
                   for r in range(reps)]
    elapsed = time.perf_counter() - t0

    rows = {}
    for j, spec in enumerate(estimators):
        oks = [r[j][1] for r in per_rep if r[j][0] == "ok"]
        n_fail = reps - len(oks)
        if oks:
            arr = np.array([o[:3] for o in oks], dtype=float)
            tau, se, ci_len = arr[:, 0], arr[:, 1], arr[:, 2]
            cover = np.array([o[3] for o in oks], dtype=float)
            n_sel = np.array([o[4] for o in oks], dtype=float)
            row = McRow(
                label=spec.label,
                n_cov_avg=float(n_sel.mean()),
                bias=float(tau.mean() - TAU_TRUE),
                sd=float(tau.std(ddof=1)) if len(oks) > 1 else 0.0,
                avg_se=float(se.mean()),
                ci_length_avg=float(ci_len.mean()),
                coverage_pct=100.0 * float(cover.mean()),
                n_ok=len(oks),
                n_failed=n_fail,
            )
        else:
            row = McRow(label=spec.label, n_cov_avg=np.nan, bias=np.nan,
                        sd=np.nan, avg_se=np.nan, ci_length_avg=np.nan,
                        coverage_pct=np.nan, n_ok=0, n_failed=n_fail)
        rows[spec.label] = row
    return McSummary(rows=rows, reps=reps, seed=master_seed,
                     tau_true=TAU_TRUE, elapsed_sec=elapsed)
