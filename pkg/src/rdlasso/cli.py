"""Command line interface.

Subcommands: estimate, fuzzy, balance, simulate, tune.  Exit codes: 0 on
success, 1 on configuration errors, 2 on numerical failures.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, NumericalError, RdlassoError
from .inference import PipelineConfig, balance_tests, estimate_fuzzy, estimate_sharp
from .io import (
    RunConfig,
    format_balance,
    format_estimate,
    format_mc_summary,
    load_csv,
)
from .kernels import VALID_KERNELS
from .simulation import (
    DgpConfig,
    fixed_subset_estimator,
    lasso_estimator,
    optimal_covariate_estimator,
    run_monte_carlo,
)
from .tuning import TuningConfig


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the contract reserves 2 for
    # numerical failures, so remap
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _add_data_options(p):
    p.add_argument("--input", help="CSV file with a header row")
    p.add_argument("--outcome", help="outcome column name")
    p.add_argument("--running", help="running variable column name")
    p.add_argument("--treatment", help="observed treatment column (0/1)")
    p.add_argument("--covariates",
                   help="comma-separated covariate column names")
    p.add_argument("--covariate-prefix",
                   help="use every column starting with this prefix")
    p.add_argument("--cutoff", type=float, help="cutoff value (default 0)")


def _add_estimation_options(p):
    p.add_argument("--kernel", help=f"one of {', '.join(VALID_KERNELS)}")
    p.add_argument("--lambda-method", choices=["bch", "lv", "cv", "fixed", "none"],
                   help="penalty rule (default bch)")
    p.add_argument("--lambda", dest="lambda_value", type=float,
                   help="penalty value for --lambda-method fixed (inf allowed)")
    p.add_argument("--pilot-bandwidth", dest="b", type=float,
                   help="fixed selection bandwidth (skips the plug-in)")
    p.add_argument("--bandwidth", dest="h", type=float,
                   help="fixed final bandwidth (skips the plug-in)")
    p.add_argument("--level", dest="ci_level", type=float,
                   help="confidence level (default 0.95)")
    p.add_argument("--seed", type=int, help="seed for randomized rules")
    p.add_argument("--se", dest="se_method", choices=["plugin", "sandwich"],
                   help="standard error method (default plugin)")
    p.add_argument("--double-selection", action="store_true", default=None,
                   help="also select covariates predictive of treatment")
    p.add_argument("--format", dest="output_format",
                   choices=["text", "csv", "json"], help="output format")
    p.add_argument("--threads", type=int, help="worker threads (default 1)")
    p.add_argument("--config", help="JSON file with defaults for any option")


def build_parser():
    parser = _Parser(prog="rdlasso",
                     description="Regression discontinuity estimation with "
                                 "lasso-selected covariates")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, desc in [
        ("estimate", "sharp RD estimate from a CSV file"),
        ("fuzzy", "fuzzy RD ratio estimate from a CSV file"),
        ("balance", "per-covariate jump tests with FDR control"),
        ("tune", "report chosen (b, lambda, h) without estimating"),
    ]:
        p = sub.add_parser(name, help=desc, description=desc)
        _add_data_options(p)
        _add_estimation_options(p)
        if name == "balance":
            p.add_argument("--fdr-q", type=float, default=0.05,
                           help="FDR level (default 0.05)")
            p.add_argument("--selected-only", action="store_true",
                           help="test only the lasso-selected covariates")
            p.add_argument("--shared-bandwidth", action="store_true",
                           help="reuse one pilot bandwidth for every test")

    p = sub.add_parser("simulate", help="Monte Carlo coverage study",
                       description="Monte Carlo coverage study on the "
                                   "built-in design")
    p.add_argument("--reps", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variant", choices=["sparse", "nonsparse"], default="sparse")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--p", type=int, default=200)
    p.add_argument("--estimators", default="bch,lv,cv,none,fixed1,fixed50,optimal",
                   help="comma list: bch, lv, cv, none, fixedK, optimal")
    p.add_argument("--kernel", default="triangular")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--format", dest="output_format",
                   choices=["text", "csv", "json"], default="text")
    return parser


_RUN_DEFAULTS = RunConfig()


def _resolve_run_config(args) -> RunConfig:
    """CLI flags beat config-file values beat defaults."""
    file_values = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            file_values = json.load(fh)
        bad = set(file_values) - set(vars(_RUN_DEFAULTS))
        if bad:
            raise ConfigError(f"unknown config file keys: {', '.join(sorted(bad))}")
    values = {}
    for name in vars(_RUN_DEFAULTS):
        cli = getattr(args, name, None)
        if cli is not None:
            values[name] = cli
        elif name in file_values:
            values[name] = file_values[name]
    if "covariates" in values and isinstance(values["covariates"], str):
        values["covariates"] = tuple(
            s.strip() for s in values["covariates"].split(",") if s.strip()
        )
    cfg = RunConfig(**values)
    if not cfg.input:
        raise ConfigError("--input is required")
    if not cfg.outcome or not cfg.running:
        raise ConfigError("--outcome and --running are required")
    return cfg


def _pipeline_config(run: RunConfig) -> PipelineConfig:
    try:
        return PipelineConfig(
            kernel=run.kernel,
            lambda_method=run.lambda_method,
            lambda_value=run.lambda_value,
            b=run.b,
            h=run.h,
            ci_level=run.ci_level,
            se_method=run.se_method,
            use_double_selection=run.double_selection,
            tuning=TuningConfig(rng_seed=run.seed),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _cmd_estimate(args):
    run = _resolve_run_config(args)
    config = _pipeline_config(run)
    data = load_csv(run.input, run)
    est = estimate_sharp(data, config)
    print(format_estimate(est, run.output_format))


def _cmd_fuzzy(args):
    run = _resolve_run_config(args)
    if not run.treatment:
        raise ConfigError("fuzzy estimation requires --treatment")
    config = _pipeline_config(run)
    data = load_csv(run.input, run)
    est = estimate_fuzzy(data, config)
    print(format_estimate(est, run.output_format))


def _cmd_balance(args):
    run = _resolve_run_config(args)
    config = _pipeline_config(run)
    data = load_csv(run.input, run)
    subset = None
    if args.selected_only:
        est = estimate_sharp(data, config)
        subset = est.selected
    report = balance_tests(data, config, args.fdr_q, subset=subset,
                           shared_bandwidth=args.shared_bandwidth,
                           threads=run.threads)
    print(format_balance(report, run.output_format))


def _cmd_tune(args):
    run = _resolve_run_config(args)
    config = _pipeline_config(run)
    data = load_csv(run.input, run)
    from .inference import _select
    from .tuning import _pilot, final_bandwidth
    import numpy as np

    kernel = config.kernel_spec
    b = run.b if run.b is not None else _pilot(data, kernel)[0]
    rng = np.random.default_rng(config.seed)
    selected, lam, method = _select(data, b, config, rng, {})
    h = run.h if run.h is not None else final_bandwidth(data, selected, kernel, b)
    rec = {"b": b, "lambda": lam, "lambda_method": method, "h": h,
           "n_selected": len(selected), "seed": config.seed}
    if run.output_format == "json":
        print(json.dumps(rec, indent=2))
    elif run.output_format == "csv":
        print(",".join(rec))
        print(",".join(repr(v) if isinstance(v, float) else str(v)
                       for v in rec.values()))
    else:
        for k, v in rec.items():
            print(f"{k:14}{v:.6g}" if isinstance(v, float) else f"{k:14}{v}")


def _parse_estimator_list(text: str, kernel: str):
    specs = []
    for token in (t.strip() for t in text.split(",") if t.strip()):
        if token in ("bch", "lv", "cv"):
            specs.append(lasso_estimator(token, kernel=kernel))
        elif token == "none":
            specs.append(fixed_subset_estimator(0, kernel=kernel))
        elif token == "optimal":
            specs.append(optimal_covariate_estimator(kernel=kernel))
        elif token.startswith("fixed"):
            try:
                k = int(token[5:])
            except ValueError:
                raise ConfigError(f"bad estimator token {token!r}") from None
            specs.append(fixed_subset_estimator(k, kernel=kernel))
        else:
            raise ConfigError(f"unknown estimator {token!r}")
    if not specs:
        raise ConfigError("estimator list is empty")
    return specs


def _cmd_simulate(args):
    specs = _parse_estimator_list(args.estimators, args.kernel)
    cfg = DgpConfig(n=args.n, p=args.p, variant=args.variant)
    summary = run_monte_carlo(cfg, args.reps, specs, master_seed=args.seed,
                              threads=args.threads)
    print(format_mc_summary(summary, args.output_format))


_COMMANDS = {
    "estimate": _cmd_estimate,
    "fuzzy": _cmd_fuzzy,
    "balance": _cmd_balance,
    "tune": _cmd_tune,
    "simulate": _cmd_simulate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _COMMANDS[args.command](args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except RdlassoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
