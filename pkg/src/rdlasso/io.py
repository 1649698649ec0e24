"""CSV ingestion and report writers."""

from __future__ import annotations

import csv
import io as _io
import json
from dataclasses import dataclass, field

from .data import Dataset
from .errors import ConfigError, EmptyAfterFiltering, MissingColumn, NonNumericCell
from .inference import BalanceReport, RDEstimate
from .simulation import McSummary

MISSING_TOKENS = {"", "na", "nan", "null", "n/a", "."}


@dataclass(frozen=True)
class RunConfig:
    """Column mapping and estimation options resolved from CLI/config file."""

    input: str = ""
    outcome: str = ""
    running: str = ""
    treatment: str | None = None
    covariates: tuple = ()  # explicit column names
    covariate_prefix: str | None = None
    cutoff: float = 0.0
    kernel: str = "triangular"
    lambda_method: str = "bch"
    lambda_value: float | None = None
    b: float | None = None
    h: float | None = None
    ci_level: float = 0.95
    seed: int = 0
    se_method: str = "plugin"
    output_format: str = "text"
    threads: int = 1
    double_selection: bool = False

    def __post_init__(self):
        if not (0 < self.ci_level < 1):
            raise ConfigError("ci level must lie in (0, 1)")
        if self.output_format not in ("text", "csv", "json"):
            raise ConfigError("output format must be text, csv or json")
        if self.cutoff != self.cutoff or self.cutoff in (float("inf"), float("-inf")):
            raise ConfigError("cutoff must be finite")


def load_csv(path: str, cfg: RunConfig) -> Dataset:
    """Parse a headered CSV into a Dataset.

    Rows with a missing value in any mapped column are dropped (the count
    lands in ``meta['n_dropped']``); the running variable is shifted by the
    cutoff.  Cells that are neither numeric nor a missing-value token raise
    NonNumericCell with the offending row and column.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyAfterFiltering(f"{path} is empty") from None
        header = [h.strip() for h in header]
        col_index = {name: i for i, name in enumerate(header)}

        def require(name):
            if name not in col_index:
                raise MissingColumn(
                    f"column {name!r} not found; file has: {', '.join(header)}"
                )
            return col_index[name]

        iy = require(cfg.outcome)
        ix = require(cfg.running)
        it = require(cfg.treatment) if cfg.treatment else None
        if cfg.covariates:
            cov_names = list(cfg.covariates)
        elif cfg.covariate_prefix:
            cov_names = [h for h in header if h.startswith(cfg.covariate_prefix)]
        else:
            cov_names = []
        icov = [require(name) for name in cov_names]

        mapped = [(cfg.outcome, iy), (cfg.running, ix)]
        if it is not None:
            mapped.append((cfg.treatment, it))
        mapped += list(zip(cov_names, icov))

        ys, xs, ts, zs = [], [], [], []
        n_dropped = 0
        for row_no, row in enumerate(reader, start=2):
            values = {}
            missing = False
            for name, idx in mapped:
                raw = row[idx].strip() if idx < len(row) else ""
                if raw.lower() in MISSING_TOKENS:
                    missing = True
                    break
                try:
                    values[name] = float(raw)
                except ValueError:
                    raise NonNumericCell(
                        f"row {row_no}, column {name!r}: cannot parse {raw!r}"
                    ) from None
            if missing:
                n_dropped += 1
                continue
            ys.append(values[cfg.outcome])
            xs.append(values[cfg.running] - cfg.cutoff)
            if it is not None:
                t = values[cfg.treatment]
                if t not in (0.0, 1.0):
                    raise ConfigError(
                        f"row {row_no}: treatment column must be 0/1, got {t!r}"
                    )
                ts.append(t)
            zs.append([values[name] for name in cov_names])

    if not ys:
        raise EmptyAfterFiltering("no complete rows left after filtering")
    import numpy as np

    z = np.array(zs, dtype=float) if cov_names else np.empty((len(ys), 0))
    return Dataset(
        y=np.array(ys),
        x=np.array(xs),
        z=z,
        t_obs=np.array(ts) if it is not None else None,
        meta={"n_dropped": n_dropped, "covariate_names": tuple(cov_names)},
    )


# ---------------------------------------------------------------------------
# writers: text uses 6 significant digits, csv/json full precision


def _t(v) -> str:
    return f"{v:.6g}"


def _full(v) -> str:
    return repr(float(v))


def format_estimate(est: RDEstimate, fmt: str = "text") -> str:
    rec = est.to_record()
    extra = {"design": est.design, "ci_level": est.ci_level,
             "lambda_method": est.lambda_method, "seed": est.seed}
    if fmt == "json":
        return json.dumps({**rec, **extra}, indent=2)
    if fmt == "csv":
        buf = _io.StringIO()
        w = csv.writer(buf)
        keys = list(rec) + list(extra)
        w.writerow(keys)
        row = [
            _full(v) if isinstance(v, float) else v
            for v in [*rec.values(), *extra.values()]
        ]
        w.writerow(row)
        return buf.getvalue().rstrip("\n")
    lines = [
        f"design        {est.design}",
        f"tau_hat       {_t(est.tau_hat)}",
        f"se            {_t(est.se)}",
        f"ci ({est.ci_level:.0%})      [{_t(est.ci_lower)}, {_t(est.ci_upper)}]",
        f"bandwidth h   {_t(est.h)}",
        f"bandwidth b   {_t(est.b)}",
        f"lambda        {_t(est.lam)} ({est.lambda_method})",
        f"n_selected    {est.n_selected}",
        f"selected      {' '.join(str(k) for k in est.selected) or '-'}",
        f"n_eff         {est.n_eff}",
        f"seed          {est.seed}",
    ]
    if est.components:
        c = est.components
        lines.insert(3, f"tau_y / tau_t {_t(c['tau_y'])} / {_t(c['tau_t'])}")
    return "\n".join(lines)


def format_balance(report: BalanceReport, fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps({
            "q": report.q,
            "global_reject": report.global_reject,
            "rows": [vars(r) for r in report.rows],
        }, indent=2)
    header = ["index", "jump", "se", "p_value", "bh_rejected"]
    if fmt == "csv":
        buf = _io.StringIO()
        w = csv.writer(buf)
        w.writerow(header)
        for r in report.rows:
            w.writerow([r.index, _full(r.jump), _full(r.se), _full(r.p_value),
                        int(r.bh_rejected)])
        return buf.getvalue().rstrip("\n")
    widths = (6, 12, 12, 12, 11)
    out = ["".join(h.ljust(w) for h, w in zip(header, widths))]
    for r in report.rows:
        cells = [str(r.index), _t(r.jump), _t(r.se), _t(r.p_value),
                 "yes" if r.bh_rejected else "no"]
        out.append("".join(c.ljust(w) for c, w in zip(cells, widths)))
    out.append(f"global reject at q={report.q:g}: "
               f"{'yes' if report.global_reject else 'no'}")
    return "\n".join(out)


MC_COLUMNS = ("estimator", "n_cov", "bias", "sd", "avg_se", "ci_length", "coverage")


def format_mc_summary(summary: McSummary, fmt: str = "text") -> str:
    rows = [summary.rows[label] for label in summary.labels()]
    if fmt == "json":
        return json.dumps({
            "reps": summary.reps,
            "seed": summary.seed,
            "tau_true": summary.tau_true,
            "rows": [vars(r) for r in rows],
        }, indent=2)
    if fmt == "csv":
        buf = _io.StringIO()
        w = csv.writer(buf)
        w.writerow(MC_COLUMNS + ("n_ok", "n_failed"))
        for r in rows:
            w.writerow([r.label, _full(r.n_cov_avg), _full(r.bias), _full(r.sd),
                        _full(r.avg_se), _full(r.ci_length_avg),
                        _full(r.coverage_pct), r.n_ok, r.n_failed])
        return buf.getvalue().rstrip("\n")
    head = ("Estimator", "#Cov.", "Bias", "SD", "Avg. SE", "CI Length", "Coverage")
    widths = [max(len(h), 9) for h in head]
    widths[0] = max(len(r.label) for r in rows) + 2 if rows else 24
    lines = ["".join(h.ljust(w) for h, w in zip(head, widths))]
    for r in rows:
        cells = (r.label, f"{r.n_cov_avg:.1f}", f"{r.bias:.4f}", f"{r.sd:.4f}",
                 f"{r.avg_se:.4f}", f"{r.ci_length_avg:.4f}",
                 f"{r.coverage_pct:.1f}")
        lines.append("".join(c.ljust(w) for c, w in zip(cells, widths)))
    failed = {r.label: r.n_failed for r in rows if r.n_failed}
    lines.append(f"replications: {summary.reps}   seed: {summary.seed}   "
                 f"true jump: {summary.tau_true:g}")
    if failed:
        lines.append(f"failed replications: {failed}")
    return "\n".join(lines)
