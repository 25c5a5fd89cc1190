"""Evaluation, latency benchmarking, and plotting.

The CLI is a thin wrapper around these functions so that tests can
exercise the logic directly (including with stub predictors).
"""

import csv
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import DataFormatError
from .features import decode_cov
from .secrecy import secrecy_rate
from .solvers import SolverConfig, gsvd_precode, solve_covariance_pg

# Element names of the covariance vector, in codec order.
COV_NAMES = ("q11", "q22", "q33", "q12", "q23", "q13")

# A trained imitator should not beat its teacher by more than noise;
# past this margin the report is suspect and a warning is emitted.
DL_OVER_ORACLE_ALARM = 0.05


@dataclass
class EvalReport:
    mse: np.ndarray                 # per element, codec order
    mean_rate_dl: float
    mean_rate_oracle: float
    mean_rate_gsvd: float
    latency_ms_dl: float
    latency_ms_oracle: float
    latency_ms_gsvd: float
    sample_count: int
    config: dict = field(default_factory=dict)


def evaluate_records(records, predict, cfg: SolverConfig | None = None,
                     time_methods: bool = True, warn=None):
    """Score a predictor over labeled records.

    predict maps a (batch, 72) feature matrix to raw (batch, 6) outputs.
    MSE is computed on those raw outputs against the stored labels; the
    decoded-and-projected covariances give the DL rates. Oracle rates
    come from the stored labels; GSVD rates are recomputed. Latencies
    (per realization, ms) time the DL batch, fresh GSVD solves, and
    fresh oracle solves; pass time_methods=False to skip them.

    Returns (EvalReport, rows) where rows carry per-record values for
    report files and plots.
    """
    cfg = cfg or SolverConfig()
    records = list(records)
    if not records:
        raise DataFormatError("no records to evaluate")
    n = len(records)
    V = np.stack([r.v for r in records])
    labels = np.stack([r.q for r in records])

    t0 = time.perf_counter()
    pred = np.asarray(predict(V), dtype=np.float64)
    dl_rates = np.empty(n)
    for i, rec in enumerate(records):
        cov = decode_cov(pred[i], rec.P)
        dl_rates[i] = secrecy_rate(rec.channel, cov)
    dl_ms = (time.perf_counter() - t0) / n * 1e3

    if pred.shape != labels.shape:
        raise DataFormatError(
            f"predictor returned shape {pred.shape}, labels are {labels.shape}"
        )
    mse = np.mean((pred - labels) ** 2, axis=0)

    gsvd_rates = np.empty(n)
    t0 = time.perf_counter()
    for i, rec in enumerate(records):
        _cov, gsvd_rates[i] = gsvd_precode(rec.channel, rec.P, cfg)
    gsvd_ms = (time.perf_counter() - t0) / n * 1e3

    oracle_rates = np.array([r.rate for r in records])
    if time_methods:
        t0 = time.perf_counter()
        for rec in records:
            solve_covariance_pg(rec.channel, rec.P, cfg)
        oracle_ms = (time.perf_counter() - t0) / n * 1e3
    else:
        oracle_ms = float("nan")

    report = EvalReport(
        mse=mse,
        mean_rate_dl=float(dl_rates.mean()),
        mean_rate_oracle=float(oracle_rates.mean()),
        mean_rate_gsvd=float(gsvd_rates.mean()),
        latency_ms_dl=dl_ms,
        latency_ms_oracle=oracle_ms,
        latency_ms_gsvd=gsvd_ms,
        sample_count=n,
        config={"backend": _backend.name()},
    )
    if report.mean_rate_dl > report.mean_rate_oracle + DL_OVER_ORACLE_ALARM:
        msg = (
            f"warning: DL mean rate {report.mean_rate_dl:.4f} exceeds oracle "
            f"{report.mean_rate_oracle:.4f} by more than {DL_OVER_ORACLE_ALARM}; "
            "labels and predictions are probably mismatched"
        )
        (warn or (lambda m: print(m, file=sys.stderr)))(msg)
    rows = []
    for i, rec in enumerate(records):
        row = {
            "index": i,
            "rate_dl": dl_rates[i],
            "rate_oracle": oracle_rates[i],
            "rate_gsvd": gsvd_rates[i],
        }
        for j, name in enumerate(COV_NAMES):
            row[f"pred_{name}"] = pred[i, j]
        for j, name in enumerate(COV_NAMES):
            row[f"true_{name}"] = labels[i, j]
        rows.append(row)
    return report, rows


def write_rows_csv(rows, path):
    if not rows:
        raise DataFormatError("refusing to write an empty report")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v
                             for k, v in row.items()})


def read_rows_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for raw in reader:
            row = {}
            for key, val in raw.items():
                if key == "index":
                    row[key] = int(val)
                else:
                    row[key] = float(val)
            rows.append(row)
    if not rows:
        raise DataFormatError(f"{path} contains no data rows")
    return rows


def format_report(report: EvalReport) -> str:
    lines = [
        f"samples:            {report.sample_count}",
        "per-element MSE (raw outputs vs labels):",
    ]
    for name, val in zip(COV_NAMES, report.mse):
        lines.append(f"  {name}: {val:.6f}")
    lines += [
        f"mean secrecy rate DL:     {report.mean_rate_dl:.4f} bits",
        f"mean secrecy rate oracle: {report.mean_rate_oracle:.4f} bits",
        f"mean secrecy rate GSVD:   {report.mean_rate_gsvd:.4f} bits",
        f"latency/realization DL:     {report.latency_ms_dl:.4f} ms",
        f"latency/realization oracle: {report.latency_ms_oracle:.4f} ms",
        f"latency/realization GSVD:   {report.latency_ms_gsvd:.4f} ms",
        f"backend: {report.config.get('backend', '?')}",
    ]
    return "\n".join(lines)


def write_summary_csv(report: EvalReport, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["samples"] + [f"mse_{n}" for n in COV_NAMES]
            + ["mean_rate_dl", "mean_rate_oracle", "mean_rate_gsvd",
               "latency_ms_dl", "latency_ms_oracle", "latency_ms_gsvd", "backend"]
        )
        writer.writerow(
            [report.sample_count] + [repr(float(m)) for m in report.mse]
            + [repr(report.mean_rate_dl), repr(report.mean_rate_oracle),
               repr(report.mean_rate_gsvd), repr(report.latency_ms_dl),
               repr(report.latency_ms_oracle), repr(report.latency_ms_gsvd),
               report.config.get("backend", "?")]
        )


def _single_threaded_blas():
    try:
        from threadpoolctl import threadpool_limits
        return threadpool_limits(limits=1)
    except ImportError:  # timing still works, just less controlled
        from contextlib import nullcontext
        return nullcontext()


def bench_methods(records, predict, cfg: SolverConfig | None = None,
                  repeats: int = 5, batch: int = 100):
    """Median-of-means per-realization latency for the three methods.

    Each repeat times one batch of `batch` realizations per method (the
    DL pass is vectorized over the batch, matching how a trained network
    is deployed; the solvers run per realization). A warm-up pass is
    excluded. BLAS threading is pinned to one thread for timing validity.

    Returns a list of row dicts (method, ms_per_realization, ratio_vs_dl).
    """
    cfg = cfg or SolverConfig()
    records = list(records)
    if not records:
        raise DataFormatError("no records to benchmark")
    if len(records) < batch:
        records = (records * (batch // len(records) + 1))[:batch]
    chans = [r.channel for r in records[:batch]]
    P = records[0].P
    V = np.stack([r.v for r in records[:batch]])

    def run_dl():
        pred = np.asarray(predict(V))
        for i, ch in enumerate(chans):
            decode_cov(pred[i], P)

    def run_oracle():
        for ch in chans:
            solve_covariance_pg(ch, P, cfg)

    def run_gsvd():
        for ch in chans:
            gsvd_precode(ch, P, cfg)

    timings = {"dl": [], "oracle": [], "gsvd": []}
    with _single_threaded_blas():
        for name, fn in (("dl", run_dl), ("oracle", run_oracle), ("gsvd", run_gsvd)):
            fn()  # warm-up, excluded
            for _ in range(repeats):
                t0 = time.perf_counter()
                fn()
                timings[name].append((time.perf_counter() - t0) / batch * 1e3)
    med = {k: float(np.median(v)) for k, v in timings.items()}
    return [
        {"method": "dl", "ms_per_realization": med["dl"], "ratio_vs_dl": 1.0},
        {"method": "gsvd", "ms_per_realization": med["gsvd"],
         "ratio_vs_dl": med["gsvd"] / med["dl"]},
        {"method": "oracle", "ms_per_realization": med["oracle"],
         "ratio_vs_dl": med["oracle"] / med["dl"]},
    ]


def make_plots(rows, out_dir, prefix="report"):
    """Render the rate-comparison trace and the predicted-vs-expected
    scatter from per-record report rows; returns the written paths."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from pathlib import Path
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    idx = [r["index"] for r in rows]
    fig, ax = plt.subplots(figsize=(9, 4.5))
    for key, label, style in (
        ("rate_oracle", "iterative solver", "-"),
        ("rate_dl", "network", "--"),
        ("rate_gsvd", "closed-form baseline", ":"),
    ):
        ax.plot(idx, [r[key] for r in rows], style, linewidth=0.9, label=label)
    ax.set_xlabel("channel realization")
    ax.set_ylabel("secrecy rate (bits/use)")
    ax.legend()
    ax.grid(True, alpha=0.4)
    rate_path = out_dir / f"{prefix}_rates.png"
    fig.savefig(rate_path, dpi=130, bbox_inches="tight")
    plt.close(fig)

    fig, axes = plt.subplots(2, 3, figsize=(11, 7))
    for ax, name in zip(axes.ravel(), COV_NAMES):
        truth = [r[f"true_{name}"] for r in rows]
        pred = [r[f"pred_{name}"] for r in rows]
        ax.scatter(truth, pred, s=4, alpha=0.4)
        lo = min(min(truth), min(pred))
        hi = max(max(truth), max(pred))
        ax.plot([lo, hi], [lo, hi], "k-", linewidth=0.8)
        ax.set_title(name)
        ax.set_xlabel("expected")
        ax.set_ylabel("estimated")
    fig.tight_layout()
    scatter_path = out_dir / f"{prefix}_elements.png"
    fig.savefig(scatter_path, dpi=130, bbox_inches="tight")
    plt.close(fig)
    return [rate_path, scatter_path]
