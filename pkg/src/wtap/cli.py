"""Command-line front end: gen, train, eval, bench, plot.

Exit codes: 0 success, 1 usage error, 2 I/O or file-format error,
3 contract/dimension error. Relative paths are resolved under
$WTAP_DATA_DIR when it is set.
"""

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from . import _backend, dataset, harness, network
from .errors import ContractError, DataFormatError, ShapeError
from .solvers import SolverConfig


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _data_dir():
    return os.environ.get("WTAP_DATA_DIR", "")


def _resolve(path):
    if path is None:
        return None
    p = Path(path)
    base = _data_dir()
    if base and not p.is_absolute():
        return Path(base) / p
    return p


def _add_common(parser, prefix=""):
    # distinct dests keep subparser defaults from clobbering globals
    parser.add_argument("--seed", dest=f"{prefix}seed", type=int, default=None,
                        help="RNG seed (default 0)")
    parser.add_argument("--threads", dest=f"{prefix}threads", type=int, default=None,
                        help="worker processes for data generation (default 1)")
    parser.add_argument("--verbose", dest=f"{prefix}verbose", action="store_true",
                        default=None, help="progress chatter on stderr")


def _merged(args, name, fallback):
    val = getattr(args, name, None)
    if val is None:
        val = getattr(args, f"global_{name}", None)
    return fallback if val is None else val


def build_parser():
    parser = _Parser(prog="wtap", description=__doc__)
    _add_common(parser, prefix="global_")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("gen", help="generate or cascade a dataset")
    _add_common(p)
    p.add_argument("--nt", type=int, default=3)
    p.add_argument("--nr", type=int)
    p.add_argument("--ne", type=int)
    p.add_argument("--count", type=int)
    p.add_argument("--power", type=float, default=20.0)
    p.add_argument("--cascade", nargs=2, metavar=("A", "B"),
                   help="cascade two existing dataset files instead of sampling")
    p.add_argument("--out", required=True)
    p.add_argument("--export-csv", dest="export_csv", default=None,
                   help="also dump the records to this CSV file")

    p = sub.add_parser("train", help="train a network on a dataset")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--variant", choices=("deepnet", "deepernet"), default="deepnet")
    p.add_argument("--batch", type=int, default=2000)
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--steps-per-epoch", type=int, default=None,
                   help="fix the schedule's epoch length in optimizer steps "
                        "(default: one pass over the data)")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--loss-csv", default=None, help="per-epoch loss CSV")

    p = sub.add_parser("eval", help="compare a checkpoint against a test set")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="per-realization report CSV")
    p.add_argument("--summary-csv", default=None)
    p.add_argument("--no-timing", action="store_true",
                   help="skip the latency columns (faster)")

    p = sub.add_parser("bench", help="per-realization latency of the three methods")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="latency table CSV")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--batch", type=int, default=100)

    p = sub.add_parser("plot", help="render figures from an eval report CSV")
    _add_common(p)
    p.add_argument("--report", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--prefix", default="report")
    return parser


def _progress_printer(verbose, label):
    if not verbose:
        return None

    def show(done, total):
        if done % 2048 == 0 or done == total:
            print(f"{label}: {done}/{total}", file=sys.stderr)

    return show


def _cmd_gen(args):
    seed = _merged(args, "seed", 0)
    threads = _merged(args, "threads", 1)
    verbose = bool(_merged(args, "verbose", False))
    out = _resolve(args.out)
    if args.cascade:
        a, b = (_resolve(x) for x in args.cascade)
        header = dataset.cascade_sets(a, b, seed, out)
    else:
        missing = [f for f in ("nr", "ne", "count") if getattr(args, f) is None]
        if missing:
            raise _UsageError(
                "wtap gen: --nr, --ne and --count are required unless --cascade is used"
            )
        header = dataset.generate_set(
            out, args.nt, args.nr, args.ne, args.count, args.power, seed,
            workers=threads, progress=_progress_printer(verbose, "labeling"),
        )
    print(f"wrote {header.sample_count} records to {out} "
          f"(n_t={header.n_t}, n_r={header.n_r}, n_e={header.n_e}, P={header.P})")
    if args.export_csv:
        dataset.export_csv(out, _resolve(args.export_csv))
        print(f"exported CSV to {_resolve(args.export_csv)}")
    return 0


def _cmd_train(args):
    seed = _merged(args, "seed", 0)
    verbose = bool(_merged(args, "verbose", False))
    data_path = _resolve(args.data)
    _header, _records, V, Qv, _rates = dataset.load_arrays(data_path)
    arch = (network.NetArchitecture.deepnet() if args.variant == "deepnet"
            else network.NetArchitecture.deepernet())
    schedule = network.TrainSchedule(
        batch_size=args.batch, epochs=args.epochs, seed=seed,
        steps_per_epoch=args.steps_per_epoch,
    )
    progress = None
    if verbose:
        def progress(epoch, loss, lr):
            print(f"epoch {epoch}: loss {loss:.6f} lr {lr:.6g}", file=sys.stderr)
    params, losses = network.train(arch, schedule, V, Qv, progress=progress)
    out = _resolve(args.out)
    network.save_checkpoint(params, out)
    print(f"wrote checkpoint {out} ({args.variant}, {params.step} steps, "
          f"final loss {losses[-1]:.6f})")
    if args.loss_csv:
        loss_path = _resolve(args.loss_csv)
        with open(loss_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "mean_loss", "lr"])
            for e, loss in enumerate(losses):
                writer.writerow([e, repr(float(loss)), repr(schedule.lr_at_epoch(e))])
        print(f"wrote loss history {loss_path}")
    return 0


def _predictor(checkpoint_path):
    params = network.load_checkpoint(checkpoint_path)
    return params, (lambda V: network.forward(params, V))


def _cmd_eval(args):
    params, predict = _predictor(_resolve(args.checkpoint))
    records = list(dataset.read_set(_resolve(args.data)))
    report, rows = harness.evaluate_records(
        records, predict, time_methods=not args.no_timing
    )
    harness.write_rows_csv(rows, _resolve(args.out))
    print(harness.format_report(report))
    print(f"wrote per-realization report {_resolve(args.out)}")
    if args.summary_csv:
        harness.write_summary_csv(report, _resolve(args.summary_csv))
        print(f"wrote summary {_resolve(args.summary_csv)}")
    return 0


def _cmd_bench(args):
    params, predict = _predictor(_resolve(args.checkpoint))
    records = list(dataset.read_set(_resolve(args.data)))
    rows = harness.bench_methods(records, predict,
                                 repeats=args.repeats, batch=args.batch)
    out = _resolve(args.out)
    with open(out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["method", "ms_per_realization",
                                                "ratio_vs_dl"])
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v
                             for k, v in row.items()})
    for row in rows:
        print(f"{row['method']:>7}: {row['ms_per_realization']:10.4f} ms/realization "
              f"({row['ratio_vs_dl']:.1f}x DL)")
    print(f"wrote latency table {out} (backend: {_backend.name()})")
    return 0


def _cmd_plot(args):
    rows = harness.read_rows_csv(_resolve(args.report))
    paths = harness.make_plots(rows, _resolve(args.out_dir), prefix=args.prefix)
    for p in paths:
        print(f"wrote {p}")
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
    "plot": _cmd_plot,
}


def main(argv=None):
    parser = build_parser()
    try:
        # lift pre-subcommand globals, then parse fully
        args = parser.parse_args(argv)
        if args.command is None:
            raise _UsageError("wtap: a command is required (gen/train/eval/bench/plot)")
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (DataFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ShapeError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
