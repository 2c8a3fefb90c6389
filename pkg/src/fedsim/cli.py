"""Command-line front end: ``fedsim gen | run | report``.

Exit status is 0 on success, 1 for invalid input (config or summary files)
and 2 for failures while working. Errors go to stderr as a single line that
starts with ``fedsim-error[validation]:`` or ``fedsim-error[runtime]:``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .config import ConfigError, DataBundle, ExperimentConfig, generate_data, load_data, save_data
from .federation import METHOD_ORDER, run_experiment, write_round_csv
from .kernels import BACKEND

log = logging.getLogger("fedsim")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2
SUMMARY_FILE = "summary.json"


class ValidationError(ValueError):
    pass


def _dump_json(obj, path: Path) -> None:
    # sorted keys and no timestamps so reruns are byte-identical
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _manifest(cfg: ExperimentConfig, command: str, files: Sequence[Path], out: Path) -> dict:
    return {
        "command": command,
        "fedsim_version": __version__,
        "seed": cfg.seed,
        "config": cfg.raw,
        "files": {str(p.relative_to(out)): _sha256(p) for p in sorted(files)},
    }


def _prepare_out(out: Path) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory '{out}' is not writable: {exc}") from exc


def cmd_gen(cfg: ExperimentConfig) -> int:
    out = cfg.out_dir
    _prepare_out(out)
    bundle = generate_data(cfg)
    files = save_data(bundle, out / "data")
    _dump_json(_manifest(cfg, "gen", files, out), out / "data" / "manifest.json")
    sizes = ", ".join(f"client {k}: {len(p)}" for k, p in enumerate(bundle.partitions))
    print(f"wrote {len(files)} files to {out / 'data'} ({sizes})")
    return EXIT_OK


def _data_for_run(cfg: ExperimentConfig) -> DataBundle:
    data_dir = cfg.out_dir / "data"
    if cfg["data"]["gen_on_the_fly"] and not data_dir.exists():
        return generate_data(cfg)
    return load_data(data_dir, cfg.mode, cfg["partition"]["num_clients"])


def format_run_table(summaries: Sequence[dict]) -> str:
    rows = [("method", "mAUC", "95% CI", "conv. round", "MB to conv.", "MB total")]
    for s in summaries:
        ci = s["final"]["mauc_ci"]
        rows.append((
            s["method"],
            f"{s['final']['mauc']:.4f}",
            f"[{ci[0]:.4f}, {ci[1]:.4f}]" if ci else "-",
            str(s["convergence_round"]),
            f"{s['mb_to_convergence']:.6f}",
            f"{s['ledger_totals']['total_mb']:.6f}",
        ))
    return _align(rows)


def cmd_run(cfg: ExperimentConfig) -> int:
    out = cfg.out_dir
    _prepare_out(out)
    bundle = _data_for_run(cfg)
    settings = cfg.run_settings()
    ckpt = out / "checkpoints" if cfg["output"]["checkpoints"] else None
    results = []
    for method in cfg.methods:
        log.info("running %s", method)
        results.append(run_experiment(method, bundle.partitions, settings, cfg.seed, val=bundle.val,
                                      test=bundle.test, proxy=bundle.proxy, checkpoint_dir=ckpt))
    summaries = [r.summary() for r in results]
    written = []
    if cfg["output"]["round_csv"]:
        write_round_csv(results, out / "rounds.csv")
        written.append(out / "rounds.csv")
    _dump_json({"seed": cfg.seed, "num_classes": bundle.test.num_classes, "methods": summaries}, out / SUMMARY_FILE)
    _dump_json({s["method"]: s["ledger_totals"] for s in summaries}, out / "ledger_totals.json")
    written += [out / SUMMARY_FILE, out / "ledger_totals.json"]
    if ckpt is not None:
        written += sorted(ckpt.iterdir())
    _dump_json(_manifest(cfg, "run", written, out), out / "manifest.json")
    print(format_run_table(summaries))
    return EXIT_OK


def _load_summary(path: Path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValidationError(f"summary file '{path}' not found") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"summary file '{path}' is not valid JSON: {exc}") from None
    try:
        methods = doc["methods"]
        for s in methods:
            s["method"], s["final"]["per_class"], s["final"]["mauc"], s["mb_to_convergence"]
        if not methods:
            raise ValueError
    except (KeyError, TypeError, ValueError):
        raise ValidationError(f"summary file '{path}' is malformed: expected a 'methods' list of run summaries") from None
    return doc


def _mean(values):
    vals = [v for v in values if v is not None]
    return math.fsum(vals) / len(vals) if vals else None


def merge_summaries(docs: Sequence[dict]) -> dict[str, dict]:
    """Method name -> merged row. A method seen in several files is averaged."""
    grouped: dict[str, list[dict]] = {}
    for doc in docs:
        for s in doc["methods"]:
            grouped.setdefault(s["method"], []).append(s)
    merged = {}
    for name in sorted(grouped, key=lambda m: (METHOD_ORDER.index(m) if m in METHOD_ORDER else len(METHOD_ORDER), m)):
        runs = grouped[name]
        widths = {len(r["final"]["per_class"]) for r in runs}
        if len(widths) != 1:
            raise ValidationError(f"method {name}: summaries disagree on the number of classes")
        c = widths.pop()

        def col(key, j):
            return _mean([(r["final"][key] or [None] * c)[j] for r in runs])

        merged[name] = {
            "runs": len(runs),
            "auc": [col("per_class", j) for j in range(c)],
            "ci_low": [col("ci_low", j) for j in range(c)],
            "ci_high": [col("ci_high", j) for j in range(c)],
            "mauc": _mean([r["final"]["mauc"] for r in runs]),
            "mb_to_convergence": _mean([r["mb_to_convergence"] for r in runs]),
        }
    return merged


def _cell(v, lo, hi) -> str:
    if v is None:
        return "-"
    if lo is None or hi is None:
        return f"{v:.4f}"
    return f"{v:.4f} [{lo:.4f}, {hi:.4f}]"


def _align(rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def report_table(merged: dict[str, dict]) -> tuple[str, str]:
    """Aligned text and CSV: one row per class, then mAUC and bandwidth."""
    methods = list(merged)
    c = max(len(m["auc"]) for m in merged.values())
    text_rows = [["class", *methods]]
    csv_rows = [["row", *(f"{m}_{f}" for m in methods for f in ("auc", "ci_low", "ci_high"))]]
    for j in range(c):
        text_rows.append([str(j), *(_cell(merged[m]["auc"][j], merged[m]["ci_low"][j], merged[m]["ci_high"][j])
                                    for m in methods)])
        csv_rows.append([str(j), *(_csv_num(merged[m][f][j]) for m in methods for f in ("auc", "ci_low", "ci_high"))])
    text_rows.append(["mAUC", *(_cell(merged[m]["mauc"], None, None) for m in methods)])
    csv_rows.append(["mAUC", *(v for m in methods for v in (_csv_num(merged[m]["mauc"]), "", ""))])
    text_rows.append(["MB to conv.", *(f"{merged[m]['mb_to_convergence']:.6f}" for m in methods)])
    csv_rows.append(["mb_to_convergence",
                     *(v for m in methods for v in (_csv_num(merged[m]["mb_to_convergence"]), "", ""))])
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(csv_rows)
    return _align(text_rows), buf.getvalue()


def _csv_num(v) -> str:
    return "" if v is None else repr(float(v))


def cmd_report(paths: Sequence[str], out: Path | None) -> int:
    if not paths:
        raise ValidationError("report needs at least one summary file")
    text, table_csv = report_table(merge_summaries([_load_summary(Path(p)) for p in paths]))
    if out is not None:
        _prepare_out(out)
        (out / "report.txt").write_text(text + "\n")
        (out / "report.csv").write_text(table_csv)
    print(text)
    return EXIT_OK


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS lets the flags appear before or after the subcommand
    common.add_argument("--config", default=argparse.SUPPRESS, help="experiment TOML file")
    common.add_argument("--seed", type=_seed, default=argparse.SUPPRESS, help="override experiment.seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help="override output.dir")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = _Parser(prog="fedsim", description="Federated distillation simulator.", parents=[common])
    parser.add_argument("--version", action="version", version=f"fedsim {__version__} (auc kernel: {BACKEND})")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("gen", parents=[common], help="generate and partition the synthetic datasets")
    sub.add_parser("run", parents=[common], help="run every configured method and write reports")
    rep = sub.add_parser("report", parents=[common], help="merge summary.json files into a comparison table")
    rep.add_argument("summaries", nargs="+", help="summary.json files written by 'run'")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "report":
            out = getattr(args, "out", None)
            return cmd_report(args.summaries, Path(out) if out else None)
        cfg = ExperimentConfig.load(getattr(args, "config", None)).with_overrides(
            seed=getattr(args, "seed", None), out=getattr(args, "out", None))
        return cmd_gen(cfg) if args.command == "gen" else cmd_run(cfg)
    except (ConfigError, ValidationError) as exc:
        print(f"fedsim-error[validation]: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except Exception as exc:
        print(f"fedsim-error[runtime]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
