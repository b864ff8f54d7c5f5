"""Command-line entry points.

Subcommands: train, fold, verify, compress, bench, schedule. ``verify``
exits 0 iff no eligible layer violates the pattern. The NMSPARSE_THREADS
environment variable caps kernel worker parallelism.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import runner, sparse_format
from .archives import (
    FoldedModel,
    load_compressed_archive,
    load_folded_archive,
    save_compressed_archive,
    save_folded_archive,
)
from .checkpoint import atomic_write_bytes, load_checkpoint
from .config import RunConfig
from .masks import SparsePattern
from .schedule import Schedule, delta


def _table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]
    def fmt(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    lines = [fmt(headers), fmt(["-" * w for w in widths])]
    lines += [fmt(r) for r in rows]
    return "\n".join(lines)


def cmd_train(args: argparse.Namespace) -> int:
    config = RunConfig.from_file(args.config)
    result, out_dir = runner.run_training(
        config,
        resume_from=args.resume,
        log=lambda row: print(
            f"epoch {row['epoch']:>4}  delta {row['delta']:.4f}  lr {row['lr']:.5f}  "
            f"loss {row['loss']:.5f}  acc {row['accuracy']:.4f}"
        ),
    )
    final = result.metrics[-1]
    print(f"\nfinal loss {final['loss']:.5f}, accuracy {final['accuracy']:.4f}")
    print(f"checkpoint: {out_dir / 'checkpoint.maxq'}")
    print(f"metrics:    {out_dir / 'metrics.csv'}")
    return 0


def cmd_fold(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.ckpt)
    folded = runner.fold_checkpoint(ckpt)
    save_folded_archive(args.out, folded)
    print(f"folded {len(folded.layers)} layers -> {args.out}")
    return 0


def _verify_rows(folded: FoldedModel, pattern: SparsePattern) -> tuple[list[list[str]], int]:
    rows = []
    total_violations = 0
    for layer in folded.layers:
        if layer.eligible:
            report = sparse_format.verify(layer.weight, pattern)
            total_violations += report.violating_blocks
            rows.append(
                [
                    layer.name,
                    str(report.blocks),
                    str(report.violating_blocks),
                    f"{report.sparsity:.4f}",
                ]
            )
        else:
            rows.append([layer.name, "-", "-", "dense"])
    return rows, total_violations


def cmd_verify(args: argparse.Namespace) -> int:
    folded = load_folded_archive(args.weights)
    pattern = SparsePattern.parse(args.pattern)
    rows, total_violations = _verify_rows(folded, pattern)
    headers = ["layer", "blocks", "violations", "sparsity"]
    print(_table(headers, rows))
    print(f"\ntotal violating blocks: {total_violations}")
    if args.csv:
        csv_text = "\n".join([",".join(headers)] + [",".join(r) for r in rows]) + "\n"
        atomic_write_bytes(args.csv, csv_text.encode())
        print(f"wrote {args.csv}")
    return 0 if total_violations == 0 else 1


def cmd_compress(args: argparse.Namespace) -> int:
    folded = load_folded_archive(args.weights)
    pattern = SparsePattern.parse(args.pattern)
    save_compressed_archive(args.out, folded, pattern)
    eligible = sum(1 for l in folded.layers if l.eligible)
    print(f"compressed {eligible} eligible layers ({len(folded.layers)} total) -> {args.out}")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    sizes = [int(s) for s in args.sizes.split(",") if s]
    rng = np.random.default_rng(args.seed)
    headers = ["layer", "shape", "cols", "sparse_ms", "dense_ms", "speedup", "flop_reduction"]
    rows = []
    for entry, payload in load_compressed_archive(args.archive):
        if not isinstance(payload, sparse_format.CompressedNM):
            continue
        inner = payload.matrix_shape[1]
        for cols in sizes:
            x = rng.uniform(-1.0, 1.0, size=(inner, cols))
            report = sparse_format.bench(payload, x, repetitions=args.reps)
            rows.append(
                [
                    entry["name"],
                    f"{report.matrix_shape[0]}x{report.matrix_shape[1]}",
                    str(cols),
                    f"{report.sparse_seconds * 1e3:.3f}",
                    f"{report.dense_seconds * 1e3:.3f}",
                    f"{report.speedup:.3f}",
                    f"{report.flop_reduction:.2f}",
                ]
            )
    if not rows:
        print("archive holds no compressed layers")
        return 1
    table = _table(headers, rows)
    print(table)
    if args.csv:
        csv_text = "\n".join([",".join(headers)] + [",".join(r) for r in rows]) + "\n"
        atomic_write_bytes(args.csv, csv_text.encode())
        print(f"\nwrote {args.csv}")
    return 0


def cmd_schedule(args: argparse.Namespace) -> int:
    kind = {"cos": "cosine"}.get(args.kind, args.kind)
    sched = Schedule(t_i=args.ti, t_f=args.tf, kind=kind)
    lines = ["t,delta"]
    for t in range(0, args.tf + 1):
        lines.append(f"{t},{delta(t, sched)!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        atomic_write_bytes(args.out, text.encode())
        print(f"wrote {args.out} ({args.tf + 1} rows)")
    else:
        print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nmsparse",
        description="N:M structured sparsity: train, fold, verify, compress, bench, schedule.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a JSON run config")
    p.add_argument("--config", required=True, help="path to the run-configuration JSON")
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("fold", help="fold soft masks into weights and archive them")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_fold)

    p = sub.add_parser("verify", help="check a folded archive against an N:M pattern")
    p.add_argument("--weights", required=True)
    p.add_argument("--pattern", required=True, help="pattern as n:m, e.g. 2:4")
    p.add_argument("--csv", default=None, help="also write the report as CSV")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("compress", help="pack folded weights into the compressed format")
    p.add_argument("--weights", required=True)
    p.add_argument("--pattern", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_compress)

    p = sub.add_parser("bench", help="time sparse kernels against dense GEMM")
    p.add_argument("--archive", required=True)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--sizes", default="64,256", help="comma-separated input column counts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", default=None, help="also write the table as CSV")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("schedule", help="tabulate the sparsification ramp")
    p.add_argument("--ti", type=int, required=True)
    p.add_argument("--tf", type=int, required=True)
    p.add_argument("--kind", choices=["cubic", "linear", "cos", "cosine"], default="cubic")
    p.add_argument("--out", default=None, help="CSV output path (stdout if omitted)")
    p.set_defaults(fn=cmd_schedule)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
