"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numerical
failure. Machine-readable JSON goes to stdout, diagnostics to stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import __version__
from .errors import GWAlignError, NumericalError, StageError
from .gromov import GwConfig, write_trace_csv
from .ingestion import identity_lexicon, load_embeddings, load_lexicon, load_weights
from .mapping import DEFAULT_GW_VOCAB, save_map, save_map_text
from .pipeline import DEFAULT_DISTANCE_TOP_N, PRESETS, align, language_distance_matrix
from .retrieval import evaluate, read_table_tsv, write_table_tsv
from .similarity import write_histogram_csv
from .sinkhorn import SinkhornConfig

logger = logging.getLogger("gwalign")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3

COUPLING_THRESHOLD = 1e-9

_NORMALIZE_CHOICES = ["none", "mean", "median", "max"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _int_list(text):
    try:
        values = [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("k values must be positive")
    return values


def _add_solver_args(p):
    g = p.add_argument_group("solver")
    g.add_argument("--lambda", dest="lam", type=_positive_float, default=None,
                   help="entropic regularization (default 5e-5, fallback 1e-4)")
    g.add_argument("--lambda-fallback", type=_positive_float, default=None,
                   help="retry value after underflow (default: 1e-4, or 2x --lambda)")
    g.add_argument("--normalize", choices=_NORMALIZE_CHOICES, default=None,
                   help="similarity normalization (default: none, or the preset's)")
    g.add_argument("--max-outer-iters", type=_positive_int, default=300)
    g.add_argument("--outer-tol", type=_positive_float, default=1e-7)
    g.add_argument("--inner-iters", type=_positive_int, default=1000)
    g.add_argument("--marginal-tol", type=_positive_float, default=1e-6)
    g.add_argument("--log-domain", action="store_true", help="log-domain Sinkhorn iterations")
    g.add_argument("--threads", type=_positive_int, default=None, help="bound on BLAS threads")
    g.add_argument("--metric", choices=["cosine"], default="cosine")
    g.add_argument("--seed", type=int, default=None, help="reserved; the solver is deterministic")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gwalign", description="Unsupervised embedding alignment with Gromov-Wasserstein.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("align", help="align two embedding files")
    p.add_argument("--config", type=Path, default=None, help="key=value file with defaults")
    p.add_argument("--src", type=Path, required=True)
    p.add_argument("--tgt", type=Path, required=True)
    p.add_argument("--dict", type=Path, default=None,
                   help="evaluation lexicon (default: identity over shared words)")
    p.add_argument("--gw-vocab", type=_positive_int, default=DEFAULT_GW_VOCAB)
    p.add_argument("--max-vocab", type=_positive_int, default=None, help="words to load per file")
    p.add_argument("--preset", choices=sorted(PRESETS), default="comparable")
    p.add_argument("--fit-map", action="store_true", help="fit an orthogonal map and translate all words")
    p.add_argument("--out-dir", type=Path, default=Path("gwalign-out"))
    p.add_argument("--k", type=_int_list, default=[1], help="comma-separated P@k values")
    p.add_argument("--csls-neighborhood", type=_positive_int, default=10)
    p.add_argument("--skip-empty", action="store_true")
    p.add_argument("--src-weights", type=Path, default=None)
    p.add_argument("--tgt-weights", type=Path, default=None)
    p.add_argument("--no-header", action="store_true", help="embedding files have no count/dim header")
    p.add_argument("--lenient", action="store_true", help="skip malformed rows instead of failing")
    p.add_argument("--dense", action="store_true", help="write the full coupling matrix")
    p.add_argument("--histograms", action="store_true", help="write similarity histograms")
    _add_solver_args(p)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("evaluate", help="score a translation table against a lexicon")
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--table", type=Path, required=True)
    p.add_argument("--dict", type=Path, required=True)
    p.add_argument("--k", type=_positive_int, default=1)
    p.add_argument("--skip-empty", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gw-distance", help="pairwise GW distances between languages")
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--embs", type=Path, nargs="+", required=True)
    p.add_argument("--labels", nargs="+", default=None)
    p.add_argument("--top-n", type=_positive_int, default=DEFAULT_DISTANCE_TOP_N)
    p.add_argument("--scale", type=float, default=1.0, help="multiply emitted values (e.g. 100)")
    p.add_argument("--out", type=Path, default=None, help="CSV path (default: stdout JSON only)")
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--no-header", action="store_true")
    _add_solver_args(p)
    p.set_defaults(func=cmd_distance)
    return parser


def _read_config_file(path: Path) -> dict[str, str]:
    values = {}
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Parse ``argv`` with defaults overridden by the subcommand's ``--config`` file."""
    args = parser.parse_args(argv)
    if getattr(args, "config", None) is None:
        return args
    file_values = _read_config_file(args.config)
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    subparser = sub.choices[args.command]
    actions = {a.dest: a for a in subparser._actions}
    aliases = {"lambda": "lam"}
    defaults = {}
    for key, raw in file_values.items():
        dest = aliases.get(key, key)
        action = actions.get(dest)
        if action is None or dest in ("help", "config"):
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"config key {key!r} expects a boolean, got {raw!r}")
            defaults[dest] = raw.lower() in ("true", "1", "yes")
        elif action.nargs in ("+", "*"):
            defaults[dest] = [action.type(v) if action.type else v for v in raw.split()]
        else:
            try:
                value = action.type(raw) if action.type else raw
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"config key {key!r}: {exc}") from None
            if action.choices is not None and value not in action.choices:
                raise UsageError(f"config key {key!r}: {value!r} not in {sorted(action.choices)}")
            defaults[dest] = value
    subparser.set_defaults(**defaults)
    # explicit flags win because they are re-parsed over the new defaults
    return parser.parse_args(argv)


def _gw_config(args) -> GwConfig:
    inner = SinkhornConfig(
        max_inner_iters=args.inner_iters,
        marginal_tol=args.marginal_tol,
        log_domain=args.log_domain,
    )
    kwargs = dict(max_outer_iters=args.max_outer_iters, outer_tol=args.outer_tol, sinkhorn=inner)
    if args.lam is None and args.lambda_fallback is None:
        return GwConfig(**kwargs)
    if args.lam is None:
        primary = min(GwConfig.lambda_primary, args.lambda_fallback)
        return GwConfig(lambda_primary=primary, lambda_fallback=args.lambda_fallback, **kwargs)
    fallback = args.lambda_fallback
    if fallback is not None and fallback < args.lam:
        raise UsageError("--lambda-fallback must be >= --lambda")
    return GwConfig.with_lambda(args.lam, fallback, **kwargs)


def _thread_limit(n):
    if n is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _write_coupling(G: np.ndarray, path: Path, dense: bool) -> None:
    if dense:
        np.savetxt(path, G, fmt="%.17g", delimiter="\t")
        return
    rows, cols = np.nonzero(G >= COUPLING_THRESHOLD)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("i\tj\tvalue\n")
        for i, j in zip(rows, cols):
            fh.write(f"{i}\t{j}\t{float(G[i, j])!r}\n")


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def cmd_align(args) -> int:
    cfg = _gw_config(args)
    normalize = args.normalize if args.normalize is not None else PRESETS[args.preset]["normalize"]
    if normalize == "none":
        normalize = None
    strict = not args.lenient
    src = load_embeddings(args.src, args.max_vocab, not args.no_header, strict)
    tgt = load_embeddings(args.tgt, args.max_vocab, not args.no_header, strict)
    if args.dict is not None:
        lexicon, lexicon_name = load_lexicon(args.dict), str(args.dict)
    else:
        shared = [w for w in src.vocab if w in set(tgt.vocab)]
        lexicon, lexicon_name = (identity_lexicon(shared), "identity") if shared else (None, None)
        if lexicon is None:
            logger.warning("no --dict and no shared words; skipping evaluation")
    src_w = load_weights(args.src_weights, src.vocab) if args.src_weights else None
    tgt_w = load_weights(args.tgt_weights, tgt.vocab) if args.tgt_weights else None

    run = align(
        src, tgt,
        gw_vocab=args.gw_vocab,
        normalize=normalize,
        cfg=cfg,
        fit_map=args.fit_map,
        lexicon=lexicon,
        ks=args.k,
        csls_neighborhood=args.csls_neighborhood,
        src_weights=src_w,
        tgt_weights=tgt_w,
        skip_empty=args.skip_empty,
    )

    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    _write_coupling(run.gw.coupling.values, out / "coupling.tsv", args.dense)
    write_trace_csv(run.gw, out / "trace.csv")
    for method, table in run.tables.items():
        write_table_tsv(table, out / f"translations_{method.value}.tsv")
    if run.map is not None:
        save_map(run.map, out / "map")
        save_map_text(run.map, out / "map.txt")
    if args.histograms:
        Cs, Ct = run.similarities
        write_histogram_csv(Cs, out / "similarity_hist_src.csv")
        write_histogram_csv(Ct, out / "similarity_hist_tgt.csv")

    report = run.report()
    report["inputs"] = {
        "src": str(args.src),
        "tgt": str(args.tgt),
        "dict": lexicon_name,
        "src_size": src.size,
        "tgt_size": tgt.size,
        "dim": src.dim,
    }
    report["config"]["cli"] = {
        "preset": args.preset,
        "threads": args.threads,
        "seed": args.seed,
        "metric": args.metric,
        "dense": args.dense,
    }
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    _emit(report)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    table = read_table_tsv(args.table)
    lexicon = load_lexicon(args.dict)
    ev = evaluate(table, lexicon, args.k, args.skip_empty)
    _emit(ev.to_dict())
    return EXIT_OK


def cmd_distance(args) -> int:
    if len(args.embs) < 2:
        raise UsageError("--embs needs at least two files")
    labels = args.labels or [p.stem for p in args.embs]
    if len(labels) != len(args.embs):
        raise UsageError("--labels must match --embs in length")
    cfg = _gw_config(args)
    normalize = None if args.normalize in (None, "none") else args.normalize
    embs = [load_embeddings(p, args.top_n, not args.no_header) for p in args.embs]
    D = language_distance_matrix(embs, args.top_n, cfg, normalize, args.workers)
    scaled = D * args.scale
    if args.out is not None:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["language"] + labels)
            for label, row in zip(labels, scaled):
                writer.writerow([label] + [repr(float(v)) for v in row])
    _emit({
        "labels": labels,
        "scale": args.scale,
        "top_n": args.top_n,
        "matrix": scaled.tolist(),
        "out": None if args.out is None else str(args.out),
    })
    return EXIT_OK


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config_file(parser, argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"gwalign: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        # argparse exits on --help and on bad flags; hand the code back instead
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        with _thread_limit(getattr(args, "threads", None)):
            return args.func(args)
    except UsageError as exc:
        print(f"gwalign: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GWAlignError as exc:
        cause = exc.cause if isinstance(exc, StageError) else exc
        print(f"gwalign: error: {exc}", file=sys.stderr)
        if isinstance(cause, NumericalError):
            return EXIT_NUMERICAL
        return EXIT_DATA
    except (OSError, UnicodeDecodeError) as exc:
        print(f"gwalign: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
