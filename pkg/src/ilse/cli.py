"""Command-line entry point.

Subcommands: cayley, gen-synth, train, compare, few-shot, sweep-layers.
Every subcommand honors --seed (falling back to the ILSE_SEED environment
variable) and is bit-reproducible: repeating an invocation with the same seed
produces byte-identical output. A JSON config file (--config) supplies flag
defaults under their kebab-case names; explicit flags override it.

Exit codes: 0 success, 2 invalid arguments, 3 I/O or file-format failure,
4 numeric failure / divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict

from .baselines import layer_sweep
from .cayley import build_cayley, graph_diameter, group_size, smallest_n_for
from .checkpoint import save_params
from .data import SynthSpec, generate_synthetic, read_lrep, write_lrep
from .errors import (
    FormatError,
    InvalidArgument,
    InvalidState,
    NumericFailure,
    SearchFailure,
)
from .training import (
    METHODS,
    TrainConfig,
    compare_methods,
    few_shot_curve,
    format_comparison,
    resolve_selected_layer,
    train,
)

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


def _default_seed() -> int:
    try:
        return int(os.environ.get("ILSE_SEED", "0"))
    except ValueError:
        return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=_default_seed(), help="root seed (env ILSE_SEED)")
    p.add_argument("--config", type=str, default=None, help="JSON file with flag defaults")
    p.add_argument("--out", type=str, default=None, help="write output here instead of stdout")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", type=str, required=True, choices=METHODS)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--max-epochs", type=int, default=60)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--hidden", type=int, default=256)
    p.add_argument("--mpnn-layers", type=int, default=1)
    p.add_argument("--gin-mlp-depth", type=int, default=1)
    p.add_argument("--selected-layer", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ilse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    parser._subparsers_by_name = {}  # config-file defaults target the subparser
    _add_parser = sub.add_parser

    def add_parser(name, **kwargs):
        p = _add_parser(name, **kwargs)
        parser._subparsers_by_name[name] = p
        return p

    sub.add_parser = add_parser

    p = sub.add_parser("cayley", help="inspect the Cayley graph for a modulus or layer count")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--n", type=int, help="group modulus")
    group.add_argument("--layers", type=int, help="pick the smallest covering modulus")
    p.add_argument("--json", action="store_true")
    p.add_argument("--export", type=str, default=None, help="write the edge list here")
    _add_common(p)

    p = sub.add_parser("gen-synth", help="generate a planted-signal dataset")
    p.add_argument("--task", choices=["classification", "pair"], default="classification")
    p.add_argument("--n-examples", type=int, default=900)
    p.add_argument("--layers", type=int, default=12)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--classes", type=int, default=6)
    p.add_argument("--tokens", type=int, default=4)
    p.add_argument("--planted-layer", type=int, default=None, help="defaults to layers // 2")
    p.add_argument("--snr", type=float, default=4.0)
    p.add_argument("--leakage", type=float, default=0.3)
    p.add_argument("--train-frac", type=float, default=0.70)
    p.add_argument("--val-frac", type=float, default=0.15)
    _add_common(p)

    p = sub.add_parser("train", help="train one method on an LREP dataset")
    p.add_argument("--data", type=str, required=True)
    _add_train_flags(p)
    p.add_argument("--save-checkpoint", type=str, default=None)
    p.add_argument("--timing", action="store_true", help="include wall_ms in the metrics JSON")
    _add_common(p)

    p = sub.add_parser("compare", help="grid-search several methods and rank them")
    p.add_argument("--data", type=str, required=True)
    p.add_argument("--methods", type=str, required=True, help="comma-separated method names")
    p.add_argument("--grid", type=str, default=None, help='JSON, e.g. {"lr": [1e-4, 1e-3]}')
    p.add_argument("--max-epochs", type=int, default=60)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--json", action="store_true")
    _add_common(p)

    p = sub.add_parser("few-shot", help="test score vs samples per label")
    p.add_argument("--data", type=str, required=True)
    _add_train_flags(p)
    p.add_argument("--ks", type=str, default="1,2,4,8,16,32,64,128,256,512,1024")
    p.add_argument("--seeds", type=str, default="0,1,2,3,4")
    p.add_argument("--jobs", type=int, default=1)
    _add_common(p)

    p = sub.add_parser("sweep-layers", help="score each layer independently")
    p.add_argument("--data", type=str, required=True)
    _add_common(p)
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Parse twice: config file values become defaults, explicit flags win."""
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                overrides = json.load(fh)
        except OSError as exc:
            raise FormatError(f"cannot read config file: {exc}", offset=0) from exc
        if not isinstance(overrides, dict):
            raise InvalidArgument("config file must hold a JSON object")
        mapped = {}
        for key, value in overrides.items():
            dest = key.replace("-", "_")
            if not hasattr(args, dest):
                raise InvalidArgument(f"unknown config key {key!r}")
            mapped[dest] = value
        # defaults must land on the subparser: its own defaults would
        # otherwise overwrite root-level ones during the second parse
        parser._subparsers_by_name[args.command].set_defaults(**mapped)
        args = parser.parse_args(argv)
    return args


def _emit(args, payload: str) -> None:
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
    else:
        print(payload)


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2)


def _config_from_args(args) -> TrainConfig:
    return TrainConfig(
        method=args.method,
        lr=args.lr,
        weight_decay=args.weight_decay,
        dropout=args.dropout,
        batch_size=args.batch_size,
        max_epochs=args.max_epochs,
        patience=args.patience,
        seed=args.seed,
        hidden=args.hidden,
        mpnn_layers=args.mpnn_layers,
        gin_mlp_depth=args.gin_mlp_depth,
        selected_layer=args.selected_layer,
    )


def cmd_cayley(args) -> int:
    if args.n is not None:
        if args.n < 2:
            raise InvalidArgument(f"--n must be >= 2, got {args.n}")
        n, layers = args.n, None
    else:
        if args.layers < 1:
            raise InvalidArgument(f"--layers must be >= 1, got {args.layers}")
        n, _ = smallest_n_for(args.layers)
        layers = args.layers
    graph = build_cayley(n)
    report = {
        "n": n,
        "nodes": graph.node_count,
        "edges": graph.edge_count,
        "size_formula": group_size(n),
        "layers": layers,
        "virtual_nodes": None if layers is None else graph.node_count - layers,
        "degree_histogram": {str(k): v for k, v in graph.degree_histogram().items()},
        "diameter": graph_diameter(graph) if n <= 12 else None,
        "connected": graph.is_connected(),
    }
    if args.export:
        graph.write_edge_list(args.export)
        report["edge_list"] = args.export
    if args.json:
        _emit(args, _dump(report))
    else:
        lines = [f"{key}: {report[key]}" for key in sorted(report)]
        _emit(args, "\n".join(lines))
    return EXIT_OK


def cmd_gen_synth(args) -> int:
    planted = args.planted_layer if args.planted_layer is not None else args.layers // 2
    spec = SynthSpec(
        task=args.task,
        n_examples=args.n_examples,
        L=args.layers,
        d=args.dim,
        K=args.classes if args.task == "classification" else 0,
        tokens_per_example=args.tokens,
        planted_layer=planted,
        snr=args.snr,
        leakage=args.leakage,
        seed=args.seed,
        train_frac=args.train_frac,
        val_frac=args.val_frac,
    )
    dataset = generate_synthetic(spec)
    if not args.out:
        raise InvalidArgument("gen-synth requires --out PATH for the LREP file")
    write_lrep(args.out, dataset)
    summary = {
        "path": args.out,
        "task": dataset.kind,
        "n_examples": dataset.n_examples,
        "L": dataset.L,
        "d": dataset.d,
        "K": dataset.K,
        "planted_layer": planted,
        "splits": dataset.split_sizes(),
    }
    print(_dump(summary))
    return EXIT_OK


def cmd_train(args) -> int:
    dataset = read_lrep(args.data)
    config = resolve_selected_layer(dataset, _config_from_args(args), seed=args.seed)
    metrics = train(dataset, config)
    if args.save_checkpoint and metrics.checkpoint is not None:
        save_params(metrics.checkpoint, args.save_checkpoint)
    _emit(args, metrics.to_json(include_timing=args.timing))
    return EXIT_NUMERIC if metrics.failed else EXIT_OK


def cmd_compare(args) -> int:
    dataset = read_lrep(args.data)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not methods:
        raise InvalidArgument("--methods must name at least one method")
    grid = json.loads(args.grid) if args.grid else None
    base = [TrainConfig(method=m, seed=args.seed, max_epochs=args.max_epochs) for m in methods]
    report = compare_methods(dataset, base, grid=grid, seed=args.seed, jobs=args.jobs)
    _emit(args, _dump(report) if args.json else format_comparison(report))
    return EXIT_OK


def cmd_few_shot(args) -> int:
    dataset = read_lrep(args.data)
    config = resolve_selected_layer(dataset, _config_from_args(args), seed=args.seed)
    ks = tuple(int(x) for x in args.ks.split(","))
    seeds = tuple(int(x) for x in args.seeds.split(","))
    rows = few_shot_curve(dataset, config, ks=ks, seeds=seeds, jobs=args.jobs)
    _emit(args, _dump({"method": args.method, "config": asdict(config), "rows": rows}))
    return EXIT_OK


def cmd_sweep_layers(args) -> int:
    dataset = read_lrep(args.data)
    scores, best = layer_sweep(dataset, seed=args.seed)
    _emit(args, _dump({"scores": [float(s) for s in scores], "best_layer": int(best)}))
    return EXIT_OK


_COMMANDS = {
    "cayley": cmd_cayley,
    "gen-synth": cmd_gen_synth,
    "train": cmd_train,
    "compare": cmd_compare,
    "few-shot": cmd_few_shot,
    "sweep-layers": cmd_sweep_layers,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = _apply_config_file(parser, sys.argv[1:] if argv is None else argv)
        return _COMMANDS[args.command](args)
    except (InvalidArgument, InvalidState) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericFailure, SearchFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
