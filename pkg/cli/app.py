"""Command-line application: argument parsing, dispatch and exit codes."""
import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

from pydantic import ValidationError

from cli import commands
from cli.render import emit
from config import RunConfig
from evaluation.tuning import DEFAULT_GRID
from similarity.kernels import Metric
from utils.errors import ConfigError, DataError
from utils.logging_config import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_COMPUTATION = 4

# Flag destinations that map one to one onto RunConfig fields
RUN_OVERRIDES = (
    "dataset", "train_path", "test_path", "raw_path", "input_format", "ingestion", "rca_threshold",
    "min_rating", "min_degree", "test_fraction", "temporal_cutoff_days", "metric", "topk", "mode",
    "gamma", "tune_grid", "include_self", "exclude_train", "task", "k", "block_size", "workers",
    "seed", "output_dir", "export_similarity", "export_rankings",
)


def _grid(text: str) -> List[float]:
    try:
        return [float(token) for token in text.split(",") if token.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--format", dest="output_format", choices=["text", "structured"], default="text",
                        help="stdout rendering")
    parser.add_argument("--log-level", default=None, help="overrides SAPLING_LOG_LEVEL")


def _add_graph_input(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("graph input")
    group.add_argument("--input", required=True, type=Path, help="edge list, export CSV or ratings CSV")
    group.add_argument("--kind", choices=["edges", "rca", "ratings"], default="edges")
    group.add_argument("--input-format", choices=["adjacency", "pairs"], default="adjacency")
    group.add_argument("--threshold", type=float, default=1.0, help="RCA threshold")
    group.add_argument("--min-rating", type=float, default=3.0)
    group.add_argument("--min-degree", type=int, default=0)


def _add_run_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=Path, help="TOML run configuration")
    parser.add_argument("--dataset")
    parser.add_argument("--train", dest="train_path", type=Path)
    parser.add_argument("--test", dest="test_path", type=Path)
    parser.add_argument("--raw", dest="raw_path", type=Path)
    parser.add_argument("--input-format", choices=["adjacency", "pairs"])
    parser.add_argument("--ingestion", choices=["edges", "rca", "ratings"])
    parser.add_argument("--rca-threshold", type=float)
    parser.add_argument("--min-rating", type=float)
    parser.add_argument("--min-degree", type=int)
    parser.add_argument("--test-fraction", type=float)
    parser.add_argument("--temporal-cutoff-days", type=float)
    parser.add_argument("--metric", choices=[m.value for m in Metric])
    parser.add_argument("--topk", type=int)
    parser.add_argument("--mode", choices=["user", "item", "hybrid", "popularity"])
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--tune-grid", type=_grid, help="comma-separated gamma values")
    parser.add_argument("--include-self", action=argparse.BooleanOptionalAction, default=None)
    parser.add_argument("--exclude-train", action=argparse.BooleanOptionalAction, default=None)
    parser.add_argument("--task", choices=["ranking", "rating"])
    parser.add_argument("--k", type=int)
    parser.add_argument("--block-size", type=int)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--output-dir", type=Path)
    parser.add_argument("--export-similarity", action=argparse.BooleanOptionalAction, default=None)
    parser.add_argument("--export-rankings", action=argparse.BooleanOptionalAction, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sapling",
        description="Sapling Similarity collaborative filtering and benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="ingest, score, rank and evaluate")
    _add_run_flags(run)
    _add_common(run)

    tune = sub.add_parser("tune", help="grid search of the hybrid gamma on a validation split")
    _add_run_flags(tune)
    _add_common(tune)

    similarity = sub.add_parser("similarity", help="compute and export a similarity matrix")
    _add_graph_input(similarity)
    similarity.add_argument("--layer", choices=["users", "items"], default="users")
    similarity.add_argument("--metric", choices=[m.value for m in Metric], default="sapling")
    similarity.add_argument("--topk", type=int)
    similarity.add_argument("--out", required=True, type=Path)
    similarity.add_argument("--out-format", choices=["csv", "binary"], default="csv")
    similarity.add_argument("--block-size", type=int)
    similarity.add_argument("--workers", type=int)
    _add_common(similarity)

    explain = sub.add_parser("explain", help="show the Decision Sapling of two nodes")
    explain.add_argument("node_a", nargs="?")
    explain.add_argument("node_b", nargs="?")
    explain.add_argument("--input", type=Path)
    explain.add_argument("--kind", choices=["edges", "rca", "ratings"], default="edges")
    explain.add_argument("--input-format", choices=["adjacency", "pairs"], default="adjacency")
    explain.add_argument("--threshold", type=float, default=1.0)
    explain.add_argument("--min-rating", type=float, default=3.0)
    explain.add_argument("--min-degree", type=int, default=0)
    explain.add_argument("--layer", choices=["users", "items"], default="users")
    explain.add_argument("--counts", nargs=4, type=int, metavar=("N", "K_A", "K_B", "CO"),
                         help="explain raw counts instead of two nodes of a graph")
    _add_common(explain)

    project = sub.add_parser("project", help="top-k similarity network of one layer")
    _add_graph_input(project)
    project.add_argument("--layer", choices=["users", "items"], default="users")
    project.add_argument("--metric", choices=[m.value for m in Metric], default="sapling")
    project.add_argument("--k", type=int, default=4)
    project.add_argument("--out", required=True, type=Path)
    project.add_argument("--workers", type=int)
    _add_common(project)

    split = sub.add_parser("split", help="hold out a fraction of every user's items")
    _add_graph_input(split)
    split.add_argument("--fraction", type=float, default=0.10)
    split.add_argument("--seed", type=int, default=0)
    split.add_argument("--out-dir", required=True, type=Path)
    _add_common(split)

    ingest = sub.add_parser("ingest", help="convert raw data into an adjacency edge list")
    _add_graph_input(ingest)
    ingest.add_argument("--out", required=True, type=Path)
    _add_common(ingest)

    return parser


class CommandLineApp:
    """Dispatches parsed arguments to the subcommands and maps failures to exit codes."""

    def __init__(self):
        self.handlers: Dict[str, Callable[[argparse.Namespace], Tuple[str, Dict[str, Any]]]] = {}
        self._register_handlers()

    def _register_handlers(self):
        self.handlers["run"] = self._run
        self.handlers["tune"] = self._tune
        self.handlers["similarity"] = self._similarity
        self.handlers["explain"] = self._explain
        self.handlers["project"] = self._project
        self.handlers["split"] = self._split
        self.handlers["ingest"] = self._ingest

    @staticmethod
    def _run_config(args: argparse.Namespace, tuning: bool = False) -> RunConfig:
        overrides = {key: getattr(args, key) for key in RUN_OVERRIDES if getattr(args, key, None) is not None}
        if tuning:
            # tune always sweeps: a fixed gamma from the file does not apply
            overrides["mode"] = "hybrid"
            config = RunConfig.from_toml(args.config, overrides, defaults={"tune_grid": list(DEFAULT_GRID)},
                                         drop=("gamma",))
        else:
            config = RunConfig.from_toml(args.config, overrides)
        config.validate_paths()
        return config

    @staticmethod
    def _graph(args: argparse.Namespace):
        return commands.load_input(args.input, args.kind, args.input_format, args.threshold,
                                   args.min_rating, args.min_degree)

    def _run(self, args):
        return "report", commands.cmd_run(self._run_config(args))

    def _tune(self, args):
        return "tune", commands.cmd_tune(self._run_config(args, tuning=True))

    def _similarity(self, args):
        return "similarity", commands.cmd_similarity(
            self._graph(args), args.layer, args.metric, args.out, args.out_format,
            topk=args.topk, block_size=args.block_size, workers=args.workers,
        )

    def _explain(self, args):
        if args.counts is not None:
            n_total, k_a, k_b, co = args.counts
            return "explain", commands.explain_counts(
                n_total, k_a, k_b, co, node_a=args.node_a or "a", node_b=args.node_b or "b", layer=args.layer
            )
        if args.input is None or args.node_a is None or args.node_b is None:
            raise ConfigError("explain needs --input and two nodes, or --counts")
        return "explain", commands.cmd_explain(self._graph(args), args.layer, args.node_a, args.node_b)

    def _project(self, args):
        return "project", commands.cmd_project(self._graph(args), args.layer, args.metric, args.out,
                                               k=args.k, workers=args.workers)

    def _split(self, args):
        return "split", commands.cmd_split(self._graph(args), args.out_dir, fraction=args.fraction, seed=args.seed)

    def _ingest(self, args):
        return "ingest", commands.cmd_ingest(self._graph(args), args.out)

    def run(self, argv: Optional[List[str]] = None) -> int:
        args = build_parser().parse_args(argv)
        setup_logging(args.log_level)
        try:
            template, result = self.handlers[args.command](args)
            emit(template, result, args.output_format)
            return EXIT_OK
        except ValidationError as e:
            return _fail(EXIT_CONFIG, "; ".join(_validation_messages(e)))
        except ConfigError as e:
            return _fail(EXIT_CONFIG, str(e))
        except (DataError, OSError, IndexError) as e:
            return _fail(EXIT_DATA, str(e))
        except Exception as e:
            logger.debug("Command failed", exc_info=True)
            return _fail(EXIT_COMPUTATION, f"{type(e).__name__}: {e}")


def _validation_messages(error: ValidationError) -> List[str]:
    messages = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"])
        messages.append(f"{location}: {item['msg']}" if location else item["msg"])
    return messages


def _fail(code: int, message: str) -> int:
    print(f"error: {' '.join(message.split())}", file=sys.stderr)
    return code


def main(argv: Optional[List[str]] = None) -> int:
    return CommandLineApp().run(argv)
