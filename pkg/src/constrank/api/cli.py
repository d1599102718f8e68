"""
Command-line front end.
`constrank <subcommand> --config file.json [--out dir] [--seed N] [--threads N]`
"""

import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml
from pydantic import ValidationError

from ..core.config import get_settings
from ..core.errors import ConfigError, ConstrankError
from ..core.log import configure_logging
from .runner import LabRunner
from .schemas import BatchManifest, Command, RunConfig, RunRecord

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2


def read_document(path: Path) -> Any:
    """JSON or YAML by suffix"""
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    text = path.read_text()
    try:
        if path.suffix in (".yaml", ".yml"):
            return yaml.safe_load(text)
        return json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"Cannot parse {path}: {e}")


def build_run_config(command: Command, args: argparse.Namespace) -> RunConfig:
    raw: Dict[str, Any] = {}
    if args.config:
        raw = dict(read_document(Path(args.config)) or {})
    raw["command"] = command.value
    if args.operator:
        raw["operator"] = args.operator
    if args.dim is not None:
        raw["dim_n"] = args.dim
        raw.setdefault("grid", {})["dim_n"] = args.dim
    if args.seed is not None:
        raw["seed"] = args.seed
    if "operator" not in raw:
        raise ConfigError("a run needs an operator (--operator or 'operator' in the config)")
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"Invalid run config: {e}")


def build_manifest(args: argparse.Namespace) -> BatchManifest:
    raw = read_document(Path(args.config)) if args.config else None
    if raw is None:
        raise ConfigError("batch needs --config pointing at a manifest")
    if isinstance(raw, list):
        raw = {"runs": raw}
    if args.parallel:
        raw["parallel"] = True
    if args.seed is not None:
        for run in raw.get("runs", []):
            run["seed"] = args.seed
    try:
        return BatchManifest.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"Invalid manifest: {e}")


def create_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="constrank",
        description="Numerical laboratory for constant-rank operators and linear-growth functionals",
    )
    parser.add_argument("--log-level", default=None, help="Logging level (default from the lab config)")
    subparsers = parser.add_subparsers(dest="subcommand", required=True)

    def common(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--config", help="Run config or manifest (JSON or YAML)")
        sub.add_argument("--out", help="Directory for reports, CSV files and fields")
        sub.add_argument("--seed", type=int, default=None, help="Seed for every random choice")
        sub.add_argument("--threads", type=int, default=None, help="Thread bound (CONSTRANK_THREADS fallback)")

    for command in Command:
        sub = subparsers.add_parser(command.value, help=f"Run {command.value}")
        common(sub)
        sub.add_argument("--operator", help="Built-in operator name or operator JSON file")
        sub.add_argument("--dim", type=int, default=None, help="Spatial dimension for built-in operators")

    batch = subparsers.add_parser("batch", help="Run a manifest of run configs")
    common(batch)
    batch.add_argument("--parallel", action="store_true", help="Run configs concurrently")

    schema = subparsers.add_parser("schema", help="Print the JSON schema of run records")
    schema.add_argument("--out", help="Write the schema into this directory")
    return parser


def emit_schema(out: Optional[str]) -> int:
    text = json.dumps(RunRecord.model_json_schema(), indent=2)
    if out:
        path = Path(out)
        path.mkdir(parents=True, exist_ok=True)
        (path / "run_record.schema.json").write_text(text)
    else:
        print(text)
    return EXIT_PASS


def main(argv: Optional[List[str]] = None) -> int:
    parser = create_parser()
    args = parser.parse_args(argv)
    settings = get_settings()
    configure_logging(args.log_level or settings.log_level)

    if args.subcommand == "schema":
        return emit_schema(args.out)

    runner = LabRunner(settings, threads=args.threads, out_dir=Path(args.out) if args.out else None)
    try:
        if args.subcommand == "batch":
            summary = asyncio.run(runner.batch(build_manifest(args)))
            print(json.dumps({"total": summary.total, "passed": summary.passed, "failed": summary.failed,
                              "failures": [r.id for r in summary.records if not r.passed]}, indent=2))
            return EXIT_PASS if summary.ok else EXIT_FAIL

        record = runner.run(build_run_config(Command(args.subcommand), args))
        print(record.model_dump_json(indent=2, exclude={"meta"}))
        return EXIT_PASS if record.passed else EXIT_FAIL
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except ConstrankError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
