"""``flowforge`` command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 transport error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import gateway as gw
from . import pipeline as pl
from .errors import ArgError, ConfigError, FlowforgeError, TransportError
from .metrics import DEFAULT_WEIGHTS
from .registry import load_registry

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRANSPORT = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _weights(text: str) -> tuple[float, ...]:
    try:
        parts = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("weights must be four comma-separated numbers") from None
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("weights must be four comma-separated numbers")
    return parts


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON settings file")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("-v", "--verbose", action="store_true")

    llm = argparse.ArgumentParser(add_help=False)
    llm.add_argument("--mock", help="JSON file of canned responses instead of a live endpoint")

    p = _Parser(prog="flowforge", description="Workflow corpus tooling.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("transcribe", parents=[common, llm], help="shortcut file to workflow code")
    s.add_argument("shortcut")
    s.add_argument("--registry")
    s.add_argument("--rename", choices=("deterministic", "llm"), default="deterministic")
    s.add_argument("--names", help="JSON map of action UUID to variable name")
    s.add_argument("--id", dest="sample_id")
    s.add_argument("--category", default="")

    s = sub.add_parser("thoughts", parents=[common, llm], help="add comments, plan and query")
    s.add_argument("--corpus", required=True)
    s.add_argument("--force", action="store_true", help="redo samples that already have a plan or query")

    s = sub.add_parser("expand", parents=[common, llm], help="synthesize a query from sampled APIs")
    s.add_argument("--registry", required=True)
    s.add_argument("--corpus", required=True)
    s.add_argument("--category", required=True)
    s.add_argument("-n", "--n-apis", type=int, default=6)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--count", type=int, default=1, help="records to produce (seeds seed..seed+count-1)")

    s = sub.add_parser("refine", parents=[common, llm], help="polish plan and code")
    s.add_argument("--corpus", required=True)
    s.add_argument("--registry")

    s = sub.add_parser("validate", parents=[common], help="rule-based filtering")
    s.add_argument("--corpus", required=True)
    s.add_argument("--registry", required=True)
    s.add_argument("--report", help="where to write the per-sample report (JSON)")

    s = sub.add_parser("score", parents=[common], help="CodeBLEU of candidates against references")
    s.add_argument("--candidate", required=True)
    s.add_argument("--reference", required=True)
    s.add_argument("--weights", type=_weights, default=DEFAULT_WEIGHTS)

    s = sub.add_parser("stats", parents=[common], help="corpus statistics")
    s.add_argument("--corpus", required=True)
    s.add_argument("--registry")

    s = sub.add_parser("passrate", parents=[common, llm], help="model-judged pass rate")
    s.add_argument("--corpus", required=True)
    s.add_argument("--registry")

    s = sub.add_parser("agreement", parents=[common], help="agreement between two verdict files")
    s.add_argument("first")
    s.add_argument("second")
    return p


def _emit(text: str, out: str | None) -> None:
    if out:
        pl._write_text(Path(out), text)
    else:
        sys.stdout.write(text)


def _summary(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, indent=2) + "\n"


def _gateway(args, cfg: pl.PipelineConfig) -> gw.Gateway:
    return gw.Gateway.from_config(cfg.gateway, getattr(args, "mock", None))


def _write_corpus(samples, out: str | None) -> None:
    if out:
        pl.write_samples(samples, out)
    else:
        sys.stdout.write(pl.dumps_samples(samples))


def run(args) -> int:
    cfg = pl.load_config(args.config)
    cmd = args.command
    if cmd == "transcribe":
        reg = load_registry(args.registry) if args.registry else None
        names = json.loads(Path(args.names).read_text(encoding="utf-8")) if args.names else None
        gateway = _gateway(args, cfg) if args.rename == "llm" else None
        sample = pl.cmd_transcribe(args.shortcut, reg, args.rename, gateway, args.sample_id,
                                   args.category, names)
        _write_corpus([sample], args.out)
    elif cmd == "thoughts":
        samples = pl.read_samples(args.corpus)
        _write_corpus(pl.cmd_thoughts(samples, _gateway(args, cfg), cfg, args.force), args.out)
    elif cmd == "expand":
        if args.count < 1:
            raise ArgError("--count must be positive")
        reg = load_registry(args.registry)
        corpus = pl.read_samples(args.corpus)
        g = _gateway(args, cfg)
        records = [pl.cmd_expand(reg, corpus, args.category, args.n_apis, args.seed + i, g, cfg)
                   for i in range(args.count)]
        _write_corpus(records, args.out)
    elif cmd == "refine":
        reg = load_registry(args.registry) if args.registry else None
        samples = pl.read_samples(args.corpus)
        _write_corpus(pl.cmd_refine(samples, _gateway(args, cfg), reg, cfg), args.out)
    elif cmd == "validate":
        survivors, summary = pl.cmd_validate(pl.read_samples(args.corpus), load_registry(args.registry), cfg)
        _write_corpus(survivors, args.out)
        report = summary.to_dict()
        if args.report:
            pl._write_text(Path(args.report), _summary(report))
        counts = {k: report[k] for k in ("n_input", "n_output", "rejections")}
        sys.stderr.write(_summary(counts))
    elif cmd == "score":
        result = pl.cmd_score(pl.read_samples(args.candidate), pl.read_samples(args.reference),
                              args.weights)
        if result.unpaired:
            sys.stderr.write(f"unpaired ids excluded: {', '.join(result.unpaired)}\n")
        _emit(result.to_csv(), args.out)
    elif cmd == "stats":
        reg = load_registry(args.registry) if args.registry else None
        _emit(_summary(pl.cmd_stats(pl.read_samples(args.corpus), reg).to_dict()), args.out)
    elif cmd == "passrate":
        reg = load_registry(args.registry) if args.registry else None
        result = pl.cmd_passrate(pl.read_samples(args.corpus), _gateway(args, cfg), reg, cfg)
        _emit("".join(json.dumps(v, ensure_ascii=False) + "\n" for v in result.verdicts), args.out)
        sys.stderr.write(_summary({"pass_rate": result.rate, "n": len(result.verdicts),
                                   "flagged": result.flagged}))
    elif cmd == "agreement":
        rate, n = pl.cmd_agreement(pl.read_verdicts(args.first), pl.read_verdicts(args.second))
        _emit(_summary({"agreement": rate, "n": n}), args.out)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except TransportError as exc:
        print(f"flowforge: transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (ArgError, ConfigError) as exc:
        print(f"flowforge: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FlowforgeError, OSError, ValueError, KeyError) as exc:
        print(f"flowforge: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
